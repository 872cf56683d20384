"""Per-interval transmission decisions: exact solver, greedy, baselines.

The exact solver enumerates every subset of the schedulable set joined with
the enforced set, maximizing ``sum_i V*U_i(rlb_i(Y)) + beta_i*y_i`` with
``beta_i = E_tr_i * (B_i - B_exp)``, subject to ``rlb_i(Y) >= rlb_min`` for
all nodes.  The greedy solver needs no V: nodes above the battery target
transmit, then nodes whose reliability is still short are switched on one by
one in ascending id order (valid because reliability is monotone in the
transmitting set).  Baselines: everyone (RG), top-m batteries (EGm), an
m-stride round robin (RRm); the enforced set is always unioned in.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import ConfigError, InputError
from .correlation import SchedulePartition

UTILITY_KINDS = ("log_prop_fair", "linear")
DEFAULT_EPSILON = 0.01
DEFAULT_EXACT_SIZE_LIMIT = 20

PROV_ENFORCED = "enforced"
PROV_BATTERY = "battery_rule"
PROV_RESCUE = "reliability_rescue"
PROV_BASELINE = "baseline_pick"

RlbFn = Callable[[int, frozenset[int]], float]


@dataclass(frozen=True)
class SchedulerConfig:
    algorithm: str = "FAST_DTS"        # DTS_EXACT | FAST_DTS | RG | EG | RR
    v: float | None = None             # None: V_threshold (DTS_EXACT only)
    b_exp: float = 150.0
    rlb_min: float = 0.98
    utility_kind: str = "log_prop_fair"
    epsilon: float = DEFAULT_EPSILON
    exact_size_limit: int = DEFAULT_EXACT_SIZE_LIMIT
    m: int | None = None               # EGm / RRm parameter

    def __post_init__(self):
        if self.utility_kind not in UTILITY_KINDS:
            raise ConfigError(f"utility_kind must be one of {UTILITY_KINDS}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive for the log utility")
        if not 0.0 <= self.rlb_min <= 1.0:
            raise ConfigError("rlb_min must lie in [0, 1]")
        if self.v is not None and self.v < 0:
            raise ConfigError("V must be >= 0")


def parse_algorithm(name: str) -> tuple[str, int | None]:
    """Split names like ``EG3`` / ``RR40`` into (kind, m)."""
    m = re.fullmatch(r"(EG|RR)(\d+)", name)
    if m:
        return m.group(1), int(m.group(2))
    if name in ("DTS_EXACT", "FAST_DTS", "RG", "EG", "RR"):
        return name, None
    raise ConfigError(f"unknown algorithm {name!r}")


def utility(rlb: float, kind: str = "log_prop_fair",
            epsilon: float = DEFAULT_EPSILON) -> float:
    """Per-node utility of a reliability value."""
    if kind == "linear":
        return rlb
    if kind == "log_prop_fair":
        return math.log(rlb + epsilon)
    raise ConfigError(f"unknown utility kind {kind!r}")


def v_threshold(cfg: SchedulerConfig, n_nodes: int, e_max: float) -> float:
    """Sustainability bound on V: ``sum_i (U_i(1) - U_i(0)) / (E_max * B_exp)``."""
    if e_max <= 0 or cfg.b_exp <= 0:
        raise ConfigError("E_max and B_exp must be positive")
    du = utility(1.0, cfg.utility_kind, cfg.epsilon) - \
        utility(0.0, cfg.utility_kind, cfg.epsilon)
    return n_nodes * du / (e_max * cfg.b_exp)


@dataclass
class ScheduleDecision:
    interval: int
    algorithm: str
    transmitters: frozenset[int]
    provenance: dict[int, str]
    objective: float | None = None
    infeasible: bool = False
    rlb_evaluations: int = 0

    def __post_init__(self):
        missing = self.transmitters - set(self.provenance)
        if missing:
            raise InputError(f"provenance missing for {sorted(missing)}")


def _objective(y: frozenset[int], sensors: Sequence[int], rlb_fn: RlbFn,
               betas: Mapping[int, float], v: float, cfg: SchedulerConfig
               ) -> tuple[float, float]:
    """(objective value, min reliability) of a candidate decision."""
    total = 0.0
    min_rlb = 1.0
    for i in sensors:
        r = rlb_fn(i, y)
        min_rlb = min(min_rlb, r)
        total += v * utility(r, cfg.utility_kind, cfg.epsilon)
    for i in y:
        total += betas[i]
    return total, min_rlb


def dts_exact(partition: SchedulePartition, batteries: Mapping[int, float],
              e_tr: Mapping[int, float], rlb_fn: RlbFn, cfg: SchedulerConfig,
              interval: int, e_max: float) -> ScheduleDecision:
    """Exhaustive per-slot optimum over subsets of the schedulable set.

    Ties break toward fewer transmitters, then the lexicographically
    smallest id set.  If no subset is feasible, the decision maximizing the
    minimum reliability is returned with the infeasible flag set.
    """
    s_b = tuple(sorted(partition.schedulable))
    if len(s_b) > cfg.exact_size_limit:
        raise InputError(
            f"|S_b|={len(s_b)} exceeds exact_size_limit={cfg.exact_size_limit}; "
            "use FAST_DTS for instances this large")
    enforced = frozenset(partition.enforced_ids)
    sensors = tuple(sorted(enforced | set(s_b)))
    betas = {i: e_tr[i] * (batteries[i] - cfg.b_exp) for i in sensors}
    v = cfg.v if cfg.v is not None else v_threshold(cfg, len(sensors), e_max)

    best_key = None
    best_y: frozenset[int] | None = None
    best_obj = None
    fallback_key = None
    fallback_y: frozenset[int] | None = None
    fallback_obj = None
    feasible_found = False
    for mask in range(1 << len(s_b)):
        subset = frozenset(s_b[k] for k in range(len(s_b)) if mask >> k & 1)
        y = enforced | subset
        obj, min_rlb = _objective(y, sensors, rlb_fn, betas, v, cfg)
        tie = (len(y), tuple(sorted(y)))
        if min_rlb >= cfg.rlb_min:
            feasible_found = True
            key = (-obj, tie)
            if best_key is None or key < best_key:
                best_key, best_y, best_obj = key, y, obj
        elif not feasible_found:
            key = (-min_rlb, tie)
            if fallback_key is None or key < fallback_key:
                fallback_key, fallback_y = key, y
                fallback_obj = obj
    if feasible_found:
        y, obj, infeasible = best_y, best_obj, False
    else:
        y, obj, infeasible = fallback_y, fallback_obj, True
    provenance = {}
    for i in y:
        if i in enforced:
            provenance[i] = PROV_ENFORCED
        elif batteries[i] > cfg.b_exp:
            provenance[i] = PROV_BATTERY
        else:
            provenance[i] = PROV_RESCUE
    return ScheduleDecision(interval, "DTS_EXACT", y, provenance,
                            objective=obj, infeasible=infeasible)


def fast_dts(partition: SchedulePartition, batteries: Mapping[int, float],
             rlb_fn: RlbFn, cfg: SchedulerConfig, interval: int
             ) -> ScheduleDecision:
    """Linear-complexity greedy: battery rule, then reliability rescue.

    1. enforced nodes transmit;
    2. every schedulable node with ``B > B_exp`` transmits;
    3. in ascending id order, any node whose reliability against the
       current decision is below ``rlb_min`` is switched on (reliability is
       monotone in the growing set, so one pass suffices).
    """
    y = set(partition.enforced_ids)
    provenance = {i: PROV_ENFORCED for i in y}
    s_b = sorted(partition.schedulable)
    for i in s_b:
        if batteries[i] > cfg.b_exp:
            y.add(i)
            provenance[i] = PROV_BATTERY
    evals = 0
    for i in s_b:
        evals += 1
        if rlb_fn(i, frozenset(y)) < cfg.rlb_min:
            y.add(i)
            provenance.setdefault(i, PROV_RESCUE)
    return ScheduleDecision(interval, "FAST_DTS", frozenset(y), provenance,
                            rlb_evaluations=evals)


def baseline_decision(kind: str, m: int | None, interval: int,
                      batteries: Mapping[int, float],
                      partition: SchedulePartition) -> ScheduleDecision:
    """RG / EGm / RRm decisions (enforced set always included)."""
    sensors = sorted(set(batteries))
    if kind == "RG":
        picks = set(sensors)
    elif kind in ("EG", "RR"):
        if m is None or not 1 <= m <= len(sensors):
            raise ConfigError(f"{kind} needs 1 <= m <= |S|")
        if kind == "EG":
            ranked = sorted(sensors, key=lambda i: (-batteries[i], i))
            picks = set(ranked[:m])
        else:
            start = (interval * m) % len(sensors)
            picks = {sensors[(start + k) % len(sensors)] for k in range(m)}
    else:
        raise ConfigError(f"unknown baseline {kind!r}")
    y = picks | partition.enforced_ids
    provenance = {i: PROV_ENFORCED for i in partition.enforced_ids}
    for i in picks:
        provenance.setdefault(i, PROV_BASELINE)
    name = kind if m is None else f"{kind}{m}"
    return ScheduleDecision(interval, name, frozenset(y), provenance)


def lyapunov_diagnostic(batteries: Mapping[int, float], b_exp: float) -> float:
    """Drift diagnostic ``L(t) = 0.5 * sum_i (B_i - B_exp)^2`` (logged, not asserted)."""
    return 0.5 * sum((b - b_exp) ** 2 for b in batteries.values())
