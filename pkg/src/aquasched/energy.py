"""Per-node battery queue: harvesting, consumption, clipping, waste.

The battery update follows the queue recursion
``B' = |B - y*E_tr - E_in|_+ + h`` with overflow clipped at capacity; the
clipped amount is the wasted energy, and a shortfall (consumption exceeding
the stored level) raises a depletion flag.  A depleted interval with a
scheduled transmission (``y=1``) is a transmission gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .traces import FlowProfile

# RNG sub-stream tags
_STREAM_HARVEST = 11
_STREAM_COST = 12

DEFAULT_HARVEST_CAP_J = 630.0   # 0.7 W generator over a 15-minute interval


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags)))


@dataclass(frozen=True)
class EnergyConfig:
    b_max: float = 500.0
    b_exp: float = 150.0
    e_in_mean: float = 6.0
    e_tr_mean: float = 30.0
    e_max: float = 45.0            # upper bound on any transmission cost
    cost_noise_frac: float = 0.10  # std as a fraction of the mean
    harvest_coeff: float = 500.0   # J per (m^3/s) of local flow, per interval
    harvest_cap: float = DEFAULT_HARVEST_CAP_J
    harvest_jitter_frac: float = 0.05
    initial_battery: float | None = None   # None: start full

    def __post_init__(self):
        if not 0 < self.b_exp < self.b_max:
            raise ConfigError("need 0 < B_exp < B_max")
        if self.e_tr_mean <= 0 or self.e_tr_mean > self.e_max:
            raise ConfigError("need 0 < E_tr mean <= E_max")
        if self.e_in_mean < 0:
            raise ConfigError("E_in mean must be >= 0")
        if self.cost_noise_frac < 0 or self.harvest_jitter_frac < 0:
            raise ConfigError("noise fractions must be >= 0")
        if self.harvest_coeff < 0 or self.harvest_cap <= 0:
            raise ConfigError("harvest parameters must be positive")


def harvest_series(profile: FlowProfile, cfg: EnergyConfig, node_id: int,
                   duration: int, seed: int = 0) -> np.ndarray:
    """Harvested Joules per interval, proportional to local flow, capped.

    Zero flow harvests nothing; the cap models the generator's power limit.
    Deterministic given the seed.
    """
    if duration < 1:
        raise ConfigError("duration must be >= 1 interval")
    rng = _rng(seed, _STREAM_HARVEST, node_id)
    jitter = rng.normal(0.0, cfg.harvest_jitter_frac, size=duration) \
        if cfg.harvest_jitter_frac > 0 else np.zeros(duration)
    out = np.empty(duration)
    for t in range(duration):
        raw = cfg.harvest_coeff * profile.flow_at(t) * max(0.0, 1.0 + jitter[t])
        out[t] = min(cfg.harvest_cap, raw)
    return out


def draw_costs(cfg: EnergyConfig, node_id: int, duration: int, seed: int = 0
               ) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval (E_tr, E_in) draws: clipped normals around the means.

    Clipped to ``(0, E_max]`` (transmission) and ``[0, inf)`` (in-node); a
    clipped rather than resampled truncation keeps the draw count fixed.
    """
    rng = _rng(seed, _STREAM_COST, node_id)
    e_tr = rng.normal(cfg.e_tr_mean, cfg.cost_noise_frac * cfg.e_tr_mean, size=duration)
    e_in = rng.normal(cfg.e_in_mean, cfg.cost_noise_frac * cfg.e_in_mean, size=duration)
    e_tr = np.clip(e_tr, 1e-9, cfg.e_max)
    e_in = np.clip(e_in, 0.0, None)
    return e_tr, e_in


@dataclass(frozen=True)
class BatteryStep:
    interval: int
    battery_before: float
    battery_after: float
    h: float
    e_tr: float
    e_in: float
    y: int
    wasted: float
    shortfall: float
    depleted: bool
    gap: bool


@dataclass
class NodeEnergyState:
    node_id: int
    battery: float
    history: list[BatteryStep] = field(default_factory=list)

    def step(self, interval: int, y: int, e_tr: float, e_in: float, h: float,
             b_max: float) -> BatteryStep:
        """Advance one interval; returns the recorded step."""
        for name, v in (("e_tr", e_tr), ("e_in", e_in), ("h", h)):
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and non-negative")
        if y not in (0, 1):
            raise InputError("y must be 0 or 1")
        consumption = y * e_tr + e_in
        remainder = self.battery - consumption
        shortfall = -remainder if remainder < 0 else 0.0
        depleted = remainder < 0
        after_consume = remainder if remainder > 0 else 0.0
        unclipped = after_consume + h
        wasted = unclipped - b_max if unclipped > b_max else 0.0
        battery_after = unclipped - wasted
        step = BatteryStep(
            interval=interval, battery_before=self.battery,
            battery_after=battery_after, h=h, e_tr=e_tr, e_in=e_in, y=y,
            wasted=wasted, shortfall=shortfall, depleted=depleted,
            gap=bool(depleted and y == 1))
        assert 0.0 <= battery_after <= b_max
        self.battery = battery_after
        self.history.append(step)
        return step


def replay_step(step: BatteryStep, b_max: float) -> tuple[float, float, float]:
    """Recompute (battery_after, wasted, shortfall) from a recorded step.

    Uses the exact operation order of :meth:`NodeEnergyState.step`, so the
    conservation identity can be checked bit-for-bit.
    """
    consumption = step.y * step.e_tr + step.e_in
    remainder = step.battery_before - consumption
    shortfall = -remainder if remainder < 0 else 0.0
    after_consume = remainder if remainder > 0 else 0.0
    unclipped = after_consume + step.h
    wasted = unclipped - b_max if unclipped > b_max else 0.0
    return unclipped - wasted, wasted, shortfall
