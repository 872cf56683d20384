"""Center-side correlation graph, counter-outlier processing, partitioning.

The graph links node pairs whose recent raw windows have a Pearson
coefficient of at least 0.95; only pairs with overlapping fresh raw
windows are recomputed.  Chauvenet's criterion over the per-interval
anomaly counters flags nodes whose correlation pattern likely changed;
those nodes, nodes without neighbors, and staleness refresh requests form
the enforced transmission set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import median
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, UndefinedCorrelationError
from .history import DeliveredHistory

LINK_THRESHOLD = 0.95


def pearson(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Sample Pearson correlation coefficient in [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InputError("pearson requires equal-length vectors")
    if len(x) < 2:
        raise InputError("pearson requires at least two samples")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float(xd @ xd))
    sy = math.sqrt(float(yd @ yd))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    return float(np.clip((xd @ yd) / (sx * sy), -1.0, 1.0))


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass
class CorrelationGraph:
    """Undirected, thresholded correlation links with per-pair freshness."""

    nodes: set[int] = field(default_factory=set)
    coeff: dict[tuple[int, int], float] = field(default_factory=dict)
    last_update: dict[tuple[int, int], int] = field(default_factory=dict)
    threshold: float = LINK_THRESHOLD

    def set_coefficient(self, i: int, j: int, c: float, interval: int) -> None:
        if i == j:
            raise InputError("self-links are not allowed")
        p = _pair(i, j)
        self.coeff[p] = c
        self.last_update[p] = interval

    def links(self) -> set[tuple[int, int]]:
        return {p for p, c in self.coeff.items() if c >= self.threshold}

    def has_link(self, i: int, j: int) -> bool:
        return self.coeff.get(_pair(i, j), -2.0) >= self.threshold

    def neighbors(self, i: int) -> set[int]:
        out = set()
        for (a, b), c in self.coeff.items():
            if c >= self.threshold:
                if a == i:
                    out.add(b)
                elif b == i:
                    out.add(a)
        return out

    def components(self) -> list[set[int]]:
        """Connected components of the link graph (singletons included)."""
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (a, b) in self.links():
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        groups: dict[int, set[int]] = {}
        for n in self.nodes:
            groups.setdefault(find(n), set()).add(n)
        return sorted(groups.values(), key=lambda s: min(s))


def _subsample(arr: np.ndarray, max_samples: int) -> np.ndarray:
    if len(arr) <= max_samples:
        return arr
    stride = int(math.ceil(len(arr) / max_samples))
    return arr[::stride]


def update_graph(graph: CorrelationGraph, history: DeliveredHistory,
                 fresh_nodes: Iterable[int], interval: int, window_w: int = 4,
                 max_samples: int = 1024) -> CorrelationGraph:
    """Recompute coefficients for pairs of freshly delivered streams.

    For each pair, the window is the overlap of the two nodes' most recent
    delivered intervals (at most ``window_w``); pairs with no overlap keep
    their previous coefficient.  Constant windows yield no link.
    """
    fresh = sorted(set(fresh_nodes))
    if not fresh:
        return graph
    sig: dict[int, tuple[int, ...]] = {
        i: tuple(history.latest(i, window_w)) for i in fresh}
    fresh = [i for i in fresh if sig[i]]
    groups: dict[tuple[int, ...], list[int]] = {}
    for i in fresh:
        groups.setdefault(sig[i], []).append(i)
    keys = sorted(groups)

    def zmatrix(members: list[int], window: tuple[int, ...]) -> np.ndarray:
        cols = [np.concatenate([history.get(i, t) for t in window]) for i in members]
        m = np.vstack([_subsample(c, max_samples) for c in cols])
        m = m - m.mean(axis=1, keepdims=True)
        norms = np.sqrt((m * m).sum(axis=1, keepdims=True))
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(norms > 0, m / norms, np.nan)
        return z

    for a_idx in range(len(keys)):
        for b_idx in range(a_idx, len(keys)):
            ka, kb = keys[a_idx], keys[b_idx]
            if ka == kb:
                common: tuple[int, ...] = ka
            else:
                overlap = sorted(set(ka) & set(kb))
                if not overlap:
                    continue
                common = tuple(overlap[-window_w:])
            za = zmatrix(groups[ka], common)
            zb = za if ka == kb else zmatrix(groups[kb], common)
            block = za @ zb.T
            for r, i in enumerate(groups[ka]):
                for s, j in enumerate(groups[kb]):
                    if i == j or (ka == kb and s <= r):
                        continue
                    c = block[r, s]
                    # constant window: correlation undefined, treated as no link
                    graph.set_coefficient(i, j, float(np.clip(c, -1.0, 1.0))
                                          if np.isfinite(c) else -2.0, interval)
    return graph


def chauvenet_outliers(counters: Mapping[int, int | float],
                       fallback: bool = False) -> set[int]:
    """Nodes whose anomaly counter is a Chauvenet outlier.

    Flags node i iff ``n * erfc(|c_i - mean| / (sqrt(2)*std)) < 0.5`` with the
    population std; fewer than 3 counters or zero spread yields no outliers.
    The optional small-n fallback flags counters beyond mean + 3*std when the
    strict criterion is empty but max/median exceeds 10.
    """
    n = len(counters)
    if n < 3:
        return set()
    vals = np.array([float(v) for v in counters.values()])
    mean = float(vals.mean())
    std = float(vals.std())
    if std == 0.0:
        return set()
    out = {node for node, v in counters.items()
           if n * math.erfc(abs(float(v) - mean) / (math.sqrt(2.0) * std)) < 0.5}
    if not out and fallback:
        med = median(float(v) for v in counters.values())
        if med >= 0 and max(float(v) for v in counters.values()) > 10 * max(med, 1e-12):
            out = {node for node, v in counters.items()
                   if float(v) > mean + 3.0 * std}
    return out


REASON_REFRESH = "graph_refresh"
REASON_NO_NEIGHBOR = "no_neighbor"
REASON_OUTLIER = "counter_outlier"


@dataclass(frozen=True)
class SchedulePartition:
    """Enforced set (with per-node reason) and the schedulable remainder."""

    enforced: dict[int, str]
    schedulable: tuple[int, ...]

    @property
    def enforced_ids(self) -> set[int]:
        return set(self.enforced)


def partition_nodes(graph: CorrelationGraph, sensors: Sequence[int],
                    outliers: Iterable[int],
                    refresh_requests: Iterable[int]) -> SchedulePartition:
    """Split sensors into the enforced set and the schedulable set.

    Enforce rules: (1) fresh raw data requested for a graph refresh,
    (2) no correlation neighbor, (3) anomaly-counter outlier.  A node
    matching several rules reports the most severe one.
    """
    enforced: dict[int, str] = {}
    for i in refresh_requests:
        enforced[i] = REASON_REFRESH
    for i in sensors:
        if not graph.neighbors(i):
            enforced[i] = REASON_NO_NEIGHBOR
    for i in outliers:
        enforced[i] = REASON_OUTLIER
    schedulable = tuple(i for i in sorted(sensors) if i not in enforced)
    return SchedulePartition(enforced=enforced, schedulable=schedulable)


def staleness_refresh_requests(graph: CorrelationGraph, interval: int,
                               refresh_every: int = 8,
                               batteries: Mapping[int, float] | None = None
                               ) -> set[int]:
    """Rule-(1) refresh requests: periodically re-sample each linked component.

    Every ``refresh_every`` intervals one member per multi-node component is
    requested; the member with the highest battery is picked (ties by node
    id) so a depleted node is never forced when a healthier peer exists.
    """
    if refresh_every < 1 or interval == 0 or interval % refresh_every != 0:
        return set()
    out = set()
    for comp in graph.components():
        if len(comp) < 2:
            continue
        if batteries:
            pick = max(sorted(comp), key=lambda i: batteries.get(i, 0.0))
        else:
            pick = sorted(comp)[interval // refresh_every % len(comp)]
        out.add(pick)
    return out
