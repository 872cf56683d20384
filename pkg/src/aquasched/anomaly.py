"""In-node anomaly detection over the compression-rate stream.

A scalar Kalman filter removes noise from the per-chunk rate stream; a
moving average of the filtered values is maintained, and each filtered
value is checked against ``avg +/- l*std`` computed over the trailing
window of moving-average values.  Runs of consecutive out-of-band chunks
collapse to a single anomaly timestamped at the first chunk of the run.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .compression import CompressionRatePoint

# Treat a window as degenerate below this floor: pure float rounding on an
# otherwise constant stream must not produce a usable band.
STD_FLOOR = 1e-12
# Absolute deviation that flags against a degenerate (constant) band.
EPS_ABS = 1e-9


@dataclass(frozen=True)
class KalmanConfig:
    process_noise_q: float = 1e-4
    measurement_noise_r: float = 1e-2
    initial_estimate: float | None = None   # None: first measurement
    initial_error_p: float = 1.0

    def __post_init__(self):
        if self.process_noise_q <= 0 or self.measurement_noise_r <= 0:
            raise ConfigError("Kalman q and r must be positive")
        if self.initial_error_p < 0:
            raise ConfigError("initial error covariance must be >= 0")


@dataclass(frozen=True)
class DetectorConfig:
    mavgw: int = 20   # moving-average window, in chunks
    l: float = 2.0    # band elasticity; smaller = more sensitive

    def __post_init__(self):
        if self.mavgw < 2:
            raise ConfigError("mavgw must be >= 2")
        if self.l <= 0:
            raise ConfigError("band elasticity l must be positive")


@dataclass
class AnomalyReport:
    node_id: int
    interval_index: int
    anomaly_timestamps: list[int] = field(default_factory=list)

    @property
    def anomaly_count(self) -> int:
        return len(self.anomaly_timestamps)


def kalman_filter(rates: Sequence[CompressionRatePoint] | Sequence[float],
                  cfg: KalmanConfig) -> np.ndarray:
    """Scalar predict/update recursion with constant q and r."""
    values = np.array([p.rate if isinstance(p, CompressionRatePoint) else float(p)
                       for p in rates])
    if len(values) == 0:
        raise ConfigError("kalman_filter requires a non-empty sequence")
    out = np.empty_like(values)
    x = values[0] if cfg.initial_estimate is None else cfg.initial_estimate
    p = cfg.initial_error_p
    q, r = cfg.process_noise_q, cfg.measurement_noise_r
    for i, z in enumerate(values):
        p_pred = p + q
        k = p_pred / (p_pred + r)
        x = x + k * (z - x)
        p = (1.0 - k) * p_pred
        out[i] = x
    return out


def _band_flags(smoothed: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    n = len(smoothed)
    w = cfg.mavgw
    flags = np.zeros(n, dtype=bool)
    if n < w:
        return flags
    # moving average of the filtered stream (full windows only);
    # mavg[j] covers smoothed[j .. j+w-1]
    mavg = np.array([float(np.mean(smoothed[j:j + w])) for j in range(n - w + 1)])
    # stats over the trailing w moving-average values ending at index i
    first = 2 * (w - 1)
    for i in range(first, n):
        win = mavg[i - first:i - first + w]
        a = float(np.mean(win))
        s = float(np.std(win))
        dev = abs(smoothed[i] - a)
        if s <= STD_FLOOR:
            flags[i] = dev > EPS_ABS
        else:
            flags[i] = dev > cfg.l * s
    return flags


def _collapse_runs(flags: np.ndarray) -> list[int]:
    out = []
    prev = False
    for i, f in enumerate(flags):
        if f and not prev:
            out.append(i)
        prev = bool(f)
    return out


def detect(smoothed: Sequence[float] | np.ndarray, cfg: DetectorConfig) -> list[int]:
    """Indices of anomaly run-starts in a filtered rate stream.

    Streams shorter than the warm-up (twice ``mavgw - 1`` chunks) return
    no anomalies.
    """
    return _collapse_runs(_band_flags(np.asarray(smoothed, dtype=float), cfg))


def count_per_interval(node_id: int, timestamps_us: Sequence[int],
                       interval_length_s: int,
                       n_intervals: int | None = None) -> list[AnomalyReport]:
    """Bucket anomaly timestamps by scheduling interval."""
    period = interval_length_s * 1_000_000
    buckets: dict[int, list[int]] = {}
    for ts in timestamps_us:
        buckets.setdefault(ts // period, []).append(ts)
    top = n_intervals if n_intervals is not None else \
        (max(buckets) + 1 if buckets else 0)
    return [AnomalyReport(node_id, k, sorted(buckets.get(k, []))) for k in range(top)]


class StreamDetector:
    """Stateful per-node detector fed one interval of rate points at a time.

    Produces exactly the anomalies :func:`detect` would report on the
    concatenated stream (same Kalman state, same windows across interval
    boundaries).
    """

    def __init__(self, kalman: KalmanConfig, detector: DetectorConfig):
        self.kcfg = kalman
        self.dcfg = detector
        self._x: float | None = None
        self._p = kalman.initial_error_p
        self._recent = deque(maxlen=detector.mavgw)          # filtered values
        self._mavg = deque(maxlen=detector.mavgw)            # moving averages
        self._index = 0
        self._prev_flagged = False

    def feed(self, rates: Sequence[float], timestamps_us: Sequence[int]) -> list[int]:
        """Consume one interval of rates; return anomaly timestamps (us)."""
        q, r = self.kcfg.process_noise_q, self.kcfg.measurement_noise_r
        w = self.dcfg.mavgw
        out = []
        for z, ts in zip(rates, timestamps_us):
            if self._x is None:
                self._x = float(z) if self.kcfg.initial_estimate is None \
                    else self.kcfg.initial_estimate
            p_pred = self._p + q
            k = p_pred / (p_pred + r)
            self._x = self._x + k * (float(z) - self._x)
            self._p = (1.0 - k) * p_pred

            self._recent.append(self._x)
            flagged = False
            if len(self._recent) == w:
                self._mavg.append(float(np.mean(np.array(self._recent))))
                if len(self._mavg) == w:
                    win = np.array(self._mavg)
                    a = float(np.mean(win))
                    s = float(np.std(win))
                    dev = abs(self._x - a)
                    flagged = dev > EPS_ABS if s <= STD_FLOOR else dev > self.dcfg.l * s
            if flagged and not self._prev_flagged:
                out.append(ts)
            self._prev_flagged = flagged
            self._index += 1
        return out
