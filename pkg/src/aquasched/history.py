"""Delivered raw-stream storage at the data processing center.

Only raw windows that actually arrived (scheduled and paid for) are kept;
old intervals beyond the staleness horizon are pruned.
"""

from __future__ import annotations

import numpy as np


class DeliveredHistory:
    """Per-node map interval -> raw samples, pruned to a horizon."""

    def __init__(self, horizon: int = 16):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self._data: dict[int, dict[int, np.ndarray]] = {}

    def store(self, node_id: int, interval: int, samples: np.ndarray) -> None:
        self._data.setdefault(node_id, {})[interval] = samples

    def prune(self, current_interval: int) -> None:
        cutoff = current_interval - self.horizon
        for per_node in self._data.values():
            for k in [k for k in per_node if k < cutoff]:
                del per_node[k]

    def intervals(self, node_id: int) -> list[int]:
        return sorted(self._data.get(node_id, ()))

    def has(self, node_id: int, interval: int) -> bool:
        return interval in self._data.get(node_id, ())

    def get(self, node_id: int, interval: int) -> np.ndarray:
        return self._data[node_id][interval]

    def latest(self, node_id: int, limit: int) -> list[int]:
        """The most recent ``limit`` delivered intervals of a node, ascending."""
        ivs = self.intervals(node_id)
        return ivs[-limit:]
