"""Sparse per-node, per-type label distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ObservedLabels


@dataclass(eq=False)
class BeliefState:
    """Padded sparse distributions for every ``(node, type)`` pair.

    ``labels[u, t]`` and ``probs[u, t]`` hold up to ``clip_size`` entries
    sorted by decreasing probability (ties: lower label first); unused slots
    carry label ``-1`` and probability 0. An empty row means the pair has no
    belief yet.
    """

    labels: np.ndarray  # int64 (n, T, K)
    probs: np.ndarray  # float64 (n, T, K)
    clamped: np.ndarray  # bool (n, T)

    @classmethod
    def empty(cls, num_nodes: int, num_types: int, clip_size: int) -> "BeliefState":
        return cls(
            labels=np.full((num_nodes, num_types, clip_size), -1, dtype=np.int64),
            probs=np.zeros((num_nodes, num_types, clip_size)),
            clamped=np.zeros((num_nodes, num_types), dtype=bool),
        )

    @classmethod
    def from_observed(
        cls, num_nodes: int, num_types: int, clip_size: int, observed: ObservedLabels
    ) -> "BeliefState":
        """Point masses on observed labels; everything else empty."""
        state = cls.empty(num_nodes, num_types, clip_size)
        nodes, types, labels = observed.arrays()
        state.labels[nodes, types, 0] = labels
        state.probs[nodes, types, 0] = 1.0
        state.clamped[nodes, types] = True
        return state

    @property
    def num_nodes(self) -> int:
        return self.labels.shape[0]

    @property
    def num_types(self) -> int:
        return self.labels.shape[1]

    @property
    def clip_size(self) -> int:
        return self.labels.shape[2]

    def copy(self) -> "BeliefState":
        return BeliefState(self.labels.copy(), self.probs.copy(), self.clamped.copy())

    def distribution(self, u: int, t: int) -> dict[int, float]:
        valid = self.labels[u, t] >= 0
        return {
            int(l): float(p) for l, p in zip(self.labels[u, t][valid], self.probs[u, t][valid])
        }

    def node_distributions(self, u: int) -> list[dict[int, float]]:
        return [self.distribution(u, t) for t in range(self.num_types)]

    def set_distribution(self, u: int, t: int, dist: dict[int, float]) -> None:
        if len(dist) > self.clip_size:
            raise ValueError(f"distribution has {len(dist)} entries, clip size is {self.clip_size}")
        items = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
        self.labels[u, t] = -1
        self.probs[u, t] = 0.0
        for i, (label, p) in enumerate(items):
            self.labels[u, t, i] = label
            self.probs[u, t, i] = p

    def ranking(self, u: int, t: int) -> list[int]:
        """Labels of ``(u, t)`` in rank order."""
        row = self.labels[u, t]
        return [int(l) for l in row[row >= 0]]

    def top(self, u: int, t: int) -> int | None:
        label = self.labels[u, t, 0]
        return None if label < 0 else int(label)

    def entry_count(self) -> int:
        return int(np.count_nonzero(self.labels >= 0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BeliefState):
            return NotImplemented
        return (
            np.array_equal(self.labels, other.labels)
            and np.array_equal(self.probs, other.probs)
            and np.array_equal(self.clamped, other.clamped)
        )


def _sparse_diff(old_labels, old_probs, new_labels, new_probs, squared: bool) -> np.ndarray:
    match = (new_labels[..., :, None] == old_labels[..., None, :]) & (
        new_labels[..., :, None] >= 0
    )
    # each new label matches at most one old slot, so these sums are exact
    old_at_new = np.where(match, old_probs[..., None, :], 0.0).sum(axis=-1)
    old_kept = match.any(axis=-2)
    diff = np.abs(new_probs - old_at_new)
    lost = np.where(old_kept, 0.0, old_probs)
    if squared:
        diff, lost = diff * diff, lost * lost
    total = np.zeros(diff.shape[:-1])
    for i in range(diff.shape[-1]):
        total += diff[..., i]
    for j in range(lost.shape[-1]):
        total += lost[..., j]
    return total


def l1_change(old_labels, old_probs, new_labels, new_probs) -> np.ndarray:
    """L1 distance between padded sparse distributions, per leading index."""
    return _sparse_diff(old_labels, old_probs, new_labels, new_probs, squared=False)


def squared_distance(a_labels, a_probs, b_labels, b_probs) -> np.ndarray:
    """Squared Euclidean distance between padded sparse distributions."""
    return _sparse_diff(a_labels, a_probs, b_labels, b_probs, squared=True)
