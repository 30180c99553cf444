"""Euclidean projections onto the probability simplex.

The batched routine works on many small groups at once (one group per
``(node, type)`` pair); the dense single-vector functions are thin wrappers
around it so there is exactly one projection code path.
"""

from __future__ import annotations

import numpy as np


def truncate_groups(group, label, value, k: int | None = None):
    """Keep the ``k`` largest entries per group (ties: lower label first).

    Returns ``(group_ids, labels, values, counts)`` where ``labels`` and
    ``values`` are ``(G, width)`` arrays in decreasing-value order, padded
    with ``-1`` / 0, and ``counts`` is the number of kept entries per group.
    """
    group = np.asarray(group, dtype=np.int64)
    label = np.asarray(label, dtype=np.int64)
    value = np.asarray(value, dtype=np.float64)
    if len(group) == 0:
        width = k or 0
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros((0, width), dtype=np.int64),
            np.zeros((0, width)),
            np.zeros(0, dtype=np.int64),
        )
    order = np.lexsort((label, -value, group))
    g_sorted = group[order]
    boundary = np.flatnonzero(np.r_[True, g_sorted[1:] != g_sorted[:-1]])
    sizes = np.diff(np.r_[boundary, len(order)])
    group_ids = g_sorted[boundary]
    slot = np.arange(len(order)) - np.repeat(boundary, sizes)
    width = int(sizes.max()) if k is None else int(k)
    keep = slot < width
    row = np.repeat(np.arange(len(group_ids)), sizes)[keep]
    col = slot[keep]
    v = np.zeros((len(group_ids), width))
    lab = np.full((len(group_ids), width), -1, dtype=np.int64)
    v[row, col] = value[order][keep]
    lab[row, col] = label[order][keep]
    return group_ids, lab, v, np.minimum(sizes, width)


def project_groups(group, label, value, k: int | None = None):
    """Top-``k`` truncation followed by simplex projection, per group.

    Parameters
    ----------
    group : int array
        Group id of every entry. Ids need not be contiguous.
    label : int array
        Label of every entry; unique within a group. Used to break ties
        (lower label wins) when truncating.
    value : float array
        Point to project.
    k : int, optional
        Sparsity budget. ``None`` keeps every entry.

    Returns
    -------
    group_ids : int array, shape (G,)
        Distinct groups, ascending.
    labels, probs : arrays of shape (G, k)
        Surviving entries per group in decreasing-probability order, padded
        with label ``-1`` / probability 0. Entries projected to exactly zero
        are dropped.
    """
    group_ids, lab, v, count = truncate_groups(group, label, value, k)
    width = v.shape[1]
    if len(group_ids) == 0:
        return group_ids, lab, v

    # sort-and-threshold: rho = #{j : v_j - (cumsum_j - 1)/j > 0}
    css = np.cumsum(v, axis=1)
    j = np.arange(1, width + 1)
    present = j[None, :] <= count[:, None]
    cond = present & (v - (css - 1.0) / j > 0)
    rho = cond.sum(axis=1)
    theta = (css[np.arange(len(group_ids)), rho - 1] - 1.0) / rho
    p = np.where(present, np.maximum(v - theta[:, None], 0.0), 0.0)
    lab = np.where(p > 0, lab, -1)
    return group_ids, lab, p


def project_simplex(v) -> np.ndarray:
    """Closest point of the probability simplex to ``v`` (Euclidean)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("project_simplex needs a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_simplex needs finite entries")
    return _scatter(v, None)


def project_simplex_ksparse(v, k: int) -> np.ndarray:
    """Closest point of the simplex to ``v`` with at most ``k`` non-zeros.

    Keeps the ``k`` largest entries (ties: lower index) and projects those.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("project_simplex_ksparse needs a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_simplex_ksparse needs finite entries")
    return _scatter(v, k)


def _scatter(v: np.ndarray, k: int | None) -> np.ndarray:
    idx = np.arange(len(v))
    _, lab, p = project_groups(np.zeros(len(v), dtype=np.int64), idx, v, k)
    out = np.zeros(len(v))
    valid = lab[0] >= 0
    out[lab[0][valid]] = p[0][valid]
    return out
