"""Multi-type label propagation baseline.

Each label type is propagated independently with Jacobi sweeps of the
harmonic fixed-point update ``f_u = (1/d_u) * sum_v w_uv f_v``; observed
labels stay clamped.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .beliefs import BeliefState, squared_distance
from .graph import Graph, ObservedLabels
from .projection import truncate_groups


def lp_block(src, nbr_labels, nbr_probs, nbr_w, clamped, clip_size: int):
    """One Jacobi update for a batch of nodes.

    ``src`` gives the local owner of each edge, ``nbr_*`` the frozen neighbor
    distributions ``(E, T, K)`` and scalar weights ``(E,)``. Returns new
    ``(labels, probs)`` of shape ``(B, T, clip_size)``; clamped rows come back
    empty and must be kept by the caller.
    """
    B, T = clamped.shape
    groups = src[:, None] * T + np.arange(T)[None, :]
    usable = (nbr_labels[:, :, 0] >= 0) & ~clamped[src]
    w2 = np.broadcast_to(nbr_w[:, None], usable.shape)
    degree = np.bincount(groups[usable], weights=w2[usable], minlength=B * T)

    valid = (nbr_labels >= 0) & usable[:, :, None]
    g = np.broadcast_to(groups[:, :, None], nbr_labels.shape)[valid]
    lab = nbr_labels[valid]
    val = (nbr_w[:, None, None] * nbr_probs)[valid]

    labels = np.full((B, T, clip_size), -1, dtype=np.int64)
    probs = np.zeros((B, T, clip_size))
    if len(g) == 0:
        return labels, probs
    span = int(lab.max()) + 1
    uniq, inv = np.unique(g * span + lab, return_inverse=True)
    mass = np.bincount(inv, weights=val, minlength=len(uniq))
    cand_group = uniq // span
    f = mass / degree[cand_group]

    gids, top_l, top_p, _ = truncate_groups(cand_group, uniq % span, f, clip_size)
    total = np.cumsum(top_p, axis=1)[:, -1]
    labels[gids // T, gids % T] = top_l
    probs[gids // T, gids % T] = top_p / total[:, None]
    return labels, probs


def lp_update(
    neighbors: Sequence[Mapping[int, float]],
    weights: Sequence[float] | None = None,
    clip_size: int = 8,
) -> dict[int, float]:
    """Harmonic update of one node for one type.

    Friends with an empty distribution are skipped (they do not count toward
    the degree). Returns ``{}`` when no friend has a distribution.
    """
    from .explain import pack

    d = len(neighbors)
    if d == 0:
        return {}
    nl, npr = pack([[n] for n in neighbors], 1)
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=np.float64)
    labels, probs = lp_block(
        np.zeros(d, dtype=np.int64), nl, npr, w, np.zeros((1, 1), dtype=bool), clip_size
    )
    return {int(l): float(p) for l, p in zip(labels[0, 0], probs[0, 0]) if l >= 0}


def lp_energy(graph: Graph, beliefs: BeliefState, type_idx: int) -> float:
    """Quadratic smoothness energy of one type; absent entries count as 0."""
    src = graph.sources()
    e = np.flatnonzero(src < graph.indices)
    u, v = src[e], graph.indices[e]
    t = type_idx
    sq = squared_distance(
        beliefs.labels[u, t], beliefs.probs[u, t], beliefs.labels[v, t], beliefs.probs[v, t]
    )
    return 0.5 * float(np.sum(graph.weights[e] * sq))


def run_label_propagation(
    graph: Graph,
    observed: ObservedLabels,
    params,
    num_types: int | None = None,
    threads: int = 1,
) -> BeliefState:
    """Label propagation over every type until the L1 change drops below ``tol``."""
    from .engine import run_inference

    state, _ = run_inference(graph, observed, params, mode="lp", num_types=num_types, threads=threads)
    return state
