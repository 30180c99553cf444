"""EdgeExplain objective, gradient and per-node proximal gradient ascent.

Every edge ``u ~ v`` contributes ``log sigmoid(alpha * sum_t r(u, v, t) + c)``
where ``r(u, v, t) = w_uvt * <f_ut, f_vt>`` is the probability that the two
endpoints share their type-``t`` label. For fixed neighbor distributions the
per-node objective is concave in ``f_u``, and each node is updated by
projected gradient ascent with an optimal k-sparse simplex projection.

The block functions below operate on a batch of nodes whose incident edges
are laid out contiguously (CSR order). All floating-point reductions are
either exact or accumulate one node's terms in edge order, so a node's result
never depends on which other nodes share its batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .beliefs import BeliefState
from .graph import Graph
from .projection import project_groups

STEP_POLICIES = ("backtracking", "lipschitz")
LIPSCHITZ_RULES = ("paper", "conservative")


@dataclass(frozen=True)
class ModelParams:
    """Inference knobs shared by both modes.

    With ``step_policy="lipschitz"`` every step is exactly ``1/L``. With
    ``"backtracking"`` each step starts at ``step_scale / L`` and is halved
    until the node objective does not decrease. The worst-case ``1/L`` is
    tiny once edges saturate the sigmoid, so the default starts far above it.
    """

    alpha: float = 10.0
    c: float = 0.0
    clip_size: int = 8
    inner_steps: int = 1
    max_supersteps: int = 30
    tol: float = 1e-4
    step_policy: str = "backtracking"
    lipschitz_constant_rule: str = "paper"
    step_scale: float = 1024.0
    max_halvings: int = 60

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.clip_size < 1:
            raise ValueError("clip_size must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.inner_steps < 1 or self.max_supersteps < 1:
            raise ValueError("inner_steps and max_supersteps must be positive")
        if self.step_policy not in STEP_POLICIES:
            raise ValueError(f"step_policy must be one of {STEP_POLICIES}")
        if self.lipschitz_constant_rule not in LIPSCHITZ_RULES:
            raise ValueError(f"lipschitz_constant_rule must be one of {LIPSCHITZ_RULES}")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")


# ---------------------------------------------------------------------------
# Dictionary-level helpers
# ---------------------------------------------------------------------------

Distribution = Mapping[int, float]


def edge_affinity(f_u: Distribution, f_v: Distribution, weight: float = 1.0) -> float:
    """``weight * sum_l f_u[l] * f_v[l]`` for two sparse distributions of one type."""
    if len(f_v) < len(f_u):
        f_u, f_v = f_v, f_u
    return weight * sum(p * f_v[l] for l, p in f_u.items() if l in f_v)


def edge_logscore(
    f_u: Sequence[Distribution],
    f_v: Sequence[Distribution],
    params: ModelParams,
    weights: Sequence[float] | None = None,
) -> float:
    """Log of the sigmoid "explanation" score of one edge (always <= 0)."""
    total = 0.0
    for t, (a, b) in enumerate(zip(f_u, f_v)):
        total += edge_affinity(a, b, 1.0 if weights is None else weights[t])
    return float(log_expit(params.alpha * total + params.c))


# ---------------------------------------------------------------------------
# Padded-array kernels
# ---------------------------------------------------------------------------


def pair_affinity(lu, pu, lv, pv) -> np.ndarray:
    """Per-type dot products of padded distributions, shape ``(..., T)``."""
    match = (lu[..., :, None] == lv[..., None, :]) & (lu[..., :, None] >= 0)
    # at most one slot of v matches each slot of u: the inner sum is exact
    pv_at = np.where(match, pv[..., None, :], 0.0).sum(axis=-1)
    r = np.zeros(lu.shape[:-1])
    for i in range(lu.shape[-1]):
        r += pu[..., i] * pv_at[..., i]
    return r


def edge_logits(lu, pu, lv, pv, w, params: ModelParams) -> np.ndarray:
    """``alpha * sum_t w_t r_t + c`` for each edge."""
    r = pair_affinity(lu, pu, lv, pv)
    acc = np.zeros(r.shape[0])
    for t in range(r.shape[1]):
        acc += w[:, t] * r[:, t]
    return params.alpha * acc + params.c


def lipschitz_constants(src, w, num_nodes: int, params: ModelParams) -> np.ndarray:
    """Per-node step constant ``L``.

    ``paper``: ``alpha * sum_v max_t w_uvt`` (``alpha * |friends|`` for unit
    weights). ``conservative``: ``max(alpha, alpha^2/4) * sum_v max_t w_uvt^2``.
    """
    wmax = w.max(axis=1) if w.shape[1] else np.zeros(len(w))
    if params.lipschitz_constant_rule == "paper":
        return params.alpha * np.bincount(src, wmax, minlength=num_nodes)
    scale = max(params.alpha, params.alpha**2 / 4)
    return scale * np.bincount(src, wmax * wmax, minlength=num_nodes)


def _gradient(src, num_nodes, nbr_labels, nbr_probs, nbr_w, cur_labels, cur_probs, clamped, params):
    """Aggregate gradient over the candidate support of each ``(node, type)``.

    Returns candidate ``(group, label, grad, current, from_neighbors)`` arrays
    with ``group = node * T + type`` plus the per-edge logits at ``cur``.
    """
    E, T, K = nbr_labels.shape
    z = edge_logits(cur_labels[src], cur_probs[src], nbr_labels, nbr_probs, nbr_w, params)
    coef = (params.alpha * nbr_w) * expit(-z)[:, None]
    vals = coef[:, :, None] * nbr_probs
    groups = src[:, None] * T + np.arange(T)[None, :]
    valid = (nbr_labels >= 0) & ~clamped[src][:, :, None]
    g_group = np.broadcast_to(groups[:, :, None], nbr_labels.shape)[valid]
    g_label = nbr_labels[valid]
    g_val = vals[valid]

    Kc = cur_labels.shape[2]
    own = np.arange(num_nodes)[:, None] * T + np.arange(T)[None, :]
    cvalid = (cur_labels >= 0) & ~clamped[:, :, None]
    c_group = np.broadcast_to(own[:, :, None], (num_nodes, T, Kc))[cvalid]
    c_label = cur_labels[cvalid]
    c_val = cur_probs[cvalid]

    all_label = np.concatenate([g_label, c_label])
    span = int(all_label.max()) + 1 if len(all_label) else 1
    key = np.concatenate([g_group, c_group]) * span + all_label
    uniq, inv = np.unique(key, return_inverse=True)
    ng = len(g_group)
    grad = np.bincount(inv[:ng], weights=g_val, minlength=len(uniq))
    current = np.bincount(inv[ng:], weights=c_val, minlength=len(uniq))
    from_nbrs = np.bincount(inv[:ng], minlength=len(uniq)) > 0
    return uniq // span, uniq % span, grad, current, from_nbrs, z


def explain_block(src, nbr_labels, nbr_probs, nbr_w, cur_labels, cur_probs, clamped, params):
    """Run ``params.inner_steps`` proximal ascent steps for a batch of nodes.

    Parameters
    ----------
    src : int array, shape (E,)
        Local index (``0..B-1``) of the node owning each edge; non-decreasing.
    nbr_labels, nbr_probs : arrays, shape (E, T, K)
        Frozen neighbor distributions, one row per edge.
    nbr_w : array, shape (E, T)
        Effective per-type edge weights.
    cur_labels, cur_probs : arrays, shape (B, T, K)
        Current distributions of the batch.
    clamped : bool array, shape (B, T)

    Returns
    -------
    labels, probs : arrays, shape (B, T, clip_size)
    trace : array, shape (B, inner_steps + 1)
        Node objective before the first step and after each step.
    """
    B, T = clamped.shape
    K = params.clip_size
    cur_labels, cur_probs = _fit_width(cur_labels, cur_probs, K)
    degree = np.bincount(src, minlength=B)
    L = lipschitz_constants(src, nbr_w, B, params)
    active = (degree > 0) & ~clamped.all(axis=1) & (L > 0)
    base_step = np.zeros(B)
    scale = params.step_scale if params.step_policy == "backtracking" else 1.0
    np.divide(scale, L, out=base_step, where=active)

    trace = np.zeros((B, params.inner_steps + 1))
    for it in range(params.inner_steps):
        group, label, grad, current, _, z = _gradient(
            src, B, nbr_labels, nbr_probs, nbr_w, cur_labels, cur_probs, clamped, params
        )
        g_old = np.bincount(src, log_expit(z), minlength=B)
        if it == 0:
            trace[:, 0] = g_old
        cand_node = group // T
        step = base_step.copy()
        pending = active.copy()
        new_labels, new_probs = cur_labels.copy(), cur_probs.copy()
        g_acc = g_old.copy()
        for _ in range(params.max_halvings + 1):
            if not pending.any():
                break
            cmask = pending[cand_node]
            q = current[cmask] + step[cand_node[cmask]] * grad[cmask]
            gids, lab, p = project_groups(group[cmask], label[cmask], q, K)
            prop_labels, prop_probs = cur_labels.copy(), cur_probs.copy()
            prop_labels[gids // T, gids % T] = lab
            prop_probs[gids // T, gids % T] = p

            emask = pending[src]
            es = src[emask]
            z_new = edge_logits(
                prop_labels[es], prop_probs[es],
                nbr_labels[emask], nbr_probs[emask], nbr_w[emask], params,
            )
            g_new = np.bincount(es, log_expit(z_new), minlength=B)
            if params.step_policy == "lipschitz":
                accept = pending
            else:
                accept = pending & (g_new >= g_old)
            new_labels[accept] = prop_labels[accept]
            new_probs[accept] = prop_probs[accept]
            g_acc[accept] = g_new[accept]
            pending = pending & ~accept
            step[pending] *= 0.5
        cur_labels, cur_probs = new_labels, new_probs
        trace[:, it + 1] = g_acc
    return cur_labels, cur_probs, trace


def _fit_width(labels, probs, K):
    width = labels.shape[-1]
    if width == K:
        return labels, probs
    if width > K:
        if np.any(labels[..., K:] >= 0):
            raise ValueError("distribution wider than clip size")
        return labels[..., :K].copy(), probs[..., :K].copy()
    pad = K - width
    shape = labels.shape[:-1] + (pad,)
    return (
        np.concatenate([labels, np.full(shape, -1, dtype=np.int64)], axis=-1),
        np.concatenate([probs, np.zeros(shape)], axis=-1),
    )


# ---------------------------------------------------------------------------
# Per-node API
# ---------------------------------------------------------------------------


@dataclass
class NeighborSnapshot:
    """Frozen view of one node's neighborhood: one row per friend."""

    labels: np.ndarray  # (d, T, K)
    probs: np.ndarray  # (d, T, K)
    weights: np.ndarray  # (d, T), effective per-type weights

    @classmethod
    def from_graph(cls, graph: Graph, beliefs: BeliefState, u: int) -> "NeighborSnapshot":
        lo, hi = graph.indptr[u], graph.indptr[u + 1]
        nbrs = graph.indices[lo:hi]
        return cls(
            beliefs.labels[nbrs].copy(),
            beliefs.probs[nbrs].copy(),
            graph.typed_weights(slice(lo, hi), beliefs.num_types),
        )

    @classmethod
    def from_dicts(
        cls,
        neighbors: Sequence[Sequence[Distribution]],
        weights=None,
        num_types: int | None = None,
    ) -> "NeighborSnapshot":
        """``neighbors[i][t]`` is friend ``i``'s type-``t`` distribution.

        ``weights`` may be ``None`` (all 1), one scalar per friend, or a
        ``(d, T)`` array of per-type weights.
        """
        d = len(neighbors)
        T = num_types if num_types is not None else (len(neighbors[0]) if d else 0)
        labels, probs = pack(neighbors, T)
        if weights is None:
            w = np.ones((d, T))
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.ndim == 1:
                w = np.repeat(w[:, None], T, axis=1)
        return cls(labels, probs, w)

    @property
    def degree(self) -> int:
        return self.labels.shape[0]

    @property
    def num_types(self) -> int:
        return self.weights.shape[1]


def pack(dists: Sequence[Sequence[Distribution]], num_types: int, width: int | None = None):
    """Pack nested ``[row][type] -> {label: prob}`` into padded arrays."""
    if width is None:
        width = max([len(d) for row in dists for d in row] + [1])
    n = len(dists)
    labels = np.full((n, num_types, width), -1, dtype=np.int64)
    probs = np.zeros((n, num_types, width))
    for i, row in enumerate(dists):
        for t, d in enumerate(row):
            items = sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))
            if len(items) > width:
                raise ValueError("distribution wider than pack width")
            for j, (l, p) in enumerate(items):
                labels[i, t, j] = l
                probs[i, t, j] = p
    return labels, probs


def unpack(labels: np.ndarray, probs: np.ndarray) -> list[dict[int, float]]:
    """One node's padded ``(T, K)`` arrays back to a list of dicts."""
    return [
        {int(l): float(p) for l, p in zip(labels[t], probs[t]) if l >= 0}
        for t in range(labels.shape[0])
    ]


def _own(f_u, num_types, width):
    if f_u is None:
        f_u = [{} for _ in range(num_types)]
    return pack([f_u], num_types, width)


def node_objective(snapshot: NeighborSnapshot, f_u, params: ModelParams) -> float:
    """``g(f_u) = sum over friends of the edge log-score``."""
    T = snapshot.num_types
    lu, pu = _own(f_u, T, None)
    d = snapshot.degree
    if d == 0:
        return 0.0
    src = np.zeros(d, dtype=np.int64)
    z = edge_logits(lu[src], pu[src], snapshot.labels, snapshot.probs, snapshot.weights, params)
    return float(np.bincount(src, log_expit(z), minlength=1)[0])


def node_gradient(
    snapshot: NeighborSnapshot, f_u, params: ModelParams
) -> dict[tuple[int, int], float]:
    """Gradient of ``g`` at ``f_u`` as ``{(type, label): value}``.

    Only labels present in some friend's distribution appear; the gradient
    is identically zero elsewhere.
    """
    T = snapshot.num_types
    d = snapshot.degree
    if d == 0:
        return {}
    lu, pu = _own(f_u, T, None)
    src = np.zeros(d, dtype=np.int64)
    group, label, grad, _, from_nbrs, _ = _gradient(
        src, 1, snapshot.labels, snapshot.probs, snapshot.weights,
        lu, pu, np.zeros((1, T), dtype=bool), params,
    )
    return {
        (int(g % T), int(l)): float(v)
        for g, l, v, keep in zip(group, label, grad, from_nbrs)
        if keep
    }


def solve_node(
    snapshot: NeighborSnapshot,
    f_u=None,
    params: ModelParams = ModelParams(),
    clamped: Sequence[bool] | None = None,
    return_trace: bool = False,
):
    """Maximize the node objective over ``f_u`` by proximal gradient ascent.

    Runs ``params.inner_steps`` steps from ``f_u`` (``None`` = all empty).
    Types flagged in ``clamped`` pass through untouched. Returns the new
    list of per-type distributions, plus the objective trace when
    ``return_trace`` is set.
    """
    T = snapshot.num_types
    lu, pu = _own(f_u, T, params.clip_size)
    cl = np.zeros((1, T), dtype=bool) if clamped is None else np.asarray([clamped], dtype=bool)
    src = np.zeros(snapshot.degree, dtype=np.int64)
    labels, probs, trace = explain_block(
        src, snapshot.labels, snapshot.probs, snapshot.weights, lu, pu, cl, params
    )
    out = unpack(labels[0], probs[0])
    if return_trace:
        return out, trace[0].tolist()
    return out


# ---------------------------------------------------------------------------
# Whole-graph objective
# ---------------------------------------------------------------------------


def objective(graph: Graph, beliefs: BeliefState, params: ModelParams, chunk: int = 65536) -> float:
    """Sum of edge log-scores, each undirected edge counted once."""
    src = graph.sources()
    entries = np.flatnonzero(src < graph.indices)
    total = 0.0
    T = beliefs.num_types
    for start in range(0, len(entries), chunk):
        e = entries[start : start + chunk]
        u, v = src[e], graph.indices[e]
        w = graph.typed_weights(e, T)
        z = edge_logits(beliefs.labels[u], beliefs.probs[u], beliefs.labels[v], beliefs.probs[v], w, params)
        total += float(log_expit(z).sum())
    return total
