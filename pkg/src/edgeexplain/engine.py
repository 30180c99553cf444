"""Bulk-synchronous vertex-centric execution.

Each superstep publishes every node's clipped distributions, then every
node with an unclamped type recomputes its own distributions from that
frozen snapshot. Nodes are split into contiguous index blocks; workers
write disjoint slices of the next state, so the result does not depend on
the number of workers.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .beliefs import BeliefState, l1_change
from .explain import ModelParams, NeighborSnapshot, explain_block, objective
from .graph import Graph, ObservedLabels
from .propagation import lp_block, lp_energy

log = logging.getLogger(__name__)

MODES = ("lp", "edgeexplain")

# upper bound on E * T * K * K elements materialized per block
_BLOCK_BUDGET = 1 << 21


@dataclass
class SuperstepReport:
    superstep: int
    max_change: float
    objective: float  # EdgeExplain objective, or total LP energy in lp mode
    millis: float
    messages: int


def _blocks(graph: Graph, num_types: int, clip_size: int) -> list[tuple[int, int]]:
    per_edge = max(1, num_types * clip_size * clip_size)
    max_edges = max(1, _BLOCK_BUDGET // per_edge)
    indptr = graph.indptr
    n = graph.num_nodes
    out = []
    lo = 0
    while lo < n:
        # furthest hi such that indptr[hi] - indptr[lo] <= max_edges, at least lo + 1
        hi = int(np.searchsorted(indptr, indptr[lo] + max_edges, side="right")) - 1
        hi = min(max(hi, lo + 1), n)
        out.append((lo, hi))
        lo = hi
    return out


def _num_types(observed: ObservedLabels, num_types: int | None) -> int:
    if num_types is not None:
        return num_types
    return max((t for _, t in observed), default=-1) + 1


class _Superstep:
    """Computes one block of the next state from a frozen snapshot."""

    def __init__(self, graph, state: BeliefState, params: ModelParams, mode: str):
        self.graph = graph
        self.state = state
        self.params = params
        self.mode = mode
        self.sources = graph.sources()
        self.next_labels = state.labels.copy()
        self.next_probs = state.probs.copy()

    def __call__(self, block: tuple[int, int]) -> float:
        lo, hi = block
        g, s, p = self.graph, self.state, self.params
        clamped = s.clamped[lo:hi]
        if clamped.all():
            return 0.0
        elo, ehi = int(g.indptr[lo]), int(g.indptr[hi])
        nbrs = g.indices[elo:ehi]
        src = self.sources[elo:ehi] - lo
        nl, npr = s.labels[nbrs], s.probs[nbrs]
        cur_l, cur_p = s.labels[lo:hi], s.probs[lo:hi]
        if self.mode == "edgeexplain":
            w = g.typed_weights(slice(elo, ehi), s.num_types)
            new_l, new_p, _ = explain_block(src, nl, npr, w, cur_l, cur_p, clamped, p)
        else:
            new_l, new_p = lp_block(src, nl, npr, g.weights[elo:ehi], clamped, p.clip_size)
            new_l[clamped] = cur_l[clamped]
            new_p[clamped] = cur_p[clamped]
        self.next_labels[lo:hi] = new_l
        self.next_probs[lo:hi] = new_p
        return float(l1_change(cur_l, cur_p, new_l, new_p).max(initial=0.0))


def run_inference(
    graph: Graph,
    observed: ObservedLabels,
    params: ModelParams = ModelParams(),
    mode: str = "edgeexplain",
    num_types: int | None = None,
    threads: int = 1,
    initial: BeliefState | None = None,
) -> tuple[BeliefState, list[SuperstepReport]]:
    """Run Jacobi supersteps until the max L1 change falls below ``params.tol``.

    Parameters
    ----------
    graph, observed
        Training view; every observation is clamped as a point mass.
    params
        Model and stopping parameters.
    mode
        ``"edgeexplain"`` (proximal ascent per node) or ``"lp"``.
    num_types
        Number of label types; inferred from ``observed`` when omitted.
    threads
        Worker count. Changes wall-clock only, never the output.
    initial
        Optional starting state (its clamped rows must match ``observed``).

    Returns
    -------
    beliefs : BeliefState
    reports : list of SuperstepReport
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    T = _num_types(observed, num_types)
    if initial is None:
        state = BeliefState.from_observed(graph.num_nodes, T, params.clip_size, observed)
    else:
        state = initial.copy()
    blocks = _blocks(graph, T, params.clip_size)
    reports: list[SuperstepReport] = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(1, params.max_supersteps + 1):
            t0 = time.perf_counter()
            messages = state.entry_count()
            step = _Superstep(graph, state, params, mode)
            changes = list(pool.map(step, blocks)) if pool else [step(b) for b in blocks]
            state = BeliefState(step.next_labels, step.next_probs, state.clamped)
            millis = (time.perf_counter() - t0) * 1e3
            if mode == "edgeexplain":
                value = objective(graph, state, params)
            else:
                value = sum(lp_energy(graph, state, t) for t in range(T))
            max_change = max(changes, default=0.0)
            reports.append(SuperstepReport(k, max_change, value, millis, messages))
            log.debug("superstep %d: change=%.3g objective=%.6g", k, max_change, value)
            if max_change < params.tol:
                break
    finally:
        if pool:
            pool.shutdown()
    return state, reports


def gauss_seidel_pass(
    graph: Graph,
    observed: ObservedLabels,
    params: ModelParams = ModelParams(),
    num_types: int | None = None,
    sweeps: int = 1,
    initial: BeliefState | None = None,
) -> tuple[BeliefState, list[float]]:
    """Sequential EdgeExplain sweeps in node-index order.

    Every update is visible to the nodes after it. The returned trace starts
    with the objective of the initial state and adds each node's change in
    its own objective, which equals the change of the global objective.
    """
    T = _num_types(observed, num_types)
    if initial is None:
        state = BeliefState.from_observed(graph.num_nodes, T, params.clip_size, observed)
    else:
        state = initial.copy()
    trace = [objective(graph, state, params)]
    degree = graph.degree()
    for _ in range(sweeps):
        for u in range(graph.num_nodes):
            if degree[u] == 0 or state.clamped[u].all():
                continue
            snap = NeighborSnapshot.from_graph(graph, state, u)
            new_l, new_p, tr = explain_block(
                np.zeros(snap.degree, dtype=np.int64),
                snap.labels, snap.probs, snap.weights,
                state.labels[u : u + 1], state.probs[u : u + 1], state.clamped[u : u + 1],
                params,
            )
            state.labels[u] = new_l[0]
            state.probs[u] = new_p[0]
            trace.append(trace[-1] + (tr[0, -1] - tr[0, 0]))
    return state, trace
