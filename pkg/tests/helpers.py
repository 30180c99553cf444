"""Random small instances shared by several test modules."""

import numpy as np

from edgeexplain.beliefs import BeliefState
from edgeexplain.explain import NeighborSnapshot, node_gradient, objective
from edgeexplain.graph import Graph


def random_distribution(rng, labels, floor=0.0):
    """Random distribution over ``labels`` with every entry >= ``floor``."""
    labels = list(labels)
    if not labels:
        return {}
    raw = rng.dirichlet(np.ones(len(labels)))
    p = floor + (1 - floor * len(labels)) * raw
    return {int(l): float(x) for l, x in zip(labels, p)}


def random_state(rng, num_nodes, num_types, num_labels, clip=8, floor=0.0, empty_prob=0.2):
    state = BeliefState.empty(num_nodes, num_types, clip)
    for u in range(num_nodes):
        for t in range(num_types):
            if rng.random() < empty_prob:
                continue
            size = int(rng.integers(1, min(num_labels, clip) + 1))
            support = rng.choice(num_labels, size=size, replace=False)
            state.set_distribution(u, t, random_distribution(rng, support, floor))
    return state


def random_graph(rng, num_nodes, p=0.5, weighted=False):
    pairs = [(a, b) for a in range(num_nodes) for b in range(a + 1, num_nodes) if rng.random() < p]
    src = np.array([a for a, _ in pairs], dtype=np.int64)
    dst = np.array([b for _, b in pairs], dtype=np.int64)
    w = rng.uniform(0.5, 2.0, size=len(pairs)) if weighted else None
    return Graph.from_edges([f"v{i}" for i in range(num_nodes)], src, dst, w)


def random_snapshot(rng, degree, num_types, num_labels, floor=0.0):
    dists = [
        [
            random_distribution(rng, rng.choice(num_labels, size=rng.integers(1, num_labels + 1), replace=False), floor)
            if rng.random() < 0.85
            else {}
            for _ in range(num_types)
        ]
        for _ in range(degree)
    ]
    return NeighborSnapshot.from_dicts(dists, num_types=num_types)


def finite_difference_gradient(graph, state, u, params, keys, h=1e-6):
    """Central differences of the whole-graph objective in f_u coordinates."""
    out = {}
    for t, l in keys:
        vals = []
        for sign in (1, -1):
            s = state.copy()
            dist = s.distribution(u, t)
            dist[l] = dist.get(l, 0.0) + sign * h
            s.set_distribution(u, t, dist)
            vals.append(objective(graph, s, params))
        out[t, l] = (vals[0] - vals[1]) / (2 * h)
    return out


def gradient_check(rng, params, norm=False):
    """Worst relative error of node_gradient against central differences on one random instance.

    Per component by default; with ``norm`` the max-norm error
    ``|g - fd|_inf / |fd|_inf``, which is not swamped by differencing noise
    on near-zero components.
    """
    n = int(rng.integers(2, 6))
    T = int(rng.integers(1, 4))
    nl = int(rng.integers(1, 5))
    graph = random_graph(rng, n, p=0.6, weighted=bool(rng.integers(2)))
    state = random_state(rng, n, T, nl, clip=8, floor=0.05)
    u = int(rng.integers(n))
    snap = NeighborSnapshot.from_graph(graph, state, u)
    grad = node_gradient(snap, state.node_distributions(u), params)
    keys = {(t, l) for t in range(T) for l in range(nl)}
    fd = finite_difference_gradient(graph, state, u, params, sorted(keys))
    if norm:
        diff = max(abs(grad.get(key, 0.0) - value) for key, value in fd.items())
        return diff / max(max(abs(v) for v in fd.values()), 1e-7)
    worst = 0.0
    for key, value in fd.items():
        g = grad.get(key, 0.0)
        scale = max(abs(value), abs(g))
        if scale > 1e-7:
            worst = max(worst, abs(g - value) / scale)
        else:
            worst = max(worst, abs(g - value) / 1e-7)
    return worst
