import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgeexplain.beliefs import BeliefState
from edgeexplain.explain import (
    ModelParams,
    NeighborSnapshot,
    edge_affinity,
    edge_logscore,
    lipschitz_constants,
    node_gradient,
    node_objective,
    objective,
    solve_node,
)
from edgeexplain.graph import Graph
from edgeexplain.synth import make_fig1_instance
from helpers import gradient_check, random_distribution, random_graph, random_snapshot, random_state


def exact_log_sigmoid(x):
    mpmath.mp.dps = 50
    return float(-mpmath.log1p(mpmath.exp(-mpmath.mpf(x))))


class TestEdgeAffinity:
    def test_identical_point_masses(self):
        assert edge_affinity({3: 1.0}, {3: 1.0}) == 1.0

    def test_disjoint_supports(self):
        assert edge_affinity({1: 0.5, 2: 0.5}, {3: 1.0}) == 0.0

    def test_sparse_dot_product(self):
        assert edge_affinity({1: 0.6, 2: 0.4}, {1: 0.5, 3: 0.5}) == pytest.approx(0.30, abs=1e-15)

    def test_weight_scales(self):
        assert edge_affinity({1: 1.0}, {1: 1.0}, weight=2.5) == 2.5


class TestEdgeLogscore:
    def test_zero_logit(self):
        p = ModelParams(alpha=10.0)
        assert edge_logscore([{}], [{}], p) == pytest.approx(math.log(0.5), abs=1e-15)
        assert edge_logscore([{1: 1.0}], [{2: 1.0}], p) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_fully_explained_edge(self):
        got = edge_logscore([{1: 1.0}], [{1: 1.0}], ModelParams(alpha=10.0))
        assert got == pytest.approx(exact_log_sigmoid(10.0), rel=1e-12)
        assert got == pytest.approx(-4.5399e-5, rel=1e-4)

    @pytest.mark.parametrize("logit", [-1e4, -700.0, -30.0, 30.0, 700.0, 1e4])
    def test_stable_at_extreme_logits(self, logit):
        p = ModelParams(alpha=1.0, c=logit)
        got = edge_logscore([{}], [{}], p)
        assert math.isfinite(got)
        assert got == pytest.approx(exact_log_sigmoid(logit), rel=1e-12, abs=1e-300)

    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=4),
        st.integers(0, 3),
        st.floats(0, 1),
        st.floats(0.01, 50),
        st.floats(-5, 5),
    )
    def test_monotone_in_each_affinity(self, r, which, bump, alpha, c):
        # point masses with weights realize arbitrary per-type affinities
        which = which % len(r)
        p = ModelParams(alpha=alpha, c=c)
        f = [{0: 1.0}] * len(r)
        lo = edge_logscore(f, f, p, weights=r)
        r2 = list(r)
        r2[which] += bump
        assert edge_logscore(f, f, p, weights=r2) >= lo


class TestObjective:
    def test_empty_graph(self):
        g = Graph.from_edges(["a"], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        assert objective(g, BeliefState.empty(1, 2, 8), ModelParams()) == 0.0

    def test_single_edge_counted_once(self):
        g = Graph.from_edges(["a", "b"], np.array([0]), np.array([1]))
        s = BeliefState.empty(2, 1, 8)
        s.set_distribution(0, 0, {4: 1.0})
        s.set_distribution(1, 0, {4: 1.0})
        assert objective(g, s, ModelParams(alpha=10.0)) == pytest.approx(exact_log_sigmoid(10.0), rel=1e-12)

    def test_fig1_prefers_explaining_assignment(self):
        graph, observed, schema, _ = make_fig1_instance()
        base = BeliefState.from_observed(graph.num_nodes, 2, 8, observed)
        H = schema.label_index(0, "H")
        good, bad = base.copy(), base.copy()
        good.set_distribution(0, 0, {H: 1.0})
        good.set_distribution(0, 1, {schema.label_index(1, "C"): 1.0})
        bad.set_distribution(0, 0, {H: 1.0})
        bad.set_distribution(0, 1, {schema.label_index(1, "C'"): 1.0})
        p = ModelParams(alpha=10.0)
        assert objective(graph, good, p) > objective(graph, bad, p)

    def test_matches_sum_of_edge_logscores(self, rng):
        g = random_graph(rng, 7, weighted=True)
        s = random_state(rng, 7, 3, 5)
        p = ModelParams(alpha=3.0, c=-0.5)
        src, dst, w = g.edge_list()
        expected = sum(
            edge_logscore(s.node_distributions(a), s.node_distributions(b), p, weights=[x] * 3)
            for a, b, x in zip(src, dst, w)
        )
        assert objective(g, s, p) == pytest.approx(expected, rel=1e-12)


class TestNodeGradient:
    def test_isolated_node(self):
        snap = NeighborSnapshot.from_dicts([], num_types=2)
        assert node_gradient(snap, None, ModelParams()) == {}

    def test_single_neighbor_point_mass(self):
        snap = NeighborSnapshot.from_dicts([[{3: 1.0}]])
        assert node_gradient(snap, None, ModelParams(alpha=1.0)) == {(0, 3): 0.5}

    def test_support_is_neighbor_labels(self):
        snap = NeighborSnapshot.from_dicts([[{1: 0.5, 2: 0.5}], [{2: 1.0}]])
        grad = node_gradient(snap, [{7: 1.0}], ModelParams())
        assert set(grad) == {(0, 1), (0, 2)}

    def test_matches_finite_differences(self, rng):
        for _ in range(40):
            p = ModelParams(alpha=float(rng.uniform(0.5, 4)), c=float(rng.uniform(-2, 2)))
            assert gradient_check(rng, p) < 1e-5


class TestLipschitzConstants:
    def test_rules(self):
        src = np.array([0, 0, 0, 1])
        w = np.array([[1.0, 2.0], [1.0, 1.0], [0.5, 0.5], [3.0, 1.0]])
        paper = lipschitz_constants(src, w, 2, ModelParams(alpha=4.0))
        np.testing.assert_allclose(paper, [4.0 * 3.5, 4.0 * 3.0])
        cons = lipschitz_constants(src, w, 2, ModelParams(alpha=4.0, lipschitz_constant_rule="conservative"))
        # max(alpha, alpha^2/4) = 4 for alpha = 4
        np.testing.assert_allclose(cons, [4.0 * 5.25, 4.0 * 9.0])

    def test_unit_weights_give_alpha_times_degree(self):
        src = np.array([0, 0, 0, 1])
        L = lipschitz_constants(src, np.ones((4, 3)), 2, ModelParams(alpha=10.0))
        np.testing.assert_array_equal(L, [30.0, 10.0])


class TestSolveNode:
    def test_all_clamped_is_unchanged(self):
        snap = NeighborSnapshot.from_dicts([[{1: 1.0}, {2: 1.0}]])
        f = [{5: 1.0}, {6: 1.0}]
        assert solve_node(snap, f, ModelParams(), clamped=[True, True]) == f

    def test_one_step_from_empty_reaches_vertex(self):
        snap = NeighborSnapshot.from_dicts([[{4: 1.0}]])
        for policy in ("lipschitz", "backtracking"):
            out = solve_node(snap, None, ModelParams(step_policy=policy))
            assert out == [{4: 1.0}]

    def test_isolated_node_unchanged(self):
        snap = NeighborSnapshot.from_dicts([], num_types=1)
        assert solve_node(snap, [{2: 1.0}], ModelParams()) == [{2: 1.0}]

    def test_clamped_type_passes_through(self, rng):
        snap = random_snapshot(rng, 5, 2, 4)
        out = solve_node(snap, [{9: 1.0}, {}], ModelParams(inner_steps=3), clamped=[True, False])
        assert out[0] == {9: 1.0}

    def test_backtracking_trace_never_decreases(self, rng):
        for _ in range(30):
            T = int(rng.integers(1, 4))
            snap = random_snapshot(rng, int(rng.integers(1, 9)), T, int(rng.integers(2, 7)))
            f = [random_distribution(rng, rng.choice(6, size=2, replace=False)) for _ in range(T)]
            p = ModelParams(alpha=float(rng.uniform(0.5, 40)), inner_steps=15, clip_size=int(rng.integers(2, 5)))
            _, trace = solve_node(snap, f, p, return_trace=True)
            assert all(b >= a for a, b in zip(trace, trace[1:]))

    def test_output_respects_belief_invariants(self, rng):
        for _ in range(30):
            T = int(rng.integers(1, 4))
            snap = random_snapshot(rng, int(rng.integers(1, 9)), T, 12)
            k = int(rng.integers(1, 5))
            out = solve_node(snap, None, ModelParams(clip_size=k, inner_steps=4))
            for d in out:
                assert len(d) <= k
                if d:
                    assert abs(sum(d.values()) - 1.0) < 1e-9
                    assert min(d.values()) >= 0

    def test_trace_matches_node_objective(self, rng):
        snap = random_snapshot(rng, 6, 2, 4)
        out, trace = solve_node(snap, None, ModelParams(inner_steps=3), return_trace=True)
        assert trace[-1] == pytest.approx(node_objective(snap, out, ModelParams()), rel=1e-12)


class TestConcavity:
    def test_midpoint_above_chord(self, rng):
        for _ in range(200):
            T = int(rng.integers(1, 4))
            snap = random_snapshot(rng, int(rng.integers(1, 7)), T, 4)
            p = ModelParams(alpha=float(rng.uniform(0.1, 30)), c=float(rng.uniform(-3, 3)))
            a = [random_distribution(rng, range(4)) for _ in range(T)]
            b = [random_distribution(rng, range(4)) for _ in range(T)]
            mid = [{l: 0.5 * x.get(l, 0) + 0.5 * y.get(l, 0) for l in set(x) | set(y)} for x, y in zip(a, b)]
            chord = 0.5 * node_objective(snap, a, p) + 0.5 * node_objective(snap, b, p)
            assert node_objective(snap, mid, p) >= chord - 1e-9


class TestModelParams:
    @pytest.mark.parametrize(
        "bad",
        [
            dict(alpha=0.0),
            dict(clip_size=0),
            dict(tol=0.0),
            dict(step_policy="nesterov"),
            dict(lipschitz_constant_rule="tight"),
            dict(inner_steps=0),
        ],
    )
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            ModelParams(**bad)

    def test_defaults(self):
        p = ModelParams()
        assert (p.alpha, p.c, p.clip_size, p.inner_steps, p.max_supersteps, p.tol) == (10.0, 0.0, 8, 1, 30, 1e-4)
