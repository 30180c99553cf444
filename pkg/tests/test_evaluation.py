import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgeexplain.beliefs import BeliefState
from edgeexplain.evaluation import (
    CurveBucket,
    EvalReport,
    TypeScores,
    cross_validate,
    curve_spearman,
    make_folds,
    recall_at_k,
    resolution_curve,
    shared_fraction_bucket,
    split_observed,
    sweep,
    write_curve,
    write_report,
    write_sweep,
)
from edgeexplain.explain import ModelParams
from edgeexplain.graph import Graph, ObservedLabels
from edgeexplain.synth import GeneratorConfig, generate


def star(num_leaves):
    ids = ["hub"] + [f"l{i}" for i in range(num_leaves)]
    leaves = np.arange(1, num_leaves + 1)
    return Graph.from_edges(ids, np.zeros(num_leaves, dtype=np.int64), leaves)


class TestFolds:
    def test_even_split(self):
        a = make_folds(10, 5, seed=1)
        assert np.bincount(a).tolist() == [2] * 5

    @given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 2**31))
    def test_partition_sizes_differ_by_at_most_one(self, n, folds, seed):
        if folds > n:
            return
        counts = np.bincount(make_folds(n, folds, seed), minlength=folds)
        assert counts.sum() == n and counts.max() - counts.min() <= 1

    def test_deterministic_and_seed_dependent(self):
        assert np.array_equal(make_folds(50, 5, 3), make_folds(50, 5, 3))
        assert not np.array_equal(make_folds(50, 5, 3), make_folds(50, 5, 4))

    def test_accepts_node_sequence(self):
        assert np.array_equal(make_folds(["a", "b", "c", "d"], 2, 0), make_folds(4, 2, 0))

    def test_errors(self):
        with pytest.raises(ValueError):
            make_folds(10, 1)
        with pytest.raises(ValueError):
            make_folds(3, 4)

    def test_split_hides_whole_fold(self):
        obs = ObservedLabels(((u, t), u + t) for u in range(20) for t in range(2))
        a = make_folds(20, 4, 0)
        train, held = split_observed(obs, a, 2)
        assert len(train) + len(held) == len(obs)
        assert all(a[u] == 2 for u, _ in held)
        assert all(a[u] != 2 for u, _ in train)


class TestRecall:
    def test_perfect_predictor(self):
        held = ObservedLabels([((0, 0), 3), ((1, 0), 1), ((1, 1), 2)])
        state = BeliefState.from_observed(2, 2, 4, held)
        rep = recall_at_k(state, held, (1, 3), ["hometown", "college"])
        assert rep.recall("hometown", 1) == 1.0 and rep.recall("college", 1) == 1.0

    def test_rank_semantics(self):
        preds = {("u", "city"): ["a", "b", "c"]}
        rep = recall_at_k(preds, {("u", "city"): "b"}, (1, 3))
        assert rep.recall("city", 1) == 0.0 and rep.recall("city", 3) == 1.0

    def test_abstentions_are_misses(self):
        held = {(0, 0): 1, (1, 0): 2}
        rep = recall_at_k(BeliefState.empty(2, 1, 3), held, (1, 3), ["t"])
        assert rep.scores["t"].n == 2
        assert rep.recall("t", 1) == 0.0 and rep.recall("t", 3) == 0.0

    def test_ties_rank_lower_label_first(self):
        state = BeliefState.empty(1, 1, 3)
        state.set_distribution(0, 0, {4: 0.5, 2: 0.5})
        assert recall_at_k(state, {(0, 0): 2}, (1,), ["t"]).recall("t", 1) == 1.0
        assert recall_at_k(state, {(0, 0): 4}, (1,), ["t"]).recall("t", 1) == 0.0

    def test_monotone_in_k(self, rng):
        state = BeliefState.empty(30, 1, 5)
        for u in range(30):
            labels = rng.choice(10, size=5, replace=False)
            state.set_distribution(u, 0, dict(zip(labels.tolist(), rng.dirichlet(np.ones(5)).tolist())))
        held = {(u, 0): int(rng.integers(0, 10)) for u in range(30)}
        rep = recall_at_k(state, held, (1, 2, 3, 5), ["t"])
        vals = [rep.recall("t", k) for k in (1, 2, 3, 5)]
        assert vals == sorted(vals) and 0 <= vals[0] and vals[-1] <= 1

    def test_empty_type_is_nan(self):
        rep = recall_at_k({}, {}, (1,), ["t"])
        assert math.isnan(rep.recall("t", 1))

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            recall_at_k({}, {}, (0,))


class TestLift:
    def report(self, n, hits1):
        return EvalReport((1,), {"t": TypeScores(n, {1: hits1})})

    def test_self_lift_is_zero(self, rng):
        rep = EvalReport((1, 3), {t: TypeScores(7, {1: 3, 3: 5}) for t in "abc"})
        assert all(v == 0.0 for v in rep.lift(rep).values())

    def test_relative_improvement(self):
        assert self.report(10, 6).lift(self.report(10, 4))["t", 1] == pytest.approx(0.5)
        assert self.report(10, 2).lift(self.report(10, 4))["t", 1] == pytest.approx(-0.5)

    def test_zero_base(self):
        assert self.report(10, 1).lift(self.report(10, 0))["t", 1] == math.inf
        assert self.report(10, 0).lift(self.report(10, 0))["t", 1] == 0.0

    def test_write_report(self, tmp_path):
        new, base = self.report(10, 6), self.report(10, 4)
        write_report(tmp_path / "r.tsv", new, base)
        rows = [line.split("\t") for line in (tmp_path / "r.tsv").read_text().splitlines()]
        assert [r[:2] for r in rows] == [["t", "recall@1"], ["t", "n"], ["t", "lift@1"]]
        assert [float(r[2]) for r in rows] == pytest.approx([0.6, 10.0, 0.5])


class TestResolutionCurve:
    def test_bucket_edges(self):
        assert shared_fraction_bucket(0, 5) == 0
        assert shared_fraction_bucket(5, 5) == 9
        assert shared_fraction_bucket(1, 10) == 1
        assert shared_fraction_bucket(9, 10) == 9
        assert shared_fraction_bucket(1, 3) == 3

    def curve_for(self, leaf_labels, truth, ranking):
        g = star(len(leaf_labels))
        observed = ObservedLabels(((i + 1, 0), l) for i, l in enumerate(leaf_labels))
        return resolution_curve(g, observed, {(0, 0): ranking}, {(0, 0): truth}, 0)

    def test_all_neighbors_share(self):
        curve = self.curve_for([1, 1, 1], 1, [1])
        assert [b.n for b in curve] == [0] * 9 + [1]
        assert curve[9].p_correct == 1.0 and (curve[9].lo, curve[9].hi) == (0.9, 1.0)

    def test_no_neighbor_shares(self):
        curve = self.curve_for([2, 3], 1, [5, 6, 7, 1])
        assert curve[0].n == 1 and curve[0].p_correct == 0.0
        assert math.isnan(curve[1].p_correct)

    def test_nodes_without_known_neighbors_are_skipped(self):
        g = star(2)
        curve = resolution_curve(g, ObservedLabels(), {}, {(0, 0): 1}, 0)
        assert sum(b.n for b in curve) == 0

    def test_other_types_ignored(self):
        g = star(2)
        obs = ObservedLabels([((1, 0), 1), ((2, 1), 1)])
        curve = resolution_curve(g, obs, {}, {(0, 0): 1, (0, 1): 1}, 0)
        assert sum(b.n for b in curve) == 1

    def test_spearman(self):
        rising = [CurveBucket(i / 10, (i + 1) / 10, 5, i / 10) for i in range(10)]
        assert curve_spearman(rising) == pytest.approx(1.0)
        sparse = [CurveBucket(0, 0.1, 0, float("nan"))] * 10
        assert math.isnan(curve_spearman(sparse))

    def test_spearman_min_count(self):
        curve = [CurveBucket(i / 10, (i + 1) / 10, 1 if i == 5 else 9, i / 10) for i in range(10)]
        curve[5] = CurveBucket(0.5, 0.6, 1, 0.0)
        assert curve_spearman(curve, min_count=2) == pytest.approx(1.0)
        assert curve_spearman(curve) < 1.0

    def test_write_curve(self, tmp_path):
        write_curve(tmp_path / "c.tsv", [CurveBucket(0.0, 0.1, 3, 0.5)])
        assert (tmp_path / "c.tsv").read_text() == "0.0\t0.1\t3\t0.5\n"


@pytest.fixture(scope="module")
def small_planted():
    return GeneratorConfig.benchmark(num_nodes=500, seed=2)


class TestRuns:
    def test_cross_validate_has_no_leakage(self, small_planted):
        graph, observed, _, schema = generate(small_planted)
        runs = cross_validate(graph, observed, ModelParams(max_supersteps=3), "lp", schema.types, folds=5, max_folds=2)
        assert len(runs) == 2
        for r in runs:
            assert not any(pair in r.train for pair in r.held)
            assert len(r.train) + len(r.held) == len(observed)
            assert r.supersteps <= 3

    def test_sweep_single_value_has_zero_lift(self, small_planted, tmp_path):
        points = sweep("alpha", [10.0], small_planted, ModelParams(max_supersteps=3))
        assert len(points) == 1
        assert all(v == 0.0 for v in points[0].report.lift(points[0].report).values())
        write_sweep(tmp_path / "s.tsv", "alpha", points)
        rows = [line.split("\t") for line in (tmp_path / "s.tsv").read_text().splitlines()]
        assert len(rows) == 5 and all(r[0] == "alpha" and r[5] == "0.0" for r in rows)

    def test_sweep_k_sparsifies(self, small_planted):
        points = sweep("K", [2, 5], small_planted, ModelParams(max_supersteps=2), mode="lp")
        assert points[0].num_edges < points[1].num_edges

    def test_sweep_errors(self, small_planted):
        with pytest.raises(ValueError):
            sweep("c", [1.0], small_planted)
        with pytest.raises(ValueError):
            sweep("alpha", [], small_planted)
