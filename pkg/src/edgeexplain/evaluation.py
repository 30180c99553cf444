"""Cross-validation folds, recall@k, lifts, parameter sweeps and resolution curves."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr

from .beliefs import BeliefState
from .engine import run_inference
from .explain import ModelParams
from .graph import Graph, ObservedLabels, sparsify_by_age
from .synth import GeneratorConfig, generate

# distinct stream tag so fold draws never reuse the generator's seed stream
_FOLD_STREAM = 0xF01D


def make_folds(nodes, folds: int, seed: int = 0) -> np.ndarray:
    """Assign each node to one of ``folds`` parts uniformly at random.

    Parameters
    ----------
    nodes : int or sequence
        Node count, or the nodes themselves (only their number matters).
    folds : int
        Number of parts, at least 2.
    seed : int

    Returns
    -------
    ndarray of int, aligned with ``nodes``; part sizes differ by at most one.
    """
    n = nodes if isinstance(nodes, (int, np.integer)) else len(nodes)
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if folds > n:
        raise ValueError(f"cannot split {n} nodes into {folds} folds")
    rng = np.random.default_rng((seed, _FOLD_STREAM))
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % folds
    return assignment


def split_observed(observed: ObservedLabels, assignment: np.ndarray, fold: int):
    """``(training view, held-out pairs)`` when hiding every node of ``fold``."""
    held_nodes = np.flatnonzero(assignment == fold)
    return observed.without_nodes(held_nodes), observed.restricted_to(held_nodes)


# ---------------------------------------------------------------------------
# Recall
# ---------------------------------------------------------------------------


@dataclass
class TypeScores:
    n: int = 0
    hits: dict[int, int] = field(default_factory=dict)

    def recall(self, k: int) -> float:
        return self.hits.get(k, 0) / self.n if self.n else float("nan")


@dataclass
class EvalReport:
    """Recall@k per label type, optionally compared against a baseline."""

    ks: tuple[int, ...]
    scores: dict[str, TypeScores]

    @property
    def types(self) -> list[str]:
        return list(self.scores)

    def recall(self, type_name: str, k: int) -> float:
        return self.scores[type_name].recall(k)

    def lift(self, base: "EvalReport") -> dict[tuple[str, int], float]:
        """``(new - base) / base`` per ``(type, k)``; equal values give exactly 0."""
        out = {}
        for t in self.scores:
            for k in self.ks:
                new, old = self.recall(t, k), base.recall(t, k)
                if new == old:
                    out[t, k] = 0.0
                elif old == 0:
                    out[t, k] = float("inf")
                else:
                    out[t, k] = (new - old) / old
        return out

    def rows(self, base: "EvalReport | None" = None) -> list[tuple[str, str, float]]:
        lifts = self.lift(base) if base is not None else {}
        rows = []
        for t, s in self.scores.items():
            for k in self.ks:
                rows.append((t, f"recall@{k}", s.recall(k)))
            rows.append((t, "n", float(s.n)))
            for k in self.ks:
                if (t, k) in lifts:
                    rows.append((t, f"lift@{k}", lifts[t, k]))
        return rows


def _ranked(predictions, key) -> Sequence:
    if isinstance(predictions, BeliefState):
        u, t = key
        return predictions.ranking(u, t)
    return predictions.get(key, ())


def recall_at_k(
    predictions,
    held: Mapping[tuple[Hashable, Hashable], Hashable] | ObservedLabels,
    ks: Iterable[int] = (1, 3),
    type_names: Sequence[str] | None = None,
) -> EvalReport:
    """Recall of held-out labels within the top ``k`` predictions.

    Parameters
    ----------
    predictions : BeliefState or mapping
        Either inferred beliefs, or ``{(node, type): ranked labels}``.
    held : mapping
        ``{(node, type): true label}``; every pair is in the denominator and
        missing or empty predictions count as misses.
    ks : iterable of int
    type_names : sequence of str, optional
        Names for integer type keys; the report lists types in this order.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError("k must be at least 1")
    scores: dict[str, TypeScores] = {}
    if type_names is not None:
        for name in type_names:
            scores[name] = TypeScores()
    for key, truth in sorted(held.items()):
        t = key[1]
        name = type_names[t] if type_names is not None and isinstance(t, (int, np.integer)) else str(t)
        s = scores.setdefault(name, TypeScores())
        ranking = list(_ranked(predictions, key))
        s.n += 1
        rank = ranking.index(truth) if truth in ranking else None
        for k in ks:
            if rank is not None and rank < k:
                s.hits[k] = s.hits.get(k, 0) + 1
    return EvalReport(ks, scores)


def write_report(path, report: EvalReport, base: EvalReport | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, metric, value in report.rows(base):
            fh.write(f"{t}\t{metric}\t{value!r}\n")


# ---------------------------------------------------------------------------
# Resolution curve
# ---------------------------------------------------------------------------


@dataclass
class CurveBucket:
    lo: float
    hi: float
    n: int
    p_correct: float  # fraction with the truth in the top 3; nan if empty


def shared_fraction_bucket(shared: int, known: int, buckets: int = 10) -> int:
    """Decile of ``shared / known`` in exact integer arithmetic; 1.0 joins the top bucket."""
    return min(buckets - 1, (buckets * shared) // known)


def resolution_curve(
    graph: Graph,
    observed: ObservedLabels,
    predictions,
    held: Mapping[tuple[int, int], int],
    type_idx: int,
    k: int = 3,
    buckets: int = 10,
) -> list[CurveBucket]:
    """P(truth in top ``k``) against the share of label-known friends with the same label.

    ``observed`` is the training view: a friend counts as label-known when
    it has an observation for ``type_idx`` there. Held-out nodes without any
    label-known friend are left out.
    """
    n = np.zeros(buckets, dtype=np.int64)
    hits = np.zeros(buckets, dtype=np.int64)
    for (u, t), truth in sorted(held.items()):
        if t != type_idx:
            continue
        known = shared = 0
        for v in graph.neighbors(u).tolist():
            label = observed.get((v, t))
            if label is not None:
                known += 1
                shared += label == truth
        if known == 0:
            continue
        b = shared_fraction_bucket(shared, known, buckets)
        n[b] += 1
        hits[b] += truth in list(_ranked(predictions, (u, t)))[:k]
    return [
        CurveBucket(b / buckets, (b + 1) / buckets, int(n[b]), hits[b] / n[b] if n[b] else float("nan"))
        for b in range(buckets)
    ]


def curve_spearman(curve: Sequence[CurveBucket], min_count: int = 1) -> float:
    """Spearman correlation between bucket position and P(correct), over buckets with ``n >= min_count``."""
    pts = [(i, b.p_correct) for i, b in enumerate(curve) if b.n >= min_count]
    if len(pts) < 2:
        return float("nan")
    x, y = zip(*pts)
    return float(spearmanr(x, y).statistic)


def write_curve(path, curve: Sequence[CurveBucket]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in curve:
            fh.write(f"{b.lo!r}\t{b.hi!r}\t{b.n}\t{float(b.p_correct)!r}\n")


# ---------------------------------------------------------------------------
# Cross-validation and sweeps
# ---------------------------------------------------------------------------


@dataclass
class FoldRun:
    report: EvalReport
    beliefs: BeliefState
    train: ObservedLabels
    held: ObservedLabels
    millis_per_superstep: float
    supersteps: int


def evaluate_fold(
    graph: Graph,
    observed: ObservedLabels,
    assignment: np.ndarray,
    fold: int,
    params: ModelParams,
    mode: str,
    type_names: Sequence[str],
    threads: int = 1,
    ks: Iterable[int] = (1, 3),
) -> FoldRun:
    """Hide ``fold``, infer from the rest, and score the hidden pairs."""
    train, held = split_observed(observed, assignment, fold)
    if any(pair in train for pair in held):
        raise AssertionError("held-out pair leaked into the training view")
    beliefs, reports = run_inference(
        graph, train, params, mode=mode, num_types=len(type_names), threads=threads
    )
    millis = float(np.mean([r.millis for r in reports])) if reports else 0.0
    report = recall_at_k(beliefs, held, ks, type_names)
    return FoldRun(report, beliefs, train, held, millis, len(reports))


def cross_validate(
    graph: Graph,
    observed: ObservedLabels,
    params: ModelParams,
    mode: str,
    type_names: Sequence[str],
    folds: int = 5,
    seed: int = 0,
    threads: int = 1,
    max_folds: int | None = None,
) -> list[FoldRun]:
    """One run per fold (or the first ``max_folds`` of them)."""
    assignment = make_folds(graph.num_nodes, folds, seed)
    todo = range(folds if max_folds is None else min(folds, max_folds))
    return [
        evaluate_fold(graph, observed, assignment, i, params, mode, type_names, threads)
        for i in todo
    ]


SWEEP_PARAMS = ("alpha", "K")


@dataclass
class SweepPoint:
    value: float
    report: EvalReport
    millis: float  # mean wall time per superstep
    num_edges: int


def sweep(
    param: str,
    values: Sequence[float],
    config: GeneratorConfig,
    params: ModelParams = ModelParams(),
    mode: str = "edgeexplain",
    folds: int = 5,
    max_folds: int | None = 1,
    threads: int = 1,
) -> list[SweepPoint]:
    """Re-run inference for each value of ``alpha`` or the friend budget ``K``.

    The graph is generated once from ``config`` (so every value sees the
    same graph and folds). For ``K`` the graph is age-sparsified first.
    Recall is averaged over the evaluated folds.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}")
    if len(values) == 0:
        raise ValueError("at least one value is required")
    graph, observed, _, schema = generate(config)
    names = list(schema.types)
    points = []
    for value in values:
        g, p = graph, params
        if param == "alpha":
            p = replace(params, alpha=float(value))
        else:
            g = sparsify_by_age(graph, int(value))
        runs = cross_validate(g, observed, p, mode, names, folds, config.seed, threads, max_folds)
        report = _merge([r.report for r in runs])
        millis = float(np.mean([r.millis_per_superstep for r in runs]))
        points.append(SweepPoint(float(value), report, millis, g.num_edges))
    return points


def _merge(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool hits and denominators of several fold reports."""
    merged: dict[str, TypeScores] = {}
    for rep in reports:
        for t, s in rep.scores.items():
            m = merged.setdefault(t, TypeScores())
            m.n += s.n
            for k, h in s.hits.items():
                m.hits[k] = m.hits.get(k, 0) + h
    return EvalReport(reports[0].ks, merged)


def write_sweep(path, param: str, points: Sequence[SweepPoint]) -> None:
    base = points[0].report
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pt in points:
            lifts = pt.report.lift(base)
            for t in pt.report.types:
                fh.write(
                    f"{param}\t{pt.value!r}\t{t}\t{pt.report.recall(t, 1)!r}\t{pt.report.recall(t, 3)!r}"
                    f"\t{lifts[t, 1]!r}\t{lifts[t, 3]!r}\t{pt.millis:.3f}\n"
                )
