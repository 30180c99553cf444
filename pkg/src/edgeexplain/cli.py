"""Command-line entry point: ``edgeexplain <subcommand> ...``."""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

from .engine import MODES, run_inference
from .evaluation import (
    SWEEP_PARAMS,
    recall_at_k,
    resolution_curve,
    sweep,
    write_curve,
    write_report,
    write_sweep,
)
from .explain import LIPSCHITZ_RULES, STEP_POLICIES, ModelParams
from .graph import (
    DataError,
    LabelSchema,
    dataset_files,
    load_dataset,
    sparsify_by_age,
    write_dataset,
    _read_tsv,
)
from .synth import GeneratorConfig, InfeasibleConfig, generate, make_fig1_instance, make_group_instance, write_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Predictions and truth files
# ---------------------------------------------------------------------------


def write_predictions(path, graph, beliefs, schema: LabelSchema) -> None:
    """``node type rank label prob`` for every ranked entry of every user node."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, node in enumerate(graph.node_ids):
            if graph.is_group[u]:
                continue
            for t, type_name in enumerate(schema.types):
                for rank, (l, p) in enumerate(zip(beliefs.labels[u, t], beliefs.probs[u, t]), 1):
                    if l < 0:
                        break
                    fh.write(f"{node}\t{type_name}\t{rank}\t{schema.label_name(t, int(l))}\t{float(p)!r}\n")


def read_predictions(path) -> dict[tuple[str, str], list[str]]:
    ranked: dict[tuple[str, str], list[tuple[int, str]]] = {}
    for lineno, f in _read_tsv(path, 5, 5):
        try:
            rank = int(f[2])
            float(f[4])
        except ValueError:
            raise DataError(f"{path}:{lineno}: rank must be an integer and prob a number") from None
        ranked.setdefault((f[0], f[1]), []).append((rank, f[3]))
    return {key: [l for _, l in sorted(entries)] for key, entries in ranked.items()}


def read_truth(path) -> dict[tuple[str, str], str]:
    truth: dict[tuple[str, str], str] = {}
    for lineno, f in _read_tsv(path, 3, 3):
        prev = truth.setdefault((f[0], f[1]), f[2])
        if prev != f[2]:
            raise DataError(f"{path}:{lineno}: conflicting truth for {f[0]!r}, {f[1]!r}")
    return truth


def _observed_pairs(path) -> set[tuple[str, str]]:
    return {(f[0], f[1]) for _, f in _read_tsv(path, 3, 3)}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _progress(args, message: str) -> None:
    if not args.quiet:
        print(message, flush=True)


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{p}: no such file")
    return p


def _require_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"{p}: no such directory")
    return p


def _require_parent(path) -> Path:
    p = Path(path)
    if not p.resolve().parent.is_dir():
        raise DataError(f"{p}: parent directory does not exist")
    return p


def _model_params(args) -> ModelParams:
    return ModelParams(
        alpha=args.alpha,
        c=args.c,
        clip_size=args.clip,
        inner_steps=args.inner_steps,
        max_supersteps=args.max_supersteps,
        tol=args.tol,
        step_policy=args.step_policy,
        lipschitz_constant_rule=args.lipschitz_rule,
        step_scale=args.step_scale,
    )


def cmd_generate(args) -> None:
    out = Path(args.out)
    if args.preset in ("fig1", "group"):
        build = make_fig1_instance if args.preset == "fig1" else make_group_instance
        graph, observed, schema, expected = build()
        write_dataset(out, graph, observed, schema)
        node = expected["node"]
        answers = expected["edgeexplain"] if args.preset == "fig1" else {"college": expected["college"]}
        with open(out / "truth.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for type_name, label in answers.items():
                fh.write(f"{node}\t{type_name}\t{label}\n")
        _progress(args, f"wrote {args.preset} instance to {out}")
        return
    if args.preset == "benchmark":
        config = GeneratorConfig.benchmark(args.nodes or 20000)
    else:
        config = GeneratorConfig.from_toml(_require_file(args.config)) if args.config else GeneratorConfig()
        if args.nodes is not None:
            config = config.replace(num_nodes=args.nodes)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    graph, observed, truth, schema = generate(config)
    write_dataset(out, graph, observed, schema)
    write_truth(out, graph, truth, schema)
    _progress(args, f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges to {out}")


def cmd_sparsify(args) -> None:
    src = _require_dir(args.in_dir)
    graph, observed, schema = load_dataset(src)
    out = Path(args.out)
    thin = sparsify_by_age(graph, args.k)
    write_dataset(out, thin, observed, schema)
    for extra in ("truth.tsv",):
        if (src / extra).exists() and (src / extra).resolve() != (out / extra).resolve():
            shutil.copyfile(src / extra, out / extra)
    _progress(args, f"kept {thin.num_edges} of {graph.num_edges} edges")


def cmd_infer(args) -> None:
    params = _model_params(args)
    src = _require_dir(args.in_dir)
    for f in dataset_files(src).values():
        _require_file(f)
    _require_parent(args.out)
    if args.trace:
        _require_parent(args.trace)
    graph, observed, schema = load_dataset(src)
    beliefs, reports = run_inference(
        graph, observed, params, mode=args.mode, num_types=schema.num_types, threads=args.threads
    )
    write_predictions(args.out, graph, beliefs, schema)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            for r in reports:
                fh.write(f"{r.superstep}\t{r.max_change!r}\t{r.objective!r}\t{r.millis:.3f}\t{r.messages}\n")
    last = reports[-1] if reports else None
    _progress(
        args,
        f"{args.mode}: {len(reports)} supersteps"
        + (f", final max change {last.max_change:.3g}" if last else ""),
    )


def cmd_evaluate(args) -> None:
    ks = _int_list(args.k, "--k")
    pred = read_predictions(_require_file(args.pred))
    truth = read_truth(_require_file(args.truth))
    _require_parent(args.out)
    if args.observed:
        seen = _observed_pairs(_require_file(args.observed))
        truth = {key: label for key, label in truth.items() if key not in seen}
    report = recall_at_k(pred, truth, ks)
    write_report(args.out, report)
    _progress(args, f"evaluated {sum(s.n for s in report.scores.values())} held-out pairs")


def cmd_sweep(args) -> None:
    values = _float_list(args.values, "--values")
    params = _model_params(args)
    _require_parent(args.out)
    config = GeneratorConfig.from_toml(_require_file(args.config)) if args.config else GeneratorConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    points = sweep(
        args.param, values, config, params, mode=args.mode,
        folds=args.folds, max_folds=args.max_folds, threads=args.threads,
    )
    write_sweep(args.out, args.param, points)
    _progress(args, f"swept {args.param} over {len(points)} values")


def cmd_resolution_curve(args) -> None:
    src = _require_dir(args.in_dir)
    pred_raw = read_predictions(_require_file(args.pred))
    truth_raw = read_truth(_require_file(args.truth))
    _require_parent(args.out)
    graph, observed, schema = load_dataset(src)
    if args.type not in schema.types:
        raise DataError(f"{src}: label type {args.type!r} does not occur in labels.tsv")
    t = schema.type_index(args.type)
    held = {}
    for (node, type_name), label in truth_raw.items():
        if type_name != args.type or not graph.has_node(node):
            continue
        u = graph.index(node)
        if (u, t) not in observed:
            held[u, t] = schema.intern(t, label)
    preds = {}
    for (node, type_name), labels in pred_raw.items():
        if type_name == args.type and graph.has_node(node):
            preds[graph.index(node), t] = [schema.intern(t, l) for l in labels]
    curve = resolution_curve(graph, observed, preds, held, t, k=args.k)
    write_curve(args.out, curve)
    _progress(args, f"{sum(b.n for b in curve)} held-out nodes bucketed")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError(f"{flag}: no values given")
    return values


def _float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError(f"{flag}: no values given")
    return values


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    d = ModelParams()
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--c", type=float, default=d.c)
    p.add_argument("--clip", type=int, default=d.clip_size)
    p.add_argument("--inner-steps", type=int, default=d.inner_steps)
    p.add_argument("--max-supersteps", type=int, default=d.max_supersteps)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--step-policy", choices=STEP_POLICIES, default=d.step_policy)
    p.add_argument("--lipschitz-rule", choices=LIPSCHITZ_RULES, default=d.lipschitz_constant_rule)
    p.add_argument("--step-scale", type=float, default=d.step_scale)
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgeexplain", description="Joint multi-type label inference on graphs.")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a planted synthetic dataset")
    p.add_argument("--config", help="generator TOML file (defaults built in)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--nodes", type=int, help="override the node count")
    p.add_argument(
        "--preset",
        choices=("fig1", "group", "benchmark"),
        help="hand-built fig1/group instance, or the planted benchmark graph",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sparsify", help="keep each user's K closest-age friends")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("infer", help="run label propagation or EdgeExplain")
    p.add_argument("--mode", choices=MODES, default="edgeexplain")
    _add_model_flags(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="recall@k of predictions against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", default="1,3")
    p.add_argument("--observed", help="labels.tsv whose pairs are excluded from scoring")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="recall and runtime across alpha or K values")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES, default="edgeexplain")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-folds", type=int, default=1)
    _add_model_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("resolution-curve", help="P(correct@3) by shared-friend fraction")
    p.add_argument("--type", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_resolution_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InfeasibleConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
