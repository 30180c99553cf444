"""Synthetic graphs with planted labels and single-reason edges.

Every node draws one true label per type. Within each label community the
members are split into small "pockets"; friendships of a type only form
inside its pockets, so sharing a label is necessary but far from sufficient
for an edge. Each edge records the one type that created it.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, LabelSchema, ObservedLabels

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class InfeasibleConfig(ValueError):
    """The requested edge budget cannot be realized by the pockets."""


@dataclass
class TypeConfig:
    name: str
    num_labels: int
    edge_fraction: float
    zipf: float = 1.0
    visibility: float = 0.5
    school: bool = False
    # optional co-location with an earlier type: every pocket of ``parent``
    # draws one label of this type, and each pocket member adopts it with
    # probability ``parent_affinity`` (friends who moved or work together)
    parent: str | None = None
    parent_affinity: float = 0.0


def default_types() -> list[TypeConfig]:
    return [
        TypeConfig("hometown", 400, 0.30, zipf=1.0),
        TypeConfig("current_city", 300, 0.25, zipf=1.0),
        TypeConfig("high_school", 1000, 0.20, zipf=0.8, school=True),
        TypeConfig("college", 600, 0.15, zipf=0.9, school=True),
        TypeConfig("employer", 800, 0.10, zipf=1.1),
    ]


def benchmark_types(num_nodes: int = 20000, employer_fraction: float = 0.05) -> list[TypeConfig]:
    """Type mix for the desk-scale benchmark graph.

    Starts from :func:`default_types` with vocabularies scaled so that label
    communities keep their size at any ``num_nodes`` (the defaults are sized
    for 5,000 nodes), shrinks the employer share to ``employer_fraction``
    (the other shares scale up to compensate), nests
    high schools inside hometown pockets with a steeper popularity law, and
    flattens employer popularity so a node without employer friends cannot
    simply guess the head label.
    """
    types = default_types()
    rest = sum(t.edge_fraction for t in types if t.name != "employer")
    for t in types:
        t.num_labels = max(1, round(t.num_labels * num_nodes / 5000))
        if t.name == "employer":
            t.edge_fraction = employer_fraction
            t.zipf = 0.5
        else:
            t.edge_fraction *= (1.0 - employer_fraction) / rest
        if t.name == "high_school":
            t.parent, t.parent_affinity = "hometown", 0.9
            t.zipf = 1.2
    return types


@dataclass
class GeneratorConfig:
    num_nodes: int = 5000
    mean_degree: float = 16.0
    pocket_size: float = 12.0
    pocket_edge_prob: float = 0.6
    seed: int = 0
    types: list[TypeConfig] = field(default_factory=default_types)

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("num_nodes must be at least 2")
        if not self.mean_degree > 0:
            raise ValueError("mean_degree must be positive")
        if not self.pocket_size >= 2:
            raise ValueError("pocket_size (Poisson mean) must be at least 2")
        if not 0 < self.pocket_edge_prob <= 1:
            raise ValueError("pocket_edge_prob must lie in (0, 1]")
        if not self.types:
            raise ValueError("at least one label type is required")
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise ValueError("duplicate type names")
        for t in self.types:
            if t.num_labels < 1:
                raise ValueError(f"{t.name}: num_labels must be positive")
            if not t.edge_fraction >= 0:
                raise ValueError(f"{t.name}: edge_fraction must be non-negative")
            if not t.zipf >= 0:
                raise ValueError(f"{t.name}: zipf exponent must be non-negative")
            if not 0 <= t.visibility <= 1:
                raise ValueError(f"{t.name}: visibility must lie in [0, 1]")
            if not 0 <= t.parent_affinity <= 1:
                raise ValueError(f"{t.name}: parent_affinity must lie in [0, 1]")
            if t.parent is not None and t.parent not in names[: names.index(t.name)]:
                raise ValueError(f"{t.name}: parent {t.parent!r} must be an earlier type")
        total = sum(t.edge_fraction for t in self.types)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"edge fractions must sum to 1, got {total}")

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        data = dict(data)
        raw_types = data.pop("types", None)
        kwargs = {k: data[k] for k in ("num_nodes", "mean_degree", "pocket_size", "pocket_edge_prob", "seed") if k in data}
        unknown = set(data) - set(kwargs)
        if unknown:
            raise ValueError(f"unknown generator settings: {sorted(unknown)}")
        if raw_types is not None:
            kwargs["types"] = [TypeConfig(name=name, **spec) for name, spec in raw_types.items()]
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path) -> "GeneratorConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    @classmethod
    def benchmark(cls, num_nodes: int = 20000, seed: int = 0) -> "GeneratorConfig":
        return cls(num_nodes=num_nodes, seed=seed, types=benchmark_types(num_nodes))

    def replace(self, **changes) -> "GeneratorConfig":
        data = {
            "num_nodes": self.num_nodes,
            "mean_degree": self.mean_degree,
            "pocket_size": self.pocket_size,
            "pocket_edge_prob": self.pocket_edge_prob,
            "seed": self.seed,
            "types": [TypeConfig(**vars(t)) for t in self.types],
        }
        data.update(changes)
        return GeneratorConfig(**data)


@dataclass
class PlantedTruth:
    labels: np.ndarray  # (n, T) true label per node and type
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_reason: np.ndarray  # type index that created each edge

    def audit(self) -> int:
        """Number of edges whose endpoints do NOT share their reason label."""
        a = self.labels[self.edge_src, self.edge_reason]
        b = self.labels[self.edge_dst, self.edge_reason]
        return int(np.count_nonzero(a != b))

    def as_observations(self) -> ObservedLabels:
        n, T = self.labels.shape
        return ObservedLabels(((u, t), int(self.labels[u, t])) for u in range(n) for t in range(T))


def zipf_probabilities(num_labels: int, exponent: float) -> np.ndarray:
    p = np.arange(1, num_labels + 1, dtype=np.float64) ** -exponent
    return p / p.sum()


def _pockets(labels: np.ndarray, mean_size: float, rng) -> list[np.ndarray]:
    """Split each label community into Poisson-sized pockets."""
    order = np.lexsort((rng.random(len(labels)), labels))
    sorted_labels = labels[order]
    starts = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1]])
    ends = np.r_[starts[1:], len(order)]
    pockets = []
    for s, e in zip(starts, ends):
        pos = s
        while pos < e:
            size = max(1, int(rng.poisson(mean_size)))
            pockets.append(order[pos : min(pos + size, e)])
            pos += size
    return pockets


def generate(config: GeneratorConfig):
    """Sample a planted graph.

    Returns
    -------
    graph : Graph
    observed : ObservedLabels
        Each ``(node, type)`` revealed independently with the type's
        visibility.
    truth : PlantedTruth
    schema : LabelSchema
    """
    rng = np.random.default_rng(config.seed)
    n = config.num_nodes
    T = len(config.types)
    width = len(str(n - 1))
    node_ids = [f"n{i:0{width}d}" for i in range(n)]

    schema = LabelSchema(t.name for t in config.types)
    names = [t.name for t in config.types]
    truth_labels = np.zeros((n, T), dtype=np.int64)
    pockets: list[list[np.ndarray]] = []
    for t, tc in enumerate(config.types):
        for l in range(tc.num_labels):
            schema.intern(t, f"{tc.name}_{l}")
        popularity = zipf_probabilities(tc.num_labels, tc.zipf)
        truth_labels[:, t] = rng.choice(tc.num_labels, size=n, p=popularity)
        if tc.parent is not None:
            parent_pockets = pockets[names.index(tc.parent)]
            shared = rng.choice(tc.num_labels, size=len(parent_pockets), p=popularity)
            for members, label in zip(parent_pockets, shared.tolist()):
                adopt = members[rng.random(len(members)) < tc.parent_affinity]
                truth_labels[adopt, t] = label
        pockets.append(_pockets(truth_labels[:, t], config.pocket_size, rng))

    total_edges = int(round(n * config.mean_degree / 2))
    existing: set[int] = set()
    src_parts, dst_parts, reason_parts = [], [], []
    realized: list[list[np.ndarray]] = []
    for t, tc in enumerate(config.types):
        budget = int(round(tc.edge_fraction * total_edges))
        used = []
        added = 0
        for pi in rng.permutation(len(pockets[t])):
            if added >= budget:
                break
            members = pockets[t][pi]
            m = len(members)
            if m < 2:
                continue
            iu, ju = np.triu_indices(m, 1)
            hit = rng.random(len(iu)) < config.pocket_edge_prob
            a, b = members[iu[hit]], members[ju[hit]]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            took = False
            for x, y in zip(lo.tolist(), hi.tolist()):
                key = x * n + y
                if key in existing:
                    continue
                existing.add(key)
                src_parts.append(x)
                dst_parts.append(y)
                reason_parts.append(t)
                added += 1
                took = True
                if added >= budget:
                    break
            if took:
                used.append(members)
        if added < budget:
            raise InfeasibleConfig(
                f"type {tc.name!r}: edge budget {budget} but pockets yielded only {added} "
                f"(mean pocket {config.pocket_size}, edge prob {config.pocket_edge_prob}, "
                f"{n} nodes); lower mean_degree or its edge fraction"
            )
        realized.append(used)

    ages = np.full(n, np.nan)
    for t, tc in enumerate(config.types):
        if not tc.school:
            continue
        for members in realized[t]:
            base = int(rng.integers(18, 66))
            free = members[np.isnan(ages[members])]
            ages[free] = base + rng.integers(-1, 2, size=len(free))
    rest = np.isnan(ages)
    ages[rest] = rng.integers(18, 66, size=int(rest.sum()))

    observed = ObservedLabels()
    for t, tc in enumerate(config.types):
        seen = np.flatnonzero(rng.random(n) < tc.visibility)
        for u in seen.tolist():
            observed.add(u, t, int(truth_labels[u, t]))

    src = np.array(src_parts, dtype=np.int64)
    dst = np.array(dst_parts, dtype=np.int64)
    graph = Graph.from_edges(node_ids, src, dst, ages=ages)
    truth = PlantedTruth(truth_labels, src, dst, np.array(reason_parts, dtype=np.int64))
    return graph, observed, truth, schema


def write_truth(out_dir, graph: Graph, truth: PlantedTruth, schema: LabelSchema) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = graph.node_ids
    with open(out / "truth.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u in range(truth.labels.shape[0]):
            for t in range(truth.labels.shape[1]):
                fh.write(f"{ids[u]}\t{schema.types[t]}\t{schema.label_name(t, int(truth.labels[u, t]))}\n")
    with open(out / "reasons.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for a, b, r in zip(truth.edge_src, truth.edge_dst, truth.edge_reason):
            fh.write(f"{ids[a]}\t{ids[b]}\t{schema.types[r]}\n")


# ---------------------------------------------------------------------------
# Hand-built instances
# ---------------------------------------------------------------------------


def make_fig1_instance():
    """The "hometown friends swamp the current city" neighborhood.

    Node ``u`` has no labels. It has 12 friends from hometown H, five of
    whom also live in C'; the other seven each live somewhere different.
    Four more friends share u's actual current city C (hometown H'').

    Returns ``(graph, observed, schema, expected)`` where ``expected`` maps
    ``"node"``, ``"edgeexplain"`` and ``"lp"`` to the answers for ``u``.
    """
    schema = LabelSchema(["hometown", "current_city"])
    H, H2 = schema.intern(0, "H"), schema.intern(0, "H''")
    C1, C = schema.intern(1, "C'"), schema.intern(1, "C")
    ids = ["u"]
    observed = ObservedLabels()
    for i in range(12):
        ids.append(f"h{i:02d}")
        observed.add(len(ids) - 1, 0, H)
        city = C1 if i < 5 else schema.intern(1, f"X{i - 4}")
        observed.add(len(ids) - 1, 1, city)
    for i in range(4):
        ids.append(f"c{i}")
        observed.add(len(ids) - 1, 0, H2)
        observed.add(len(ids) - 1, 1, C)
    friends = np.arange(1, len(ids))
    graph = Graph.from_edges(ids, np.zeros(len(friends), dtype=np.int64), friends)
    expected = {
        "node": "u",
        "edgeexplain": {"hometown": "H", "current_city": "C"},
        "lp": {"hometown": "H", "current_city": "C'"},
    }
    return graph, observed, schema, expected


def make_group_instance():
    """A six-member group whose known members all went to college X.

    The sixth member ``m5`` has no labels and no friendships; its only edge
    is to the group node. Returns ``(graph, observed, schema, expected)``.
    """
    from .graph import expand_groups

    schema = LabelSchema(["hometown", "college"])
    X = schema.intern(1, "X")
    ids = [f"m{i}" for i in range(6)]
    observed = ObservedLabels()
    for i in range(5):
        observed.add(i, 0, schema.intern(0, f"town{i}"))
        observed.add(i, 1, X)
    empty = np.zeros(0, dtype=np.int64)
    # ages only so that a written copy still declares the isolated sixth member
    graph = Graph.from_edges(ids, empty, empty, ages=np.full(6, 22.0))
    graph = expand_groups([("g_alumni", m) for m in ids], graph)
    expected = {"node": "m5", "college": "X"}
    return graph, observed, schema, expected
