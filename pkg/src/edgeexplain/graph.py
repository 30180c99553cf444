"""Graph, label vocabulary and observed labels, plus TSV ingestion.

All graph structure is held in CSR form with symmetric, sorted neighbor
lists. Node indices are dense and assigned in first-seen order.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class LabelSchema:
    """Ordered label types, each with its own interned label vocabulary."""

    def __init__(self, types: Iterable[str] = ()):
        self.types: list[str] = []
        self._type_index: dict[str, int] = {}
        self._labels: list[list[str]] = []
        self._label_index: list[dict[str, int]] = []
        for t in types:
            self.add_type(t)

    def add_type(self, name: str) -> int:
        idx = self._type_index.get(name)
        if idx is None:
            idx = len(self.types)
            self.types.append(name)
            self._type_index[name] = idx
            self._labels.append([])
            self._label_index.append({})
        return idx

    def type_index(self, name: str) -> int:
        try:
            return self._type_index[name]
        except KeyError:
            raise KeyError(f"unknown label type {name!r}") from None

    def intern(self, type_idx: int, label: str) -> int:
        index = self._label_index[type_idx]
        idx = index.get(label)
        if idx is None:
            idx = len(self._labels[type_idx])
            self._labels[type_idx].append(label)
            index[label] = idx
        return idx

    def label_index(self, type_idx: int, label: str) -> int:
        return self._label_index[type_idx][label]

    def label_name(self, type_idx: int, idx: int) -> str:
        return self._labels[type_idx][idx]

    def num_labels(self, type_idx: int) -> int:
        return len(self._labels[type_idx])

    @property
    def num_types(self) -> int:
        return len(self.types)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabelSchema)
            and self.types == other.types
            and self._labels == other._labels
        )

    def __repr__(self) -> str:
        sizes = ", ".join(f"{t}={len(l)}" for t, l in zip(self.types, self._labels))
        return f"LabelSchema({sizes})"


class ObservedLabels:
    """Publicly declared labels: ``(node, type) -> label``, at most one each."""

    def __init__(self, items: Iterable[tuple[tuple[int, int], int]] = ()):
        self._obs: dict[tuple[int, int], int] = {}
        for (u, t), label in items:
            self.add(u, t, label)

    def add(self, node: int, type_idx: int, label: int) -> None:
        key = (node, type_idx)
        prev = self._obs.get(key)
        if prev is not None and prev != label:
            raise DataError(
                f"conflicting observation for node {node}, type {type_idx}: "
                f"{prev} vs {label}"
            )
        self._obs[key] = label

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self._obs[key]

    def get(self, key: tuple[int, int], default=None):
        return self._obs.get(key, default)

    def __contains__(self, key) -> bool:
        return key in self._obs

    def __len__(self) -> int:
        return len(self._obs)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self._obs)

    def items(self):
        return self._obs.items()

    def __eq__(self, other) -> bool:
        return isinstance(other, ObservedLabels) and self._obs == other._obs

    def without_nodes(self, nodes: Iterable[int]) -> "ObservedLabels":
        """Training view with every observation of ``nodes`` removed."""
        drop = set(int(u) for u in nodes)
        out = ObservedLabels()
        out._obs = {k: v for k, v in self._obs.items() if k[0] not in drop}
        return out

    def restricted_to(self, nodes: Iterable[int]) -> "ObservedLabels":
        keep = set(int(u) for u in nodes)
        out = ObservedLabels()
        out._obs = {k: v for k, v in self._obs.items() if k[0] in keep}
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sorted ``(nodes, types, labels)`` arrays."""
        if not self._obs:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), empty.copy()
        keys = sorted(self._obs)
        nodes = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
        types = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
        labels = np.fromiter((self._obs[k] for k in keys), dtype=np.int64, count=len(keys))
        return nodes, types, labels


@dataclass(eq=False)
class Graph:
    """Undirected weighted graph in symmetric CSR form.

    ``type_weights`` holds optional per-edge, per-type multipliers with shape
    ``(nnz, T)``; the effective weight of type ``t`` on an edge is
    ``weights[e] * type_weights[e, t]``.
    """

    node_ids: list[str]
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    ages: np.ndarray
    is_group: np.ndarray
    type_weights: np.ndarray | None = None
    _index: dict[str, int] | None = field(default=None, repr=False)

    @classmethod
    def from_edges(
        cls,
        node_ids: list[str],
        src,
        dst,
        weights=None,
        *,
        type_weights=None,
        ages=None,
        is_group=None,
    ) -> "Graph":
        """Build from a list of undirected edges, each given once.

        ``type_weights`` (if given) has shape ``(len(src), T)`` and is aligned
        with the input edge list.
        """
        n = len(node_ids)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if weights is None:
            weights = np.ones(len(src))
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(src == dst):
            raise DataError("self-loops are not allowed")
        if len(weights) and not np.all(weights > 0):
            raise DataError("edge weights must be positive")
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        if len(lo) and len(np.unique(lo * n + hi)) != len(lo):
            raise DataError("duplicate edges")
        s = np.concatenate([src, dst])
        d = np.concatenate([dst, src])
        w = np.concatenate([weights, weights])
        order = np.lexsort((d, s))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(s, minlength=n), out=indptr[1:])
        tw = None
        if type_weights is not None:
            type_weights = np.asarray(type_weights, dtype=np.float64)
            tw = np.concatenate([type_weights, type_weights])[order]
        if ages is None:
            ages = np.full(n, np.nan)
        if is_group is None:
            is_group = np.zeros(n, dtype=bool)
        return cls(
            node_ids=list(node_ids),
            indptr=indptr,
            indices=d[order],
            weights=w[order],
            ages=np.asarray(ages, dtype=np.float64),
            is_group=np.asarray(is_group, dtype=bool),
            type_weights=tw,
        )

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def sources(self) -> np.ndarray:
        """Source node of every directed CSR entry."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degree())

    def index(self, node_id: str) -> int:
        if self._index is None:
            self._index = {nid: i for i, nid in enumerate(self.node_ids)}
        return self._index[node_id]

    def has_node(self, node_id: str) -> bool:
        if self._index is None:
            self._index = {nid: i for i, nid in enumerate(self.node_ids)}
        return node_id in self._index

    def edge_list(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Each undirected edge once as ``(u, v, w)`` with ``u < v``."""
        src = self.sources()
        mask = src < self.indices
        return src[mask], self.indices[mask], self.weights[mask]

    def typed_weights(self, sel, num_types: int) -> np.ndarray:
        """Effective per-type weights ``w_uv * m_uvt`` for CSR entries ``sel``."""
        w = self.weights[sel][:, None]
        m = len(w)
        if self.type_weights is None:
            return np.broadcast_to(w, (m, num_types)).copy()
        tw = self.type_weights[sel]
        if tw.shape[1] < num_types:
            tw = np.concatenate([tw, np.ones((m, num_types - tw.shape[1]))], axis=1)
        return w * tw[:, :num_types]

    def subgraph_edges(self, keep: np.ndarray) -> "Graph":
        """Graph with only the CSR entries flagged in ``keep`` (must be symmetric)."""
        src = self.sources()
        mask = keep & (src < self.indices)
        tw = self.type_weights[mask] if self.type_weights is not None else None
        return Graph.from_edges(
            self.node_ids,
            src[mask],
            self.indices[mask],
            self.weights[mask],
            type_weights=tw,
            ages=self.ages,
            is_group=self.is_group,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        same_tw = (self.type_weights is None) == (other.type_weights is None) and (
            self.type_weights is None
            or np.array_equal(self.type_weights, other.type_weights)
        )
        return (
            self.node_ids == other.node_ids
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.ages, other.ages, equal_nan=True)
            and np.array_equal(self.is_group, other.is_group)
            and same_tw
        )


# ---------------------------------------------------------------------------
# TSV ingestion
# ---------------------------------------------------------------------------


def _read_tsv(path, min_fields: int, max_fields: int):
    """Yield ``(lineno, fields)`` for each data line of a TSV file."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise DataError(f"{path}: cannot open: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not min_fields <= len(fields) <= max_fields:
                raise DataError(
                    f"{path}:{lineno}: expected {min_fields}"
                    + (f"-{max_fields}" if max_fields != min_fields else "")
                    + f" tab-separated fields, got {len(fields)}"
                )
            if any(f == "" for f in fields):
                raise DataError(f"{path}:{lineno}: empty field")
            yield lineno, fields


def _positive_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise DataError(f"{where}: weight must be positive, got {text!r}")
    return value


class _NodeTable:
    def __init__(self):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}

    def get(self, node_id: str) -> int:
        idx = self.index.get(node_id)
        if idx is None:
            idx = len(self.ids)
            self.ids.append(node_id)
            self.index[node_id] = idx
        return idx


def ingest(
    edges_file,
    labels_file,
    ages_file=None,
    groups_file=None,
    edge_type_weights_file=None,
) -> tuple[Graph, ObservedLabels, LabelSchema]:
    """Read the TSV interchange files into a graph, observations and schema."""
    nodes = _NodeTable()
    edges: dict[tuple[int, int], float] = {}
    for lineno, f in _read_tsv(edges_file, 2, 3):
        where = f"{edges_file}:{lineno}"
        a, b = nodes.get(f[0]), nodes.get(f[1])
        if a == b:
            raise DataError(f"{where}: self-loop on {f[0]!r}")
        w = _positive_float(f[2], where) if len(f) == 3 else 1.0
        key = (min(a, b), max(a, b))
        prev = edges.get(key)
        if prev is not None and prev != w:
            raise DataError(f"{where}: conflicting weight for edge {f[0]}-{f[1]}")
        edges[key] = w

    schema = LabelSchema()
    observed = ObservedLabels()
    for lineno, f in _read_tsv(labels_file, 3, 3):
        u = nodes.get(f[0])
        t = schema.add_type(f[1])
        label = schema.intern(t, f[2])
        prev = observed.get((u, t))
        if prev is not None and prev != label:
            raise DataError(
                f"{labels_file}:{lineno}: conflicting observation for node "
                f"{f[0]!r}, type {f[1]!r}: {schema.label_name(t, prev)!r} vs {f[2]!r}"
            )
        observed.add(u, t, label)

    ages: dict[int, float] = {}
    if ages_file is not None:
        for lineno, f in _read_tsv(ages_file, 2, 2):
            try:
                age = int(f[1])
            except ValueError:
                raise DataError(f"{ages_file}:{lineno}: bad age {f[1]!r}") from None
            ages[nodes.get(f[0])] = float(age)

    type_mult: dict[tuple[int, int], dict[int, float]] = {}
    if edge_type_weights_file is not None:
        for lineno, f in _read_tsv(edge_type_weights_file, 4, 4):
            where = f"{edge_type_weights_file}:{lineno}"
            a, b = nodes.index.get(f[0]), nodes.index.get(f[1])
            key = None if a is None or b is None else (min(a, b), max(a, b))
            if key not in edges:
                raise DataError(f"{where}: no edge {f[0]}-{f[1]}")
            t = schema.add_type(f[2])
            type_mult.setdefault(key, {})[t] = _positive_float(f[3], where)

    keys = list(edges)
    n = len(nodes.ids)
    src = np.array([k[0] for k in keys], dtype=np.int64)
    dst = np.array([k[1] for k in keys], dtype=np.int64)
    w = np.array([edges[k] for k in keys], dtype=np.float64)
    tw = None
    if type_mult:
        tw = np.ones((len(keys), schema.num_types))
        for i, k in enumerate(keys):
            for t, m in type_mult.get(k, {}).items():
                tw[i, t] = m
    age_arr = np.full(n, np.nan)
    for u, a in ages.items():
        age_arr[u] = a
    graph = Graph.from_edges(nodes.ids, src, dst, w, type_weights=tw, ages=age_arr)

    if groups_file is not None:
        graph = expand_groups(groups_file, graph)
    return graph, observed, schema


def read_memberships(groups_file) -> list[tuple[str, str, int]]:
    return [(f[0], f[1], lineno) for lineno, f in _read_tsv(groups_file, 2, 2)]


def expand_groups(groups, graph: Graph) -> Graph:
    """Add one node per group and an edge between it and each member.

    ``groups`` is a path to a ``group<TAB>member`` file or an iterable of
    ``(group_id, member_id)`` pairs.
    """
    if isinstance(groups, (str, os.PathLike)):
        source = str(groups)
        rows = read_memberships(groups)
    else:
        source = "<groups>"
        rows = [(g, m, i) for i, (g, m) in enumerate(groups, 1)]
    if not rows:
        return graph

    ids = list(graph.node_ids)
    index = {nid: i for i, nid in enumerate(ids)}
    n_users = len(ids)
    group_index: dict[str, int] = {}
    pairs: dict[tuple[int, int], None] = {}
    for gid, member, lineno in rows:
        m = index.get(member)
        if m is None:
            raise DataError(f"{source}:{lineno}: unknown member node {member!r}")
        if m >= n_users or graph.is_group[m]:
            raise DataError(f"{source}:{lineno}: member {member!r} is a group")
        g = group_index.get(gid)
        if g is None:
            if gid in index:
                raise DataError(f"{source}:{lineno}: group id {gid!r} collides with a node id")
            g = len(ids)
            ids.append(gid)
            index[gid] = g
            group_index[gid] = g
        pairs[(g, m)] = None

    src, dst, w = graph.edge_list()
    gsrc = np.array([p[1] for p in pairs], dtype=np.int64)
    gdst = np.array([p[0] for p in pairs], dtype=np.int64)
    tw = None
    if graph.type_weights is not None:
        mask = graph.sources() < graph.indices
        tw = np.concatenate(
            [graph.type_weights[mask], np.ones((len(pairs), graph.type_weights.shape[1]))]
        )
    n_new = len(ids) - n_users
    return Graph.from_edges(
        ids,
        np.concatenate([src, gsrc]),
        np.concatenate([dst, gdst]),
        np.concatenate([w, np.ones(len(pairs))]),
        type_weights=tw,
        ages=np.concatenate([graph.ages, np.full(n_new, np.nan)]),
        is_group=np.concatenate([graph.is_group, np.ones(n_new, dtype=bool)]),
    )


def sparsify_by_age(graph: Graph, k: int) -> Graph:
    """Keep, for each user, the ``k`` friends closest in age.

    An edge survives if either endpoint nominated the other. Edges touching
    a group node are never pruned. Ties go to the smaller external id;
    friends without an age rank after all aged friends.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    n = graph.num_nodes
    src = graph.sources()
    dst = graph.indices
    group_edge = graph.is_group[src] | graph.is_group[dst]

    ages = graph.ages
    missing = np.isnan(ages[dst]) | np.isnan(ages[src])
    diff = np.where(missing, 0.0, np.abs(ages[src] - ages[dst]))
    id_rank = np.empty(n, dtype=np.int64)
    id_rank[np.argsort(np.array(graph.node_ids, dtype=object), kind="stable")] = np.arange(n)

    # rank user-user candidates within each source node
    cand = ~group_edge
    order = np.lexsort((id_rank[dst], diff, np.isnan(ages[dst]), ~cand, src))
    s_sorted = src[order]
    starts = graph.indptr[s_sorted]
    rank = np.arange(len(order)) - starts
    nominated = np.zeros(len(dst), dtype=bool)
    nominated[order] = (rank < k) & cand[order]

    # mirror nominations onto the reverse entries
    reverse = _reverse_index(graph)
    keep = nominated | nominated[reverse] | group_edge
    return graph.subgraph_edges(keep)


def _reverse_index(graph: Graph) -> np.ndarray:
    """Position of ``(v, u)`` for every CSR entry ``(u, v)``."""
    n = graph.num_nodes
    src = graph.sources()
    fwd = src * n + graph.indices
    back = graph.indices * n + src
    # CSR entries are sorted by (src, dst), so fwd is sorted
    return np.searchsorted(fwd, back)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(
    out_dir,
    graph: Graph,
    observed: ObservedLabels,
    schema: LabelSchema,
) -> None:
    """Write the graph store back to ``edges``/``labels``/``ages``/``groups`` TSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = graph.node_ids
    src, dst, w = graph.edge_list()
    user_edge = ~(graph.is_group[src] | graph.is_group[dst])

    with open(out / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for a, b, x in zip(src[user_edge], dst[user_edge], w[user_edge]):
            fh.write(f"{ids[a]}\t{ids[b]}\t{_fmt(x)}\n")

    with open(out / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for (u, t), label in sorted(observed.items()):
            fh.write(f"{ids[u]}\t{schema.types[t]}\t{schema.label_name(t, label)}\n")

    aged = np.flatnonzero(~np.isnan(graph.ages))
    if len(aged):
        with open(out / "ages.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for u in aged:
                fh.write(f"{ids[u]}\t{int(graph.ages[u])}\n")

    if graph.is_group.any():
        with open(out / "groups.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for a, b in zip(src[~user_edge], dst[~user_edge]):
                g, m = (a, b) if graph.is_group[a] else (b, a)
                fh.write(f"{ids[g]}\t{ids[m]}\n")

    if graph.type_weights is not None:
        mask = graph.sources() < graph.indices
        tw = graph.type_weights[mask]
        with open(out / "edge_type_weights.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for i in np.flatnonzero(user_edge):
                for t in range(tw.shape[1]):
                    if tw[i, t] != 1.0:
                        fh.write(
                            f"{ids[src[i]]}\t{ids[dst[i]]}\t{schema.types[t]}\t{_fmt(tw[i, t])}\n"
                        )


def dataset_files(in_dir) -> dict:
    """Locate the interchange files inside a dataset directory."""
    d = Path(in_dir)
    files = {"edges_file": d / "edges.tsv", "labels_file": d / "labels.tsv"}
    for key, name in (
        ("ages_file", "ages.tsv"),
        ("groups_file", "groups.tsv"),
        ("edge_type_weights_file", "edge_type_weights.tsv"),
    ):
        if (d / name).exists():
            files[key] = d / name
    return files


def load_dataset(in_dir) -> tuple[Graph, ObservedLabels, LabelSchema]:
    return ingest(**dataset_files(in_dir))
