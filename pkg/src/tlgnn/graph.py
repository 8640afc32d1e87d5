"""Graph data model, TU-format ingestion, random graphs and structural oracles.

Node indices are 0-based everywhere inside the package. The TU benchmark
files are 1-based; conversion happens only in :func:`load_tu_dataset` and
:func:`write_tu_dataset`.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class IngestionError(ValueError):
    """Raised when a TU dataset directory is missing files or is malformed."""


class OracleBudgetError(ValueError):
    """Raised when an exhaustive oracle is asked to work above its size budget."""


def _norm_edges(edges: Iterable[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    out = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            continue
        out.add((u, v) if u < v else (v, u))
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected node-featured graph.

    ``edges`` is stored as a sorted tuple of ``(u, v)`` pairs with ``u < v``;
    self-loops and duplicates are dropped at construction.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    node_features: np.ndarray
    graph_label: Optional[int] = None
    _adj: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        edges = _norm_edges(self.edges)
        for u, v in edges:
            if v >= self.node_count:
                raise ValueError(f"edge ({u}, {v}) out of range for {self.node_count} nodes")
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != self.node_count:
            raise ValueError("one feature row per node required")
        feats = feats.copy()
        feats.setflags(write=False)
        nbrs = [[] for _ in range(self.node_count)]
        for u, v in edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(n)) for n in nbrs))
        if self.graph_label is not None:
            object.__setattr__(self, "graph_label", int(self.graph_label))

    @property
    def feature_width(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=bool)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = True
            a[e[:, 1], e[:, 0]] = True
        return a

    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def feature_keys(self) -> list[tuple]:
        """Hashable per-node feature tuples (exact float values)."""
        return [tuple(row) for row in self.node_features.tolist()]

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with node ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm)
        feats = np.empty_like(self.node_features)
        feats[perm] = self.node_features
        edges = [(perm[u], perm[v]) for u, v in self.edges]
        return Graph(self.node_count, edges, feats, self.graph_label)

    def with_edges(self, edges) -> "Graph":
        return Graph(self.node_count, edges, self.node_features, self.graph_label)

    def with_label(self, label: Optional[int]) -> "Graph":
        return Graph(self.node_count, self.edges, self.node_features, label)

    def to_json(self) -> dict:
        return {
            "n": self.node_count,
            "edges": [list(e) for e in self.edges],
            "features": self.node_features.tolist(),
            "label": self.graph_label,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Graph":
        return cls(d["n"], d["edges"], np.asarray(d["features"], dtype=np.float64), d.get("label"))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.edges == other.edges
            and self.graph_label == other.graph_label
            and np.array_equal(self.node_features, other.node_features)
        )

    __hash__ = None


@dataclass
class Dataset:
    graphs: list[Graph]
    name: str = "dataset"
    feature_width: int = 1
    class_count: int = 0

    def __post_init__(self):
        widths = {g.feature_width for g in self.graphs}
        if len(widths) > 1:
            raise ValueError(f"non-uniform feature widths {sorted(widths)}")
        if widths:
            self.feature_width = widths.pop()
        labels = {g.graph_label for g in self.graphs if g.graph_label is not None}
        if labels and labels != set(range(len(labels))):
            raise ValueError("class labels must be a contiguous 0-based range")
        self.class_count = max(self.class_count, len(labels))

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    def __iter__(self):
        return iter(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.graphs[i] for i in idx], self.name, self.feature_width, self.class_count)


# --------------------------------------------------------------------------
# TU text format


def _read_int_lines(path: str, allow_pairs: bool = False) -> list:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            toks = [t.strip() for t in line.split(",")]
            try:
                vals = [int(t) for t in toks]
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-integer token in {line!r}") from None
            if allow_pairs:
                if len(vals) != 2:
                    raise IngestionError(f"{path}:{lineno}: expected 'i, j', got {line!r}")
                rows.append(tuple(vals))
            else:
                if len(vals) != 1:
                    raise IngestionError(f"{path}:{lineno}: expected one integer, got {line!r}")
                rows.append(vals[0])
    return rows


def load_tu_dataset(directory: str, name: str, degree_features: bool = False) -> Dataset:
    """Load a dataset stored in the TU benchmark text layout.

    Categorical node labels become one-hot rows over the labels seen in the
    whole dataset. Without ``NAME_node_labels.txt`` every node gets the
    width-1 constant feature, or a degree one-hot when ``degree_features``.
    """
    def p(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not os.path.isfile(p(suffix)):
            raise IngestionError(f"missing mandatory file {p(suffix)}")

    indicator = _read_int_lines(p("graph_indicator"))
    graph_labels = _read_int_lines(p("graph_labels"))
    pairs = _read_int_lines(p("A"), allow_pairs=True)
    node_labels = _read_int_lines(p("node_labels")) if os.path.isfile(p("node_labels")) else None

    n_total = len(indicator)
    n_graphs = len(graph_labels)
    gid = np.asarray(indicator, dtype=np.int64) - 1
    if n_total and (gid.min() < 0 or gid.max() >= n_graphs):
        raise IngestionError(f"{p('graph_indicator')}: graph id outside 1..{n_graphs}")
    if np.any(np.diff(gid) < 0):
        raise IngestionError(f"{p('graph_indicator')}: nodes are not grouped by graph")
    if node_labels is not None and len(node_labels) != n_total:
        raise IngestionError(f"{p('node_labels')}: {len(node_labels)} labels for {n_total} nodes")

    starts = np.searchsorted(gid, np.arange(n_graphs), side="left")
    ends = np.searchsorted(gid, np.arange(n_graphs), side="right")
    edges_per_graph = [[] for _ in range(n_graphs)]
    for lineno, (i, j) in enumerate(pairs, 1):
        i0, j0 = i - 1, j - 1
        if not (0 <= i0 < n_total and 0 <= j0 < n_total):
            raise IngestionError(f"{p('A')}:{lineno}: node index out of range 1..{n_total}")
        g = gid[i0]
        if gid[j0] != g:
            raise IngestionError(f"{p('A')}:{lineno}: edge ({i}, {j}) crosses graphs")
        edges_per_graph[g].append((i0 - starts[g], j0 - starts[g]))

    label_map = {lab: k for k, lab in enumerate(sorted(set(graph_labels)))}

    if node_labels is not None:
        vocab = {lab: k for k, lab in enumerate(sorted(set(node_labels)))}
        feats_all = np.zeros((n_total, len(vocab)))
        feats_all[np.arange(n_total), [vocab[x] for x in node_labels]] = 1.0
    else:
        feats_all = None

    sizes = ends - starts
    if (sizes == 0).any():
        raise IngestionError(f"{p('graph_indicator')}: graph {int(np.argmin(sizes)) + 1} has no nodes")

    graphs = []
    for g in range(n_graphs):
        n = int(sizes[g])
        if feats_all is not None:
            feats = feats_all[starts[g]:ends[g]]
        else:
            feats = np.ones((n, 1))
        graphs.append(Graph(n, edges_per_graph[g], feats, label_map[graph_labels[g]]))

    if feats_all is None and degree_features:
        graphs = degree_onehot(graphs)
    return Dataset(graphs, name)


def degree_onehot(graphs: Sequence[Graph]) -> list[Graph]:
    max_deg = max((max((g.degree(v) for v in range(g.node_count)), default=0) for g in graphs), default=0)
    out = []
    for g in graphs:
        f = np.zeros((g.node_count, max_deg + 1))
        f[np.arange(g.node_count), [g.degree(v) for v in range(g.node_count)]] = 1.0
        out.append(Graph(g.node_count, g.edges, f, g.graph_label))
    return out


def write_tu_dataset(dataset: Dataset, directory: str, name: Optional[str] = None) -> None:
    """Emit ``dataset`` in TU layout (both edge directions, 1-based).

    Node labels are written as the argmax of one-hot rows; a dataset whose
    features are the width-1 constant gets no node label file.
    """
    name = name or dataset.name
    os.makedirs(directory, exist_ok=True)
    a_lines, ind_lines, lab_lines, nl_lines = [], [], [], []
    offset = 0
    constant = dataset.feature_width == 1 and all(np.all(g.node_features == 1.0) for g in dataset)
    for k, g in enumerate(dataset.graphs, 1):
        for u, v in g.edges:
            a_lines.append(f"{u + 1 + offset}, {v + 1 + offset}")
            a_lines.append(f"{v + 1 + offset}, {u + 1 + offset}")
        ind_lines.extend([str(k)] * g.node_count)
        lab_lines.append(str(g.graph_label if g.graph_label is not None else 0))
        if not constant:
            nl_lines.extend(str(int(i)) for i in np.argmax(g.node_features, axis=1))
        offset += g.node_count

    def dump(suffix, lines):
        _atomic_write(os.path.join(directory, f"{name}_{suffix}.txt"), "".join(l + "\n" for l in lines))

    dump("A", a_lines)
    dump("graph_indicator", ind_lines)
    dump("graph_labels", lab_lines)
    if not constant:
        dump("node_labels", nl_lines)


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_graphs_json(graphs: Iterable[Graph]) -> str:
    return "".join(json.dumps(g.to_json()) + "\n" for g in graphs)


# --------------------------------------------------------------------------
# 1-WL colour refinement


@dataclass(frozen=True)
class WlColoring:
    colors: tuple[int, ...]
    rounds: int
    histogram: tuple[tuple[int, int], ...]


def _histogram(colors) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(Counter(colors).items()))


def _initial_colors(g: Graph) -> list[int]:
    keys = g.feature_keys()
    ids = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [ids[k] for k in keys]


def _refine_round(g: Graph, colors: list[int]) -> list[int]:
    sigs = [(colors[v], tuple(sorted(colors[u] for u in g.neighbors(v)))) for v in range(g.node_count)]
    ids = {s: i for i, s in enumerate(sorted(set(sigs)))}
    return [ids[s] for s in sigs]


def _wl_trace(g: Graph, max_rounds: int):
    colors = _initial_colors(g)
    trace = [colors]
    for _ in range(max_rounds):
        new = _refine_round(g, colors)
        # refinement never merges classes, so an equal class count means a fixed point
        if len(set(new)) == len(set(colors)):
            break
        colors = new
        trace.append(colors)
    return trace


def wl_refine(g: Graph, max_rounds: Optional[int] = None) -> WlColoring:
    """Run 1-WL colour refinement until the partition is stable.

    ``rounds`` counts the rounds that actually split a colour class.
    """
    if max_rounds is None:
        max_rounds = g.node_count
    trace = _wl_trace(g, max_rounds)
    colors = trace[-1]
    return WlColoring(tuple(colors), len(trace) - 1, _histogram(colors))


def disjoint_union(g1: Graph, g2: Graph) -> Graph:
    if g1.feature_width != g2.feature_width:
        raise ValueError("feature widths differ")
    n1 = g1.node_count
    edges = list(g1.edges) + [(u + n1, v + n1) for u, v in g2.edges]
    return Graph(n1 + g2.node_count, edges, np.vstack([g1.node_features, g2.node_features]))


def wl_equivalent(g1: Graph, g2: Graph, max_rounds: Optional[int] = None) -> bool:
    """True iff joint 1-WL refinement gives both graphs equal histograms every round."""
    if g1.node_count != g2.node_count or g1.feature_width != g2.feature_width:
        return False
    u = disjoint_union(g1, g2)
    n1 = g1.node_count
    if max_rounds is None:
        max_rounds = u.node_count
    for colors in _wl_trace(u, max_rounds):
        if Counter(colors[:n1]) != Counter(colors[n1:]):
            return False
    return True


# --------------------------------------------------------------------------
# exact isomorphism for small graphs

ISO_BUDGET = 16


def _stable_colors(nbrs, colors: list[int]) -> list[int]:
    while True:
        sigs = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(len(colors))]
        ids = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [ids[s] for s in sigs]
        if len(ids) == len(set(colors)):
            return new
        colors = new


def is_isomorphic_small(g1: Graph, g2: Graph) -> bool:
    """Exact feature-preserving isomorphism test by pruned backtracking.

    Search is individualise-and-refine: pick an unresolved node of ``g1``,
    try each same-coloured node of ``g2``, give both a fresh colour and
    re-run joint 1-WL. Branches whose colour histograms diverge are cut;
    once every class is a singleton the induced bijection is checked edge
    by edge.
    """
    if max(g1.node_count, g2.node_count) > ISO_BUDGET:
        raise OracleBudgetError(f"isomorphism oracle limited to {ISO_BUDGET} nodes")
    if g1.node_count != g2.node_count or g1.edge_count != g2.edge_count:
        return False
    if g1.feature_width != g2.feature_width:
        return False
    n = g1.node_count
    u = disjoint_union(g1, g2)
    nbrs = [u.neighbors(v) for v in range(2 * n)]
    e2 = g2.edge_set()

    def balanced(colors):
        return Counter(colors[:n]) == Counter(colors[n:])

    def search(colors) -> bool:
        colors = _stable_colors(nbrs, colors)
        if not balanced(colors):
            return False
        c1, c2 = colors[:n], colors[n:]
        sizes = Counter(c1)
        open_ = [v for v in range(n) if sizes[c1[v]] > 1]
        if not open_:
            where = {c: w for w, c in enumerate(c2)}
            m = [where[c] for c in c1]
            return all((min(m[a], m[b]), max(m[a], m[b])) in e2 for a, b in g1.edges)
        v = min(open_, key=lambda x: (sizes[c1[x]], x))
        fresh = max(colors) + 1
        for w in range(n):
            if c2[w] != c1[v]:
                continue
            trial = list(colors)
            trial[v] = fresh
            trial[n + w] = fresh
            if search(trial):
                return True
        return False

    return search(_initial_colors(u))


# --------------------------------------------------------------------------
# random graphs


def random_graph(n: int, edge_prob: float, feature_alphabet: int = 1, seed: int = 0,
                 label: Optional[int] = None) -> Graph:
    """Erdos-Renyi G(n, p) with uniformly random one-hot node features."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if feature_alphabet < 1:
        raise ValueError("feature_alphabet must be >= 1")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    feats = np.zeros((n, feature_alphabet))
    feats[np.arange(n), rng.integers(0, feature_alphabet, size=n)] = 1.0
    return Graph(n, list(zip(iu[keep].tolist(), ju[keep].tolist())), feats, label)


def cycle_graph(n: int, width: int = 1) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)], np.ones((n, width)))


def path_graph(n: int, width: int = 1) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)], np.ones((n, width)))


def complete_graph(n: int, width: int = 1) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)], np.ones((n, width)))


def star_graph(leaves: int, width: int = 1) -> Graph:
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)], np.ones((leaves + 1, width)))


def random_regular_graph(n: int, degree: int, feature_alphabet: int = 1, seed: int = 0,
                         label: Optional[int] = None, max_tries: int = 1000) -> Graph:
    """Uniform-ish random ``degree``-regular simple graph by the pairing model.

    Stub pairings that produce a loop or a multi-edge are rejected and redrawn.
    """
    if (n * degree) % 2 or degree >= n:
        raise ValueError(f"no simple {degree}-regular graph on {n} nodes")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        edges = {(min(u, v), max(u, v)) for u, v in pairs.tolist()}
        if len(edges) != len(pairs):
            continue
        feats = np.zeros((n, feature_alphabet))
        feats[np.arange(n), rng.integers(0, feature_alphabet, size=n)] = 1.0
        return Graph(n, sorted(edges), feats, label)
    raise RuntimeError(f"pairing model failed {max_tries} times for n={n}, degree={degree}")


def spectral_signature(g: Graph, decimals: int = 6) -> tuple:
    """Cheap isomorphism invariant: rounded adjacency spectrum plus feature counts."""
    ev = np.linalg.eigvalsh(g.adjacency().astype(float))
    ev = np.round(ev, decimals) + 0.0
    return (g.node_count, g.edge_count, tuple(ev.tolist()), tuple(sorted(Counter(g.feature_keys()).items())))
