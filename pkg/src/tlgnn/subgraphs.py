"""Tree, path and circuit detection by doubling dynamic programming.

The DP keeps, for every ordered node pair, at most one stored simple path and
the hop count at which that path was first discovered. Level ``d`` extends
every pair whose stored hop count is exactly ``2**d`` by a stored path of
``1..2**d`` further hops. An extension that lands on a node already joined to
the start closes a circuit; otherwise it records a new, longer path.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .graph import Graph, OracleBudgetError


class Kind(str, enum.Enum):
    TREE = "tree"
    PATH = "path"
    CIRCUIT = "circuit"


TYPE_CODE = {Kind.TREE: 0, Kind.PATH: 1, Kind.CIRCUIT: 2}


def canonical_path(nodes: Sequence[int]) -> tuple[int, ...]:
    nodes = tuple(int(x) for x in nodes)
    return nodes if nodes[0] < nodes[-1] else nodes[::-1]


def canonical_circuit(nodes: Sequence[int]) -> tuple[int, ...]:
    nodes = [int(x) for x in nodes]
    k = nodes.index(min(nodes))
    rot = nodes[k:] + nodes[:k]
    rev = [rot[0]] + rot[1:][::-1]
    return tuple(rot if rot[1] <= rev[1] else rev)


def canonical_tree(center: int, leaves: Iterable[int]) -> tuple[int, ...]:
    return (int(center),) + tuple(sorted(int(x) for x in leaves))


_CANON = {Kind.PATH: canonical_path, Kind.CIRCUIT: canonical_circuit,
          Kind.TREE: lambda n: canonical_tree(n[0], n[1:])}


@dataclass(frozen=True)
class SubgraphRecord:
    """One detected subgraph; ``nodes`` is always held in canonical order."""

    kind: Kind
    nodes: tuple[int, ...]

    @classmethod
    def make(cls, kind, nodes) -> "SubgraphRecord":
        kind = Kind(kind)
        return cls(kind, _CANON[kind](nodes))

    @property
    def canonical_key(self) -> bytes:
        return f"{self.kind.value}:{','.join(map(str, self.nodes))}".encode()

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "nodes": list(self.nodes)}

    def is_valid(self, g: Graph) -> bool:
        """Structural invariant of the record against ``g``."""
        nodes = self.nodes
        if any(not (0 <= x < g.node_count) for x in nodes) or len(set(nodes)) != len(nodes):
            return False
        adj = g.edge_set()

        def has(u, v):
            return (min(u, v), max(u, v)) in adj

        if self.kind is Kind.TREE:
            return len(nodes) >= 2 and all(has(nodes[0], x) for x in nodes[1:])
        if self.kind is Kind.PATH:
            return len(nodes) >= 2 and all(has(a, b) for a, b in zip(nodes, nodes[1:]))
        return len(nodes) >= 3 and all(has(a, b) for a, b in zip(nodes, nodes[1:] + nodes[:1]))


@dataclass
class DpState:
    """Hop-count table and one stored node sequence per ordered pair.

    ``hop[v, u] == h > 0`` means the stored sequence ``seq[v, u, :h + 1]``
    is a simple path ``v ... u`` of ``h`` edges; the hop-``h`` adjacency
    matrix of the DP is ``hop == h``.
    """

    hop: np.ndarray
    seq: np.ndarray
    depth: int = 0
    operations: int = 0
    level_operations: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.hop.shape[0]

    def hop_adjacency(self, h: int) -> np.ndarray:
        return self.hop == h

    def path(self, v: int, u: int) -> Optional[tuple[int, ...]]:
        h = self.hop[v, u]
        if h == 0:
            return None
        return tuple(int(x) for x in self.seq[v, u, :h + 1])

    def _ensure_capacity(self, length: int) -> None:
        if self.seq.shape[2] >= length:
            return
        grown = np.full(self.hop.shape + (length,), -1, dtype=self.seq.dtype)
        grown[:, :, :self.seq.shape[2]] = self.seq
        self.seq = grown


def count_trees(g: Graph, tree_threshold: int = 3, inclusive: bool = False):
    """Star-shaped subgraphs and DP initialisation.

    A node with more than ``tree_threshold`` neighbours (at least that many
    when ``inclusive``) yields one Tree record: the node followed by all its
    neighbours. Every edge seeds the DP table with its one-hop path.
    """
    if tree_threshold < 1:
        raise ValueError("tree_threshold must be >= 1")
    n = g.node_count
    hop = np.zeros((n, n), dtype=np.int32)
    seq = np.full((n, n, 2), -1, dtype=np.int32)
    trees = []
    for v in range(n):
        nbrs = g.neighbors(v)
        for u in nbrs:
            hop[v, u] = 1
            seq[v, u, 0], seq[v, u, 1] = v, u
        deg = len(nbrs)
        if deg > tree_threshold or (inclusive and deg == tree_threshold):
            trees.append(SubgraphRecord(Kind.TREE, canonical_tree(v, nbrs)))
    return trees, DpState(hop, seq)


def _simple_rows(rows: np.ndarray) -> np.ndarray:
    """Per row: True iff the non-negative entries are pairwise distinct."""
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    s = np.sort(rows, axis=1)
    dup = (s[:, 1:] == s[:, :-1]) & (s[:, 1:] >= 0)
    return ~dup.any(axis=1)


def max_record_nodes(depth: int) -> int:
    return 2 ** (depth + 1)


def enumerate_paths_circuits(g: Graph, depth: int, state: DpState, emit: bool = True) -> list[SubgraphRecord]:
    """Run the doubling DP for levels ``0..depth`` and return new records.

    Records longer than ``2**(depth + 1)`` nodes are not returned, though
    the DP table keeps the paths. ``emit=False`` runs the table updates and
    operation counting only (used by the complexity benchmark).
    Duplicate canonical keys are removed, first occurrence kept.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    n = g.node_count
    cap = max_record_nodes(depth)
    state.depth = depth
    state._ensure_capacity(2 ** (depth + 1) + 1)
    hop, seq = state.hop, state.seq
    L = seq.shape[2]
    found: dict[bytes, SubgraphRecord] = {}
    pos = np.arange(L)

    for d in range(depth + 1):
        h = 2 ** d
        ops = 0
        for v in range(n):
            mus = np.flatnonzero(hop[v] == h)
            for mu in mus:
                hmu = hop[mu]
                cand = np.flatnonzero((hmu >= 1) & (hmu <= h))
                ops += 1 + cand.size
                if cand.size == 0:
                    continue
                head = seq[v, mu, :h]                      # v ... (excl. mu)
                ext_h = hmu[cand]                          # hops mu -> a
                ext = np.where(pos[None, :] <= ext_h[:, None], seq[mu, cand], -1)  # mu ... a
                joined = np.concatenate([np.broadcast_to(head, (cand.size, h)), ext], axis=1)
                ok = _simple_rows(joined)                  # also excludes a == v
                closed = hop[v, cand] > 0

                # circuits: P_v(mu) + P_mu(a) + P_a(v)
                ci = np.flatnonzero(ok & closed)
                if ci.size and emit:
                    a = cand[ci]
                    back_h = hop[a, v]
                    back = seq[a, v]                       # a ... v
                    inner = np.where((pos[None, :] >= 1) & (pos[None, :] < back_h[:, None]), back, -1)
                    cyc = np.concatenate([joined[ci], inner], axis=1)
                    sizes = h + ext_h[ci] + back_h
                    good = _simple_rows(cyc) & (sizes >= 3) & (sizes <= cap)
                    for r in np.flatnonzero(good):
                        nodes = cyc[r][cyc[r] >= 0]
                        rec = SubgraphRecord(Kind.CIRCUIT, canonical_circuit(nodes))
                        found.setdefault(rec.canonical_key, rec)

                # new paths: P_v(a) = P_v(mu) + P_mu(a)
                pi = np.flatnonzero(ok & ~closed)
                if pi.size:
                    a = cand[pi]
                    newh = h + ext_h[pi]
                    rows = joined[pi]
                    hop[v, a] = newh
                    hop[a, v] = newh
                    for r, aa in enumerate(a):
                        nodes = rows[r][rows[r] >= 0]
                        seq[v, aa, :nodes.size] = nodes
                        seq[aa, v, :nodes.size] = nodes[::-1]
                        if emit and nodes.size <= cap:
                            rec = SubgraphRecord(Kind.PATH, canonical_path(nodes))
                            found.setdefault(rec.canonical_key, rec)
        state.level_operations.append(ops)
        state.operations += ops
    return list(found.values())


def enumerate_subgraphs(g: Graph, depth: int = 3, tree_threshold: int = 3,
                        inclusive: bool = False) -> list[SubgraphRecord]:
    """Trees followed by paths and circuits, in discovery order."""
    trees, state = count_trees(g, tree_threshold, inclusive)
    return trees + enumerate_paths_circuits(g, depth, state)


def pair_coverage(g: Graph, state: DpState, depth: int) -> float:
    """Fraction of pairs at shortest distance in ``[2, 2**depth]`` with a stored path."""
    from scipy.sparse.csgraph import shortest_path

    dist = shortest_path(g.adjacency().astype(float), unweighted=True)
    mask = (dist >= 2) & (dist <= 2 ** depth) & np.isfinite(dist)
    total = int(mask.sum())
    if total == 0:
        return 1.0
    return float((state.hop[mask] > 0).sum()) / total


# --------------------------------------------------------------------------
# exhaustive oracle

BRUTE_FORCE_BUDGET = 12


@dataclass
class OracleSets:
    """Node tuples per kind: paths with first < last end, cycles from their
    smallest node toward its smaller neighbour, stars as (center, *sorted leaves)."""
    paths: set
    cycles: set
    stars: set

    def contains(self, rec: SubgraphRecord) -> bool:
        pool = {Kind.PATH: self.paths, Kind.CIRCUIT: self.cycles, Kind.TREE: self.stars}[rec.kind]
        return tuple(rec.nodes) in pool


def brute_force_subgraphs(g: Graph, max_nodes: Optional[int] = None, tree_threshold: int = 3,
                          inclusive: bool = False) -> OracleSets:
    """All simple paths (>= 2 nodes), simple cycles and stars, by plain DFS.

    Independent of the DP code path: every path is grown edge by edge from
    every start node and kept from one direction only; each cycle is kept
    from its smallest node, going first to the smaller of its two neighbours.
    """
    n = g.node_count
    if n > BRUTE_FORCE_BUDGET:
        raise OracleBudgetError(f"brute-force enumeration limited to {BRUTE_FORCE_BUDGET} nodes")
    max_nodes = n if max_nodes is None else max_nodes
    adj = [sorted(g.neighbors(v)) for v in range(n)]
    paths, cycles = set(), set()
    path: list[int] = []
    on = [False] * n

    def dfs():
        last, first = path[-1], path[0]
        for w in adj[last]:
            if on[w]:
                if w == first and len(path) >= 3 and path[1] < last and min(path) == first:
                    cycles.add(tuple(path))
                continue
            if len(path) >= max_nodes:
                continue
            path.append(w)
            on[w] = True
            if first < w:
                paths.add(tuple(path))
            dfs()
            on[w] = False
            path.pop()

    for s in range(n):
        path.append(s)
        on[s] = True
        dfs()
        on[s] = False
        path.pop()

    stars = set()
    for v in range(n):
        deg = len(adj[v])
        if deg > tree_threshold or (inclusive and deg == tree_threshold):
            stars.add((v, *adj[v]))
    return OracleSets(paths, cycles, stars)


def brute_force_cycle_count(g: Graph) -> int:
    return len(brute_force_subgraphs(g).cycles)


# --------------------------------------------------------------------------
# census and dumps


def subgraph_census(records: Iterable[SubgraphRecord]) -> dict:
    """Counts keyed by ``(kind, node_count)``."""
    return dict(Counter((r.kind.value, r.node_count) for r in records))


def census_csv(census: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "node_count", "count"])
    for (kind, size), count in sorted(census.items()):
        w.writerow([kind, size, count])
    return buf.getvalue()


def records_jsonl(records: Iterable[SubgraphRecord]) -> str:
    return "".join(json.dumps(r.to_json()) + "\n" for r in records)


def records_from_jsonl(text: str) -> list[SubgraphRecord]:
    return [SubgraphRecord.make(d["kind"], d["nodes"]) for d in map(json.loads, text.splitlines()) if d]
