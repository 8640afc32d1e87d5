"""Permutation non-isomorphic graph (PNG) pairs: certification and synthesis.

A PNG pair shares nodes and node features and differs by one edge swap
``{(a, b), (i, j)} -> {(a, j), (i, b)}``. Neighbour equality is checked as
equality of per-node neighbour *feature* multisets; literal neighbour-set
equality would force the two graphs to coincide.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .graph import (ISO_BUDGET, Dataset, Graph, OracleBudgetError, is_isomorphic_small, random_graph,
                    random_regular_graph, spectral_signature, wl_equivalent)


class GenerationBudgetError(RuntimeError):
    """Raised when too few admissible swaps are found within the attempt budget."""

    def __init__(self, msg, rejected: Optional[dict] = None):
        super().__init__(msg)
        self.rejected = rejected or {}


@dataclass(frozen=True)
class SwapWitness:
    removed: tuple[tuple[int, int], tuple[int, int]]
    added: tuple[tuple[int, int], tuple[int, int]]

    def flipped(self) -> "SwapWitness":
        return SwapWitness(self.added, self.removed)

    def to_json(self) -> dict:
        return {"removed": [list(e) for e in self.removed], "added": [list(e) for e in self.added]}


@dataclass(frozen=True)
class PngPair:
    g1: Graph
    g2: Graph
    swap_witness: SwapWitness
    wl_certificate: bool
    iso_certificate: Optional[bool]  # None: not checked (above the oracle budget)

    @property
    def certified(self) -> bool:
        return self.wl_certificate and bool(self.iso_certificate)


def _e(u, v):
    return (u, v) if u < v else (v, u)


def _neighbor_feature_multisets(g: Graph):
    keys = g.feature_keys()
    return [Counter(keys[u] for u in g.neighbors(v)) for v in range(g.node_count)]


def check_png(g1: Graph, g2: Graph) -> Optional[SwapWitness]:
    """Return the swap witness if ``(g1, g2)`` satisfies all PNG conditions."""
    if g1.node_count != g2.node_count or g1.edge_count != g2.edge_count:
        return None
    if not np.array_equal(g1.node_features, g2.node_features):
        return None
    e1, e2 = g1.edge_set(), g2.edge_set()
    removed, added = sorted(e1 - e2), sorted(e2 - e1)
    if len(removed) != 2 or len(added) != 2:
        return None
    (p, q), (r, s) = removed
    if len({p, q, r, s}) != 4:
        return None
    # the added edges must re-pair the endpoints of the removed ones
    options = [({_e(p, s), _e(r, q)}, ((p, q), (r, s)), ((p, s), (r, q))),
               ({_e(p, r), _e(q, s)}, ((p, q), (s, r)), ((p, r), (s, q)))]
    witness = None
    for target, rem, add in options:
        if set(added) == target:
            witness = SwapWitness(tuple(_e(*x) for x in rem), tuple(_e(*x) for x in add))
            break
    if witness is None:
        return None
    if _neighbor_feature_multisets(g1) != _neighbor_feature_multisets(g2):
        return None
    return witness


def admissible_swaps(g: Graph) -> list[tuple[int, int, int, int]]:
    """All ``(a, b, i, j)`` with edges (a,b), (i,j) whose swap keeps neighbour features.

    Both orientations of each edge are considered; requires feat(a) = feat(i),
    feat(b) = feat(j), four distinct endpoints and (a,j), (i,b) absent.
    """
    keys = g.feature_keys()
    es = g.edge_set()
    out = []
    for x in range(len(g.edges)):
        u, v = g.edges[x]
        for a, b in ((u, v), (v, u)):
            for y in range(x + 1, len(g.edges)):
                i, j = g.edges[y]
                for ii, jj in ((i, j), (j, i)):
                    if len({a, b, ii, jj}) < 4:
                        continue
                    if keys[a] != keys[ii] or keys[b] != keys[jj]:
                        continue
                    if _e(a, jj) in es or _e(ii, b) in es:
                        continue
                    out.append((a, b, ii, jj))
    return out


def apply_swap(g: Graph, a: int, b: int, i: int, j: int) -> Graph:
    es = set(g.edges)
    es -= {_e(a, b), _e(i, j)}
    es |= {_e(a, j), _e(i, b)}
    return g.with_edges(sorted(es))


def has_triangle(g: Graph) -> bool:
    nb = [set(g.neighbors(v)) for v in range(g.node_count)]
    return any(nb[u] & nb[v] for u, v in g.edges)


def generate_spng(pair_count: int = 100, n: int = 16, edge_prob: float = 0.25, feature_alphabet: int = 1,
                  seed: int = 0, require_wl_equiv: bool = True, require_noniso: bool = True,
                  substrate: str = "regular", degree: int = 3, require_distinct: bool = True,
                  label_rule: str = "swap_order",
                  max_attempts: Optional[int] = None) -> tuple[Dataset, list[PngPair]]:
    """Synthesise labelled PNG pairs; g1 gets class 0 and g2 class 1.

    ``label_rule="triangle"`` draws a triangle-free g1 and only accepts swaps
    that close a triangle, so class 1 means "contains a 3-cycle" (invisible
    to 1-WL on the regular substrate). ``"swap_order"`` takes any admissible
    swap, which makes the class of a pair member arbitrary.

    ``substrate`` picks the graph the swap is applied to: ``"regular"``
    (random ``degree``-regular, where any degree-preserving swap stays
    1-WL-equivalent) or ``"er"`` (G(n, edge_prob)). With ``require_distinct``
    no graph may be isomorphic to a graph of an earlier pair, so labels
    never conflict across pairs.

    Graphs are listed pairwise: dataset index ``2k`` and ``2k + 1`` form pair k.
    """
    if pair_count < 1:
        raise ValueError("pair_count must be >= 1")
    if require_noniso and n > ISO_BUDGET:
        raise OracleBudgetError(f"non-isomorphism certification needs n <= {ISO_BUDGET}, got {n}")
    if substrate not in ("regular", "er"):
        raise ValueError(f"unknown substrate {substrate!r}")
    if label_rule not in ("triangle", "swap_order"):
        raise ValueError(f"unknown label_rule {label_rule!r}")
    max_attempts = max_attempts or 500 * pair_count
    rng = np.random.default_rng(seed)
    rejected = Counter()
    pairs: list[PngPair] = []
    seen: dict[tuple, list[Graph]] = {}
    attempts = 0

    def duplicate(h: Graph) -> bool:
        return any(is_isomorphic_small(h, o) for o in seen.get(spectral_signature(h), ()))

    while len(pairs) < pair_count:
        if attempts >= max_attempts:
            raise GenerationBudgetError(
                f"only {len(pairs)}/{pair_count} pairs after {attempts} attempts", dict(rejected))
        attempts += 1
        sub_seed = int(rng.integers(2**63 - 1))
        if substrate == "regular":
            g = random_regular_graph(n, degree, feature_alphabet, seed=sub_seed)
        else:
            g = random_graph(n, edge_prob, feature_alphabet, seed=sub_seed)
        if label_rule == "triangle" and has_triangle(g):
            rejected["base_has_triangle"] += 1
            continue
        swaps = admissible_swaps(g)
        if label_rule == "triangle":
            swaps = [s for s in swaps if has_triangle(apply_swap(g, *s))]
        if not swaps:
            rejected["no_admissible_swap"] += 1
            continue
        a, b, i, j = swaps[int(rng.integers(len(swaps)))]
        g2 = apply_swap(g, a, b, i, j)
        witness = check_png(g, g2)
        if witness is None:
            rejected["check_png"] += 1
            continue
        wl = wl_equivalent(g, g2)
        if require_wl_equiv and not wl:
            rejected["not_wl_equivalent"] += 1
            continue
        iso = None
        if n <= ISO_BUDGET:
            iso = not is_isomorphic_small(g, g2)
        if require_noniso and not iso:
            rejected["isomorphic"] += 1
            continue
        if require_distinct and (duplicate(g) or duplicate(g2)):
            rejected["duplicate_of_earlier_pair"] += 1
            continue
        for h in (g, g2):
            seen.setdefault(spectral_signature(h), []).append(h)
        pairs.append(PngPair(g.with_label(0), g2.with_label(1), witness, wl, iso))

    graphs = [g for p in pairs for g in (p.g1, p.g2)]
    return Dataset(graphs, "SPNG"), pairs


def pairs_sidecar(pairs: list[PngPair], params: Optional[dict] = None) -> str:
    return json.dumps({
        "params": params or {},
        "pairs": [
            {"index": k, "graphs": [2 * k, 2 * k + 1], "witness": p.swap_witness.to_json(),
             "wl_certificate": p.wl_certificate, "iso_certificate": p.iso_certificate}
            for k, p in enumerate(pairs)
        ],
    }, indent=1)


def pairs_from_dataset(ds: Dataset, sidecar: dict) -> list[PngPair]:
    out = []
    for entry in sidecar["pairs"]:
        i, j = entry["graphs"]
        w = entry["witness"]
        witness = SwapWitness(tuple(map(tuple, w["removed"])), tuple(map(tuple, w["added"])))
        out.append(PngPair(ds[i], ds[j], witness, entry["wl_certificate"], entry["iso_certificate"]))
    return out


def pair_separation_score(embed: Callable[[Graph], np.ndarray], pair: PngPair) -> float:
    """Max absolute componentwise difference between the two embeddings."""
    x, y = np.atleast_1d(np.asarray(embed(pair.g1), dtype=float)), np.atleast_1d(np.asarray(embed(pair.g2), dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"embedding shapes differ: {x.shape} vs {y.shape}")
    return float(np.max(np.abs(x - y))) if x.size else 0.0
