"""Supernode graph over detected subgraphs and the node-membership matrix T."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .subgraphs import TYPE_CODE, Kind, SubgraphRecord


@dataclass(frozen=True)
class TransformMatrix:
    """Binary N x M matrix, ``T[i, j] = 1`` iff node i belongs to record j."""

    n: int
    m: int
    membership: tuple[tuple[int, ...], ...]

    @property
    def shape(self):
        return (self.n, self.m)

    def to_sparse(self) -> sp.csr_matrix:
        rows = [i for i, cols in enumerate(self.membership) for _ in cols]
        cols = [j for cols in self.membership for j in cols]
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=self.shape)

    def dense(self) -> np.ndarray:
        t = np.zeros(self.shape)
        for i, cols in enumerate(self.membership):
            t[i, list(cols)] = 1.0
        return t

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "rows": [list(r) for r in self.membership]}


@dataclass(frozen=True)
class GeneratedGraph:
    supernode_count: int
    super_edges: tuple[tuple[int, int], ...]
    super_features: np.ndarray
    source_records: tuple[SubgraphRecord, ...]

    def neighbors_csr(self) -> sp.csr_matrix:
        m = self.supernode_count
        if not self.super_edges:
            return sp.csr_matrix((m, m))
        e = np.asarray(self.super_edges)
        r = np.concatenate([e[:, 0], e[:, 1]])
        c = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(m, m))

    def to_json(self) -> dict:
        return {
            "m": self.supernode_count,
            "edges": [list(e) for e in self.super_edges],
            "features": self.super_features.tolist(),
        }


SUPERNODE_ENCODINGS = ("raw", "type_onehot", "categorical")


def supernode_width(encoding: str, max_size: int = 0) -> int:
    if encoding == "raw":
        return 2
    if encoding == "type_onehot":
        return 4
    if encoding == "categorical":
        return len(TYPE_CODE) * max_size + 1
    raise ValueError(f"unknown supernode encoding {encoding!r}; choose from {SUPERNODE_ENCODINGS}")


def supernode_features(records: Sequence[SubgraphRecord], encoding: str = "raw", max_size: int = 0) -> np.ndarray:
    """Feature rows for supernodes.

    ``raw``: (node count, type code). ``type_onehot``: node count then a
    one-hot type. ``categorical``: one-hot over (type, node count) with counts
    clipped to ``max_size``, plus the node count itself so clipped sizes stay
    distinguishable. Sums of categorical rows are multiset counts.
    """
    f = np.zeros((len(records), supernode_width(encoding, max_size)))
    if encoding == "categorical" and max_size < 1:
        raise ValueError("categorical encoding needs max_size >= 1")
    for j, r in enumerate(records):
        code = TYPE_CODE[r.kind]
        if encoding == "raw":
            f[j] = (r.node_count, code)
        elif encoding == "type_onehot":
            f[j, 0] = r.node_count
            f[j, 1 + code] = 1.0
        else:
            f[j, code * max_size + min(r.node_count, max_size) - 1] = 1.0
            f[j, -1] = r.node_count
    return f


def build_generated_graph(g: Graph, records: Sequence[SubgraphRecord], encoding: str = "raw",
                          max_size: int = 0) -> tuple[GeneratedGraph, TransformMatrix]:
    """One supernode per record (input order); super-edge iff records share a node."""
    n, m = g.node_count, len(records)
    member = [[] for _ in range(n)]
    for j, rec in enumerate(records):
        for v in rec.nodes:
            if not (0 <= v < n):
                raise ValueError(f"record {j} references node {v} outside 0..{n - 1}")
            member[v].append(j)

    t = TransformMatrix(n, m, tuple(tuple(sorted(c)) for c in member))
    # (T^T T)[a, b] = number of shared nodes between records a and b
    overlap = sp.triu(t.to_sparse().T @ t.to_sparse(), k=1).tocoo()
    edges = sorted(zip(overlap.row.tolist(), overlap.col.tolist()))

    feats = supernode_features(records, encoding, max_size)
    feats.setflags(write=False)
    gg = GeneratedGraph(m, tuple(edges), feats, tuple(records))
    return gg, t


def transform_aggregate(t: TransformMatrix, h_s: np.ndarray) -> np.ndarray:
    """Row i is the sum of the supernode rows whose records contain node i."""
    h_s = np.asarray(h_s, dtype=np.float64)
    if h_s.ndim != 2 or h_s.shape[0] != t.m:
        raise ValueError(f"expected {t.m} supernode rows, got shape {h_s.shape}")
    out = np.zeros((t.n, h_s.shape[1]))
    for i, cols in enumerate(t.membership):
        for j in cols:
            out[i] += h_s[j]
    return out


def transform_aggregate_max(t: TransformMatrix, h_s: np.ndarray) -> np.ndarray:
    """Elementwise max over member supernode rows; zero row for non-members."""
    h_s = np.asarray(h_s, dtype=np.float64)
    if h_s.ndim != 2 or h_s.shape[0] != t.m:
        raise ValueError(f"expected {t.m} supernode rows, got shape {h_s.shape}")
    out = np.zeros((t.n, h_s.shape[1]))
    for i, cols in enumerate(t.membership):
        if cols:
            out[i] = h_s[list(cols)].max(axis=0)
    return out


def generated_json(gg: GeneratedGraph, t: TransformMatrix) -> str:
    d = gg.to_json()
    d["transform"] = t.to_json()
    return json.dumps(d)
