"""Two-level GNN: node-level and subgraph-level message passing merged per layer.

Each layer runs a GIN-style sum/MLP update on the original graph and,
with separate weights, on the generated (supernode) graph. Supernode
states are pulled back onto nodes through the membership matrix (sum or
max), then merged with the node states by a softmax-weighted sum or an
elementwise max. The merged states feed the next node layer; the
unmerged supernode states feed the next subgraph layer.

Node neighbourhood sums and graph readouts are computed in a canonical
order (values sorted per column) so that equal multisets give bitwise
equal sums regardless of node numbering.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .generated import GeneratedGraph, TransformMatrix, build_generated_graph, supernode_features, supernode_width
from .graph import Dataset, Graph
from .nn import (AttentionPair, DenseMlp, DivergenceError, OptimizerState, attention_backward, attention_weights,
                 cross_entropy_loss, optimizer_step, predict)
from .subgraphs import SubgraphRecord, enumerate_subgraphs

log = logging.getLogger(__name__)

VARIANTS = {
    # name: (agg_sub, merge, subgraph branch)
    "tlgnn": ("sum", "attention", True),
    "tlgnn_sm": ("sum", "max", True),
    "tlgnn_ms": ("max", "attention", True),
    "tlgnn_mm": ("max", "max", True),
    "node-only": ("sum", "attention", False),
}

SEED_PURPOSES = {"init": 0, "shuffle": 1, "folds": 2}


def derive_rng(seed: int, purpose: str) -> np.random.Generator:
    """Independent stream for one purpose: ``default_rng([seed, purpose_id])``."""
    return np.random.default_rng([int(seed), SEED_PURPOSES[purpose]])


@dataclass
class TlgnnConfig:
    layers: int = 3
    hidden: int = 32
    depth: int = 3
    tree_threshold: int = 3
    tree_inclusive: bool = False
    agg_sub: str = "sum"
    merge: str = "attention"
    subgraph_branch: bool = True
    mlp_layers: int = 2
    batch_norm: bool = False
    input_norm: bool = True
    calibration_graphs: int = 512
    readout: str = "jumping"
    readout_pool: str = "pre_merge"
    supernode_encoding: str = "categorical"
    epochs: int = 300
    lr: float = 1e-2
    lr_decay: float = 0.5
    lr_step: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.mlp_layers < 1:
            raise ValueError("layers, hidden and mlp_layers must be >= 1")
        if self.agg_sub not in ("sum", "max"):
            raise ValueError(f"agg_sub must be sum|max, got {self.agg_sub!r}")
        if self.merge == "attention_sum":
            self.merge = "attention"
        if self.merge not in ("attention", "max"):
            raise ValueError(f"merge must be attention|max, got {self.merge!r}")
        if self.readout not in ("jumping", "last"):
            raise ValueError(f"readout must be jumping|last, got {self.readout!r}")
        if self.readout_pool not in ("pre_merge", "merged"):
            raise ValueError(f"readout_pool must be pre_merge|merged, got {self.readout_pool!r}")
        supernode_width(self.supernode_encoding, self.max_record_size)

    @property
    def max_record_size(self) -> int:
        return 2 ** (self.depth + 1)

    @property
    def supernode_width(self) -> int:
        return supernode_width(self.supernode_encoding, self.max_record_size)

    def encode_supernodes(self, records: Sequence[SubgraphRecord]) -> np.ndarray:
        return supernode_features(records, self.supernode_encoding, self.max_record_size)

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "TlgnnConfig":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        agg, merge, branch = VARIANTS[variant]
        return cls(agg_sub=agg, merge=merge, subgraph_branch=branch, **kw)

    @property
    def variant(self) -> Optional[str]:
        for name, spec in VARIANTS.items():
            if spec == (self.agg_sub, self.merge, self.subgraph_branch):
                return name
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TlgnnConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# --------------------------------------------------------------------------
# parameters


@dataclass
class TlgnnParameters:
    node_mlps: list[DenseMlp]
    sub_embed: DenseMlp
    sub_mlps: list[DenseMlp]
    attention: list[AttentionPair]
    classifiers: list[DenseMlp]

    @classmethod
    def init(cls, config: TlgnnConfig, feature_width: int, class_count: int,
             supernode_width: Optional[int] = None) -> "TlgnnParameters":
        if supernode_width is None:
            supernode_width = config.supernode_width
        rng = derive_rng(config.seed, "init")
        d = config.hidden
        hidden = [d] * config.mlp_layers
        node_mlps, sub_mlps, att = [], [], []
        for k in range(config.layers):
            w_in = feature_width if k == 0 else d
            node_mlps.append(DenseMlp.create([w_in] + hidden, rng, final_activation=True,
                                             batch_norm=config.batch_norm, input_norm=config.input_norm))
            sub_mlps.append(DenseMlp.create([d] + hidden, rng, final_activation=True,
                                            batch_norm=config.batch_norm, input_norm=config.input_norm))
            att.append(AttentionPair.create(rng))
        sub_embed = DenseMlp.create([supernode_width, d], rng, input_norm=config.input_norm)
        n_cls = config.layers if config.readout == "jumping" else 1
        classifiers = [DenseMlp.create([d, class_count], rng, input_norm=config.input_norm) for _ in range(n_cls)]
        return cls(node_mlps, sub_embed, sub_mlps, att, classifiers)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for k, m in enumerate(self.node_mlps):
            out.update({f"layer{k}.node.{n}": a for n, a in m.tensors().items()})
        for k, m in enumerate(self.sub_mlps):
            out.update({f"layer{k}.sub.{n}": a for n, a in m.tensors().items()})
        for k, p in enumerate(self.attention):
            out[f"layer{k}.attention"] = p.raw
        out.update({f"sub_embed.{n}": a for n, a in self.sub_embed.tensors().items()})
        for k, m in enumerate(self.classifiers):
            out.update({f"readout{k}.{n}": a for n, a in m.tensors().items()})
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for k, m in enumerate(self.node_mlps):
            out.update({f"layer{k}.node.{n}": a for n, a in m.buffers().items()})
        for k, m in enumerate(self.sub_mlps):
            out.update({f"layer{k}.sub.{n}": a for n, a in m.buffers().items()})
        out.update({f"sub_embed.{n}": a for n, a in self.sub_embed.buffers().items()})
        for k, m in enumerate(self.classifiers):
            out.update({f"readout{k}.{n}": a for n, a in m.buffers().items()})
        return out

    @property
    def feature_width(self) -> int:
        return self.node_mlps[0].in_width

    @property
    def class_count(self) -> int:
        return self.classifiers[0].out_width


# --------------------------------------------------------------------------
# inputs and batching


@dataclass
class GraphInput:
    graph: Graph
    records: list[SubgraphRecord]
    gg: GeneratedGraph
    t: TransformMatrix
    s0: np.ndarray
    _parts: Optional[dict] = field(default=None, repr=False, compare=False)

    def parts(self) -> dict:
        """Per-graph index arrays and sparse blocks, built once and reused by batching."""
        if self._parts is None:
            g = self.graph
            nbrs = [list(g.neighbors(v)) for v in range(g.node_count)]
            self._parts = {
                "nbr": _pad_index(nbrs, -1),
                "node_adj": _rows_csr(nbrs, g.node_count),
                "sup_adj": self.gg.neighbors_csr().tocsr(),
                "t": self.t.to_sparse(),
                "mem": _pad_index(self.t.membership, -1),
            }
        return self._parts


def prepare(g: Graph, config: TlgnnConfig, records: Optional[Sequence[SubgraphRecord]] = None) -> GraphInput:
    if records is None:
        records = enumerate_subgraphs(g, config.depth, config.tree_threshold, config.tree_inclusive)
    gg, t = build_generated_graph(g, records)
    return GraphInput(g, list(records), gg, t, config.encode_supernodes(records))


def _pad_index(lists: Sequence[Sequence[int]], pad: int) -> np.ndarray:
    width = max((len(x) for x in lists), default=0)
    out = np.full((len(lists), max(width, 1)), pad, dtype=np.int64)
    for i, x in enumerate(lists):
        out[i, :len(x)] = x
    return out


def _rows_csr(lists: Sequence[Sequence[int]], ncols: int) -> sp.csr_matrix:
    rows = np.repeat(np.arange(len(lists)), [len(x) for x in lists])
    cols = np.fromiter((c for x in lists for c in x), dtype=np.int64, count=rows.size)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(len(lists), ncols))


def _stack_index(blocks: Sequence[np.ndarray], offsets: Sequence[int], pad: int) -> np.ndarray:
    """Shift each padded block by its offset, widen to a common width, pad with ``pad``."""
    width = max((b.shape[1] for b in blocks), default=1)
    out = []
    for b, off in zip(blocks, offsets):
        shifted = np.where(b < 0, pad, b + off)
        if b.shape[1] < width:
            shifted = np.hstack([shifted, np.full((b.shape[0], width - b.shape[1]), pad, dtype=np.int64)])
        out.append(shifted)
    return np.vstack(out) if out else np.zeros((0, width), dtype=np.int64)


@dataclass
class Batch:
    x: np.ndarray
    nbr_idx: np.ndarray
    node_adj: sp.csr_matrix
    pool_idx: np.ndarray
    pool: sp.csr_matrix
    s0: np.ndarray
    sup_adj: sp.csr_matrix
    t: sp.csr_matrix
    mem_idx: np.ndarray
    labels: np.ndarray
    n_graphs: int


def make_batch(inputs: Sequence[GraphInput]) -> Batch:
    """Block-diagonal union of the inputs; pad indices point one past the last row."""
    parts = [inp.parts() for inp in inputs]
    ns = [inp.graph.node_count for inp in inputs]
    ms = [inp.gg.supernode_count for inp in inputs]
    n_off = np.concatenate([[0], np.cumsum(ns)]).astype(np.int64)
    m_off = np.concatenate([[0], np.cumsum(ms)]).astype(np.int64)
    N, M = int(n_off[-1]), int(m_off[-1])
    pool_lists = [list(range(n_off[k], n_off[k + 1])) for k in range(len(inputs))]
    width = inputs[0].s0.shape[1] if inputs else 2
    labels = [-1 if inp.graph.graph_label is None else inp.graph.graph_label for inp in inputs]
    return Batch(
        x=np.vstack([inp.graph.node_features for inp in inputs]),
        nbr_idx=_stack_index([p["nbr"] for p in parts], n_off, N),
        node_adj=sp.block_diag([p["node_adj"] for p in parts], format="csr"),
        pool_idx=_pad_index(pool_lists, N),
        pool=_rows_csr(pool_lists, N),
        s0=np.vstack([inp.s0 for inp in inputs]) if M else np.zeros((0, width)),
        sup_adj=sp.block_diag([p["sup_adj"] for p in parts], format="csr") if M else sp.csr_matrix((0, 0)),
        t=sp.block_diag([p["t"] for p in parts], format="csr") if M else sp.csr_matrix((N, 0)),
        mem_idx=_stack_index([p["mem"] for p in parts], m_off, M),
        labels=np.asarray(labels, dtype=np.int64),
        n_graphs=len(inputs),
    )


def canonical_sum(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``out[r] = sum(x[idx[r, k]])`` over non-pad entries, in sorted value order.

    Padding entries (``idx == len(x)``) contribute exact zeros. Each column
    is summed left to right after sorting, so the result depends only on
    the multiset of rows gathered.
    """
    d = x.shape[1]
    xz = np.vstack([x, np.zeros((1, d))])
    gathered = np.sort(xz[idx], axis=1)
    out = np.zeros((idx.shape[0], d))
    for k in range(idx.shape[1]):
        out += gathered[:, k]
    return out


def _max_gather(h_s: np.ndarray, mem_idx: np.ndarray):
    n, d = mem_idx.shape[0], h_s.shape[1]
    padded = np.vstack([h_s, np.full((1, d), -np.inf)])
    g = padded[mem_idx]
    arg = np.argmax(g, axis=1)
    out = np.take_along_axis(g, arg[:, None, :], axis=1)[:, 0, :]
    empty = ~np.isfinite(out)
    out = np.where(empty, 0.0, out)
    src = np.take_along_axis(mem_idx, arg, axis=1)
    return out, src, empty


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardResult:
    logits: np.ndarray
    attention: list[tuple[float, float]]
    node_embeddings: np.ndarray


def _forward(params: TlgnnParameters, config: TlgnnConfig, b: Batch, training: bool = False,
             calibrate: bool = False):
    if b.x.shape[1] != params.feature_width:
        raise ValueError(f"feature width {b.x.shape[1]} does not match model input {params.feature_width}")
    K = config.layers
    caches = []
    use_sub = config.subgraph_branch
    h = b.x
    n_nodes = b.x.shape[0]

    def run(mlp, x):
        if calibrate:
            mlp.fit_input(x)
        return mlp.forward(x, training)

    hs, c_emb = run(params.sub_embed, b.s0) if use_sub else (None, None)
    logits = np.zeros((b.n_graphs, params.class_count))
    att = []
    for k in range(K):
        c = {}
        agg = canonical_sum(h, b.nbr_idx) + h
        ht, c["node"] = run(params.node_mlps[k], agg)
        if use_sub:
            aggs = b.sup_adj @ hs + hs
            hs_new, c["sub"] = run(params.sub_mlps[k], aggs)
            if config.agg_sub == "sum":
                H = b.t @ hs_new
            else:
                H, c["max_src"], c["max_empty"] = _max_gather(hs_new, b.mem_idx)
        else:
            hs_new = None
            H = np.zeros((n_nodes, config.hidden))
        alpha, beta = attention_weights(params.attention[k])
        att.append((alpha, beta))
        if config.merge == "attention":
            merged = alpha * ht + beta * H
        else:
            c["merge_pick"] = ht >= H
            merged = np.where(c["merge_pick"], ht, H)
        c.update(ht=ht, H=H, alpha=alpha, beta=beta)
        if config.readout == "jumping" or k == K - 1:
            ci = k if config.readout == "jumping" else 0
            src = ht if config.readout_pool == "pre_merge" else merged
            pooled = canonical_sum(src, b.pool_idx)
            out, c["cls"] = run(params.classifiers[ci], pooled)
            c["ci"] = ci
            logits = logits + out
        caches.append(c)
        h, hs = merged, hs_new
    return ForwardResult(logits, att, h), {"layers": caches, "emb": c_emb}


def _backward(params: TlgnnParameters, config: TlgnnConfig, b: Batch, cache, dlogits: np.ndarray):
    grads: dict[str, np.ndarray] = {}
    K = config.layers
    use_sub = config.subgraph_branch
    dh = None   # grad w.r.t. merged output of the current layer
    dhs = None  # grad w.r.t. supernode output of the current layer
    for k in range(K - 1, -1, -1):
        c = cache["layers"][k]
        ht, H, alpha, beta = c["ht"], c["H"], c["alpha"], c["beta"]
        dmerged = np.zeros_like(ht) if dh is None else dh
        dht_extra = np.zeros_like(ht)
        if "cls" in c:
            ci = c["ci"]
            dpooled, g = params.classifiers[ci].backward(c["cls"], dlogits)
            grads.update({f"readout{ci}.{n}": a for n, a in g.items()})
            dsrc = b.pool.T @ dpooled
            if config.readout_pool == "pre_merge":
                dht_extra = dsrc
            else:
                dmerged = dmerged + dsrc
        if config.merge == "attention":
            dht = alpha * dmerged
            dH = beta * dmerged
            d_alpha = float(np.sum(dmerged * ht))
            d_beta = float(np.sum(dmerged * H))
            grads[f"layer{k}.attention"] = attention_backward(alpha, beta, d_alpha, d_beta)
        else:
            pick = c["merge_pick"]
            dht = np.where(pick, dmerged, 0.0)
            dH = np.where(pick, 0.0, dmerged)
            grads[f"layer{k}.attention"] = np.zeros(2)
        dht = dht + dht_extra
        dagg, g = params.node_mlps[k].backward(c["node"], dht)
        grads.update({f"layer{k}.node.{n}": a for n, a in g.items()})
        dh = dagg + b.node_adj.T @ dagg

        if use_sub:
            if config.agg_sub == "sum":
                dhs_new = b.t.T @ dH
            else:
                dhs_new = np.zeros((b.s0.shape[0] + 1, dH.shape[1]))
                src = c["max_src"]
                contrib = np.where(c["max_empty"], 0.0, dH)
                cols = np.broadcast_to(np.arange(dH.shape[1]), src.shape)
                np.add.at(dhs_new, (src, cols), contrib)
                dhs_new = dhs_new[:-1]
            if dhs is not None:
                dhs_new = dhs_new + dhs
            daggs, g = params.sub_mlps[k].backward(c["sub"], dhs_new)
            grads.update({f"layer{k}.sub.{n}": a for n, a in g.items()})
            dhs = daggs + b.sup_adj.T @ daggs
    if use_sub:
        _, g = params.sub_embed.backward(cache["emb"], dhs)
        grads.update({f"sub_embed.{n}": a for n, a in g.items()})
    for name, arr in params.tensors().items():
        if name not in grads:
            grads[name] = np.zeros_like(arr)
    return grads


def calibrate(params: TlgnnParameters, config: TlgnnConfig, inputs: Sequence[GraphInput]) -> None:
    """Fit every MLP's frozen input standardisation, layer by layer, on ``inputs``.

    Uses at most ``config.calibration_graphs`` graphs (a seeded sample).
    """
    if not config.input_norm or not inputs:
        return
    idx = np.arange(len(inputs))
    if len(idx) > config.calibration_graphs:
        idx = np.sort(derive_rng(config.seed, "init").choice(idx, config.calibration_graphs, replace=False))
    _forward(params, config, make_batch([inputs[i] for i in idx]), calibrate=True)


def kink_pattern(params: TlgnnParameters, config: TlgnnConfig, b: Batch, training: bool = False) -> np.ndarray:
    """Every non-smooth selection made by the forward pass, flattened."""
    _, cache = _forward(params, config, b, training)
    parts = []
    for c in cache["layers"]:
        for key in ("node", "sub", "cls"):
            for entry in c.get(key, ()):
                if "mask" in entry:
                    parts.append(entry["mask"].ravel().astype(np.int64))
        if "max_src" in c:
            parts.append(c["max_src"].ravel())
        if "merge_pick" in c:
            parts.append(c["merge_pick"].ravel().astype(np.int64))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def loss_and_grads(params: TlgnnParameters, config: TlgnnConfig, b: Batch, training: bool = True):
    res, cache = _forward(params, config, b, training)
    loss, dlogits = cross_entropy_loss(res.logits, b.labels)
    return loss, _backward(params, config, b, cache, dlogits), res


# --------------------------------------------------------------------------
# single-graph operations


def _single(g: Graph, config: TlgnnConfig, gg: Optional[GeneratedGraph] = None,
            t: Optional[TransformMatrix] = None) -> Batch:
    if gg is None:
        gg, t = build_generated_graph(g, [])
    records = list(gg.source_records)
    return make_batch([GraphInput(g, records, gg, t, config.encode_supernodes(records))])


def node_level_layer(h_prev: np.ndarray, g: Graph, mlp: DenseMlp) -> np.ndarray:
    """``MLP(h_v + sum of neighbour rows)`` for every node."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape[0] != g.node_count:
        raise ValueError(f"expected {g.node_count} rows, got {h_prev.shape[0]}")
    b = _single(g, TlgnnConfig())
    return mlp.forward(canonical_sum(h_prev, b.nbr_idx) + h_prev)[0]


def subgraph_level_layer(h_prev: np.ndarray, gg: GeneratedGraph, mlp: DenseMlp) -> np.ndarray:
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape[0] != gg.supernode_count:
        raise ValueError(f"expected {gg.supernode_count} rows, got {h_prev.shape[0]}")
    if gg.supernode_count == 0:
        return np.zeros((0, mlp.out_width))
    return mlp.forward(gg.neighbors_csr() @ h_prev + h_prev)[0]


def merge_levels(h_tilde: np.ndarray, h_sub: np.ndarray, pair: AttentionPair, merge: str = "attention") -> np.ndarray:
    h_tilde, h_sub = np.asarray(h_tilde, dtype=np.float64), np.asarray(h_sub, dtype=np.float64)
    if h_tilde.shape != h_sub.shape:
        raise ValueError(f"shape mismatch {h_tilde.shape} vs {h_sub.shape}")
    if merge in ("attention", "attention_sum"):
        alpha, beta = attention_weights(pair)
        return alpha * h_tilde + beta * h_sub
    if merge == "max":
        return np.maximum(h_tilde, h_sub)
    raise ValueError(f"unknown merge {merge!r}")


def forward(g: Graph, gg: GeneratedGraph, t: TransformMatrix, params: TlgnnParameters,
            config: TlgnnConfig) -> ForwardResult:
    """Logits of one graph (shape ``(classes,)``), per-layer (alpha, beta), final node states."""
    if t.n != g.node_count or t.m != gg.supernode_count:
        raise ValueError("transform matrix does not match graph / generated graph")
    res, _ = _forward(params, config, _single(g, config, gg, t))
    return ForwardResult(res.logits[0], res.attention, res.node_embeddings)


def embed_fn(params: TlgnnParameters, config: TlgnnConfig, records_fn=None):
    """Graph -> logits closure, rebuilding the generated graph per call."""
    def embed(g: Graph) -> np.ndarray:
        inp = prepare(g, config, None if records_fn is None else records_fn(g))
        return forward(g, inp.gg, inp.t, params, config).logits
    return embed


def _chunks(inputs: Sequence[GraphInput], bs: int) -> list[Batch]:
    return [make_batch(inputs[s:s + bs]) for s in range(0, len(inputs), bs)]


def _evaluate_batches(params: TlgnnParameters, config: TlgnnConfig, batches: Sequence[Batch]):
    logits = np.vstack([_forward(params, config, b)[0].logits for b in batches])
    labels = np.concatenate([b.labels for b in batches])
    loss, _ = cross_entropy_loss(logits, labels)
    acc = float(np.mean(predict(logits) == labels))
    return loss, acc, logits


def evaluate(params: TlgnnParameters, config: TlgnnConfig, inputs: Sequence[GraphInput],
             batch_size: Optional[int] = None) -> tuple[float, float, np.ndarray]:
    """Mean loss, accuracy and logits over ``inputs`` in eval mode."""
    return _evaluate_batches(params, config, _chunks(inputs, batch_size or config.batch_size))


# --------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    fold: int = -1


def train(dataset: Dataset | Sequence[GraphInput], config: TlgnnConfig, eval_inputs: Optional[Sequence[GraphInput]] = None,
          callback: Optional[Callable[[int, TlgnnParameters], None]] = None, fold: int = -1,
          feature_width: Optional[int] = None, class_count: Optional[int] = None):
    """Minibatch training with the adaptive optimiser on cross-entropy.

    ``dataset`` may be a :class:`Dataset` or already-prepared inputs.
    ``callback(step, params)`` runs after every optimiser step. Returns
    ``(params, curve)``; the curve holds one train record per epoch (and one
    test record when ``eval_inputs`` is given).
    """
    if isinstance(dataset, Dataset):
        feature_width = feature_width or dataset.feature_width
        class_count = class_count or dataset.class_count
        inputs = [prepare(g, config) for g in dataset]
    else:
        inputs = list(dataset)
    if not inputs:
        raise ValueError("empty training set")
    widths = {inp.graph.feature_width for inp in inputs}
    if len(widths) != 1:
        raise ValueError(f"inconsistent feature widths {sorted(widths)}")
    feature_width = feature_width or widths.pop()
    class_count = class_count or int(max(inp.graph.graph_label for inp in inputs)) + 1
    sup_width = inputs[0].s0.shape[1]

    params = TlgnnParameters.init(config, feature_width, class_count, sup_width)
    calibrate(params, config, inputs)
    tensors = params.tensors()
    opt = OptimizerState(lr=config.lr)
    rng = derive_rng(config.seed, "shuffle")
    curve: list[EpochRecord] = []
    step = 0
    train_batches = _chunks(inputs, 128)
    eval_batches = _chunks(list(eval_inputs), 128) if eval_inputs else []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(inputs))
        for s in range(0, len(order), config.batch_size):
            batch = make_batch([inputs[i] for i in order[s:s + config.batch_size]])
            loss, grads, _ = loss_and_grads(params, config, batch, training=True)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
            optimizer_step(opt, tensors, grads)
            step += 1
            if callback is not None:
                callback(step, params)
        if config.lr_step and epoch % config.lr_step == 0:
            opt.lr *= config.lr_decay
        tr_loss, tr_acc, _ = _evaluate_batches(params, config, train_batches)
        curve.append(EpochRecord(epoch, "train", tr_loss, tr_acc, fold))
        if eval_inputs:
            te_loss, te_acc, _ = _evaluate_batches(params, config, eval_batches)
            curve.append(EpochRecord(epoch, "test", te_loss, te_acc, fold))
        log.debug("epoch %d loss %.4f acc %.4f", epoch, tr_loss, tr_acc)
    return params, curve


@dataclass
class CvResult:
    fold_accuracies: list[float]
    mean: float
    std: float
    curve: list[EpochRecord] = field(default_factory=list)
    folds: list[np.ndarray] = field(default_factory=list)
    train_seconds: float = 0.0
    test_seconds: float = 0.0


def fold_indices(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Stratified, seeded test-fold index sets that partition ``range(len(labels))``."""
    from sklearn.model_selection import StratifiedKFold

    labels = np.asarray(labels)
    if folds > len(labels):
        raise ValueError(f"{folds} folds for {len(labels)} graphs")
    rs = int(derive_rng(seed, "folds").integers(2**31 - 1))
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=rs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        splits = [test for _, test in skf.split(np.zeros(len(labels)), labels)]
    classes = set(labels.tolist())
    if caught or any(set(labels[t].tolist()) != classes for t in splits):
        warnings.warn("some class is absent from at least one test fold", RuntimeWarning, stacklevel=2)
    return splits


def cross_validate(dataset: Dataset, config: TlgnnConfig, folds: int = 10,
                   inputs: Optional[Sequence[GraphInput]] = None) -> CvResult:
    """k-fold CV; test accuracy after the final epoch of each fold."""
    if inputs is None:
        inputs = [prepare(g, config) for g in dataset]
    splits = fold_indices(dataset.labels, folds, config.seed)
    accs, curve = [], []
    t_train = t_test = 0.0
    for f, test in enumerate(splits):
        test_set = set(test.tolist())
        train_in = [inputs[i] for i in range(len(inputs)) if i not in test_set]
        test_in = [inputs[i] for i in test]
        t0 = time.perf_counter()
        params, c = train(train_in, config, eval_inputs=test_in, fold=f,
                          feature_width=dataset.feature_width, class_count=dataset.class_count)
        t1 = time.perf_counter()
        curve.extend(c)
        accs.append(evaluate(params, config, test_in)[1])
        t_train += t1 - t0
        t_test += time.perf_counter() - t1
        log.info("fold %d accuracy %.4f", f, accs[-1])
    return CvResult(accs, float(np.mean(accs)), float(np.std(accs)), curve, splits,
                    t_train / len(splits), t_test / len(splits))


# --------------------------------------------------------------------------
# reports and checkpoints


def attention_report(params: TlgnnParameters) -> list[tuple[int, float, float]]:
    return [(k + 1, *attention_weights(p)) for k, p in enumerate(params.attention)]


def attention_csv(params: TlgnnParameters) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "alpha", "beta"])
    for layer, a, b in attention_report(params):
        w.writerow([layer, repr(a), repr(b)])
    return buf.getvalue()


def metrics_csv(curve: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "fold", "split", "loss", "accuracy"])
    for r in curve:
        w.writerow([r.epoch, r.fold, r.split, repr(r.loss), repr(r.accuracy)])
    return buf.getvalue()


CHECKPOINT_FORMAT = "tlgnn-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: TlgnnParameters, config: TlgnnConfig, meta: Optional[dict] = None) -> str:
    def pack(d):
        return {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in sorted(d.items())}

    return json.dumps({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "feature_width": params.feature_width,
        "class_count": params.class_count,
        "supernode_width": params.sub_embed.in_width,
        "seeds": {"root": config.seed, "derivation": "default_rng([root, purpose_id])", "purposes": SEED_PURPOSES},
        "meta": meta or {},
        "tensors": pack(params.tensors()),
        "buffers": pack(params.buffers()),
    })


def load_checkpoint(text: str) -> tuple[TlgnnParameters, TlgnnConfig]:
    blob = json.loads(text)
    if blob.get("format") != CHECKPOINT_FORMAT or blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a supported checkpoint")
    config = TlgnnConfig.from_dict(blob["config"])
    params = TlgnnParameters.init(config, blob["feature_width"], blob["class_count"], blob["supernode_width"])
    for group, target in (("tensors", params.tensors()), ("buffers", params.buffers())):
        for name, entry in blob[group].items():
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if target[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}")
            target[name][...] = arr
    return params, config
