"""Small dense neural substrate with hand-written backward passes.

Everything is float64. Parameter containers expose their arrays through
``tensors()`` (name -> ndarray, shared storage) so the optimiser and the
gradient checker can update them in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class DivergenceError(FloatingPointError):
    """Non-finite loss or gradient during training."""


class NonFiniteError(DivergenceError, ValueError):
    """Non-finite activations; a ValueError for callers, a divergence inside training."""


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


# --------------------------------------------------------------------------
# MLP


@dataclass
class DenseMlp:
    """Affine layers with ReLU between them.

    The last layer is linear unless ``final_activation``. With
    ``batch_norm`` every layer followed by a ReLU is normalised first
    (batch statistics in training, running moments otherwise).
    """

    layer_widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    final_activation: bool = False
    batch_norm: bool = False
    bn_scale: list[np.ndarray] = field(default_factory=list)
    bn_shift: list[np.ndarray] = field(default_factory=list)
    running_mean: list[np.ndarray] = field(default_factory=list)
    running_var: list[np.ndarray] = field(default_factory=list)
    momentum: float = 0.1
    eps: float = 1e-5
    in_shift: Optional[np.ndarray] = None
    in_scale: Optional[np.ndarray] = None

    @classmethod
    def create(cls, widths: Sequence[int], rng: np.random.Generator, final_activation=False,
               batch_norm=False, input_norm=False) -> "DenseMlp":
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"bad layer widths {widths}")
        ws = [glorot(rng, a, b) for a, b in zip(widths, widths[1:])]
        bs = [np.zeros(b) for b in widths[1:]]
        m = cls(widths, ws, bs, final_activation, batch_norm)
        if input_norm:
            m.in_shift = np.zeros(widths[0])
            m.in_scale = np.ones(widths[0])
        if batch_norm:
            for l in range(len(ws)):
                if m._activated(l):
                    w = widths[l + 1]
                    m.bn_scale.append(np.ones(w))
                    m.bn_shift.append(np.zeros(w))
                    m.running_mean.append(np.zeros(w))
                    m.running_var.append(np.ones(w))
        return m

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    def _activated(self, l: int) -> bool:
        return l < len(self.weights) - 1 or self.final_activation

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{l}"] = w
            out[f"b{l}"] = b
        for l, (g, s) in enumerate(zip(self.bn_scale, self.bn_shift)):
            out[f"bn_scale{l}"] = g
            out[f"bn_shift{l}"] = s
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (m, v) in enumerate(zip(self.running_mean, self.running_var)):
            out[f"bn_mean{l}"] = m
            out[f"bn_var{l}"] = v
        if self.in_shift is not None:
            out["in_shift"] = self.in_shift
            out["in_scale"] = self.in_scale
        return out

    def fit_input(self, x: np.ndarray) -> None:
        """Freeze a per-column standardisation of ``x`` in front of the first layer.

        Constant columns keep scale 1. The map is a fixed affine bijection, so
        it changes conditioning, not what the layer can distinguish.
        """
        if self.in_shift is None:
            raise ValueError("MLP was created without input normalisation")
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            return
        mu, sd = x.mean(axis=0), x.std(axis=0)
        self.in_shift[...] = mu
        self.in_scale[...] = np.where(sd > 1e-12 * np.maximum(np.abs(mu), 1.0), 1.0 / np.where(sd > 0, sd, 1.0), 1.0)

    def forward(self, x: np.ndarray, training: bool = False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ValueError(f"expected (*, {self.in_width}) input, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("non-finite MLP input")
        cache = []
        bn_i = 0
        h = x if self.in_shift is None else (x - self.in_shift) * self.in_scale
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            entry = {"x": h}
            if self._activated(l):
                if self.batch_norm:
                    z, entry["bn"] = self._bn_forward(bn_i, z, training)
                    entry["bn_i"] = bn_i
                    bn_i += 1
                entry["mask"] = z > 0
                z = np.where(entry["mask"], z, 0.0)
            cache.append(entry)
            h = z
        return h, cache

    def _bn_forward(self, i, z, training):
        if training and z.shape[0] > 1:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            self.running_mean[i] *= 1 - self.momentum
            self.running_mean[i] += self.momentum * mu
            self.running_var[i] *= 1 - self.momentum
            self.running_var[i] += self.momentum * var
            batch = True
        else:
            mu, var = self.running_mean[i], self.running_var[i]
            batch = False
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (z - mu) * inv
        return xhat * self.bn_scale[i] + self.bn_shift[i], (xhat, inv, batch)

    def backward(self, cache, dout: np.ndarray):
        """Return ``(dx, grads)`` with ``grads`` keyed like :meth:`tensors`."""
        grads = {}
        d = dout
        for l in range(len(self.weights) - 1, -1, -1):
            entry = cache[l]
            if "mask" in entry:
                d = np.where(entry["mask"], d, 0.0)
                if "bn" in entry:
                    i = entry["bn_i"]
                    xhat, inv, batch = entry["bn"]
                    grads[f"bn_scale{i}"] = (d * xhat).sum(axis=0)
                    grads[f"bn_shift{i}"] = d.sum(axis=0)
                    dxhat = d * self.bn_scale[i]
                    if batch:
                        m = d.shape[0]
                        d = inv / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
                    else:
                        d = dxhat * inv
            grads[f"W{l}"] = entry["x"].T @ d
            grads[f"b{l}"] = d.sum(axis=0)
            d = d @ self.weights[l].T
        if self.in_scale is not None:
            d = d * self.in_scale
        return d, grads


def mlp_forward(m: DenseMlp, x: np.ndarray, training: bool = False):
    return m.forward(x, training)


# --------------------------------------------------------------------------
# attention pair


@dataclass
class AttentionPair:
    """Raw node-level and subgraph-level scales, stored as one length-2 array."""

    raw: np.ndarray

    @classmethod
    def create(cls, rng: np.random.Generator, spread: float = 0.1) -> "AttentionPair":
        return cls(rng.uniform(-spread, spread, size=2))

    @classmethod
    def of(cls, node_scale: float, subgraph_scale: float) -> "AttentionPair":
        return cls(np.array([node_scale, subgraph_scale], dtype=np.float64))

    @property
    def node_scale(self) -> float:
        return float(self.raw[0])

    @property
    def subgraph_scale(self) -> float:
        return float(self.raw[1])


def attention_weights(p: AttentionPair) -> tuple[float, float]:
    """Two-way softmax of the raw scales, shifted by their max."""
    a, b = p.raw
    m = max(a, b)
    ea, eb = np.exp(a - m), np.exp(b - m)
    s = ea + eb
    return float(ea / s), float(eb / s)


def attention_backward(alpha: float, beta: float, d_alpha: float, d_beta: float) -> np.ndarray:
    """Gradient w.r.t. the raw scales given gradients w.r.t. (alpha, beta)."""
    mean = alpha * d_alpha + beta * d_beta
    return np.array([alpha * (d_alpha - mean), beta * (d_beta - mean)])


# --------------------------------------------------------------------------
# loss


def cross_entropy_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class, and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ValueError("one label per row required")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range 0..{c - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    logp = z - lse[:, None]
    loss = -logp[np.arange(b), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    return float(loss), grad / b


def predict(logits: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum: lowest class index wins ties
    return np.argmax(logits, axis=1)


# --------------------------------------------------------------------------
# optimiser


@dataclass
class OptimizerState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One bias-corrected adaptive-moment update, in place on ``params``."""
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k}")
        if g.shape != params[k].shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k}")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for k in sorted(grads):
        g = grads[k]
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --------------------------------------------------------------------------
# gradient check


def grad_check(f: Callable[[], tuple[float, dict]], params: dict[str, np.ndarray], h: float = 1e-5,
               samples: int = 100, seed: int = 0, kinks: Optional[Callable[[], np.ndarray]] = None,
               floor: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` evaluates the loss and gradients at the current contents of
    ``params`` (perturbed in place). Coordinates are sampled uniformly; a
    coordinate whose perturbation changes the non-smooth pattern reported by
    ``kinks`` (ReLU on/off masks, max selections) is skipped and another is
    drawn, so rectifier kinks never enter the comparison. Relative
    error is ``|a - n| / max(|a| + |n|, floor)``.
    """
    _, grads = f()
    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    pool = rng.permutation(total)
    bounds = np.cumsum(sizes)
    worst, checked = 0.0, 0
    base = None if kinks is None else kinks()
    for flat in pool:
        if checked >= samples:
            break
        t = int(np.searchsorted(bounds, flat, side="right"))
        name = names[t]
        idx = np.unravel_index(int(flat - (bounds[t] - sizes[t])), params[name].shape)
        arr = params[name]
        old = arr[idx]
        arr[idx] = old + h
        fp, _ = f()
        kink = base is not None and not np.array_equal(kinks(), base)
        arr[idx] = old - h
        fm, _ = f()
        kink = kink or (base is not None and not np.array_equal(kinks(), base))
        arr[idx] = old
        if kink:
            continue
        num = (fp - fm) / (2 * h)
        ana = grads[name][idx]
        err = abs(ana - num) / max(abs(ana) + abs(num), floor)
        worst = max(worst, err)
        checked += 1
    return worst
