"""Fully connected network with ReLU, inverted dropout and reverse-mode gradients.

Samples are rows: a batch ``x`` has shape (N, d_in) and the network returns
(N, d_out). A single 1-D input vector is accepted and returns a 1-D output.
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from etchvm.errors import DataError, NumericalError

ACTIVATIONS = ("relu", "identity")
MODES = ("train", "deterministic")


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise DataError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise DataError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")


def mlp_specs(input_dim: int = 3, hidden: int = 32, dropout: float = 0.2) -> tuple[LayerSpec, ...]:
    """One ReLU hidden layer followed by dropout, then a linear scalar output."""
    return (
        LayerSpec(input_dim, hidden, "relu", dropout),
        LayerSpec(hidden, 1, "identity", 0.0),
    )


def without_dropout(specs: Sequence[LayerSpec]) -> tuple[LayerSpec, ...]:
    return tuple(LayerSpec(s.input_dim, s.output_dim, s.activation, 0.0) for s in specs)


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise DataError("network needs at least one layer")
    for j in range(1, len(specs)):
        if specs[j].input_dim != specs[j - 1].output_dim:
            raise DataError(
                f"layer {j} input_dim {specs[j].input_dim} != layer {j - 1} output_dim {specs[j - 1].output_dim}"
            )


@dataclass(frozen=True)
class MlpParams:
    """Weights ``W[j]`` of shape (out, in) and biases ``b[j]`` of shape (out,).

    Gradients and Adam moments reuse this container.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=np.float64) for b in self.biases))
        if len(self.weights) != len(self.biases):
            raise DataError("weights and biases have different layer counts")

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MlpParams":
        k = len(arrays) // 2
        return cls(tuple(arrays[:k]), tuple(arrays[k:]))

    def map(self, fn, *others: "MlpParams") -> "MlpParams":
        cols = zip(self.arrays(), *(o.arrays() for o in others))
        return MlpParams.from_arrays([fn(*c) for c in cols])

    def zeros_like(self) -> "MlpParams":
        return self.map(np.zeros_like)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def check_shapes(self, specs: Sequence[LayerSpec]) -> None:
        if len(self.weights) != len(specs):
            raise DataError(f"{len(self.weights)} parameter layers for {len(specs)} specs")
        for j, (w, b, s) in enumerate(zip(self.weights, self.biases, specs)):
            if w.shape != (s.output_dim, s.input_dim) or b.shape != (s.output_dim,):
                raise DataError(f"layer {j}: parameter shapes {w.shape}, {b.shape} do not match the layer spec")


@dataclass(frozen=True)
class ForwardCache:
    """Per-layer pre-activations, masked outputs and dropout masks."""

    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]


def init_params(specs: Sequence[LayerSpec], seed: int) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    check_chain(specs)
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for s in specs:
        bound = np.sqrt(1.0 / s.input_dim)
        ws.append(rng.uniform(-bound, bound, size=(s.output_dim, s.input_dim)))
        bs.append(np.zeros(s.output_dim))
    return MlpParams(tuple(ws), tuple(bs))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def forward(
    params: MlpParams,
    specs: Sequence[LayerSpec],
    x,
    mode: str = "deterministic",
    rng: np.random.Generator | None = None,
    masks: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network.

    In ``train`` mode each layer's activation is followed by inverted dropout:
    units are zeroed with probability ``dropout_prob`` and survivors scaled by
    ``1/(1 - dropout_prob)``. Passing ``masks`` replays a previous draw (used
    for gradient checks); otherwise masks come from ``rng``.
    """
    if mode not in MODES:
        raise DataError(f"mode must be one of {MODES}, got {mode!r}")
    params.check_shapes(specs)
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != specs[0].input_dim:
        raise DataError(f"input has shape {np.shape(x)}, expected last dim {specs[0].input_dim}")

    pres, posts, used = [], [], []
    for j, (w, b, s) in enumerate(zip(params.weights, params.biases, specs)):
        z = a @ w.T + b
        h = _activate(z, s.activation)
        if masks is not None:
            m = np.asarray(masks[j], dtype=np.float64)
            if m.shape != h.shape:
                raise DataError(f"layer {j}: mask shape {m.shape} != activation shape {h.shape}")
        elif mode == "train" and s.dropout_prob > 0.0:
            if rng is None:
                raise DataError("train-mode forward with dropout needs an rng")
            m = (rng.random(h.shape) >= s.dropout_prob).astype(np.float64)
        else:
            m = np.ones_like(h)
        if mode == "train" and s.dropout_prob > 0.0:
            a = h * m / (1.0 - s.dropout_prob)
        else:
            a = h * m
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite activation in layer {j}")
        pres.append(z)
        posts.append(a)
        used.append(m)

    cache = ForwardCache(tuple(pres), tuple(posts), tuple(used))
    y = a[0] if single else a
    return y, cache


def backward(
    params: MlpParams,
    specs: Sequence[LayerSpec],
    cache: ForwardCache,
    x,
    loss_grad_y,
    mode: str = "train",
) -> MlpParams:
    """Gradient of ``sum(loss_grad_y * y)`` w.r.t. every weight and bias.

    ``mode`` must match the forward call that produced ``cache`` so the
    dropout scaling is replayed correctly. Batch gradients are summed over rows.
    """
    a0 = np.asarray(x, dtype=np.float64)
    g = np.asarray(loss_grad_y, dtype=np.float64)
    if a0.ndim == 1:
        a0 = a0[None, :]
    if g.ndim == 1 and a0.shape[0] == 1:
        g = g[None, :]
    if len(cache.pre) != len(specs) or g.shape != cache.post[-1].shape or a0.shape[0] != g.shape[0]:
        raise DataError("loss gradient / input shape does not match the forward cache")

    gw = [None] * len(specs)
    gb = [None] * len(specs)
    delta = g
    for j in range(len(specs) - 1, -1, -1):
        s = specs[j]
        scale = 1.0 / (1.0 - s.dropout_prob) if (mode == "train" and s.dropout_prob > 0.0) else 1.0
        dh = delta * cache.masks[j] * scale
        dz = dh * (cache.pre[j] > 0.0) if s.activation == "relu" else dh
        a_prev = a0 if j == 0 else cache.post[j - 1]
        gw[j] = dz.T @ a_prev
        gb[j] = dz.sum(axis=0)
        delta = dz @ params.weights[j]
    return MlpParams(tuple(gw), tuple(gb))


def predict(params: MlpParams, specs: Sequence[LayerSpec], x) -> np.ndarray:
    """Deterministic forward pass, output flattened for scalar networks."""
    y, _ = forward(params, specs, x, "deterministic")
    return y.reshape(-1) if specs[-1].output_dim == 1 else y


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise DataError(f"length mismatch: {p.shape[0]} predictions vs {t.shape[0]} targets")
    if p.size == 0:
        raise DataError("mse of empty input")
    return float(np.mean((p - t) ** 2))
