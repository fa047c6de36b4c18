"""Adam with L2 weight decay and full-batch MSE training."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from etchvm.data import Dataset
from etchvm.errors import DataError, NumericalError
from etchvm.nn import LayerSpec, MlpParams, backward, forward, init_params
from etchvm.seeding import derive_rng

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    epochs: int = 5000
    seed: int = 0
    decoupled_weight_decay: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise DataError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise DataError("epsilon must be positive")
        if self.weight_decay < 0:
            raise DataError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise DataError(f"config key {name}: bad value {raw!r}") from None


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) over ``base``."""
    changes = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise DataError(f"config line {line_no}: unknown key {key!r}")
        changes[key] = _coerce(key, value)
    return (base or TrainConfig()).replace(**changes)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def format_config(config: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else repr(v)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0


def init_adam(params: MlpParams) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0)


def adam_step(
    params: MlpParams, gradients: MlpParams, state: AdamState, config: TrainConfig
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update.

    Coupled decay adds ``weight_decay * param`` to the gradient; the
    decoupled variant shrinks parameters directly (AdamW).
    """
    if not gradients.is_finite():
        raise NumericalError("non-finite gradient passed to adam_step")
    b1, b2, lr, eps, wd = config.beta1, config.beta2, config.learning_rate, config.epsilon, config.weight_decay
    t = state.t + 1
    if wd and not config.decoupled_weight_decay:
        g = gradients.map(lambda gr, p: gr + wd * p, params)
    else:
        g = gradients
    m = state.m.map(lambda mi, gi: b1 * mi + (1.0 - b1) * gi, g)
    v = state.v.map(lambda vi, gi: b2 * vi + (1.0 - b2) * gi * gi, g)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    def update(p, mi, vi):
        step = lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
        if wd and config.decoupled_weight_decay:
            return p - step - lr * wd * p
        return p - step

    new = params.map(update, m, v)
    return new, AdamState(m, v, t)


def train(
    specs: Sequence[LayerSpec],
    dataset: Dataset,
    config: TrainConfig,
    params: MlpParams | None = None,
) -> tuple[MlpParams, list[float]]:
    """Full-batch training on MSE.

    Initial weights come from ``init_params(specs, config.seed)`` unless
    ``params`` is given. Dropout masks are drawn from a stream derived from
    the same seed, so the run is reproducible bit for bit.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    y = dataset.targets.reshape(-1, 1)
    if not np.all(np.isfinite(y)):
        raise DataError("training targets must be finite")
    x = dataset.features
    if params is None:
        params = init_params(specs, config.seed)
    rng = derive_rng(config.seed, "dropout")
    state = init_adam(params)
    n = len(dataset)
    history: list[float] = []
    for epoch in range(config.epochs):
        try:
            out, cache = forward(params, specs, x, "train", rng)
        except NumericalError:
            raise NumericalError(f"training diverged at epoch {epoch}") from None
        resid = out - y
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise NumericalError(f"training diverged at epoch {epoch} (loss={loss!r})")
        history.append(loss)
        grads = backward(params, specs, cache, x, (2.0 / n) * resid, "train")
        params, state = adam_step(params, grads, state, config)
    return params, history


__all__ = [
    "AdamState",
    "TrainConfig",
    "adam_step",
    "format_config",
    "init_adam",
    "load_config",
    "parse_config",
    "train",
]
