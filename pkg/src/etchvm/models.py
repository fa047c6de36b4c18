"""Fitted-model wrappers and the flat ``key = value`` model file.

A model file is plain text, one ``key = value`` per line, floats written
with ``repr`` so every weight round-trips exactly. Example (abridged)::

    kind = mlp
    features = r,g,b
    layers = 2
    layer0.input_dim = 3
    layer0.weight = 0.12,-0.4,...
    x_mean = 231.2,170.0,221.4
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from etchvm.data import Dataset, StandardizationStats, fit_standardization, standardize
from etchvm.errors import DataError
from etchvm.linear import LinearModel, fit_linear, predict_linear
from etchvm.nn import LayerSpec, MlpParams, mlp_specs, predict
from etchvm.optim import TrainConfig, train
from etchvm.uncertainty import DEFAULT_PASSES, PredictiveDistribution, mc_dropout_samples, summarize_samples

FORMAT_VERSION = 1


@dataclass(frozen=True)
class AnnModel:
    """MLP plus the input and target scaling it was trained under."""

    specs: tuple[LayerSpec, ...]
    params: MlpParams
    x_stats: StandardizationStats
    y_mean: float
    y_std: float
    feature_names: tuple[str, ...]
    seed: int = 0
    meta: Mapping[str, str] = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        z = predict(self.params, self.specs, standardize(np.atleast_2d(x), self.x_stats))
        return z * self.y_std + self.y_mean

    def mc_predict(
        self,
        x,
        num_passes: int = DEFAULT_PASSES,
        rng: np.random.Generator | None = None,
        workers: int = 1,
    ) -> list[PredictiveDistribution]:
        z = standardize(np.atleast_2d(x), self.x_stats)
        samples = mc_dropout_samples(self.params, self.specs, z, num_passes, rng, workers)
        samples = samples * self.y_std + self.y_mean
        mean, std = summarize_samples(samples)
        return [PredictiveDistribution(float(m), float(s), num_passes) for m, s in zip(mean, std)]


@dataclass(frozen=True)
class LinearRegressor:
    model: LinearModel
    feature_names: tuple[str, ...]
    meta: Mapping[str, str] = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        return np.asarray(predict_linear(self.model, np.atleast_2d(x)), dtype=np.float64)


def fit_ann(
    dataset: Dataset,
    config: TrainConfig,
    hidden: int = 32,
    dropout: float = 0.2,
    meta: Mapping[str, str] | None = None,
) -> tuple[AnnModel, list[float]]:
    """Standardize inputs and targets on ``dataset`` and train the MLP."""
    x_stats = fit_standardization(dataset)
    y_mean = float(dataset.targets.mean())
    y_std = float(dataset.targets.std())
    if y_std <= 1e-12:
        raise DataError("training targets have zero variance")
    scaled = Dataset(standardize(dataset.features, x_stats), (dataset.targets - y_mean) / y_std, dataset.feature_names)
    specs = mlp_specs(dataset.dim, hidden, dropout)
    params, history = train(specs, scaled, config)
    model = AnnModel(specs, params, x_stats, y_mean, y_std, dataset.feature_names, config.seed, dict(meta or {}))
    return model, [h * y_std**2 for h in history]


def fit_linear_regressor(dataset: Dataset, with_bias: bool = True, meta: Mapping[str, str] | None = None) -> LinearRegressor:
    return LinearRegressor(fit_linear(dataset, with_bias), dataset.feature_names, dict(meta or {}))


# ---------------------------------------------------------------------------
# serialization


def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).reshape(-1))


def _parse_floats(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()], dtype=np.float64)
    except ValueError:
        raise DataError(f"model file: key {key!r} has non-numeric entries") from None


def _meta_lines(meta: Mapping[str, str]) -> list[str]:
    return [f"meta.{k} = {meta[k]}" for k in sorted(meta)]


def format_model(model: AnnModel | LinearRegressor) -> str:
    lines = ["# etchvm model file", f"format_version = {FORMAT_VERSION}"]
    if isinstance(model, AnnModel):
        lines += [
            "kind = mlp",
            f"features = {','.join(model.feature_names)}",
            f"seed = {model.seed}",
            f"layers = {len(model.specs)}",
        ]
        for j, (s, w, b) in enumerate(zip(model.specs, model.params.weights, model.params.biases)):
            lines += [
                f"layer{j}.input_dim = {s.input_dim}",
                f"layer{j}.output_dim = {s.output_dim}",
                f"layer{j}.activation = {s.activation}",
                f"layer{j}.dropout_prob = {s.dropout_prob!r}",
                f"layer{j}.weight = {_floats(w)}",
                f"layer{j}.bias = {_floats(b)}",
            ]
        lines += [
            f"x_mean = {_floats(model.x_stats.mean)}",
            f"x_std = {_floats(model.x_stats.std)}",
            f"y_mean = {model.y_mean!r}",
            f"y_std = {model.y_std!r}",
        ]
    elif isinstance(model, LinearRegressor):
        lm = model.model
        lines += [
            "kind = linear",
            f"features = {','.join(model.feature_names)}",
            f"with_bias = {str(lm.with_bias).lower()}",
            f"weights = {_floats(lm.weights)}",
            f"bias = {lm.bias!r}",
        ]
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    lines += _meta_lines(model.meta)
    return "\n".join(lines) + "\n"


def save_model(model: AnnModel | LinearRegressor, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def parse_model(text: str) -> AnnModel | LinearRegressor:
    kv: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"model file line {line_no}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v

    def need(key: str) -> str:
        try:
            return kv[key]
        except KeyError:
            raise DataError(f"model file: missing key {key!r}") from None

    if int(need("format_version")) != FORMAT_VERSION:
        raise DataError(f"model file: unsupported format_version {kv['format_version']}")
    meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
    features = tuple(need("features").split(","))
    kind = need("kind")
    try:
        if kind == "linear":
            lm = LinearModel(
                _parse_floats(need("weights"), "weights"),
                float(need("bias")),
                need("with_bias") == "true",
            )
            return LinearRegressor(lm, features, meta)
        if kind == "mlp":
            specs, ws, bs = [], [], []
            for j in range(int(need("layers"))):
                s = LayerSpec(
                    int(need(f"layer{j}.input_dim")),
                    int(need(f"layer{j}.output_dim")),
                    need(f"layer{j}.activation"),
                    float(need(f"layer{j}.dropout_prob")),
                )
                w = _parse_floats(need(f"layer{j}.weight"), f"layer{j}.weight")
                b = _parse_floats(need(f"layer{j}.bias"), f"layer{j}.bias")
                if w.size != s.output_dim * s.input_dim:
                    raise DataError(f"model file: layer{j}.weight has {w.size} entries")
                specs.append(s)
                ws.append(w.reshape(s.output_dim, s.input_dim))
                bs.append(b)
            params = MlpParams(tuple(ws), tuple(bs))
            params.check_shapes(specs)
            stats = StandardizationStats(_parse_floats(need("x_mean"), "x_mean"), _parse_floats(need("x_std"), "x_std"))
            return AnnModel(
                tuple(specs), params, stats, float(need("y_mean")), float(need("y_std")), features, int(need("seed")), meta
            )
    except ValueError as exc:
        raise DataError(f"model file: {exc}") from None
    raise DataError(f"model file: unknown kind {kind!r}")


def load_model(path) -> AnnModel | LinearRegressor:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from None
    return parse_model(text)


__all__: Sequence[str] = (
    "AnnModel",
    "LinearRegressor",
    "fit_ann",
    "fit_linear_regressor",
    "format_model",
    "load_model",
    "parse_model",
    "save_model",
)
