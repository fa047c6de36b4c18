"""Scenario runners: ANN vs linear comparison, MC-Dropout coverage, full evaluation.

Every stochastic step draws from a named stream under a single root seed
(see :mod:`etchvm.seeding`), so a run is reproducible from that seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from etchvm.data import (
    Dataset,
    RgbSample,
    SplitIndices,
    WaferRecord,
    process_dataset,
    rgb_dataset,
    save_process_csv,
    save_rgb_csv,
    split_random,
)
from etchvm.errors import DataError
from etchvm.models import AnnModel, LinearRegressor, fit_ann, fit_linear_regressor, save_model
from etchvm.nn import mse
from etchvm.optim import TrainConfig
from etchvm.seeding import derive_rng, derive_seed
from etchvm.synth import (
    DepthOracle,
    RgbOracle,
    fit_depth_oracle,
    fit_rgb_oracle,
    generate_process_dataset,
    generate_rgb_samples,
)
from etchvm.tables import REFERENCE_THICKNESS_NM
from etchvm.uncertainty import DEFAULT_PASSES, CoverageReport, PredictiveDistribution, ReportRow, coverage, write_report

MEAN_MODE_VALIDATION = 7
PER_POINT_VALIDATION = 152


def default_validation_size(per_point: bool) -> int:
    return PER_POINT_VALIDATION if per_point else MEAN_MODE_VALIDATION


def make_split(n: int, n_validation: int, seed: int) -> SplitIndices:
    return split_random(n, n_validation, derive_seed(seed, "split"))


# ---------------------------------------------------------------------------
# synthetic replica


@dataclass(frozen=True)
class Replica:
    depth_oracle: DepthOracle
    rgb_oracle: RgbOracle
    records: tuple[WaferRecord, ...]
    rgb_samples: tuple[RgbSample, ...]  # one per record, mean depth
    rgb_point_samples: tuple[RgbSample, ...]  # one per thickness point
    seed: int
    noise_nm: float
    rgb_noise_scale: float
    reference_nm: float

    def process(self, per_point: bool = False) -> Dataset:
        return process_dataset(self.records, self.reference_nm, per_point)

    def rgb(self, per_point: bool = False) -> Dataset:
        return rgb_dataset(self.rgb_point_samples if per_point else self.rgb_samples)

    def dataset(self, features: str, per_point: bool = False) -> Dataset:
        if features == "process":
            return self.process(per_point)
        if features == "rgb":
            return self.rgb(per_point)
        raise DataError(f"unknown feature set {features!r}")

    def provenance(self) -> str:
        c = self.depth_oracle.coefficients
        lines = [
            f"seed = {self.seed}",
            f"noise_nm = {self.noise_nm!r}",
            f"rgb_noise_scale = {self.rgb_noise_scale!r}",
            f"reference_nm = {self.reference_nm!r}",
            "depth_law = -(c0 + c1*P/p + c2/p + c3*ln(Q))",
            f"depth_coefficients = {','.join(repr(v) for v in c)}",
            f"depth_fit_residual_max_nm = {self.depth_oracle.fit_residual_max!r}",
            "rgb_law = clamp(c0 + c1*d + c2*d^2, 0, 255) per channel",
        ]
        for name, coef in zip("rgb", self.rgb_oracle.coefficients):
            lines.append(f"rgb_{name}_coefficients = {','.join(repr(v) for v in coef)}")
        lines.append(f"rgb_residual_rms = {','.join(repr(v) for v in self.rgb_oracle.residual_rms)}")
        lines.append(f"rgb_fit_residual_max = {self.rgb_oracle.fit_residual_max!r}")
        return "\n".join(lines) + "\n"


def build_replica(
    seed: int,
    noise_nm: float = 1.0,
    rgb_noise_scale: float = 1.0,
    reference_nm: float = REFERENCE_THICKNESS_NM,
) -> Replica:
    depth_oracle = fit_depth_oracle()
    rgb_oracle = fit_rgb_oracle()
    records = generate_process_dataset(depth_oracle, None, noise_nm, derive_seed(seed, "noise"), reference_nm)
    rgb_mean = generate_rgb_samples(rgb_oracle, records, rgb_noise_scale, derive_seed(seed, "rgb-noise"), reference_nm)
    rgb_pts = generate_rgb_samples(
        rgb_oracle, records, rgb_noise_scale, derive_seed(seed, "rgb-point-noise"), reference_nm, per_point=True
    )
    return Replica(
        depth_oracle, rgb_oracle, tuple(records), tuple(rgb_mean), tuple(rgb_pts), seed, noise_nm, rgb_noise_scale, reference_nm
    )


def write_replica(replica: Replica, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "process.csv", out / "rgb.csv", out / "rgb_points.csv", out / "oracle.txt"]
    save_process_csv(replica.records, paths[0])
    save_rgb_csv(replica.rgb_samples, paths[1])
    save_rgb_csv(replica.rgb_point_samples, paths[2])
    paths[3].write_text(replica.provenance(), encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# scenarios


def _split_meta(seed: int, n: int, n_validation: int, per_point: bool) -> dict[str, str]:
    return {
        "root_seed": str(seed),
        "n_rows": str(n),
        "n_validation": str(n_validation),
        "per_point": str(per_point).lower(),
    }


def train_ann(
    dataset: Dataset,
    seed: int,
    config: TrainConfig | None = None,
    n_validation: int | None = None,
    per_point: bool = False,
    dropout: float = 0.2,
) -> tuple[AnnModel, SplitIndices]:
    config = config or TrainConfig()
    n_val = default_validation_size(per_point) if n_validation is None else n_validation
    split = make_split(len(dataset), n_val, seed)
    cfg = config.replace(seed=derive_seed(seed, "train"))
    model, _ = fit_ann(dataset.subset(split.train), cfg, dropout=dropout, meta=_split_meta(seed, len(dataset), n_val, per_point))
    return model, split


def train_linear(
    dataset: Dataset,
    seed: int,
    n_validation: int | None = None,
    per_point: bool = False,
    with_bias: bool = True,
) -> tuple[LinearRegressor, SplitIndices]:
    n_val = default_validation_size(per_point) if n_validation is None else n_validation
    split = make_split(len(dataset), n_val, seed)
    model = fit_linear_regressor(dataset.subset(split.train), with_bias, _split_meta(seed, len(dataset), n_val, per_point))
    return model, split


@dataclass(frozen=True)
class Comparison:
    ann: AnnModel
    linear: LinearRegressor
    split: SplitIndices
    validation: Dataset
    ann_pred: np.ndarray
    linear_pred: np.ndarray

    @property
    def ann_mse(self) -> float:
        return mse(self.ann_pred, self.validation.targets)

    @property
    def linear_mse(self) -> float:
        return mse(self.linear_pred, self.validation.targets)

    @property
    def improvement(self) -> float:
        """Linear MSE divided by ANN MSE (> 1 means the ANN wins)."""
        return self.linear_mse / self.ann_mse


def compare_models(
    dataset: Dataset,
    seed: int,
    config: TrainConfig | None = None,
    n_validation: int | None = None,
    per_point: bool = False,
    with_bias: bool = True,
) -> Comparison:
    """Train ANN and linear baseline on one shared split and score both on validation."""
    ann, split = train_ann(dataset, seed, config, n_validation, per_point)
    lin, _ = train_linear(dataset, seed, n_validation, per_point, with_bias)
    val = dataset.subset(split.validation)
    return Comparison(ann, lin, split, val, ann.predict(val.features), lin.predict(val.features))


@dataclass(frozen=True)
class BnnResult:
    model: AnnModel
    split: SplitIndices
    validation: Dataset
    predictions: tuple[PredictiveDistribution, ...]
    coverage: CoverageReport

    def report_rows(self) -> list[ReportRow]:
        return [
            ReportRow(int(i), p.mean, p.std, float(t))
            for i, p, t in zip(self.split.validation, self.predictions, self.validation.targets)
        ]


def run_bnn(
    dataset: Dataset,
    seed: int,
    config: TrainConfig | None = None,
    n_validation: int | None = None,
    passes: int = DEFAULT_PASSES,
    workers: int = 1,
) -> BnnResult:
    """Per-point MC-Dropout: train with dropout, keep it on for ``passes`` predictions."""
    model, split = train_ann(dataset, seed, config, n_validation, per_point=True)
    val = dataset.subset(split.validation)
    preds = model.mc_predict(val.features, passes, derive_rng(seed, "mc"), workers)
    return BnnResult(model, split, val, tuple(preds), coverage(preds, val.targets))


# ---------------------------------------------------------------------------
# one-shot evaluation

SUMMARY_KEYS = (
    "seed",
    "process_ann_mse",
    "process_linear_mse",
    "process_linear_over_ann",
    "rgb_ann_mse",
    "rgb_linear_mse",
    "rgb_linear_over_ann",
    "process_bnn_1sigma_pct",
    "process_bnn_2sigma_pct",
    "process_bnn_outside_pct",
    "rgb_bnn_1sigma_pct",
    "rgb_bnn_2sigma_pct",
    "rgb_bnn_outside_pct",
)


@dataclass(frozen=True)
class Evaluation:
    seed: int
    process: Comparison
    rgb: Comparison
    process_bnn: BnnResult
    rgb_bnn: BnnResult

    def values(self) -> dict[str, float | int]:
        v: dict[str, float | int] = {"seed": self.seed}
        for name, cmp in (("process", self.process), ("rgb", self.rgb)):
            v[f"{name}_ann_mse"] = cmp.ann_mse
            v[f"{name}_linear_mse"] = cmp.linear_mse
            v[f"{name}_linear_over_ann"] = cmp.improvement
        for name, bnn in (("process", self.process_bnn), ("rgb", self.rgb_bnn)):
            f1, f2, f3 = bnn.coverage.fractions()
            v[f"{name}_bnn_1sigma_pct"] = 100 * f1
            v[f"{name}_bnn_2sigma_pct"] = 100 * f2
            v[f"{name}_bnn_outside_pct"] = 100 * f3
        return v

    def to_kv(self) -> str:
        vals = self.values()
        return "".join(f"{k} = {vals[k]!r}\n" for k in SUMMARY_KEYS)

    def to_text(self) -> str:
        lines = [f"etch depth evaluation (seed {self.seed})", ""]
        for title, cmp in (("process parameters -> depth", self.process), ("RGB -> depth", self.rgb)):
            lines.append(f"{title}  [{len(cmp.split.train)} train / {len(cmp.split.validation)} validation]")
            lines.append(f"  {'true':>9} {'ANN':>9} {'linear':>9}")
            for t, a, l in zip(cmp.validation.targets, cmp.ann_pred, cmp.linear_pred):
                lines.append(f"  {t:9.2f} {a:9.2f} {l:9.2f}")
            lines.append(f"  MSE ANN {cmp.ann_mse:.2f}  linear {cmp.linear_mse:.2f}  ratio {cmp.improvement:.2f}x")
            lines.append("")
        for title, bnn in (("MC-Dropout coverage, process", self.process_bnn), ("MC-Dropout coverage, RGB", self.rgb_bnn)):
            lines.append(f"{title}  [{len(bnn.split.validation)} validation, {bnn.predictions[0].num_samples} passes]")
            lines.extend("  " + ln for ln in bnn.coverage.format().splitlines())
            lines.append("")
        return "\n".join(lines)


def evaluate(
    seed: int,
    config: TrainConfig | None = None,
    noise_nm: float = 1.0,
    rgb_noise_scale: float = 1.0,
    passes: int = DEFAULT_PASSES,
    workers: int = 1,
    replica: Replica | None = None,
) -> tuple[Replica, Evaluation]:
    replica = replica or build_replica(seed, noise_nm, rgb_noise_scale)
    ev = Evaluation(
        seed,
        compare_models(replica.process(), seed, config),
        compare_models(replica.rgb(), seed, config),
        run_bnn(replica.process(per_point=True), seed, config, passes=passes, workers=workers),
        run_bnn(replica.rgb(per_point=True), seed, config, passes=passes, workers=workers),
    )
    return replica, ev


def write_evaluation(replica: Replica, ev: Evaluation, out_dir) -> list[Path]:
    out = Path(out_dir)
    paths = write_replica(replica, out)
    for name, cmp in (("process", ev.process), ("rgb", ev.rgb)):
        for kind, model in (("ann", cmp.ann), ("linear", cmp.linear)):
            p = out / f"{kind}_{name}.model"
            save_model(model, p)
            paths.append(p)
    for name, bnn in (("process", ev.process_bnn), ("rgb", ev.rgb_bnn)):
        p = out / f"bnn_{name}_report.csv"
        write_report(bnn.report_rows(), p)
        paths.append(p)
    p = out / "summary.txt"
    p.write_text(ev.to_text(), encoding="utf-8")
    paths.append(p)
    return paths


def seed_sweep(seeds: Sequence[int], **kwargs) -> list[Evaluation]:
    return [evaluate(s, **kwargs)[1] for s in seeds]
