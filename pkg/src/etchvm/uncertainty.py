"""MC-Dropout predictive distributions and sigma-band coverage."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from etchvm.errors import DataError
from etchvm.nn import LayerSpec, MlpParams, forward

DEFAULT_PASSES = 50
BANDS = ("1sigma", "2sigma", "outside")
REPORT_HEADER = ("index", "mean_nm", "std_nm", "true_nm", "abs_error_nm", "band")


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: float
    std: float
    num_samples: int

    def __post_init__(self):
        if not self.std >= 0:
            raise DataError(f"std must be >= 0, got {self.std!r}")
        if self.num_samples < 2:
            raise DataError(f"num_samples must be >= 2, got {self.num_samples}")


@dataclass(frozen=True)
class CoverageReport:
    count_within_1sigma: int
    count_within_2sigma_only: int
    count_outside: int

    @property
    def total(self) -> int:
        return self.count_within_1sigma + self.count_within_2sigma_only + self.count_outside

    @property
    def frac_within_1sigma(self) -> float:
        return self.count_within_1sigma / self.total

    @property
    def frac_within_2sigma_only(self) -> float:
        return self.count_within_2sigma_only / self.total

    @property
    def frac_outside(self) -> float:
        return self.count_outside / self.total

    def fractions(self) -> tuple[float, float, float]:
        return (self.frac_within_1sigma, self.frac_within_2sigma_only, self.frac_outside)

    def format(self) -> str:
        rows = (
            ("1sigma", self.frac_within_1sigma, self.count_within_1sigma),
            ("2sigma", self.frac_within_2sigma_only, self.count_within_2sigma_only),
            ("outside", self.frac_outside, self.count_outside),
        )
        return "\n".join(f"{name}: {100 * f:.2f}% ({c}/{self.total})" for name, f, c in rows)


def mc_dropout_samples(
    params: MlpParams,
    specs: Sequence[LayerSpec],
    x,
    num_passes: int = DEFAULT_PASSES,
    rng: np.random.Generator | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Stochastic outputs, shape (num_passes, N) for a batch or (num_passes,) for one vector.

    Pass ``k`` draws its masks from the ``k``-th child of ``rng``, so the
    result does not depend on ``workers``.
    """
    if num_passes < 2:
        raise DataError(f"num_passes must be >= 2, got {num_passes}")
    if specs[-1].output_dim != 1:
        raise DataError("MC-Dropout prediction expects a scalar-output network")
    rng = np.random.default_rng() if rng is None else rng
    children = rng.spawn(num_passes)

    def one(child: np.random.Generator) -> np.ndarray:
        y, _ = forward(params, specs, x, "train", child)
        return np.asarray(y, dtype=np.float64).reshape(-1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(one, children))
    else:
        outs = [one(c) for c in children]
    out = np.stack(outs)
    return out[:, 0] if np.ndim(x) == 1 else out


def summarize_samples(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and Bessel-corrected std over axis 0.

    Moments are taken about the first pass, so identical passes give
    exactly that value and exactly zero spread.
    """
    shift = samples[0]
    dev = samples - shift
    return shift + dev.mean(axis=0), dev.std(axis=0, ddof=1)


def mc_dropout_predict(
    params: MlpParams,
    specs: Sequence[LayerSpec],
    x,
    num_passes: int = DEFAULT_PASSES,
    rng: np.random.Generator | None = None,
    workers: int = 1,
) -> PredictiveDistribution | list[PredictiveDistribution]:
    """Sample mean and Bessel-corrected std over ``num_passes`` dropout passes.

    Returns one distribution for a 1-D input and a list for a batch.
    """
    samples = mc_dropout_samples(params, specs, x, num_passes, rng, workers)
    mean, std = summarize_samples(samples)
    if samples.ndim == 1:
        return PredictiveDistribution(float(mean), float(std), num_passes)
    return [PredictiveDistribution(float(m), float(s), num_passes) for m, s in zip(mean, std)]


def band_of(mean: float, std: float, truth: float) -> str:
    e = abs(truth - mean)
    if std == 0.0:
        return "1sigma" if e == 0.0 else "outside"
    if e <= std:
        return "1sigma"
    if e <= 2.0 * std:
        return "2sigma"
    return "outside"


def coverage(predictions: Sequence[PredictiveDistribution], truths: Sequence[float]) -> CoverageReport:
    truths = list(truths)
    if len(predictions) != len(truths):
        raise DataError(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise DataError("coverage of empty input")
    counts = {b: 0 for b in BANDS}
    for p, t in zip(predictions, truths):
        counts[band_of(p.mean, p.std, float(t))] += 1
    return CoverageReport(counts["1sigma"], counts["2sigma"], counts["outside"])


# ---------------------------------------------------------------------------
# prediction report CSV


@dataclass(frozen=True)
class ReportRow:
    index: int
    mean_nm: float
    std_nm: float
    true_nm: float | None = None

    @property
    def abs_error_nm(self) -> float | None:
        return None if self.true_nm is None else abs(self.true_nm - self.mean_nm)

    @property
    def band(self) -> str | None:
        return None if self.true_nm is None else band_of(self.mean_nm, self.std_nm, self.true_nm)


def write_report(rows: Sequence[ReportRow], path) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([r.index, fmt(r.mean_nm), fmt(r.std_nm), fmt(r.true_nm), fmt(r.abs_error_nm), r.band or ""])


def read_report(path) -> list[ReportRow]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != REPORT_HEADER:
                raise DataError(f"{path}: bad report header")
            rows = []
            for row_no, cells in enumerate(reader, start=1):
                if not cells:
                    continue
                if len(cells) != len(REPORT_HEADER):
                    raise DataError(f"{path}: row {row_no}: expected {len(REPORT_HEADER)} columns")
                try:
                    idx = int(cells[0])
                    mean, std = float(cells[1]), float(cells[2])
                    truth = float(cells[3]) if cells[3].strip() else None
                except ValueError:
                    raise DataError(f"{path}: row {row_no}: non-numeric value") from None
                if not (math.isfinite(mean) and math.isfinite(std) and std >= 0):
                    raise DataError(f"{path}: row {row_no}: invalid mean/std")
                rows.append(ReportRow(idx, mean, std, truth))
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from None
    return rows


def report_coverage(rows: Sequence[ReportRow]) -> CoverageReport:
    known = [r for r in rows if r.true_nm is not None]
    return coverage(
        [PredictiveDistribution(r.mean_nm, r.std_nm, 2) for r in known],
        [r.true_nm for r in known],
    )
