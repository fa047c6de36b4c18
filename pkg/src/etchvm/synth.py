"""Calibrated synthetic world standing in for the unpublished 84-condition data.

Depth follows a four-coefficient law

    depth(p, Q, P) = -(c0 + c1*P/p + c2/p + c3*ln Q)

fitted to the published validation rows, and each colour channel is a
quadratic in depth fitted to the published RGB rows. Power enters as P/p:
the anchors etch roughly twice as fast per watt at 20 mTorr as at 40 mTorr,
which a separable law in P cannot reproduce.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from etchvm.data import MAX_THICKNESS_NM, ProcessCondition, RgbSample, WaferRecord, etch_depth, point_depths
from etchvm.errors import CalibrationError, DataError
from etchvm.tables import (
    CF4_FLOWS_SCCM,
    PRESSURES_MTORR,
    PROCESS_VALIDATION_ROWS,
    REFERENCE_THICKNESS_NM,
    RGB_VALIDATION_ROWS,
    TOP_POWERS_W,
)

# thickness clamp keeps generated values strictly inside (0, 400)
_T_LO, _T_HI = 1e-6, MAX_THICKNESS_NM - 1e-6


def table1_grid() -> list[ProcessCondition]:
    """All 3 x 4 x 7 = 84 pressure / CF4 / top-power combinations."""
    return [
        ProcessCondition(p, q, w)
        for p, q, w in itertools.product(PRESSURES_MTORR, CF4_FLOWS_SCCM, TOP_POWERS_W)
    ]


def process_anchors() -> list[tuple[ProcessCondition, float]]:
    return [(ProcessCondition(p, q, w), d) for p, q, w, d, _, _ in PROCESS_VALIDATION_ROWS]


def rgb_anchors() -> list[tuple[float, tuple[float, float, float]]]:
    return [(d, (r, g, b)) for r, g, b, d, _, _ in RGB_VALIDATION_ROWS]


@dataclass(frozen=True)
class DepthOracle:
    coefficients: tuple[float, float, float, float]
    fit_residual_max: float = 0.0


#: minimum of c1*P + c2 over the grid powers; keeps depth strictly rising with pressure
PRESSURE_MARGIN = 50.0


def _depth_basis(c: ProcessCondition) -> np.ndarray:
    return np.array([1.0, c.rf_top_power / c.pressure, 1.0 / c.pressure, math.log(c.cf4_flow)])


def oracle_depth(oracle: DepthOracle, condition: ProcessCondition) -> float:
    return -float(_depth_basis(condition) @ np.asarray(oracle.coefficients))


def check_monotone(oracle: DepthOracle, grid: Sequence[ProcessCondition] | None = None) -> None:
    """Raise CalibrationError unless depth falls with power and rises with pressure on the grid."""
    grid = table1_grid() if grid is None else grid
    table = {c.as_tuple(): oracle_depth(oracle, c) for c in grid}
    for (p, q, w), d in table.items():
        for (p2, q2, w2), d2 in table.items():
            if (p2, q2) == (p, q) and w2 > w and not d2 < d:
                raise CalibrationError(f"depth not decreasing in power at p={p}, Q={q}: {w}->{w2} W")
            if (q2, w2) == (q, w) and p2 > p and not d2 > d:
                raise CalibrationError(f"depth not increasing in pressure at Q={q}, P={w}: {p}->{p2} mTorr")


def fit_depth_oracle(
    anchors: Sequence[tuple[ProcessCondition, float]] | None = None,
    grid: Sequence[ProcessCondition] | None = None,
) -> DepthOracle:
    anchors = process_anchors() if anchors is None else list(anchors)
    if len(anchors) < 4:
        raise DataError(f"need at least 4 anchors, got {len(anchors)}")
    if len({c.pressure for c, _ in anchors}) < 2 or len({c.rf_top_power for c, _ in anchors}) < 2:
        raise DataError("anchors must span at least 2 pressures and 2 powers")
    grid = table1_grid() if grid is None else grid
    a = np.array([_depth_basis(c) for c, _ in anchors])
    y = -np.array([d for _, d in anchors], dtype=np.float64)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    p_min = min(c.rf_top_power for c in grid)
    if coef[1] * p_min + coef[2] < PRESSURE_MARGIN:
        # single inequality: when violated it is active at the optimum,
        # so substitute c2 = margin - c1*p_min and refit the rest
        reduced = np.column_stack([a[:, 0], a[:, 1] - p_min * a[:, 2], a[:, 3]])
        sub, *_ = np.linalg.lstsq(reduced, y - PRESSURE_MARGIN * a[:, 2], rcond=None)
        coef = np.array([sub[0], sub[1], PRESSURE_MARGIN - p_min * sub[1], sub[2]])
    resid = float(np.max(np.abs(a @ coef - y)))
    oracle = DepthOracle(tuple(float(c) for c in coef), resid)
    check_monotone(oracle, grid)
    return oracle


@dataclass(frozen=True)
class RgbOracle:
    """Per-channel quadratic ``c0 + c1*d + c2*d**2`` in depth ``d`` (nm).

    ``residual_rms`` is the per-channel anchor scatter around the fit
    (n - 3 degrees of freedom) and sets the default colour noise.
    """

    coefficients: tuple[tuple[float, float, float], ...]
    fit_residual_max: float = 0.0
    residual_rms: tuple[float, float, float] = (0.0, 0.0, 0.0)


def oracle_rgb(oracle: RgbOracle, depth: float) -> tuple[float, float, float]:
    basis = np.array([1.0, depth, depth * depth])
    vals = np.clip(np.array(oracle.coefficients) @ basis, 0.0, 255.0)
    return tuple(float(v) for v in vals)


def fit_rgb_oracle(anchors: Sequence[tuple[float, tuple[float, float, float]]] | None = None) -> RgbOracle:
    anchors = rgb_anchors() if anchors is None else list(anchors)
    if len(anchors) < 4:
        raise DataError(f"need at least 4 anchors, got {len(anchors)}")
    d = np.array([a[0] for a in anchors], dtype=np.float64)
    rgb = np.array([a[1] for a in anchors], dtype=np.float64)
    v = np.stack([np.ones_like(d), d, d * d], axis=1)
    coef, *_ = np.linalg.lstsq(v, rgb, rcond=None)  # (3 basis, 3 channels)
    res = np.clip(v @ coef, 0.0, 255.0) - rgb
    dof = max(len(anchors) - 3, 1)
    rms = np.sqrt((res**2).sum(axis=0) / dof)
    return RgbOracle(
        tuple(tuple(float(c) for c in coef[:, k]) for k in range(3)),
        float(np.max(np.abs(res))),
        tuple(float(r) for r in rms),
    )


def generate_process_dataset(
    oracle: DepthOracle,
    grid: Sequence[ProcessCondition] | None = None,
    noise_std_nm: float = 1.0,
    seed: int = 0,
    reference_nm: float = REFERENCE_THICKNESS_NM,
) -> list[WaferRecord]:
    """Nine noisy thickness readings per grid condition."""
    if noise_std_nm < 0:
        raise DataError("noise_std_nm must be >= 0")
    grid = table1_grid() if grid is None else grid
    rng = np.random.default_rng(seed)
    records = []
    for c in grid:
        # noise is drawn even when zero so grids share one stream layout
        noise = rng.standard_normal(9) * noise_std_nm
        t = np.clip(reference_nm + oracle_depth(oracle, c) + noise, _T_LO, _T_HI)
        records.append(WaferRecord(c, tuple(float(v) for v in t)))
    return records


def generate_rgb_samples(
    oracle: RgbOracle,
    records: Sequence[WaferRecord],
    noise_scale: float = 1.0,
    seed: int = 0,
    reference_nm: float = REFERENCE_THICKNESS_NM,
    per_point: bool = False,
) -> list[RgbSample]:
    """Colour readings for each record (or each thickness point).

    Channel noise std is ``noise_scale * oracle.residual_rms``.
    """
    if noise_scale < 0:
        raise DataError("noise_scale must be >= 0")
    sigma = noise_scale * np.asarray(oracle.residual_rms)
    rng = np.random.default_rng(seed)
    out = []
    for rec in records:
        depths = point_depths(rec, reference_nm) if per_point else (etch_depth(rec, reference_nm),)
        for d in depths:
            rgb = np.clip(np.array(oracle_rgb(oracle, d)) + rng.standard_normal(3) * sigma, 0.0, 255.0)
            out.append(RgbSample(float(rgb[0]), float(rgb[1]), float(rgb[2]), float(d)))
    return out
