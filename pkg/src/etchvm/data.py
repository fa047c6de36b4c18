"""Dataset types, CSV ingestion, splitting and feature standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from etchvm.errors import DataError
from etchvm.tables import REFERENCE_THICKNESS_NM

PROCESS_FEATURES = ("pressure_mtorr", "cf4_sccm", "rf_top_w")
THICKNESS_COLUMNS = tuple(f"t{i}_nm" for i in range(1, 10))
PROCESS_HEADER = PROCESS_FEATURES + THICKNESS_COLUMNS
RGB_FEATURES = ("r", "g", "b")
RGB_HEADER = RGB_FEATURES + ("depth_nm",)
DEPTH_HEADER = PROCESS_FEATURES + ("depth_nm",)

MAX_THICKNESS_NM = 400.0


@dataclass(frozen=True)
class ProcessCondition:
    pressure: float  # mTorr
    cf4_flow: float  # sccm
    rf_top_power: float  # W

    def __post_init__(self):
        for name in ("pressure", "cf4_flow", "rf_top_power"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DataError(f"{name} must be a positive finite number, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pressure, self.cf4_flow, self.rf_top_power)


@dataclass(frozen=True)
class WaferRecord:
    """A process condition with its nine-point ellipsometer thickness map."""

    condition: ProcessCondition
    thickness_nm: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.thickness_nm)
        if len(t) != 9:
            raise DataError(f"expected 9 thickness values, got {len(t)}")
        for v in t:
            if not (0.0 < v < MAX_THICKNESS_NM):
                raise DataError(f"thickness {v!r} outside (0, {MAX_THICKNESS_NM:g}) nm")
        object.__setattr__(self, "thickness_nm", t)


@dataclass(frozen=True)
class RgbSample:
    r: float
    g: float
    b: float
    depth_nm: float | None = None  # None when the truth is unknown

    def __post_init__(self):
        for name in RGB_FEATURES:
            v = getattr(self, name)
            if not (0.0 <= v <= 255.0):
                raise DataError(f"channel {name}={v!r} outside [0, 255]")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.targets, dtype=np.float64).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError(f"features must be an N x d matrix with d >= 1, got shape {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
        if len(self.feature_names) != x.shape[1]:
            raise DataError(f"{len(self.feature_names)} feature names for {x.shape[1]} columns")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.targets[idx], self.feature_names)


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        std = np.array(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise DataError("mean and std lengths differ")
        if np.any(std <= 0):
            raise DataError("standardization std entries must be positive")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    validation: tuple[int, ...]
    n: int = field(default=-1)

    def __post_init__(self):
        n = len(self.train) + len(self.validation) if self.n < 0 else self.n
        seen = set(self.train) | set(self.validation)
        if len(seen) != len(self.train) + len(self.validation) or seen != set(range(n)):
            raise DataError("split must partition 0..n-1")
        object.__setattr__(self, "n", n)


# ---------------------------------------------------------------------------
# etch depth


def etch_depth(record: WaferRecord, reference_nm: float = REFERENCE_THICKNESS_NM) -> float:
    """Mean remaining thickness minus the pre-etch reference.

    Negative when material was removed.
    """
    if not reference_nm > 0:
        raise DataError(f"reference thickness must be positive, got {reference_nm!r}")
    return math.fsum(record.thickness_nm) / len(record.thickness_nm) - reference_nm


def point_depths(record: WaferRecord, reference_nm: float = REFERENCE_THICKNESS_NM) -> tuple[float, ...]:
    """Per-measurement depths, one for each of the nine map points."""
    if not reference_nm > 0:
        raise DataError(f"reference thickness must be positive, got {reference_nm!r}")
    return tuple(t - reference_nm for t in record.thickness_nm)


def process_dataset(
    records: Sequence[WaferRecord],
    reference_nm: float = REFERENCE_THICKNESS_NM,
    per_point: bool = False,
) -> Dataset:
    """Build the (p, Q, P) -> depth regression set.

    With ``per_point`` each of the nine measurements becomes its own row
    (features repeated), otherwise one row per record with the mean depth.
    """
    rows, targets = [], []
    for rec in records:
        if per_point:
            for d in point_depths(rec, reference_nm):
                rows.append(rec.condition.as_tuple())
                targets.append(d)
        else:
            rows.append(rec.condition.as_tuple())
            targets.append(etch_depth(rec, reference_nm))
    x = np.array(rows, dtype=np.float64).reshape(-1, len(PROCESS_FEATURES))
    return Dataset(x, np.array(targets, dtype=np.float64), PROCESS_FEATURES)


def rgb_dataset(samples: Sequence[RgbSample]) -> Dataset:
    """RGB -> depth regression set. Unknown depths become NaN."""
    x = np.array([(s.r, s.g, s.b) for s in samples], dtype=np.float64).reshape(-1, 3)
    y = np.array([np.nan if s.depth_nm is None else s.depth_nm for s in samples], dtype=np.float64)
    return Dataset(x, y, RGB_FEATURES)


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(v: float) -> str:
    return repr(float(v))


def _read_rows(path, header: Sequence[str]) -> Iterable[tuple[int, list[str]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read: {exc}") from None
    reader = csv.reader(text.splitlines())
    try:
        got = next(reader)
    except StopIteration:
        raise DataError(f"{path}: missing header") from None
    if tuple(c.strip() for c in got) != tuple(header):
        raise DataError(f"{path}: bad header {','.join(got)!r}, expected {','.join(header)!r}")
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {row_no}: expected {len(header)} columns, got {len(row)}")
        yield row_no, row


def _num(path, row_no: int, name: str, cell: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row_no}: column {name}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}: row {row_no}: column {name}: non-finite value {cell!r}")
    return v


def load_process_csv(path) -> list[WaferRecord]:
    records = []
    for row_no, row in _read_rows(path, PROCESS_HEADER):
        vals = [_num(path, row_no, name, cell) for name, cell in zip(PROCESS_HEADER, row)]
        try:
            records.append(WaferRecord(ProcessCondition(*vals[:3]), tuple(vals[3:])))
        except DataError as exc:
            raise DataError(f"{path}: row {row_no}: {exc}") from None
    return records


def save_process_csv(records: Sequence[WaferRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROCESS_HEADER)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.condition.as_tuple() + rec.thickness_nm])


def load_rgb_csv(path, allow_missing_depth: bool = False) -> list[RgbSample]:
    """Read an RGB CSV. An empty depth cell is accepted only with ``allow_missing_depth``."""
    samples = []
    for row_no, row in _read_rows(path, RGB_HEADER):
        r, g, b = (_num(path, row_no, n, c) for n, c in zip(RGB_FEATURES, row[:3]))
        depth = None
        if row[3].strip() or not allow_missing_depth:
            depth = _num(path, row_no, "depth_nm", row[3])
        try:
            samples.append(RgbSample(r, g, b, depth))
        except DataError as exc:
            raise DataError(f"{path}: row {row_no}: {exc}") from None
    return samples


def save_rgb_csv(samples: Sequence[RgbSample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RGB_HEADER)
        for s in samples:
            depth = "" if s.depth_nm is None else _fmt(s.depth_nm)
            w.writerow([_fmt(s.r), _fmt(s.g), _fmt(s.b), depth])


def load_depth_csv(path) -> Dataset:
    rows = [
        [_num(path, row_no, n, c) for n, c in zip(DEPTH_HEADER, row)]
        for row_no, row in _read_rows(path, DEPTH_HEADER)
    ]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return Dataset(arr[:, :3], arr[:, 3], PROCESS_FEATURES)


def save_depth_csv(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEPTH_HEADER)
        for x, y in zip(dataset.features, dataset.targets):
            w.writerow([_fmt(v) for v in x] + [_fmt(y)])


def sniff_csv_kind(path) -> str:
    """Return ``process``, ``rgb`` or ``depth`` from a CSV header line."""
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from None
    header = tuple(c.strip() for c in first.split(","))
    for kind, expected in (("process", PROCESS_HEADER), ("rgb", RGB_HEADER), ("depth", DEPTH_HEADER)):
        if header == expected:
            return kind
    raise DataError(f"{path}: unrecognised header {first!r}")


# ---------------------------------------------------------------------------
# splitting and scaling


def split_random(n: int, n_validation: int, seed: int) -> SplitIndices:
    """Uniformly sample ``n_validation`` indices without replacement for validation."""
    if not 0 < n_validation < n:
        raise DataError(f"need 0 < n_validation < n, got n_validation={n_validation}, n={n}")
    rng = np.random.default_rng(seed)
    val = np.sort(rng.choice(n, size=n_validation, replace=False))
    mask = np.ones(n, dtype=bool)
    mask[val] = False
    train = np.flatnonzero(mask)
    return SplitIndices(tuple(int(i) for i in train), tuple(int(i) for i in val), n)


def fit_standardization(dataset: Dataset) -> StandardizationStats:
    if len(dataset) == 0:
        raise DataError("cannot standardize an empty dataset")
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)  # population std
    bad = [dataset.feature_names[i] for i in np.flatnonzero(std <= 1e-12)]
    if bad:
        raise DataError(f"zero-variance feature column(s): {', '.join(bad)}")
    return StandardizationStats(mean, std)


def standardize(x: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.mean.shape[0]:
        raise DataError(f"feature dimension {x.shape[-1]} does not match stats ({stats.mean.shape[0]})")
    return (x - stats.mean) / stats.std


def unstandardize(z: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.std + stats.mean


def apply_standardization(dataset: Dataset, stats: StandardizationStats) -> Dataset:
    return Dataset(standardize(dataset.features, stats), dataset.targets, dataset.feature_names)
