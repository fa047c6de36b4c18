"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print one line ``etchvm: error[<kind>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from etchvm import __version__
from etchvm.data import (
    RGB_HEADER,
    Dataset,
    load_depth_csv,
    load_process_csv,
    load_rgb_csv,
    process_dataset,
    rgb_dataset,
    sniff_csv_kind,
)
from etchvm.dic import Rect, mean_rgb, read_ppm
from etchvm.errors import DataError, NumericalError
from etchvm.models import AnnModel, LinearRegressor, load_model, save_model
from etchvm.nn import mse
from etchvm.optim import TrainConfig, load_config
from etchvm.pipeline import (
    build_replica,
    evaluate,
    make_split,
    train_ann,
    train_linear,
    write_evaluation,
    write_replica,
)
from etchvm.seeding import derive_rng
from etchvm.tables import REFERENCE_THICKNESS_NM
from etchvm.uncertainty import DEFAULT_PASSES, ReportRow, read_report, report_coverage, write_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class CommandOutcome:
    exit_code: int = EXIT_OK
    report_paths: list[Path] = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument groups


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--config", type=Path, help="key = value file with TrainConfig fields")
    g.add_argument("--epochs", type=int)
    g.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    g.add_argument("--beta1", type=float)
    g.add_argument("--beta2", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--decoupled-weight-decay", action="store_true", default=None)


def _train_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("epochs", "learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "decoupled_weight_decay")
        if getattr(args, k) is not None
    }
    return cfg.replace(**overrides)


def _add_data_flags(p: argparse.ArgumentParser, split: bool = True) -> None:
    p.add_argument("--data", type=Path, required=True, help="process, depth-target or RGB CSV")
    p.add_argument("--features", choices=("process", "rgb"), help="defaults to the CSV's kind")
    p.add_argument("--per-point", action="store_true", help="one row per thickness measurement")
    p.add_argument("--reference-nm", type=float, default=REFERENCE_THICKNESS_NM)
    if split:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n-val", type=int, help="validation rows (default 7, or 152 with --per-point)")


def _load_dataset(path: Path, features: str | None, per_point: bool, reference_nm: float, allow_missing: bool = False) -> Dataset:
    kind = sniff_csv_kind(path)
    expected = "rgb" if kind == "rgb" else "process"
    if features and features != expected:
        raise DataError(f"{path}: a {kind} CSV cannot supply {features} features")
    if kind == "process":
        return process_dataset(load_process_csv(path), reference_nm, per_point)
    if kind == "depth":
        if per_point:
            raise DataError(f"{path}: depth-target CSV has no per-point measurements")
        return load_depth_csv(path)
    return rgb_dataset(load_rgb_csv(path, allow_missing_depth=allow_missing))


def _print_kv(**kv) -> None:
    for k, v in kv.items():
        print(f"{k} = {v}")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> CommandOutcome:
    replica = build_replica(args.seed, args.noise_nm, args.rgb_noise_scale, args.reference_nm)
    paths = write_replica(replica, args.out_dir)
    for p in paths:
        print(p)
    return CommandOutcome(EXIT_OK, paths)


def cmd_train_ann(args) -> CommandOutcome:
    ds = _load_dataset(args.data, args.features, args.per_point, args.reference_nm)
    model, split = train_ann(ds, args.seed, _train_config(args), args.n_val, args.per_point, args.dropout)
    val = ds.subset(split.validation)
    save_model(model, args.model_out)
    _print_kv(
        model="ann",
        n_train=len(split.train),
        n_validation=len(split.validation),
        validation_mse=f"{mse(model.predict(val.features), val.targets):.6g}",
    )
    return CommandOutcome(EXIT_OK, [Path(args.model_out)])


def cmd_train_linear(args) -> CommandOutcome:
    ds = _load_dataset(args.data, args.features, args.per_point, args.reference_nm)
    model, split = train_linear(ds, args.seed, args.n_val, args.per_point, not args.no_bias)
    val = ds.subset(split.validation)
    save_model(model, args.model_out)
    lin = mse(model.predict(val.features), val.targets)
    _print_kv(model="linear", n_train=len(split.train), n_validation=len(split.validation), validation_mse=f"{lin:.6g}")
    if args.ann_model:
        ann = load_model(args.ann_model)
        if not isinstance(ann, AnnModel):
            raise DataError(f"{args.ann_model}: not an ANN model")
        a = mse(ann.predict(val.features), val.targets)
        _print_kv(ann_validation_mse=f"{a:.6g}", linear_over_ann=f"{lin / a:.6g}")
    return CommandOutcome(EXIT_OK, [Path(args.model_out)])


def _check_features(model: AnnModel | LinearRegressor, ds: Dataset) -> None:
    if tuple(model.feature_names) != tuple(ds.feature_names):
        raise DataError(f"model expects features {model.feature_names}, data has {ds.feature_names}")


def cmd_predict(args) -> CommandOutcome:
    model = load_model(args.model)
    ds = _load_dataset(args.data, None, args.per_point, args.reference_nm, allow_missing=True)
    _check_features(model, ds)
    pred = model.predict(ds.features)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("index", "pred_nm", "true_nm"))
        for i, (p, t) in enumerate(zip(pred, ds.targets)):
            w.writerow((i, repr(float(p)), "" if np.isnan(t) else repr(float(t))))
    finally:
        if args.out:
            out.close()
    return CommandOutcome(EXIT_OK, [Path(args.out)] if args.out else [])


def _validation_indices(model: AnnModel, n: int) -> tuple[int, ...]:
    meta = model.meta
    try:
        root, n_rows, n_val = int(meta["root_seed"]), int(meta["n_rows"]), int(meta["n_validation"])
    except (KeyError, ValueError):
        raise DataError("model file carries no split metadata; use --subset all") from None
    if n_rows != n:
        raise DataError(f"model was split on {n_rows} rows but data has {n}")
    return make_split(n, n_val, root).validation


def cmd_bnn_predict(args) -> CommandOutcome:
    model = load_model(args.model)
    if not isinstance(model, AnnModel):
        raise DataError(f"{args.model}: MC-Dropout needs an ANN model")
    ds = _load_dataset(args.data, None, args.per_point, args.reference_nm, allow_missing=True)
    _check_features(model, ds)
    idx = _validation_indices(model, len(ds)) if args.subset == "validation" else tuple(range(len(ds)))
    sub = ds.subset(idx)
    preds = model.mc_predict(sub.features, args.passes, derive_rng(args.seed, "mc"), args.threads)
    rows = [
        ReportRow(int(i), p.mean, p.std, None if np.isnan(t) else float(t))
        for i, p, t in zip(idx, preds, sub.targets)
    ]
    write_report(rows, args.out)
    print(args.out)
    if any(r.true_nm is not None for r in rows):
        print(report_coverage(rows).format())
    return CommandOutcome(EXIT_OK, [Path(args.out)])


def cmd_coverage(args) -> CommandOutcome:
    rows = read_report(args.report)
    if not any(r.true_nm is not None for r in rows):
        raise DataError(f"{args.report}: no rows with true values")
    print(report_coverage(rows).format())
    return CommandOutcome()


def cmd_extract_rgb(args) -> CommandOutcome:
    image = read_ppm(args.image)
    r, g, b = mean_rgb(image, Rect(*args.rect))
    out = Path(args.out)
    new = not out.exists() or out.stat().st_size == 0
    if not new and sniff_csv_kind(out) != "rgb":
        raise DataError(f"{out}: not an RGB CSV")
    with open(out, "a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RGB_HEADER)
        depth = "" if args.depth_nm is None else repr(float(args.depth_nm))
        w.writerow((repr(r), repr(g), repr(b), depth))
    _print_kv(r=f"{r:.4f}", g=f"{g:.4f}", b=f"{b:.4f}")
    return CommandOutcome(EXIT_OK, [out])


def cmd_evaluate(args) -> CommandOutcome:
    replica, ev = evaluate(
        args.seed, _train_config(args), args.noise_nm, args.rgb_noise_scale, args.passes, args.threads
    )
    paths = write_evaluation(replica, ev, args.out_dir)
    if args.summary_out:
        Path(args.summary_out).write_text(ev.to_kv(), encoding="utf-8")
        paths.append(Path(args.summary_out))
    print(ev.to_text())
    return CommandOutcome(EXIT_OK, paths)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="etchvm", description="Etch-depth virtual metrology: ANN, linear baseline, MC-Dropout.")
    parser.add_argument("--version", action="version", version=f"etchvm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a calibrated synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-nm", type=float, default=1.0, help="thickness noise std per measurement")
    p.add_argument("--rgb-noise-scale", type=float, default=1.0, help="multiplier on anchor-calibrated colour noise")
    p.add_argument("--reference-nm", type=float, default=REFERENCE_THICKNESS_NM)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-ann", help="train the MLP on a random split")
    _add_data_flags(p)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--model-out", type=Path, required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_ann)

    p = sub.add_parser("train-linear", help="fit the least-squares baseline on the same split")
    _add_data_flags(p)
    p.add_argument("--no-bias", action="store_true", help="fit y = W x without intercept")
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--ann-model", type=Path, help="also score this ANN on the split for comparison")
    p.set_defaults(func=cmd_train_linear)

    p = sub.add_parser("predict", help="predict depths with a saved model")
    p.add_argument("--model", type=Path, required=True)
    _add_data_flags(p, split=False)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bnn-predict", help="MC-Dropout predictive mean and std")
    p.add_argument("--model", type=Path, required=True)
    _add_data_flags(p, split=False)
    p.add_argument("--passes", type=int, default=DEFAULT_PASSES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset", choices=("all", "validation"), default="all")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_bnn_predict)

    p = sub.add_parser("coverage", help="sigma-band coverage of a prediction report")
    p.add_argument("--report", type=Path, required=True)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("extract-rgb", help="mean colour of an image region, appended to an RGB CSV")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--rect", type=int, nargs=4, metavar=("X0", "Y0", "W", "H"), required=True)
    p.add_argument("--depth-nm", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_extract_rgb)

    p = sub.add_parser("evaluate", help="synth, both models, MC-Dropout and coverage in one run")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-nm", type=float, default=1.0)
    p.add_argument("--rgb-noise-scale", type=float, default=1.0)
    p.add_argument("--passes", type=int, default=DEFAULT_PASSES)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("evaluation"))
    p.add_argument("--summary-out", type=Path, help="also write a flat key = value summary")
    _add_train_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def _fail(kind: str, code: int, message: str) -> CommandOutcome:
    msg = " ".join(str(message).split())
    print(f"etchvm: error[{kind}]: {msg}", file=sys.stderr)
    return CommandOutcome(code)


def run(argv: Sequence[str] | None = None) -> CommandOutcome:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    try:
        return args.func(args)
    except NumericalError as exc:
        return _fail("numerical", EXIT_NUMERIC, exc)
    except DataError as exc:
        return _fail("data", EXIT_DATA, exc)
    except OSError as exc:
        return _fail("data", EXIT_DATA, exc)


def main(argv: Sequence[str] | None = None) -> int:
    return run(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
