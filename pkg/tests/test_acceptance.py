"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Tolerances are the published acceptance tolerances and are not loosened
here; criteria that the published tables cannot meet are left failing.
"""

import math
import time

import numpy as np
import pytest

from etchvm.cli import main
from etchvm.data import Dataset, ProcessCondition, RGB_FEATURES, WaferRecord, etch_depth
from etchvm.linear import LinearModel, fit_linear, predict_linear
from etchvm.models import fit_ann
from etchvm.nn import MlpParams, backward, forward, init_params, mlp_specs, mse
from etchvm.optim import TrainConfig
from etchvm.pipeline import build_replica, compare_models, run_bnn
from etchvm.synth import check_monotone, fit_depth_oracle, oracle_depth, process_anchors
from etchvm.tables import (
    PROCESS_REPORTED_MSE,
    PROCESS_VALIDATION_ROWS,
    RGB_REPORTED_MSE,
    RGB_VALIDATION_ROWS,
    THICKNESS_ROWS,
)
from etchvm.uncertainty import PredictiveDistribution, coverage

SEEDS = (0, 1, 2, 3, 4)


def test_criterion_01_anchor_etch_depth(gate):
    p, q, w, thick = THICKNESS_ROWS[0]
    depth = etch_depth(WaferRecord(ProcessCondition(p, q, w), thick), 302.98)
    ok = abs(depth - (-36.80)) <= 0.05
    assert gate(1, "anchor etch depth", ok, f"{depth:.4f} vs -36.80 +/- 0.05")


def test_criterion_02_published_mse_recomputation(gate):
    rows = PROCESS_VALIDATION_ROWS
    checks = [
        ("process ANN", mse([r[4] for r in rows], [r[3] for r in rows]), PROCESS_REPORTED_MSE["ann"], 0.05),
        ("process linear", mse([r[5] for r in rows], [r[3] for r in rows]), PROCESS_REPORTED_MSE["linear"], 0.05),
        ("RGB ANN", mse([r[4] for r in RGB_VALIDATION_ROWS], [r[3] for r in RGB_VALIDATION_ROWS]), RGB_REPORTED_MSE["ann"], 0.5),
        ("RGB linear", mse([r[5] for r in RGB_VALIDATION_ROWS], [r[3] for r in RGB_VALIDATION_ROWS]), RGB_REPORTED_MSE["linear"], 0.5),
    ]
    ok = all(abs(got - want) <= tol for _, got, want, tol in checks)
    detail = "; ".join(f"{n} {got:.3f} vs {want} +/- {tol}" for n, got, want, tol in checks)
    assert gate(2, "published MSE recomputation", ok, detail)


def _away_from_kinks(params, x, margin=1e-3):
    z = params.weights[0] @ x + params.biases[0]
    return np.all(np.abs(z) > margin)


def test_criterion_03_gradient_check(gate):
    t0 = time.perf_counter()
    specs = mlp_specs()
    rng = np.random.default_rng(303)
    h, trials, worst, n_checked = 1e-5, 0, 0.0, 0
    while trials < 120:
        params = init_params(specs, int(rng.integers(2**31)))
        # random nonzero biases so they are exercised too
        params = MlpParams(params.weights, tuple(rng.normal(scale=0.1, size=b.shape) for b in params.biases))
        x = rng.normal(size=3)
        if not _away_from_kinks(params, x):
            continue
        target = rng.normal()
        _, cache = forward(params, specs, x, "train", rng)
        masks = cache.masks

        def loss(p):
            y, _ = forward(p, specs, x, "train", masks=masks)
            return (y[0] - target) ** 2

        y, cache = forward(params, specs, x, "train", masks=masks)
        grads = backward(params, specs, cache, x, [2 * (y[0] - target)]).arrays()
        flat = params.arrays()
        for k, arr in enumerate(flat):
            for idx in np.ndindex(arr.shape):
                plus = [a.copy() for a in flat]
                minus = [a.copy() for a in flat]
                plus[k][idx] += h
                minus[k][idx] -= h
                num = (loss(MlpParams.from_arrays(plus)) - loss(MlpParams.from_arrays(minus))) / (2 * h)
                ana = grads[k][idx]
                scale = max(abs(num), abs(ana))
                if scale > 1e-10:
                    worst = max(worst, abs(num - ana) / scale)
                n_checked += 1
        trials += 1
    ok = worst <= 1e-4
    detail = f"{trials} trials, {n_checked} partials, worst relative error {worst:.2e} (tol 1e-4), {time.perf_counter() - t0:.1f}s"
    assert gate(3, "gradient vs central differences", ok, detail)


@pytest.fixture(scope="module")
def comparisons():
    out = {}
    for seed in SEEDS:
        replica = build_replica(seed)
        out[seed] = (compare_models(replica.process(), seed), compare_models(replica.rgb(), seed))
    return out


def test_criterion_04_ann_beats_linear(gate, comparisons):
    parts, ok_process, ok_rgb = [], True, True
    for seed, (proc, rgb) in comparisons.items():
        ok_process &= proc.ann_mse < 0.5 * proc.linear_mse
        ok_rgb &= rgb.ann_mse < 0.5 * rgb.linear_mse
        parts.append(
            f"seed {seed}: process {proc.ann_mse:.2f}/{proc.linear_mse:.2f}, rgb {rgb.ann_mse:.2f}/{rgb.linear_mse:.2f}"
        )
    detail = (
        f"process {'ok' if ok_process else 'FAIL'}, rgb {'ok' if ok_rgb else 'FAIL'} "
        f"(ANN/linear validation MSE, need ANN < 0.5 x linear) | " + "; ".join(parts)
    )
    assert gate(4, "ANN beats linear on replica", ok_process and ok_rgb, detail)


def test_criterion_05_overfit_capacity(gate):
    t0 = time.perf_counter()
    ds = Dataset([r[:3] for r in RGB_VALIDATION_ROWS], [r[3] for r in RGB_VALIDATION_ROWS], RGB_FEATURES)
    model, _ = fit_ann(ds, TrainConfig(epochs=20000, seed=0), dropout=0.0)
    train_mse = mse(model.predict(ds.features), ds.targets)
    elapsed = time.perf_counter() - t0
    ok = train_mse < 1.0 and elapsed < 30
    assert gate(5, "overfit published RGB rows", ok, f"training MSE {train_mse:.2e} nm^2 (< 1.0), {elapsed:.1f}s")


def test_criterion_06_bnn_coverage(gate):
    fr, rgb_fr, times = [], [], []
    for seed in SEEDS:
        t0 = time.perf_counter()
        replica = build_replica(seed)
        res = run_bnn(replica.process(per_point=True), seed)
        times.append(time.perf_counter() - t0)
        assert len(res.validation) == 152 and res.predictions[0].num_samples == 50
        fr.append(res.coverage.fractions())
        rgb_fr.append(run_bnn(replica.rgb(per_point=True), seed).coverage.fractions())
    one, _, out = np.mean(fr, axis=0)
    ok = 0.55 <= one <= 0.85 and out < 0.15 and max(times) < 60
    detail = (
        f"process per-point mean over seeds 0-4: 1sigma {one:.3f} in [0.55, 0.85], outside {out:.3f} < 0.15, "
        f"max {max(times):.1f}s/seed | per-seed 1sigma " + ", ".join(f"{f[0]:.3f}" for f in fr)
    )
    gate(6, "MC-Dropout coverage", ok, detail)
    r1, _, r3 = np.mean(rgb_fr, axis=0)
    print(f"[INFO] RGB per-point coverage (not gated): 1sigma {r1:.3f}, outside {r3:.3f}")
    assert ok


def test_criterion_07_coverage_oracle(gate):
    rng = np.random.default_rng(7007)
    means = rng.normal(scale=30.0, size=10000)
    stds = rng.uniform(0.1, 10.0, size=10000)
    truths = rng.normal(means, stds)
    rep = coverage([PredictiveDistribution(m, s, 50) for m, s in zip(means, stds)], truths)
    want = (0.6827, 0.2718, 0.0455)
    got = rep.fractions()
    ok = all(abs(g - w) <= 0.015 for g, w in zip(got, want))
    detail = ", ".join(f"{g:.4f} vs {w}" for g, w in zip(got, want)) + " (+/- 0.015)"
    assert gate(7, "coverage oracle", ok, detail)


def test_criterion_08_deterministic_evaluate(gate, tmp_path, capsys):
    t0 = time.perf_counter()
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        rc = main(["evaluate", "--seed", "7", "--out-dir", str(d), "--summary-out", str(d / "summary.kv")])
        assert rc == 0
        outs.append((capsys.readouterr().out, {p.name: p.read_bytes() for p in sorted(d.iterdir())}))
    (out_a, files_a), (out_b, files_b) = outs
    same = out_a == out_b and files_a == files_b
    elapsed = time.perf_counter() - t0
    ok = same and elapsed < 120 and len(files_a) >= 10
    detail = f"{len(files_a)} files + stdout byte-identical: {same}, {elapsed:.1f}s for two runs"
    assert gate(8, "reproducible evaluate --seed 7", ok, detail)


def test_criterion_09_oracle_calibration(gate):
    oracle = fit_depth_oracle()
    resid = [abs(oracle_depth(oracle, c) - d) for c, d in process_anchors()]
    try:
        check_monotone(oracle)
        monotone = True
    except Exception:
        monotone = False
    ok = max(resid) <= 5.0 and monotone
    assert gate(9, "depth oracle calibration", ok, f"max anchor residual {max(resid):.2f} nm (<= 5), monotone {monotone}")


def test_criterion_10_linear_exactness(gate):
    rng = np.random.default_rng(1010)
    x = rng.normal(size=(50, 3)) * [10, 5, 20] + [30, 12, 80]
    truth = LinearModel(np.array([1.25, -3.5, 0.75]), -12.0)
    y = predict_linear(truth, x)
    fit = fit_linear(Dataset(x, y, ("a", "b", "c")))
    coef_err = max(np.max(np.abs(fit.weights - truth.weights)), abs(fit.bias - truth.bias))
    y2 = y + rng.normal(size=50)
    noisy = fit_linear(Dataset(x, y2, ("a", "b", "c")))
    r = y2 - predict_linear(noisy, x)
    design = np.column_stack([x, np.ones(50)])
    ortho = float(np.max(np.abs(design.T @ r)))
    bound = 1e-6 * float(np.linalg.norm(y2))
    ok = coef_err <= 1e-6 and ortho <= bound
    assert gate(10, "linear least squares exactness", ok, f"coef error {coef_err:.1e} (<= 1e-6), max |X^T r| {ortho:.1e} (<= {bound:.1e})")
