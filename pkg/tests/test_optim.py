import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etchvm.data import RGB_FEATURES, Dataset
from etchvm.errors import DataError, NumericalError
from etchvm.models import fit_ann
from etchvm.nn import MlpParams, init_params, mlp_specs, predict, without_dropout
from etchvm.optim import (
    TrainConfig,
    adam_step,
    format_config,
    init_adam,
    load_config,
    parse_config,
    train,
)
from etchvm.tables import RGB_VALIDATION_ROWS


def scalar(v):
    return MlpParams((np.array([[float(v)]]),), (np.zeros(1),))


def reference_adam(grad, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, wd=0.0):
    """Plain-float Adam recurrence used as the oracle."""
    x = m = v = 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad(x) + wd * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        trace.append(x)
    return trace


def test_zero_gradient_zero_decay_is_identity():
    p = init_params(mlp_specs(), 0)
    cfg = TrainConfig(weight_decay=0.0)
    new, st_ = adam_step(p, p.zeros_like(), init_adam(p), cfg)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), new.arrays()))
    assert all(not a.any() for a in st_.m.arrays() + st_.v.arrays())
    assert st_.t == 1


@pytest.mark.parametrize("g", [0.5, -3.0, 1e-3, 250.0])
def test_first_step_is_signed_learning_rate(g):
    cfg = TrainConfig(weight_decay=0.0)
    new, _ = adam_step(scalar(1.0), scalar(g), init_adam(scalar(1.0)), cfg)
    step = new.weights[0][0, 0] - 1.0
    assert abs(step + cfg.learning_rate * math.copysign(1, g)) <= cfg.learning_rate * cfg.epsilon / abs(g) + 1e-15


def _run_quadratic(cfg, steps):
    p, s = scalar(0.0), init_adam(scalar(0.0))
    xs = []
    for _ in range(steps):
        x = p.weights[0][0, 0]
        p, s = adam_step(p, scalar(2 * (x - 3)), s, cfg)
        xs.append(p.weights[0][0, 0])
    return xs


def test_quadratic_matches_scalar_recurrence():
    xs = _run_quadratic(TrainConfig(), 8000)
    ref = reference_adam(lambda x: 2 * (x - 3), 8000, wd=1e-4)
    np.testing.assert_allclose(xs, ref, rtol=0, atol=1e-12)


def test_quadratic_converges():
    # the plain recurrence first enters |x - 3| < 1e-3 at step 6473 (wd 0)
    xs = _run_quadratic(TrainConfig(weight_decay=0.0), 10000)
    first = next(i + 1 for i, x in enumerate(xs) if abs(x - 3) < 1e-3)
    assert first == 6473
    assert abs(xs[-1] - 3) < 1e-9


def test_coupled_decay_shifts_optimum():
    xs = _run_quadratic(TrainConfig(), 12000)
    # stationary point of (x-3)^2 + (1e-4/2) x^2
    assert xs[-1] == pytest.approx(6 / 2.0001, abs=1e-6)


@pytest.mark.parametrize("decoupled", [False, True])
def test_decay_shrinks_monotonically(decoupled):
    cfg = TrainConfig(weight_decay=1e-2, learning_rate=1e-2, decoupled_weight_decay=decoupled)
    p = scalar(2.0)
    s = init_adam(p)
    prev = 2.0
    for _ in range(300):
        p, s = adam_step(p, scalar(0.0), s, cfg)
        cur = p.weights[0][0, 0]
        assert 0 <= cur < prev
        prev = cur


def test_decoupled_variant_differs():
    a = _run_quadratic(TrainConfig(weight_decay=0.1), 50)[-1]
    b = _run_quadratic(TrainConfig(weight_decay=0.1, decoupled_weight_decay=True), 50)[-1]
    assert a != b


def test_nonfinite_gradient_rejected():
    with pytest.raises(NumericalError):
        adam_step(scalar(0), scalar(float("nan")), init_adam(scalar(0)), TrainConfig())


@settings(max_examples=40)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2), st.floats(0, 1e-2))
def test_adam_step_finite_and_shape_preserving(vals, wd):
    p, g = scalar(vals[0]), scalar(vals[1])
    new, s = adam_step(p, g, init_adam(p), TrainConfig(weight_decay=wd))
    assert new.weights[0].shape == (1, 1) and new.is_finite()
    assert all(np.all(a >= 0) for a in s.v.arrays())


def _toy_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    teacher = init_params(without_dropout(mlp_specs()), 99)
    y = predict(teacher, without_dropout(mlp_specs()), x)
    return Dataset(x, y, ("a", "b", "c"))


def test_zero_epochs_returns_init():
    specs = mlp_specs()
    params, hist = train(specs, _toy_dataset(), TrainConfig(epochs=0, seed=4))
    assert hist == []
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), init_params(specs, 4).arrays()))


def test_representable_target_is_learned():
    specs = without_dropout(mlp_specs())
    _, hist = train(specs, _toy_dataset(), TrainConfig(epochs=3000, seed=1))
    assert hist[-1] < 0.01 * hist[0]


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=200, seed=5)
    a, ha = train(mlp_specs(), _toy_dataset(), cfg)
    b, hb = train(mlp_specs(), _toy_dataset(), cfg)
    assert ha == hb
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def test_divergence_reports_epoch():
    ds = Dataset(_toy_dataset().features, _toy_dataset().targets * 1e7, ("a", "b", "c"))
    with pytest.raises(NumericalError, match="epoch 0"):
        train(mlp_specs(), ds, TrainConfig(epochs=5))


def test_empty_dataset_rejected():
    with pytest.raises(DataError):
        train(mlp_specs(), Dataset(np.zeros((0, 3)), np.zeros(0), ("a", "b", "c")), TrainConfig())


def test_rgb_rows_overfit():
    ds = Dataset([r[:3] for r in RGB_VALIDATION_ROWS], [r[3] for r in RGB_VALIDATION_ROWS], RGB_FEATURES)
    model, _ = fit_ann(ds, TrainConfig(epochs=20000, seed=0), dropout=0.0)
    assert float(np.mean((model.predict(ds.features) - ds.targets) ** 2)) < 1.0


def test_config_round_trip(tmp_path):
    cfg = TrainConfig(learning_rate=3e-4, epochs=12, seed=9, decoupled_weight_decay=True)
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n" + format_config(cfg))
    assert load_config(path) == cfg


@pytest.mark.parametrize(
    "text",
    ["learning_rate = -1", "beta1 = 1.0", "epsilon = 0", "weight_decay = -1", "bogus = 3", "epochs"],
)
def test_config_rejects_bad_values(text):
    with pytest.raises(DataError):
        parse_config(text)


def test_config_defaults():
    c = TrainConfig()
    assert (c.learning_rate, c.beta1, c.beta2, c.epsilon, c.weight_decay, c.epochs) == (
        1e-3, 0.9, 0.999, 1e-8, 1e-4, 5000,
    )
