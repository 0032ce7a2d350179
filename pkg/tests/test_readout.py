import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hnno_sim.devices import G_MAX_DEFAULT, G_MIN_DEFAULT
from hnno_sim.errors import OutOfLinearRangeError, StratificationError
from hnno_sim.readout import (
    LinearModel,
    crossbar_mvm,
    crossbar_predict,
    fit_readout,
    kfold_cv,
    one_hot,
    predict,
    quantize_to_crossbar,
    stratified_folds,
    train_linear,
)


def _blobs(n_per=20, n_classes=3, d=4, seed=0, spread=0.3):
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_classes, d)) * 3
    X = np.concatenate([c + spread * rng.normal(size=(n_per, d)) for c in centres])
    return X, np.repeat(np.arange(n_classes), n_per)


def test_exact_linear_recovery():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 5))
    W = rng.normal(size=(5, 2))
    m = train_linear(X, X @ W + [1.0, -2.0])
    np.testing.assert_allclose(m.weights, W, atol=1e-10)
    np.testing.assert_allclose(m.bias, [1.0, -2.0], atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_normal_equations_hold(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 6))
    Y = rng.normal(size=(25, 3))
    m = train_linear(X, Y)
    Xa = np.hstack([X, np.ones((25, 1))])
    r = Y - m.scores(X)
    np.testing.assert_allclose(Xa.T @ r, 0.0, atol=1e-9)


def test_rank_deficient_is_minimum_norm():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    m = train_linear(X, np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(m.weights[:, 0], [0.5, 0.5], atol=1e-12)


def test_ridge_shrinks_weights():
    X, y = _blobs()
    Y = one_hot(y, 3)
    assert np.linalg.norm(train_linear(X, Y, 1.0).weights) < np.linalg.norm(train_linear(X, Y).weights)


def test_train_validation():
    with pytest.raises(ValueError):
        train_linear(np.zeros((3, 2)), np.zeros((4, 1)))
    with pytest.raises(ValueError):
        train_linear(np.full((3, 2), np.nan), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        train_linear(np.zeros((3, 2)), np.zeros((3, 1)), ridge=-1)


def test_standardisation_folded_back():
    X, y = _blobs()
    X = X * [1.0, 1e3, 1e-3, 5.0]
    m = fit_readout(X, y, 3)
    assert np.mean(predict(m, X) == y) == 1.0


def test_tie_goes_to_lowest_index():
    m = LinearModel(np.zeros((2, 3)), np.zeros(3))
    np.testing.assert_array_equal(predict(m, np.ones((4, 2))), 0)


def test_model_csv_roundtrip(tmp_path):
    m = LinearModel(np.random.default_rng(0).normal(size=(3, 2)), np.array([0.1, 0.2]))
    m.to_csv(tmp_path / "m.csv")
    back = LinearModel.from_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.bias, m.bias)


# --- folds ------------------------------------------------------------------


def test_folds_stratified_and_seeded():
    y = np.repeat(np.arange(4), 10)
    f = stratified_folds(y, 5, seed=3)
    for c in range(4):
        assert np.bincount(f[y == c], minlength=5).tolist() == [2] * 5
    np.testing.assert_array_equal(f, stratified_folds(y, 5, seed=3))
    assert not np.array_equal(f, stratified_folds(y, 5, seed=4))


def test_fold_rejects_rare_class():
    with pytest.raises(StratificationError, match=r"\[2\]"):
        stratified_folds([0] * 6 + [1] * 6 + [2] * 3, 5)


def test_kfold_separable():
    X, y = _blobs(n_per=30)
    rep = kfold_cv(X, y, levels=16)
    assert rep.mean == 1.0 and rep.quantized_mean == 1.0
    assert sum(rep.fold_sizes) == 90
    d = rep.to_dict()
    assert d["k"] == 5 and len(d["fold_accuracies"]) == 5


def test_kfold_chance_on_noise():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 5))
    y = np.repeat([0, 1], 100)
    assert abs(kfold_cv(X, y).mean - 0.5) < 0.12


# --- crossbar -----------------------------------------------------------------


def test_mvm_matches_dense_continuous():
    rng = np.random.default_rng(2)
    W = rng.normal(size=(6, 3))
    cb = quantize_to_crossbar(W, levels=None)
    v = rng.uniform(-0.1, 0.1, size=(4, 6))
    np.testing.assert_allclose(crossbar_mvm(cb, v) * cb.scale, v @ W, rtol=1e-12, atol=1e-15)


def test_mvm_hand_value():
    # one row, G+ = 20 µS, G- = g_min: I = 0.1 * (20 - g_min)
    W = np.array([[1.0]])
    cb = quantize_to_crossbar(W, levels=None, g_range=(G_MIN_DEFAULT, 20.0))
    assert crossbar_mvm(cb, [0.1])[0] == pytest.approx(0.1 * (20.0 - G_MIN_DEFAULT), rel=1e-12)


def test_mvm_outside_read_window():
    cb = quantize_to_crossbar(np.ones((2, 2)))
    with pytest.raises(OutOfLinearRangeError):
        crossbar_mvm(cb, [0.2, 0.0])


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, 3), elements=st.floats(-10, 10)), st.sampled_from([2, 4, 16]))
def test_quantisation_error_bounded(W, levels):
    cb = quantize_to_crossbar(W, levels)
    step = (G_MAX_DEFAULT - G_MIN_DEFAULT) / (levels - 1) * cb.scale
    assert np.max(np.abs(cb.realized_weights() - W)) <= step / 2 * (1 + 1e-9) + 1e-12
    gp = np.asarray(cb.g_pos.conductance)
    assert np.all((gp >= G_MIN_DEFAULT - 1e-12) & (gp <= G_MAX_DEFAULT + 1e-12))


def test_sixteen_levels_used():
    W = np.linspace(-1, 1, 31)[:, None]
    cb = quantize_to_crossbar(W, 16)
    g = np.concatenate([np.asarray(cb.g_pos.conductance).ravel(), np.asarray(cb.g_neg.conductance).ravel()])
    assert np.unique(np.round(g, 9)).size == 16


def test_crossbar_predict_matches_float_model():
    X, y = _blobs(n_per=25)
    m = fit_readout(X, y, 3)
    cb = quantize_to_crossbar(m, levels=None)
    np.testing.assert_array_equal(crossbar_predict(cb, m.bias, X), predict(m, X))


def test_crossbar_csv(tmp_path):
    cb = quantize_to_crossbar(np.array([[0.5, -1.0]]))
    cb.to_csv(tmp_path / "cb.csv")
    lines = (tmp_path / "cb.csv").read_text().splitlines()
    assert lines[1] == "row,col,g_pos_uS,g_neg_uS" and len(lines) == 4
    assert "np." not in "".join(lines)


def test_square_system_reproduced_exactly():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(6, 6))
    Y = one_hot(np.arange(6) % 3, 3)
    m = train_linear(X, Y)
    assert np.max(np.abs(m.scores(X) - Y)) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 10.0))
def test_ridge_never_beats_plain_mse(seed, lam):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 5))
    Y = rng.normal(size=(30, 2))
    mse = lambda m: float(np.mean((Y - m.scores(X)) ** 2))  # noqa: E731
    assert mse(train_linear(X, Y, lam)) >= mse(train_linear(X, Y)) - 1e-12


def test_single_pair_column_current():
    # G+ - G- = 10 µS at 0.1 V gives 1 µA
    from hnno_sim.devices import NonVolatileCell
    from hnno_sim.readout import Crossbar

    cb = Crossbar(NonVolatileCell(np.array([[13.0]])), NonVolatileCell(np.array([[3.0]])), scale=1.0)
    assert crossbar_mvm(cb, [0.1])[0] == pytest.approx(1.0, rel=1e-12)
