import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recengine import (FMModel, MFModel, RatingDataset, TensorData, TensorModel, TrainConfig, build_matrix, fm_fit,
                       fm_predict, mf_fit, mf_predict)
from recengine.errors import ColdStart, DimensionError, InvalidConfig, InvalidK, UnknownCategory
from recengine.factor import (FMData, FMLayout, fm_encode, fm_gradient, fm_loss, mf_gradient, mf_loss, tf_fit,
                              tf_gradient, tf_loss, tf_predict)

from conftest import random_dataset
from oracles import central_difference, fm_naive, max_relative_error, mf_loss_loops


def full_grid(values: np.ndarray, scale=(0.0, 10.0)) -> RatingDataset:
    u, i = np.indices(values.shape)
    return RatingDataset(u.ravel(), i.ravel(), values.ravel(), rating_scale=scale)


def rank1_tensor() -> tuple[TensorData, np.ndarray]:
    a, b, c = np.array([1.0, 2.0]), np.array([1.5, 1.0]), np.array([1.0, 2.0])
    T = np.einsum("i,j,k->ijk", a, b, c)
    u, i, t = (x.ravel() for x in np.indices(T.shape))
    return TensorData(u, i, t, T.ravel(), 2, 2, 2, (0.0, 10.0)), T


# ---------------------------------------------------------------------------
# matrix factorization


def test_mf_loss_examples():
    m = build_matrix(RatingDataset([0], [0], [1.0]))
    model = MFModel(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), reg=0.1)
    assert mf_loss(model, m) == pytest.approx(0.2, abs=1e-15)
    exact = MFModel(np.array([[1.0], [2.0]]), np.array([[1.0], [2.0]]))
    assert mf_loss(exact, build_matrix(full_grid(np.array([[1.0, 2.0], [2.0, 4.0]])))) == 0.0
    with pytest.raises(DimensionError):
        mf_loss(model, build_matrix(full_grid(np.ones((2, 2)))))


def test_mf_loss_matches_loops():
    rng = np.random.default_rng(11)
    for _ in range(10):
        ds = random_dataset(rng, 3, 3, 0.7, integer=False)
        m = build_matrix(ds)
        U, V = rng.normal(size=(m.n_users, 2)), rng.normal(size=(m.n_items, 2))
        reg = float(rng.uniform(0, 1))
        R = {(int(u), int(i)): float(r) for u, i, r in zip(m.rows, m.cols, m.values)}
        assert mf_loss(MFModel(U, V, reg), m) == pytest.approx(mf_loss_loops(R, U, V, reg), abs=1e-10)


def test_mf_gradient_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        m = build_matrix(full_grid(rng.uniform(1, 5, (3, 3))))
        model = MFModel(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), reg=float(rng.uniform(0, 0.5)))
        num = central_difference(lambda: mf_loss(model, m), [model.U, model.V])
        worst = max(worst, max_relative_error(mf_gradient(model, m), num))
    assert worst < 1e-4


@pytest.mark.parametrize("optimizer", ["sgd", "als"])
def test_mf_rank1_recovery(optimizer):
    ds = full_grid(np.array([[1.0, 2.0], [2.0, 4.0]]))
    model = mf_fit(ds, TrainConfig(factors=1, epochs=500, optimizer=optimizer))
    pred = model.predict_many(ds.users, ds.items)
    assert np.sqrt(np.mean((pred - ds.ratings) ** 2)) < 1e-3
    # reconstruction of every observed entry
    assert np.all(np.abs(pred - ds.ratings) < 1e-2)


def test_mf_sgd_is_deterministic():
    ds = random_dataset(np.random.default_rng(0), 8, 9, 0.5)
    cfg = TrainConfig(factors=3, epochs=15, seed=42, batch_size=2, reg=0.1)
    a, b = mf_fit(ds, cfg), mf_fit(ds, cfg)
    assert a.U.tobytes() == b.U.tobytes() and a.V.tobytes() == b.V.tobytes()
    c = mf_fit(ds, dataclasses.replace(cfg, seed=43))
    assert not np.array_equal(a.U, c.U)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mf_loss_trends(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 6, 7, 0.6, min_rows=3)
    sgd = mf_fit(ds, TrainConfig(seed=seed % 1000))
    h = sgd.loss_history
    assert h[-1] <= h[1]
    als = mf_fit(ds, TrainConfig(optimizer="als", reg=0.5, factors=3, epochs=8, seed=seed % 1000))
    h = np.array(als.loss_history)
    # every half-step solves a convex subproblem exactly
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(1.0, h[:-1]))


def test_mf_predict_examples():
    model = MFModel(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]]))
    assert mf_predict(model, 0, 0) == 2.0
    ds = RatingDataset([0, 0, 1], [0, 1, 0], [2.0, 4.0, 3.0])
    zero = mf_fit(ds, TrainConfig(center="global", init_std=0.0, epochs=1))
    assert zero.predict(1, 1) == pytest.approx(3.0, abs=1e-15)
    with pytest.raises(ColdStart):
        mf_predict(model, 1, 0)
    with pytest.raises(ColdStart):
        mf_predict(model, 0, -1)


def test_mf_predictions_clamped():
    model = MFModel(np.array([[10.0], [-10.0]]), np.array([[10.0]]))
    assert model.predict(0, 0) == 5.0
    assert model.predict(1, 0) == 1.0
    assert np.all((model.score_items(0) >= 1) & (model.score_items(0) <= 5))


def test_train_config_preconditions():
    with pytest.raises(InvalidConfig):
        TrainConfig(epochs=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(learning_rate=0)
    with pytest.raises(InvalidK):
        TrainConfig(factors=0)


# ---------------------------------------------------------------------------
# tensor factorization


def test_tf_rank1_recovery():
    data, T = rank1_tensor()
    model = tf_fit(data, 1, TrainConfig(epochs=500))
    pred = model.predict_many(data.users, data.items, data.contexts)
    assert np.sqrt(np.mean((pred - data.values) ** 2)) < 1e-3
    with pytest.raises(InvalidK):
        tf_fit(data, 0)


def test_tf_predict_examples():
    model = TensorModel(np.array([[2.0]]), np.array([[3.0]]), np.array([[0.5]]), rating_scale=(0.0, 10.0))
    assert tf_predict(model, 0, 0, 0) == 3.0
    zero = TensorModel(np.array([[2.0]]), np.array([[0.0]]), np.array([[0.5]]))
    assert zero.raw([0], [0], [0])[0] == 0.0
    assert tf_predict(zero, 0, 0, 0) == 1.0  # clamped up to the scale minimum
    with pytest.raises(ColdStart):
        tf_predict(model, 0, 0, 1)


def test_tf_matches_dense_reconstruction():
    rng = np.random.default_rng(8)
    U, V, W = rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    dense = np.zeros((2, 2, 2))
    for k in range(3):
        dense += np.multiply.outer(np.multiply.outer(U[:, k], V[:, k]), W[:, k])
    model = TensorModel(U, V, W, rating_scale=(-100.0, 100.0))
    for u, i, c in np.ndindex(2, 2, 2):
        assert tf_predict(model, u, i, c) == pytest.approx(dense[u, i, c], abs=1e-12)


def test_tf_gradient_finite_differences():
    rng = np.random.default_rng(4)
    data, _ = rank1_tensor()
    worst = 0.0
    for _ in range(30):
        data = dataclasses.replace(data, values=rng.uniform(1, 5, 8))
        model = TensorModel(*(rng.normal(size=(2, 2)) for _ in range(3)), reg=float(rng.uniform(0, 0.5)))
        num = central_difference(lambda: tf_loss(model, data), [model.U, model.V, model.W])
        worst = max(worst, max_relative_error(tf_gradient(model, data), num))
    assert worst < 1e-4


def test_tensor_data_bins_timestamps():
    ds = RatingDataset([0, 0, 1], [0, 1, 0], [3, 4, 5], [0, 50, 100])
    data, binner = TensorData.from_dataset(ds, n_bins=4)
    assert data.contexts.tolist() == [0, 2, 3]
    assert binner([-5, 1000]).tolist() == [0, 3]


# ---------------------------------------------------------------------------
# factorization machines


def test_fm_encode_layout():
    layout = FMLayout(3, 2)
    assert fm_encode(1, 0, layout).toarray().tolist() == [0, 1, 0, 1, 0]
    assert fm_encode(1, 0, layout).length == 5
    wide = FMLayout(3, 2, 2)
    x = fm_encode(2, 1, wide, [0.5, -1.0])
    assert x.length == 7
    assert x.toarray().tolist() == [0, 0, 1, 0, 1, 0.5, -1.0]
    with pytest.raises(UnknownCategory):
        fm_encode(3, 0, layout)
    with pytest.raises(UnknownCategory):
        fm_encode(0, 2, layout)


def test_fm_predict_examples():
    layout = FMLayout(2, 2)
    w = np.array([0.5, 0.0, 0.25, 0.0])
    linear = FMModel(1.0, w, np.zeros((4, 2)), layout)
    assert fm_predict(linear, fm_encode(0, 0, layout)) == 1.75
    v = np.zeros((4, 2))
    v[0] = v[2] = [1.0, 0.0]
    pair = FMModel(0.0, np.zeros(4), v, layout)
    assert fm_predict(pair, fm_encode(0, 0, layout)) == 1.0
    with pytest.raises(DimensionError):
        fm_predict(pair, np.ones(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fm_pairwise_identity(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(2, 9)), int(rng.integers(1, 4))
    x = rng.normal(size=n) * (rng.random(n) < 0.7)
    w0, w, v = float(rng.normal()), rng.normal(size=n), rng.normal(size=(n, k))
    model = FMModel(w0, w, v, FMLayout(n, 0))
    assert fm_predict(model, x) == pytest.approx(fm_naive(w0, w, v, x), abs=1e-10)


def test_fm_gradient_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(30):
        layout = FMLayout(3, 2, 1)
        rows = [fm_encode(int(rng.integers(3)), int(rng.integers(2)), layout, [float(rng.normal())])
                for _ in range(6)]
        data = FMData.from_vectors(rows, rng.uniform(1, 5, 6), layout)
        model = FMModel(float(rng.normal()), rng.normal(size=6), rng.normal(size=(6, 2)), layout,
                        reg=float(rng.uniform(0, 0.5)))
        w0 = np.array([model.w0])
        loss = lambda: fm_loss(dataclasses.replace(model, w0=float(w0[0])), data)  # noqa: E731
        num = central_difference(loss, [w0, model.w, model.v])
        g0, gw, gv = fm_gradient(model, data)
        worst = max(worst, max_relative_error([np.array([g0]), gw, gv], num))
    assert worst < 1e-4


def test_fm_synthetic_generator():
    rng = np.random.default_rng(0)
    nu = ni = 20
    w = rng.normal(0, 0.3, nu + ni)
    v = rng.normal(0, 0.6, (nu + ni, 2))
    u, i = (a.ravel() for a in np.indices((nu, ni)))
    y = 3 + w[u] + w[nu + i] + np.einsum("ij,ij->i", v[u], v[nu + i])
    ds = RatingDataset(u, i, y, rating_scale=(-10.0, 20.0))
    perm = rng.permutation(len(ds))
    train, test = ds.subset(perm[:320]), ds.subset(perm[320:])
    # both halves index the same dense id space because every id appears in train
    assert train.n_users == nu and train.n_items == ni
    model = fm_fit(train, TrainConfig(factors=2, learning_rate=0.05, epochs=300, seed=1, center="global"))
    tu = np.searchsorted(train.user_ids, test.raw_users)
    ti = np.searchsorted(train.item_ids, test.raw_items)
    pred = model.predict_many(tu, ti)
    assert np.sqrt(np.mean((pred - test.ratings) ** 2)) < 0.1


def test_fm_fit_deterministic_and_clamped():
    ds = random_dataset(np.random.default_rng(2), 6, 6, 0.6)
    cfg = TrainConfig(factors=2, epochs=10, seed=7)
    a, b = fm_fit(ds, cfg), fm_fit(ds, cfg)
    assert a.v.tobytes() == b.v.tobytes() and a.w0 == b.w0
    big = FMModel(100.0, np.zeros(a.n_features), a.v, a.layout)
    assert big.predict(0, 0) == 5.0
    with pytest.raises(ColdStart):
        a.predict(99, 0)
    with pytest.raises(InvalidConfig):
        fm_fit(ds, TrainConfig(epochs=0))
