import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recengine import RatingDataset, build_graph, build_matrix, compute_S, linear_fit, linear_predict
from recengine.errors import ColdStart, DimensionError, InvalidConfig, SingularSystem
from recengine.graph import (InteractionGraph, LinearModel, SlimConfig, SlimModel, WalkConfig,
                             fit_linear_recommender, rw_similarity, slim_fit, slim_objective, slim_predict)

from conftest import random_dataset
from oracles import all_pairs_item_cosine, slim_grid_min, walk_hit_probability


def pair_counts(ds: RatingDataset, threshold: float) -> dict:
    liked = {}
    for u, i, r in zip(ds.users.tolist(), ds.items.tolist(), ds.ratings.tolist()):
        if r >= threshold:
            liked.setdefault(u, set()).add(i)
    out = {}
    for items in liked.values():
        for a, b in itertools.combinations(sorted(items), 2):
            out[(a, b)] = out.get((a, b), 0) + 1
    return out


# ---------------------------------------------------------------------------
# graph construction and random walks


def test_build_graph_examples():
    g = build_graph(RatingDataset([1, 1], [10, 20], [5, 4]))
    assert g.edges() == {(0, 1): 1}
    g = build_graph(RatingDataset([1, 2, 3], [10, 20, 30], [5, 5, 5]))
    assert g.n_edges == 0
    g = build_graph(RatingDataset([1, 1, 1], [10, 20, 30], [5, 2, 4]))
    assert g.edges() == {(0, 2): 1}


def test_build_graph_matches_pair_counts():
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, 5, 6, 0.7)
    assert build_graph(ds, 3.0).edges() == pair_counts(ds, 3.0)


def test_two_node_walks_are_forced():
    g = InteractionGraph.from_edges(3, {(0, 1): 1})
    sim = rw_similarity(g, WalkConfig(walk_length=2, walks_per_seed=50))
    assert sim[0, 1] == 1.0 and sim[1, 0] == 1.0
    assert sim[2].tolist() == [0.0, 0.0, 0.0]
    assert sim[0, 0] == 0.0


def test_walk_config_preconditions():
    with pytest.raises(InvalidConfig):
        WalkConfig(walk_length=1)
    with pytest.raises(InvalidConfig):
        WalkConfig(walks_per_seed=0)


def test_path_graph_matches_hitting_probabilities():
    edges = {(0, 1): 1, (1, 2): 3}
    g = InteractionGraph.from_edges(3, edges)
    P = np.zeros((3, 3))
    for (a, b), w in edges.items():
        P[a, b] = P[b, a] = w
    P /= P.sum(axis=1, keepdims=True)
    for length in (2, 3, 5):
        sim = rw_similarity(g, WalkConfig(walk_length=length, walks_per_seed=10_000, seed=1))
        for i, j in itertools.permutations(range(3), 2):
            assert abs(sim[i, j] - walk_hit_probability(P, i, j, length)) <= 0.03


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_walk_bounds_and_reproducibility(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 6, 7, 0.6)
    g = build_graph(ds, 3.0)
    if g.n_edges == 0:
        return
    cfg = WalkConfig(4, 30, seed)
    a, b = rw_similarity(g, cfg), rw_similarity(g, cfg)
    assert a.values.tobytes() == b.values.tobytes()
    assert np.all((a.values >= 0) & (a.values <= 1))
    assert np.all(np.diag(a.values) == 0)
    isolated = [n for n in range(g.n_nodes) if g.degree(n) == 0]
    assert np.all(a.values[isolated] == 0)


# ---------------------------------------------------------------------------
# item similarity and the factorized sparse model


def test_compute_S_examples():
    ds = RatingDataset([0, 1, 0, 1, 2], [0, 0, 1, 1, 2], [2, 4, 2, 4, 5])
    S = compute_S(build_matrix(ds))
    assert S[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert S[0, 2] == 0.0
    assert np.all(np.diag(S) == 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_compute_S_matches_oracle(seed):
    ds = random_dataset(np.random.default_rng(seed), 4, 3, 0.7)
    m = build_matrix(ds)
    S = compute_S(m)
    assert np.array_equal(S, S.T)
    assert np.all(np.diag(S) == 1.0)
    assert np.allclose(S, all_pairs_item_cosine(m.to_dense()), atol=1e-12)


def test_slim_exact_rank1():
    x = np.array([1.0, 2.0, 0.5])
    S = np.outer(x, x)
    model = slim_fit(S, 1, 0.0, SlimConfig(max_iters=5000))
    assert np.max(np.abs(model.S_hat - S)) < 1e-3


def test_slim_huge_penalty_zeroes_factors():
    S = np.array([[1.0, 0.4], [0.4, 1.0]])
    model = slim_fit(S, 2, 1e3)
    assert np.all(model.W == 0) and np.all(model.H == 0)
    assert model.objective_history[-1] == pytest.approx(np.sum(S ** 2), abs=1e-12)
    assert model.sparsity == 1.0


@pytest.mark.parametrize("S,reg", [
    (np.array([[1.0, 0.5], [0.5, 1.0]]), 0.1),
    (np.array([[1.0, 0.3], [0.3, 1.0]]), 0.05),
    (np.array([[1.0, -0.6], [-0.6, 1.0]]), 0.2),
])
def test_slim_matches_grid_search(S, reg):
    best = slim_grid_min(S, reg)
    # a small initialization is absorbed by the first soft-threshold (the zero
    # point is stationary), so start away from it
    model = slim_fit(S, 1, reg, SlimConfig(max_iters=5000, init_std=0.5))
    obj = slim_objective(S, model.W, model.H, reg)
    assert obj == pytest.approx(model.objective_history[-1], abs=1e-12)
    assert abs(obj - best) <= 1e-3 or obj < best


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.5))
def test_slim_objective_monotone(seed, reg):
    rng = np.random.default_rng(seed)
    A = rng.random((5, 4))
    S = compute_S(build_matrix(RatingDataset(*np.nonzero(A > 0.3), A[A > 0.3] * 4 + 1)))
    h = np.array(slim_fit(S, 2, reg, SlimConfig(max_iters=200, seed=seed % 100)).objective_history)
    assert np.all(np.diff(h) <= 1e-9)


def test_slim_predict_examples():
    m = build_matrix(RatingDataset([0, 0, 1], [0, 1, 2], [4, 2, 5]))
    ident = SlimModel(np.eye(3), np.eye(3), 0.0)
    assert slim_predict(ident, m, 0, 0) == 4.0
    assert slim_predict(ident, m, 0, 1) == 2.0
    # no learned similarity to the user's items -> the user's mean
    assert slim_predict(ident, m, 0, 2) == 3.0
    with pytest.raises(ColdStart):
        slim_predict(ident, m, 5, 0)
    # hand case: S_hat[2, :] = [0.5, -0.25, 1]; user 0 rated items 0 and 1
    W = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, -0.25], [0.0, 0.0, 1.0]])
    model = SlimModel(W, np.eye(3), 0.0)
    assert model.S_hat[2].tolist() == [0.5, -0.25, 1.0]
    expect = (0.5 * 4 - 0.25 * 2) / 0.75
    assert slim_predict(model, m, 0, 2) == pytest.approx(expect, abs=1e-12)


def test_slim_predict_user_without_ratings():
    ds = RatingDataset([0, 2], [0, 1], [4, 2], user_ids=[0, 1, 2])
    with pytest.raises(ColdStart):
        slim_predict(SlimModel(np.eye(2), np.eye(2), 0.0), build_matrix(ds), 1, 0)


# ---------------------------------------------------------------------------
# linear model


def test_linear_fit_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    m = linear_fit(x[:, None], x)
    assert m.weights[0] == pytest.approx(1.0, abs=1e-12)
    assert m.w0 == pytest.approx(0.0, abs=1e-12)
    m0 = linear_fit(np.zeros((3, 0)), [1.0, 2.0, 6.0])
    assert m0.w0 == pytest.approx(3.0, abs=1e-15) and m0.weights.size == 0
    with pytest.raises(SingularSystem):
        linear_fit(np.column_stack([x, 2 * x]), x)
    linear_fit(np.column_stack([x, 2 * x]), x, reg=0.1)


def test_linear_fit_matches_inverse():
    rng = np.random.default_rng(12)
    for _ in range(10):
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        reg = float(rng.uniform(0, 2))
        A = np.column_stack([np.ones(30), X])
        P = np.diag([0.0] + [reg] * 4)
        coef = np.linalg.inv(A.T @ A + P) @ A.T @ y
        m = linear_fit(X, y, reg)
        assert np.allclose(np.r_[m.w0, m.weights], coef, atol=1e-8)


def test_linear_predict_examples():
    assert linear_predict(LinearModel(1.0, np.array([2.0]), rating_scale=(0, 10)), [3.0]) == 7.0
    assert linear_predict(LinearModel(2.5, np.zeros(3)), [1, 2, 3]) == 2.5
    # 0.5 + 0.2*3 - 0.1*4 + 1.5*2 = 3.7
    m = LinearModel(0.5, np.array([0.2, -0.1, 1.5]))
    assert linear_predict(m, [3, 4, 2]) == pytest.approx(3.7, abs=1e-12)
    assert linear_predict(m, [30, 0, 0]) == 5.0
    with pytest.raises(DimensionError):
        linear_predict(m, [1, 2])


def test_linear_recommender_features(toy):
    rec = fit_linear_recommender(toy, reg=1.0)
    assert rec.model.feature_names == ("user_mean", "item_mean", "user_count", "item_count")
    p = rec.predict_many(toy.users, toy.items)
    assert np.all((p >= 1) & (p <= 5))
