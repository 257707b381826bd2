import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recengine import GlobalMeanModel, RatingDataset, build_matrix, global_mean, top_k
from recengine.core import Interaction, SparseRatingMatrix, clamp, top_k_indices
from recengine.errors import DimensionError, DuplicateInteraction, EmptyDataset, InvalidK


def test_build_matrix_single_entry():
    m = build_matrix(RatingDataset([0], [0], [5.0]))
    assert m.shape == (1, 1)
    assert m.get(0, 0) == 5.0


def test_build_matrix_two_by_two_with_one_missing():
    ds = RatingDataset([7, 7, 9], [1, 2, 1], [3.0, 4.0, 5.0])
    m = build_matrix(ds)
    assert m.shape == (2, 2)
    assert m.nnz == 3
    assert m.get(1, 1) is None
    assert m.to_dense().tolist() == [[3.0, 4.0], [5.0, 0.0]]


def test_duplicate_pair_rejected_at_construction():
    with pytest.raises(DuplicateInteraction):
        RatingDataset([1, 1], [2, 2], [3.0, 4.0])


def test_empty_dataset_errors():
    empty = RatingDataset([], [], [])
    with pytest.raises(EmptyDataset):
        build_matrix(empty)
    with pytest.raises(EmptyDataset):
        global_mean(empty)


def test_rating_outside_scale_rejected():
    with pytest.raises(ValueError):
        RatingDataset([1], [1], [6.0])
    with pytest.raises(ValueError):
        RatingDataset([1], [1], [3.0], [-1])


def test_dense_ids_contiguous_and_sorted():
    ds = RatingDataset([50, 3, 50], [9, 9, 1], [1, 2, 3])
    assert ds.user_ids.tolist() == [3, 50]
    assert ds.item_ids.tolist() == [1, 9]
    assert ds.users.tolist() == [1, 0, 1]
    assert ds.items.tolist() == [1, 1, 0]


def test_from_interactions_keeps_fields():
    ds = RatingDataset.from_interactions([Interaction(196, 242, 3.0, 881250949)])
    assert ds.interactions[0] == Interaction(196, 242, 3.0, 881250949)


def test_subset_keeps_id_maps():
    ds = RatingDataset([1, 2, 3], [1, 2, 3], [1, 2, 3])
    sub = ds.subset([2])
    assert sub.n_users == 3 and sub.n_items == 3
    assert sub.users.tolist() == [2]


def test_matrix_rejects_out_of_shape_entries():
    with pytest.raises(DimensionError):
        SparseRatingMatrix([0], [3], [1.0], 1, 3)


def test_matrix_row_and_column_access():
    m = build_matrix(RatingDataset([1, 1, 2], [5, 6, 6], [2.0, 3.0, 4.0]))
    items, vals = m.row(0)
    assert items.tolist() == [0, 1] and vals.tolist() == [2.0, 3.0]
    users, vals = m.col(1)
    assert users.tolist() == [0, 1] and vals.tolist() == [3.0, 4.0]
    assert m.transpose().shape == (2, 2)
    assert np.array_equal(m.to_scipy().toarray(), m.to_dense())


def test_global_mean_examples():
    assert global_mean(RatingDataset([1, 2], [1, 1], [2.0, 4.0])) == 3.0
    assert global_mean(RatingDataset([1], [1], [5.0])) == 5.0


def test_top_k_examples():
    assert top_k({"a": 1, "b": 3, "c": 2}, 2).item_ids() == ["b", "c"]
    assert top_k({1: 1.0, 2: 1.0}, 1).item_ids() == [1]
    assert top_k({1: 1.0, 2: 9.0}, 1, exclude={2}).item_ids() == [1]
    with pytest.raises(InvalidK):
        top_k({1: 1.0}, 0)


def test_top_k_indices_matches_top_k():
    scores = np.array([0.5, 2.0, 2.0, -1.0, 0.5])
    assert top_k_indices(scores, 3).tolist() == [1, 2, 0]
    assert top_k_indices(scores, 3, exclude=np.array([1])).tolist() == [2, 0, 4]


def test_global_mean_model_is_clamped_constant():
    ds = RatingDataset([1, 2], [1, 2], [4.0, 5.0])
    m = GlobalMeanModel.fit(ds)
    assert m.predict(0, 1) == 4.5
    assert m.predict_many([0, 1], [0, 1]).tolist() == [4.5, 4.5]
    assert m.score_items(0).shape == (2,)
    assert float(clamp(9.0, (1.0, 5.0))) == 5.0


triples = st.lists(
    st.tuples(st.integers(0, 8), st.integers(0, 8), st.integers(1, 5)), min_size=1, max_size=40,
    unique_by=lambda t: (t[0], t[1]))


@settings(max_examples=60, deadline=None)
@given(triples)
def test_matrix_flatten_is_permutation_of_input(rows):
    u, i, r = zip(*rows)
    ds = RatingDataset(u, i, r)
    m = build_matrix(ds)
    assert m.nnz == len(ds)
    back = sorted((int(ds.user_ids[a]), int(ds.item_ids[b]), v) for a, b, v in m.entries())
    assert back == sorted((a, b, float(c)) for a, b, c in rows)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(0, 30), st.floats(-5, 5, allow_nan=False), max_size=20),
       st.integers(1, 25), st.sets(st.integers(0, 40), max_size=10))
def test_top_k_length_order_and_determinism(scores, k, exclude):
    rec = top_k(scores, k, exclude)
    assert len(rec) == min(k, len(scores) - len(exclude & scores.keys()))
    assert not set(rec.item_ids()) & exclude
    pairs = list(rec.items)
    assert all((-a[1], a[0]) < (-b[1], b[0]) for a, b in zip(pairs, pairs[1:]))
    assert top_k(scores, k, exclude) == rec
