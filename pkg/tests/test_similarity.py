"""Distance measures, ranking order, tie rules, and aggregation."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from attriq import (
    AggregationMode,
    BackendDescriptor,
    DissimilarityMeasure,
    EmbeddingVector,
    RankedEntry,
    RankedList,
    TestBackend,
    aggregate_multi_query,
    cosine_distance,
    dissimilarity,
    index_from_vectors,
    l1,
    l2,
    rank,
)
from attriq.errors import (
    BackendMismatch,
    DimensionMismatch,
    EmptyQuerySet,
    KTooLarge,
    ZeroVector,
)

MEASURES = list(DissimilarityMeasure)


def make_vector(values, backend_id="test", fingerprint="test") -> EmbeddingVector:
    arr = np.asarray(values, dtype=np.float32)
    return EmbeddingVector(
        backend_id=backend_id,
        dim=len(arr),
        values=arr,
        weights_fingerprint=fingerprint,
    )


def make_index(rows, ids=None):
    rows = [np.asarray(r, dtype=np.float32) for r in rows]
    ids = ids or [f"doc{i:04d}" for i in range(len(rows))]
    descriptor = TestBackend().descriptor
    descriptor = BackendDescriptor(
        **{**descriptor.to_dict(), "embedding_dim": len(rows[0])}
    )
    return index_from_vectors(descriptor, list(zip(ids, rows)))


# --- scalar distances ----------------------------------------------------


def test_l1_hand_values():
    assert l1([1.0, 2.0, 3.0], [0.0, 4.0, 3.0]) == 3.0
    assert l1([0.0], [0.0]) == 0.0


def test_l2_hand_values():
    assert l2([3.0, 4.0], [0.0, 0.0]) == 5.0
    assert l2([1.0, 1.0], [2.0, 2.0]) == pytest.approx(math.sqrt(2.0), rel=1e-15)


def test_cosine_hand_values():
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)
    assert cosine_distance([1.0, 2.0], [2.0, 4.0]) == pytest.approx(0.0, abs=1e-15)


def test_cosine_identical_vectors_exactly_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(size=rng.integers(2, 40)).astype(np.float32)
        if not np.any(v):
            continue
        assert cosine_distance(v, v.copy()) == 0.0


def test_cosine_rejects_zero_vector():
    with pytest.raises(ZeroVector):
        cosine_distance([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ZeroVector):
        cosine_distance([1.0, 0.0], [0.0, 0.0])


def test_dimension_mismatch_rejected():
    for fn in (l1, l2, cosine_distance):
        with pytest.raises(DimensionMismatch):
            fn([1.0, 2.0], [1.0, 2.0, 3.0])


def test_empty_vectors_rejected():
    with pytest.raises(DimensionMismatch):
        l1([], [])


finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def vectors_strategy(min_dim=1, max_dim=24):
    return st.integers(min_dim, max_dim).flatmap(
        lambda d: st.tuples(
            st.lists(finite_floats, min_size=d, max_size=d),
            st.lists(finite_floats, min_size=d, max_size=d),
            st.lists(finite_floats, min_size=d, max_size=d),
        )
    )


@given(vectors_strategy())
def test_metric_axioms_l1_l2(triple):
    a, b, c = (np.asarray(v) for v in triple)
    for fn in (l1, l2):
        assert fn(a, b) >= 0.0
        assert fn(a, b) == fn(b, a)
        assert fn(a, a) == 0.0
        # triangle inequality with relative float slack
        direct = fn(a, c)
        detour = fn(a, b) + fn(b, c)
        assert direct <= detour + 1e-12 * max(1.0, abs(detour))


@given(vectors_strategy(min_dim=2))
def test_cosine_symmetry_and_range(triple):
    a, b, _ = (np.asarray(v) for v in triple)
    # effectively-zero vectors (squared norm underflows) are outside the domain
    assume(float((a * a).sum()) != 0.0 and float((b * b).sum()) != 0.0)
    d = cosine_distance(a, b)
    assert 0.0 <= d <= 2.0
    assert d == cosine_distance(b, a)


@given(
    vectors_strategy(min_dim=2),
    st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
)
def test_cosine_scale_invariance(triple, scale):
    a, b, _ = (np.asarray(v) for v in triple)
    # keep both vectors (and the scaled copy) clear of squared-norm underflow
    assume(float(np.max(np.abs(a), initial=0.0)) > 1e-150)
    assume(float(np.max(np.abs(b), initial=0.0)) > 1e-150)
    base = cosine_distance(a, b)
    scaled = cosine_distance(a * scale, b)
    assert scaled == pytest.approx(base, abs=1e-9)


def _reference_distance(a, b, measure):
    """High-precision scalar oracle built on math.fsum."""
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if measure is DissimilarityMeasure.L1:
        return math.fsum(abs(x - y) for x, y in zip(a, b))
    if measure is DissimilarityMeasure.L2:
        return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a, b)))
    aa = math.fsum(x * x for x in a)
    bb = math.fsum(y * y for y in b)
    ab = math.fsum(x * y for x, y in zip(a, b))
    return min(2.0, max(0.0, 1.0 - ab / math.sqrt(aa * bb)))


@given(vectors_strategy(), st.sampled_from(MEASURES))
def test_distances_match_fsum_reference(triple, measure):
    a, b, _ = triple
    if measure is DissimilarityMeasure.COSINE:
        assume(any(a) and any(b))
    got = dissimilarity(a, b, measure)
    want = _reference_distance(a, b, measure)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


# --- ranked list invariants ----------------------------------------------


def test_ranked_list_rejects_decreasing_distances():
    with pytest.raises(ValueError):
        RankedList(
            entries=(
                RankedEntry("a", 1.0),
                RankedEntry("b", 0.5),
            ),
            measure=DissimilarityMeasure.L2,
            query_fingerprint="x",
        )


def test_ranked_list_rejects_bad_tie_order():
    with pytest.raises(ValueError):
        RankedList(
            entries=(
                RankedEntry("b", 1.0),
                RankedEntry("a", 1.0),
            ),
            measure=DissimilarityMeasure.L2,
            query_fingerprint="x",
        )


def test_ranked_list_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        RankedList(
            entries=(
                RankedEntry("a", 1.0),
                RankedEntry("a", 2.0),
            ),
            measure=DissimilarityMeasure.L2,
            query_fingerprint="x",
        )


# --- rank ----------------------------------------------------------------


def test_rank_matches_brute_force_scalar_scan():
    rng = np.random.default_rng(21)
    rows = rng.normal(size=(30, 8)).astype(np.float32)
    index = make_index(rows)
    query = make_vector(rng.normal(size=8))
    for measure in MEASURES:
        ranked = rank(query, index, measure)
        brute = sorted(
            (
                (dissimilarity(query.values, rows[i], measure), index.doc_ids[i])
                for i in range(len(rows))
            ),
        )
        assert [doc_id for _, doc_id in brute] == ranked.doc_ids()
        for entry, (distance, _) in zip(ranked.entries, brute):
            assert entry.dissimilarity == pytest.approx(distance, rel=1e-9)


def test_rank_orders_least_to_most_dissimilar():
    index = make_index([[0.0, 1.0], [0.0, 2.0], [0.0, 4.0]], ids=["far", "mid", "near"])
    query = make_vector([0.0, 4.5])
    ranked = rank(query, index, DissimilarityMeasure.L2)
    assert ranked.doc_ids() == ["near", "mid", "far"]
    values = [e.dissimilarity for e in ranked.entries]
    assert values == sorted(values)


def test_rank_breaks_ties_by_doc_id():
    # two docs equidistant from the query on both sides
    index = make_index(
        [[1.0, 0.0], [-1.0, 0.0], [5.0, 0.0]], ids=["zeta", "alpha", "omega"]
    )
    query = make_vector([0.0, 0.0])
    ranked = rank(query, index, DissimilarityMeasure.L2)
    assert ranked.doc_ids() == ["alpha", "zeta", "omega"]


def test_rank_k_truncates():
    rng = np.random.default_rng(22)
    rows = rng.normal(size=(10, 4))
    index = make_index(rows)
    full = rank(make_vector(rows[3]), index, DissimilarityMeasure.L1)
    top3 = rank(make_vector(rows[3]), index, DissimilarityMeasure.L1, k=3)
    assert top3.entries == full.entries[:3]
    assert full.truncated(3) == top3


def test_rank_k_bounds():
    index = make_index([[1.0], [2.0]])
    query = make_vector([0.0])
    with pytest.raises(KTooLarge):
        rank(query, index, DissimilarityMeasure.L2, k=3)
    with pytest.raises(KTooLarge):
        rank(query, index, DissimilarityMeasure.L2, k=0)


def test_rank_rejects_backend_mismatch():
    index = make_index([[1.0, 2.0]])
    query = make_vector([1.0, 2.0], backend_id="other", fingerprint="other")
    with pytest.raises(BackendMismatch):
        rank(query, index, DissimilarityMeasure.L2)


def test_rank_self_distance_zero_all_measures():
    rng = np.random.default_rng(23)
    rows = rng.normal(size=(20, 6)).astype(np.float32)
    index = make_index(rows)
    query = make_vector(rows[7])
    for measure in MEASURES:
        ranked = rank(query, index, measure, k=1)
        assert ranked.entries[0].doc_id == "doc0007"
        assert ranked.entries[0].dissimilarity == 0.0


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 25),
    dim=st.integers(2, 12),
    seed=st.integers(0, 2**32 - 1),
    measure=st.sampled_from(MEASURES),
)
def test_rank_property_matches_scalar_brute_force(n, dim, seed, measure):
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, dim)).astype(np.float32)
    index = make_index(rows)
    query = make_vector(rng.normal(size=dim))
    ranked = rank(query, index, measure)
    brute = sorted(
        (dissimilarity(query.values, rows[i], measure), index.doc_ids[i])
        for i in range(n)
    )
    assert ranked.doc_ids() == [doc_id for _, doc_id in brute]


def test_cosine_l2_rank_agreement_on_unit_sphere():
    rng = np.random.default_rng(24)
    rows = rng.normal(size=(40, 10))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    index = make_index(rows)
    query_raw = rng.normal(size=10)
    query = make_vector(query_raw / np.linalg.norm(query_raw))
    by_l2 = rank(query, index, DissimilarityMeasure.L2).doc_ids()
    by_cos = rank(query, index, DissimilarityMeasure.COSINE).doc_ids()
    assert by_l2 == by_cos


# --- aggregation ---------------------------------------------------------


def test_aggregate_empty_rejected():
    index = make_index([[1.0, 2.0]])
    with pytest.raises(EmptyQuerySet):
        aggregate_multi_query([], index, DissimilarityMeasure.L2)


def test_aggregate_single_query_equals_rank_both_modes():
    rng = np.random.default_rng(25)
    rows = rng.normal(size=(15, 5))
    index = make_index(rows)
    query = make_vector(rng.normal(size=5))
    for measure in MEASURES:
        direct = rank(query, index, measure)
        for mode in AggregationMode:
            via_aggregate = aggregate_multi_query([query], index, measure, mode=mode)
            assert via_aggregate == direct


def test_aggregate_mean_matches_manual_average():
    rng = np.random.default_rng(26)
    rows = rng.normal(size=(12, 6)).astype(np.float32)
    index = make_index(rows)
    queries = [make_vector(rng.normal(size=6)) for _ in range(3)]
    ranked = aggregate_multi_query(queries, index, DissimilarityMeasure.L2)
    manual = {
        index.doc_ids[i]: np.mean(
            [l2(q.values, rows[i]) for q in queries]
        )
        for i in range(len(rows))
    }
    for entry in ranked.entries:
        assert entry.dissimilarity == pytest.approx(manual[entry.doc_id], rel=1e-12)
    values = [entry.dissimilarity for entry in ranked.entries]
    assert values == sorted(values)


def test_aggregate_min_matches_manual_minimum():
    rng = np.random.default_rng(27)
    rows = rng.normal(size=(12, 6)).astype(np.float32)
    index = make_index(rows)
    queries = [make_vector(rng.normal(size=6)) for _ in range(3)]
    ranked = aggregate_multi_query(
        queries, index, DissimilarityMeasure.L1, mode=AggregationMode.MIN
    )
    manual = {
        index.doc_ids[i]: min(l1(q.values, rows[i]) for q in queries)
        for i in range(len(rows))
    }
    for entry in ranked.entries:
        assert entry.dissimilarity == pytest.approx(manual[entry.doc_id], rel=1e-12)


def test_aggregate_mean_and_min_can_disagree():
    # amb sits on one query (min 0) but far from the cluster (mean 20/3);
    # steady sits near the two clustered queries (mean 4, min 2)
    index = make_index([[0.0, 0.0], [8.0, 0.0]], ids=["amb", "steady"])
    queries = [
        make_vector([10.0, 0.0]),
        make_vector([10.0, 0.0]),
        make_vector([0.0, 0.0]),
    ]
    by_mean = aggregate_multi_query(
        queries, index, DissimilarityMeasure.L2, mode=AggregationMode.MEAN
    )
    by_min = aggregate_multi_query(
        queries, index, DissimilarityMeasure.L2, mode=AggregationMode.MIN
    )
    assert by_mean.doc_ids() == ["steady", "amb"]
    assert by_min.doc_ids() == ["amb", "steady"]
