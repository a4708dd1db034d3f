"""Pair-comparison matrix construction, merging, thresholding and I/O."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qboost import (
    AcrRatingTable,
    DataError,
    PairComparisonMatrix,
    pcm_binarize,
    pcm_from_acr,
    pcm_merge,
    read_acr_csv,
    read_pcm_csv,
    to_pcm_csv,
)

THREE_STIM_ROWS = [
    ("o1", "a", 5.0),
    ("o1", "b", 3.0),
    ("o1", "c", 3.0),
    ("o2", "a", 4.0),
    ("o2", "b", 4.0),
    ("o2", "c", 2.0),
]

# hand enumeration over all 3 pairs x 2 observers
THREE_STIM_COUNTS = np.array(
    [
        [0.0, 1.5, 2.0],
        [0.5, 0.0, 1.5],
        [0.0, 0.5, 0.0],
    ]
)


@pytest.fixture
def three_stim_table():
    return AcrRatingTable.from_rows(THREE_STIM_ROWS)


class TestMatrixInvariants:
    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(DataError, match="diagonal"):
            PairComparisonMatrix(("a", "b"), [[1.0, 0.0], [0.0, 0.0]])

    def test_rejects_negative_counts(self):
        with pytest.raises(DataError, match="negative"):
            PairComparisonMatrix(("a", "b"), [[0.0, -1.0], [0.0, 0.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DataError):
            PairComparisonMatrix(("a", "b", "c"), np.zeros((2, 2)))

    def test_rejects_duplicate_ids(self):
        with pytest.raises(DataError, match="duplicate"):
            PairComparisonMatrix(("a", "a"), np.zeros((2, 2)))

    def test_counts_are_readonly(self):
        pcm = PairComparisonMatrix.zeros(("a", "b"))
        with pytest.raises(ValueError):
            pcm.counts[0, 1] = 1.0


class TestFromAcr:
    def test_two_observer_example(self, three_stim_table):
        pcm = pcm_from_acr(three_stim_table)
        assert pcm.stimulus_ids == ("a", "b", "c")
        np.testing.assert_array_equal(pcm.counts, THREE_STIM_COUNTS)

    def test_identical_ratings_give_half_counts(self):
        rows = [(f"o{k}", s, 3.0) for k in range(4) for s in "abc"]
        pcm = pcm_from_acr(AcrRatingTable.from_rows(rows))
        expected = np.full((3, 3), 2.0)
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_array_equal(pcm.counts, expected)

    def test_strict_order_single_observer(self):
        rows = [("o1", "a", 5.0), ("o1", "b", 4.0), ("o1", "c", 3.0)]
        pcm = pcm_from_acr(AcrRatingTable.from_rows(rows))
        np.testing.assert_array_equal(
            pcm.counts, [[0, 1, 1], [0, 0, 1], [0, 0, 0]]
        )

    def test_empty_table_rejected(self):
        with pytest.raises(DataError, match="no ratings"):
            pcm_from_acr(AcrRatingTable({}))

    def test_unknown_stimulus_rejected(self, three_stim_table):
        with pytest.raises(DataError, match="unknown stimulus"):
            pcm_from_acr(three_stim_table, stimulus_ids=("a", "b"))

    def test_missing_ratings_skip_pair(self):
        rows = [("o1", "a", 5.0), ("o1", "b", 3.0), ("o2", "b", 2.0)]
        pcm = pcm_from_acr(AcrRatingTable.from_rows(rows))
        # o2 rated only one stimulus: contributes nothing
        np.testing.assert_array_equal(pcm.counts, [[0, 1], [0, 0]])

    @given(
        n_obs=st.integers(2, 12),
        n_stim=st.integers(2, 8),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_conservation(self, n_obs, n_stim, seed):
        rng = np.random.default_rng(seed)
        rows = []
        rated = {}
        for o in range(n_obs):
            for s in range(n_stim):
                if rng.random() < 0.85:
                    rows.append((f"o{o}", f"s{s}", float(rng.integers(1, 6))))
                    rated.setdefault(f"o{o}", set()).add(f"s{s}")
        if len({s for _, s, _ in rows}) < 2:
            return
        pcm = pcm_from_acr(AcrRatingTable.from_rows(rows))
        ids = pcm.stimulus_ids
        for i in range(pcm.n):
            for j in range(i + 1, pcm.n):
                co_rated = sum(
                    1
                    for members in rated.values()
                    if ids[i] in members and ids[j] in members
                )
                assert pcm.counts[i, j] + pcm.counts[j, i] == co_rated

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        ids = [f"s{k}" for k in range(5)]
        rows = [
            (f"o{o}", s, float(rng.integers(1, 6)))
            for o in range(4)
            for s in ids
        ]
        table = AcrRatingTable.from_rows(rows)
        base = pcm_from_acr(table, ids)
        perm = list(rng.permutation(5))
        permuted_ids = [ids[k] for k in perm]
        permuted = pcm_from_acr(table, permuted_ids)
        np.testing.assert_array_equal(
            permuted.counts, base.counts[np.ix_(perm, perm)]
        )


class TestMerge:
    def test_zero_identity(self, three_stim_table):
        pcm = pcm_from_acr(three_stim_table)
        zero = PairComparisonMatrix.zeros(pcm.stimulus_ids)
        merged = pcm_merge(pcm, zero)
        np.testing.assert_array_equal(merged.counts, pcm.counts)

    def test_elementwise_addition(self):
        a = PairComparisonMatrix(("x", "y"), [[0, 1], [2, 0]])
        b = PairComparisonMatrix(("x", "y"), [[0, 3], [1, 0]])
        np.testing.assert_array_equal(pcm_merge(a, b).counts, [[0, 4], [3, 0]])

    def test_inputs_unmodified(self):
        a = PairComparisonMatrix(("x", "y"), [[0, 1], [2, 0]])
        b = PairComparisonMatrix(("x", "y"), [[0, 3], [1, 0]])
        pcm_merge(a, b)
        np.testing.assert_array_equal(a.counts, [[0, 1], [2, 0]])
        np.testing.assert_array_equal(b.counts, [[0, 3], [1, 0]])

    def test_incompatible_ids_rejected(self):
        a = PairComparisonMatrix.zeros(("x", "y"))
        b = PairComparisonMatrix.zeros(("y", "x"))
        with pytest.raises(DataError, match="incompatible"):
            pcm_merge(a, b)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_commutative_and_associative(self, seed):
        rng = np.random.default_rng(seed)

        def random_pcm():
            c = rng.uniform(0, 5, (4, 4))
            np.fill_diagonal(c, 0.0)
            return PairComparisonMatrix(("a", "b", "c", "d"), c)

        a, b, c = random_pcm(), random_pcm(), random_pcm()
        np.testing.assert_allclose(
            pcm_merge(a, b).counts, pcm_merge(b, a).counts
        )
        np.testing.assert_allclose(
            pcm_merge(pcm_merge(a, b), c).counts,
            pcm_merge(a, pcm_merge(b, c)).counts,
        )


class TestBinarize:
    def test_clear_majority(self):
        pcm = PairComparisonMatrix(("a", "b"), [[0, 9], [1, 0]])
        binary = pcm_binarize(pcm, 0.5)
        assert binary.values[0, 1] and not binary.values[1, 0]

    def test_exact_tie_maps_to_zero_and_is_flagged(self):
        pcm = PairComparisonMatrix(("a", "b"), [[0, 5], [5, 0]])
        binary = pcm_binarize(pcm, 0.5)
        assert not binary.values[0, 1] and not binary.values[1, 0]
        assert binary.ties[0, 1] and binary.ties[1, 0]

    def test_ingestion_example_binarized(self):
        pcm = PairComparisonMatrix(("a", "b", "c"), THREE_STIM_COUNTS)
        binary = pcm_binarize(pcm, 0.5)
        # normalize then threshold by hand: a>b (0.75), a>c (1.0), b>c (0.75)
        expected = np.array(
            [[False, True, True], [False, False, True], [False, False, False]]
        )
        np.testing.assert_array_equal(binary.values, expected)

    def test_zero_total_marked_missing(self):
        pcm = PairComparisonMatrix(("a", "b", "c"), [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        binary = pcm_binarize(pcm, 0.5)
        assert binary.defined[0, 1] and binary.defined[1, 0]
        assert not binary.defined[0, 2] and not binary.defined[2, 1]


class TestCsvRoundTrips:
    def test_acr_csv_parses_example(self):
        text = "observer_id,stimulus_id,rating\n" + "\n".join(
            f"{o},{s},{r}" for o, s, r in THREE_STIM_ROWS
        )
        table = read_acr_csv(io.StringIO(text))
        pcm = pcm_from_acr(table)
        np.testing.assert_array_equal(pcm.counts, THREE_STIM_COUNTS)

    def test_acr_csv_bad_header(self):
        with pytest.raises(DataError, match="line 1"):
            read_acr_csv(io.StringIO("observer,stim,score\no1,a,5\n"))

    def test_acr_csv_bad_rating_reports_line(self):
        text = "observer_id,stimulus_id,rating\no1,a,5\no1,b,abc\n"
        with pytest.raises(DataError, match="line 3"):
            read_acr_csv(io.StringIO(text))

    def test_acr_csv_duplicate_reports_line(self):
        text = "observer_id,stimulus_id,rating\no1,a,5\no1,a,4\n"
        with pytest.raises(DataError, match="line 3"):
            read_acr_csv(io.StringIO(text))

    def test_pcm_csv_round_trip_is_canonical(self):
        pcm = PairComparisonMatrix(("a", "b", "c"), THREE_STIM_COUNTS)
        text = to_pcm_csv(pcm)
        back = read_pcm_csv(io.StringIO(text))
        assert back.stimulus_ids == pcm.stimulus_ids
        np.testing.assert_array_equal(back.counts, pcm.counts)
        assert to_pcm_csv(back) == text

    def test_pcm_csv_zero_rows_omitted(self):
        pcm = PairComparisonMatrix(("a", "b"), [[0, 1.5], [0, 0]])
        text = to_pcm_csv(pcm)
        assert text == "winner_id,loser_id,count\na,b,1.5\n"

    def test_pcm_csv_duplicates_accumulate(self):
        text = "winner_id,loser_id,count\na,b,1\na,b,2\n"
        pcm = read_pcm_csv(io.StringIO(text))
        assert pcm.counts[0, 1] == 3.0

    def test_pcm_csv_self_comparison_rejected(self):
        text = "winner_id,loser_id,count\na,a,1\n"
        with pytest.raises(DataError, match="line 2"):
            read_pcm_csv(io.StringIO(text))

    def test_pcm_csv_negative_count_rejected(self):
        text = "winner_id,loser_id,count\na,b,-1\n"
        with pytest.raises(DataError, match="line 2"):
            read_pcm_csv(io.StringIO(text))


class TestRatingTable:
    def test_scale_bounds_enforced(self):
        with pytest.raises(DataError, match="scale bounds"):
            AcrRatingTable({("o1", "a"): 9.0}, scale_bounds=(1.0, 5.0))

    def test_observer_and_stimulus_sets(self, three_stim_table):
        assert three_stim_table.n_obs == 2
        assert three_stim_table.stimulus_ids == ("a", "b", "c")

    def test_duplicate_rating_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            AcrRatingTable.from_rows([("o1", "a", 5.0), ("o1", "a", 4.0)])
