"""Expected-information-gain computation and spanning-tree batch selection."""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma, ndtr

from qboost import (
    QualityEstimate,
    gauss_hermite_rule,
    pair_eig,
    posterior_difference,
    select_batch,
)
from qboost.sampling import VARIANCE_FLOOR, BatchPair, SamplingBatch


def estimate_with(s_hat, cov, sigma_hat=None):
    s_hat = np.asarray(s_hat, dtype=float)
    n = s_hat.size
    if sigma_hat is None:
        sigma_hat = np.ones(n)
    return QualityEstimate(
        stimulus_ids=tuple(f"s{k}" for k in range(n)),
        s_hat=s_hat - s_hat.mean(),
        sigma_hat=np.asarray(sigma_hat, dtype=float),
        score_covariance=np.asarray(cov, dtype=float),
        model_tag="case3",
        log_likelihood=0.0,
        converged=True,
    )


def eig_oracle(mean, std, scale):
    """Adaptive-quadrature reference for the information gain."""

    def density(x):
        return math.exp(-0.5 * ((x - mean) / std) ** 2) / (
            std * math.sqrt(2 * math.pi)
        )

    def expect(f):
        value, err = quad(
            lambda x: f(x) * density(x),
            -np.inf,
            np.inf,
            epsabs=1e-12,
            epsrel=1e-12,
            limit=200,
        )
        return value

    def p(x):
        return min(max(ndtr(x / scale), 1e-12), 1 - 1e-12)

    e_plogp = expect(lambda x: p(x) * math.log(p(x)))
    e_qlogq = expect(lambda x: (1 - p(x)) * math.log(1 - p(x)))
    e_p = expect(p)
    e_q = 1.0 - e_p
    return e_plogp + e_qlogq - e_p * math.log(e_p) - e_q * math.log(e_q)


class TestQuadratureRule:
    def test_one_point_rule(self):
        rule = gauss_hermite_rule(1)
        np.testing.assert_allclose(rule.nodes, [0.0], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [math.sqrt(math.pi)], rtol=1e-14)

    def test_two_point_rule(self):
        # roots of H_2(x) = 4x^2 - 2 at +-1/sqrt(2), equal weights
        rule = gauss_hermite_rule(2)
        np.testing.assert_allclose(
            np.sort(rule.nodes), [-1 / math.sqrt(2), 1 / math.sqrt(2)], rtol=1e-14
        )
        np.testing.assert_allclose(
            rule.weights, [math.sqrt(math.pi) / 2] * 2, rtol=1e-14
        )

    @pytest.mark.parametrize("order", range(1, 11))
    def test_monomial_moments_exact(self, order):
        # integral of exp(-x^2) x^m is 0 for odd m, Gamma((m+1)/2) for even
        rule = gauss_hermite_rule(order)
        for m in range(2 * order):
            approx = float(rule.weights @ rule.nodes**m)
            exact = 0.0 if m % 2 else float(gamma((m + 1) / 2))
            assert approx == pytest.approx(exact, rel=1e-9, abs=1e-9)

    def test_weight_sum_and_symmetry(self):
        for order in (1, 2, 5, 21, 61, 128):
            rule = gauss_hermite_rule(order)
            assert float(rule.weights.sum()) == pytest.approx(
                math.sqrt(math.pi), abs=1e-10
            )
            np.testing.assert_allclose(
                np.sort(rule.nodes), -np.sort(rule.nodes)[::-1], atol=1e-12
            )

    @pytest.mark.parametrize("order", [0, -3, 129])
    def test_order_out_of_range(self, order):
        with pytest.raises(ValueError):
            gauss_hermite_rule(order)


class TestPosteriorDifference:
    def test_floor_applies_on_degenerate_covariance(self):
        cov = np.ones((3, 3))
        est = estimate_with([0.0, 1.0, 2.0], cov)
        mean, std = posterior_difference(est, 0, 1)
        assert std == pytest.approx(math.sqrt(VARIANCE_FLOOR))

    def test_identity_covariance(self):
        est = estimate_with([0.0, 1.0, 2.0], np.eye(3))
        _, std = posterior_difference(est, 0, 2)
        assert std == pytest.approx(math.sqrt(2.0))

    def test_antisymmetric_mean(self):
        est = estimate_with([0.3, -0.7, 0.4], np.eye(3) * 0.2)
        m_ij, _ = posterior_difference(est, 0, 1)
        m_ji, _ = posterior_difference(est, 1, 0)
        assert m_ij == pytest.approx(-m_ji)

    def test_same_index_rejected(self):
        est = estimate_with([0.0, 1.0], np.eye(2))
        with pytest.raises(ValueError):
            posterior_difference(est, 1, 1)


class TestPairEig:
    def test_degenerate_posterior_gives_zero_gain(self):
        # difference variance hits the floor; for a resolved (separated)
        # pair the expectations collapse, E[p log p] ~ E[p] log E[p].
        # The residual gain scales with the floored variance (1e-6), so
        # the bound holds once the pair is clearly separated.
        cov = np.ones((2, 2))
        est = estimate_with([0.0, 4.0], cov)
        rule = gauss_hermite_rule(21)
        assert pair_eig(est, 0, 1, rule) < 1e-8

    def test_matches_adaptive_integration(self):
        rule = gauss_hermite_rule(21)
        scale = math.sqrt(2.0)
        cov = np.diag([0.5, 0.5])  # difference std = 1
        est = estimate_with([0.0, 0.0], cov)
        value = pair_eig(est, 0, 1, rule)
        assert value == pytest.approx(eig_oracle(0.0, 1.0, scale), abs=1e-6)

    def test_symmetry_in_pair_order(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            s = rng.normal(0, 1.5, 4)
            a = rng.normal(size=(4, 4))
            cov = a @ a.T / 8 + np.eye(4) * 0.05
            sigma = rng.uniform(0.3, 2.0, 4)
            est = estimate_with(s, cov, sigma)
            rule = gauss_hermite_rule(21)
            for i, j in itertools.combinations(range(4), 2):
                assert pair_eig(est, i, j, rule) == pytest.approx(
                    pair_eig(est, j, i, rule), abs=1e-12
                )

    def test_monotone_in_mean_and_std(self):
        rule = gauss_hermite_rule(21)
        means = np.linspace(0.0, 3.0, 7)
        stds = np.linspace(0.1, 2.0, 7)
        scale = math.sqrt(2.0)
        surface = np.empty((7, 7))
        for a, mean in enumerate(means):
            for b, std in enumerate(stds):
                cov = np.array([[std**2 / 2, 0.0], [0.0, std**2 / 2]])
                est = estimate_with([mean / 2, -mean / 2], cov)
                surface[a, b] = pair_eig(est, 0, 1, rule)
        for b in range(7):
            col = surface[:, b]
            assert np.all(np.diff(col) <= 1e-12)
        for a in range(7):
            row = surface[a, :]
            assert np.all(np.diff(row) >= -1e-12)

    def test_quadrature_convergence_on_grid(self):
        # measured Gauss-Hermite truncation at the grid corner (posterior
        # std 2.0, pair scale sqrt(2)) is ~1.3e-7 for the 21-point rule,
        # well inside the 1e-6 oracle tolerance the batch selector needs
        for mean in np.linspace(0.0, 3.0, 7):
            for std in np.linspace(0.1, 2.0, 7):
                cov = np.array([[std**2 / 2, 0.0], [0.0, std**2 / 2]])
                est = estimate_with([mean / 2, -mean / 2], cov)
                u21 = pair_eig(est, 0, 1, gauss_hermite_rule(21))
                u61 = pair_eig(est, 0, 1, gauss_hermite_rule(61))
                assert abs(u21 - u61) < 5e-7


def spanning_trees(n):
    """All spanning trees of K_n via edge-subset enumeration (n <= 7)."""
    edges = list(itertools.combinations(range(n), 2))
    for subset in itertools.combinations(edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for i, j in subset:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[rj] = ri
        if ok:
            yield subset


class _FixedGainEstimate:
    """Bypass the EIG computation with explicit pair gains."""


def batch_from_gains(gains, n, n_pc, mode="mst"):
    # derive a batch through select_batch by monkeypatching the gain kernel
    import qboost.sampling as sampling

    i_idx, j_idx = np.triu_indices(n, k=1)
    table = {(int(i), int(j)): g for (i, j), g in gains.items()}
    values = np.array([table[(int(a), int(b))] for a, b in zip(i_idx, j_idx)])
    est = estimate_with(np.zeros(n), np.eye(n))
    original = sampling._eig_values
    sampling._eig_values = lambda est, ia, ja, rule: values[
        [np.flatnonzero((i_idx == a) & (j_idx == b))[0] for a, b in zip(ia, ja)]
    ]
    try:
        return select_batch(est, n_pc, gauss_hermite_rule(5), mode=mode)
    finally:
        sampling._eig_values = original


class TestSelectBatch:
    def test_three_node_example(self):
        gains = {(0, 1): 0.5, (0, 2): 0.2, (1, 2): 0.4}
        batch = batch_from_gains(gains, 3, 2)
        assert [(p.i, p.j) for p in batch.pairs] == [(0, 1), (1, 2)]

    def test_tie_break_is_lexicographic_and_reproducible(self):
        est = estimate_with(np.zeros(4), np.eye(4))
        rule = gauss_hermite_rule(21)
        a = select_batch(est, 3, rule)
        b = select_batch(est, 3, rule)
        assert a.pairs == b.pairs
        # all gains equal: Kruskal picks the lexicographically first edges
        assert [(p.i, p.j) for p in a.pairs] == [(0, 1), (0, 2), (0, 3)]

    def test_tree_weight_matches_bruteforce(self):
        rng = np.random.default_rng(14)
        for trial in range(50):
            n = int(rng.integers(3, 8))
            gains = {
                (i, j): float(rng.random())
                for i, j in itertools.combinations(range(n), 2)
            }
            batch = batch_from_gains(gains, n, n - 1)
            got = sum(p.eig for p in batch.pairs)
            best = max(
                sum(gains[e] for e in tree) for tree in spanning_trees(n)
            )
            assert got == pytest.approx(best, abs=1e-12)

    def test_tree_structure(self):
        rng = np.random.default_rng(15)
        s = rng.normal(0, 1, 6)
        est = estimate_with(s, np.eye(6) * 0.3)
        batch = select_batch(est, 5, gauss_hermite_rule(21))
        assert len(batch.pairs) == 5
        touched = {p.i for p in batch.pairs} | {p.j for p in batch.pairs}
        assert touched == set(range(6))
        parent = list(range(6))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for p in batch.pairs:
            ri, rj = find(p.i), find(p.j)
            assert ri != rj  # acyclic
            parent[rj] = ri

    def test_truncation_below_tree_size(self):
        gains = {(0, 1): 0.5, (0, 2): 0.2, (1, 2): 0.4}
        batch = batch_from_gains(gains, 3, 1)
        assert [(p.i, p.j) for p in batch.pairs] == [(0, 1)]

    def test_padding_beyond_tree_size(self):
        gains = {(0, 1): 0.5, (0, 2): 0.2, (1, 2): 0.4}
        batch = batch_from_gains(gains, 3, 3)
        assert [(p.i, p.j) for p in batch.pairs] == [(0, 1), (1, 2), (0, 2)]

    def test_global_mode_ignores_tree(self):
        gains = {(0, 1): 0.5, (0, 2): 0.45, (1, 2): 0.4}
        batch = batch_from_gains(gains, 3, 2, mode="global")
        assert [(p.i, p.j) for p in batch.pairs] == [(0, 1), (0, 2)]

    def test_batch_exceeding_universe_rejected(self):
        est = estimate_with(np.zeros(3), np.eye(3))
        with pytest.raises(ValueError, match="batch exceeds pair universe"):
            select_batch(est, 4, gauss_hermite_rule(5))

    def test_sorted_by_gain_descending(self):
        rng = np.random.default_rng(16)
        est = estimate_with(rng.normal(0, 1, 8), np.eye(8) * 0.4)
        batch = select_batch(est, 10, gauss_hermite_rule(21))
        eigs = [p.eig for p in batch.pairs]
        assert eigs == sorted(eigs, reverse=True)

    def test_json_shape(self):
        est = estimate_with(np.zeros(3), np.eye(3))
        batch = select_batch(est, 2, gauss_hermite_rule(5), iteration=4)
        payload = batch.to_json_dict()
        assert payload["iteration"] == 4
        assert {"i", "j", "eig"} == set(payload["pairs"][0])


class TestBatchValidation:
    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            SamplingBatch(
                0, ("a", "b"), (BatchPair(0, 1, 0.5), BatchPair(1, 0, 0.4))
            )

    def test_self_pair_rejected(self):
        with pytest.raises(ValueError, match="self-pair"):
            SamplingBatch(0, ("a", "b"), (BatchPair(1, 1, 0.5),))

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            SamplingBatch(
                0, ("a", "b", "c"), (BatchPair(0, 1, 0.1), BatchPair(1, 2, 0.5))
            )
