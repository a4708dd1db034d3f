"""Active selection of comparison pairs by expected information gain.

Each candidate pair (i, j) is scored by the mutual information between a
hypothetical comparison outcome and the latent score difference:

    U_ij = E[p log p] + E[q log q] - E[p] log E[p] - E[q] log E[q]

where ``p = Phi(s_ij / sqrt(sigma_i^2 + sigma_j^2))`` is the win
probability at score difference ``s_ij``, ``q = 1 - p``, and the
expectation runs over the Gaussian posterior of ``s_ij`` implied by the
current estimate (mean ``s_hat_i - s_hat_j``, variance from the score
covariance).  The substitution ``s_ij = sqrt(2) * std * x + mean`` turns
each expectation into a Gauss-Hermite quadrature sum.

Batches are formed from the spanning tree of the complete pair graph
that maximizes total gain, so every stimulus is touched by each batch;
ties are broken lexicographically to keep selection deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

from . import _kernels
from .recovery import QualityEstimate

_USE_KERNELS = _kernels.HAVE_NUMBA

VARIANCE_FLOOR = 1e-6
_PROB_CLIP = 1e-12
_SQRT_PI = math.sqrt(math.pi)
DEFAULT_QUADRATURE_ORDER = 21


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights of a Gauss-Hermite rule (weight ``exp(-x^2)``)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def order(self) -> int:
        return self.nodes.size


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Gauss-Hermite nodes and weights; exact for polynomials < 2*order."""
    if not 1 <= order <= 128:
        raise ValueError("quadrature order must be in [1, 128]")
    nodes, weights = hermgauss(order)
    return QuadratureRule(nodes, weights)


class BatchPair(NamedTuple):
    i: int
    j: int
    eig: float


@dataclass(frozen=True)
class SamplingBatch:
    """Pairs picked for one comparison round, sorted by gain descending."""

    iteration: int
    stimulus_ids: tuple[str, ...]
    pairs: tuple[BatchPair, ...]

    def __post_init__(self):
        seen = set()
        for p in self.pairs:
            if p.i == p.j:
                raise ValueError("self-pair in batch")
            key = (min(p.i, p.j), max(p.i, p.j))
            if key in seen:
                raise ValueError("duplicate pair in batch")
            seen.add(key)
        eigs = [p.eig for p in self.pairs]
        if any(a < b for a, b in zip(eigs, eigs[1:])):
            raise ValueError("batch pairs must be sorted by gain descending")

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "pairs": [
                {
                    "i": self.stimulus_ids[p.i],
                    "j": self.stimulus_ids[p.j],
                    "eig": float(p.eig),
                }
                for p in self.pairs
            ],
        }


def posterior_difference(
    est: QualityEstimate, i: int, j: int
) -> tuple[float, float]:
    """Posterior mean and std of the score difference ``s_i - s_j``.

    The variance ``cov_ii + cov_jj - 2 cov_ij`` is floored at 1e-6 to keep
    the downstream quadrature well-defined for fully resolved pairs.
    """
    if i == j:
        raise ValueError("pair members must differ")
    cov = est.score_covariance
    mean = float(est.s_hat[i] - est.s_hat[j])
    var = float(cov[i, i] + cov[j, j] - 2.0 * cov[i, j])
    return mean, math.sqrt(max(var, VARIANCE_FLOOR))


def _eig_values(
    est: QualityEstimate,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    rule: QuadratureRule,
) -> np.ndarray:
    """Vectorized gain for index pairs (arrays of equal length)."""
    s = est.s_hat
    sig2 = est.sigma_hat**2
    cov = est.score_covariance
    mean = s[i_idx] - s[j_idx]
    var = np.maximum(
        np.diagonal(cov)[i_idx] + np.diagonal(cov)[j_idx] - 2.0 * cov[i_idx, j_idx],
        VARIANCE_FLOOR,
    )
    std = np.sqrt(var)
    scale = np.sqrt(sig2[i_idx] + sig2[j_idx])
    if _USE_KERNELS:
        return _kernels.eig_values(
            mean, std, scale, rule.nodes, rule.weights / _SQRT_PI, _PROB_CLIP
        )
    # quadrature nodes mapped onto the posterior of the score difference
    points = mean[None, :] + math.sqrt(2.0) * std[None, :] * rule.nodes[:, None]
    p = ndtr(points / scale[None, :])
    np.clip(p, _PROB_CLIP, 1.0 - _PROB_CLIP, out=p)
    q = 1.0 - p
    w = rule.weights / _SQRT_PI
    e_p = w @ p
    e_q = w @ q
    e_plogp = w @ (p * np.log(p))
    e_qlogq = w @ (q * np.log(q))
    u = e_plogp + e_qlogq - e_p * np.log(e_p) - e_q * np.log(e_q)
    return np.maximum(u, 0.0)


def pair_eig(
    est: QualityEstimate, i: int, j: int, rule: QuadratureRule
) -> float:
    """Expected information gain of comparing stimuli ``i`` and ``j``."""
    if i == j:
        raise ValueError("pair members must differ")
    value = _eig_values(est, np.array([i]), np.array([j]), rule)
    return float(value[0])


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def select_batch(
    est: QualityEstimate,
    n_pc: int,
    rule: QuadratureRule,
    iteration: int = 0,
    mode: str = "mst",
) -> SamplingBatch:
    """Pick the next comparison batch from the current estimate.

    ``mode="mst"`` (default) selects the spanning tree of the complete
    pair graph with maximum total gain (Kruskal on descending gain, ties
    broken by (min id, max id)), truncated to the top ``n_pc`` edges or
    padded with the best non-tree pairs when ``n_pc`` exceeds ``n - 1``.
    ``mode="global"`` ignores the tree constraint and takes the top
    ``n_pc`` pairs outright.
    """
    n = est.n
    if n < 2:
        raise ValueError("need at least two stimuli")
    if n_pc < 1:
        raise ValueError("batch size must be positive")
    universe = n * (n - 1) // 2
    if n_pc > universe:
        raise ValueError("batch exceeds pair universe")
    if mode not in ("mst", "global"):
        raise ValueError(f"unknown selection mode {mode!r}")
    i_idx, j_idx = np.triu_indices(n, k=1)
    gains = _eig_values(est, i_idx, j_idx, rule)
    order = np.lexsort((j_idx, i_idx, -gains))

    def pair_at(k: int) -> BatchPair:
        return BatchPair(int(i_idx[k]), int(j_idx[k]), float(gains[k]))

    chosen: list[BatchPair] = []
    if mode == "global":
        chosen = [pair_at(k) for k in order[:n_pc]]
    else:
        uf = _UnionFind(n)
        i_list = i_idx.tolist()
        j_list = j_idx.tolist()
        tree: list[int] = []
        rest: list[int] = []
        need_rest = max(0, n_pc - (n - 1))
        for k in order.tolist():
            if len(tree) < n - 1 and uf.union(i_list[k], j_list[k]):
                tree.append(k)
            else:
                rest.append(k)
            if len(tree) == n - 1 and len(rest) >= need_rest:
                break
        chosen = [pair_at(k) for k in tree[:n_pc]]
        if n_pc > len(tree):
            # pad with the highest-gain pairs outside the tree
            chosen.extend(pair_at(k) for k in rest[: n_pc - len(tree)])
            chosen.sort(key=lambda p: (-p.eig, p.i, p.j))
    return SamplingBatch(iteration, est.stimulus_ids, tuple(chosen))
