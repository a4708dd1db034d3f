"""Maximum-likelihood recovery of latent quality scales from a PCM.

Three preference models are supported:

* ``case3`` -- Thurstone Case III: every stimulus carries a latent score
  ``s_i`` and a discriminal dispersion ``sigma_i``; the probability of
  preferring i over j is ``Phi((s_i - s_j) / sqrt(sigma_i^2 + sigma_j^2))``.
  Both the scores and the dispersions are fitted.
* ``case5`` -- Thurstone Case V: dispersions fixed at ``1/sqrt(2)`` so the
  win probability reduces to ``Phi(s_i - s_j)``.
* ``bt`` -- Bradley-Terry: logistic win probability
  ``1 / (1 + exp(-(s_i - s_j)))``.

The likelihood is invariant under translating all scores and (for case3)
jointly rescaling scores and dispersions, so fitted estimates are
normalized to ``mean(s_hat) = 0`` and, for case3, ``mean(sigma_hat^2) = 1``.
A symmetric pseudocount regularizes one-sided pairs; optimization is
damped Newton ascent on the exact analytic gradient and Hessian (the
gauge directions pinned by constraint rows), with backtracking line
search and deterministic seeded restarts.  Confidence information is
derived from the score-block Hessian at the optimum via the
ones-augmented inversion ``C = [[-H, 1], [1', 0]]^-1`` whose leading
n x n block estimates the covariance of the fitted scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from functools import lru_cache

import numpy as np
from scipy.special import expit, log_ndtr, ndtr, ndtri

from . import _kernels
from .errors import DataError, NumericalError
from .pcm import PairComparisonMatrix

_USE_KERNELS = _kernels.HAVE_NUMBA

MODEL_TAGS = ("case3", "case5", "bt")

CASE5_SIGMA = 1.0 / math.sqrt(2.0)
# Probit/logit matching constant: Phi(x / 1.702) tracks the standard
# logistic within ~0.01, so Bradley-Terry estimates report dispersions
# that make the probit-based information gain consistent with the
# logistic win probabilities.
BT_SIGMA = 1.702 / math.sqrt(2.0)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# overflow guard for the standardized difference.  Inside the optimizer
# box (scores within +-100, dispersions within [1e-2, 1e2]) |d| stays
# below ~2e4, so the cap never distorts a fit; it only protects direct
# evaluations at caller-supplied extreme parameters where log Phi and
# the Mills ratio would lose to float cancellation.
_D_CLAMP = 1e6
_RATE_CLAMP = (0.01, 0.99)
_RESTART_SCALE = 0.3
# box constraints that keep the optimizer out of degenerate territory.
# Scores beyond +-100 or dispersion ratios beyond 1e4 change the capped
# win probabilities by less than float resolution, so the constrained
# optimum matches the unconstrained one, while the bounds prevent the
# numerically flat sigma -> 0 and sigma -> inf valleys from trapping the
# ascent (the log-sigma gradient vanishes there).
_SCORE_BOUND = 100.0
_LOG_SIGMA_BOUND = math.log(100.0)


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the maximum-likelihood fit.

    ``pseudocount`` is added to every off-diagonal count before fitting;
    ``restarts`` is the total number of optimization runs (the first from
    the deterministic initialization, the rest from seeded perturbations).
    ``dispersion_ridge`` adds the case III penalty
    ``-ridge * sum(log(sigma_i)^2)``, a weak log-normal shrinkage of the
    dispersions toward one.  The pairwise pseudocount alone cannot keep
    the dispersions identified on sparse designs (its tie penalty
    saturates once a partner's dispersion dominates the pair variance,
    so sigma -> 0 stays profitable); the ridge removes that degeneracy
    while being negligible against well-populated counts.
    """

    pseudocount: float = 0.5
    gradient_tolerance: float = 1e-8
    max_iterations: int = 2000
    restarts: int = 3
    seed: int = 0
    dispersion_ridge: float = 1.0

    def __post_init__(self):
        if self.pseudocount < 0:
            raise ValueError("pseudocount must be non-negative")
        if self.dispersion_ridge < 0:
            raise ValueError("dispersion_ridge must be non-negative")
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.restarts <= 0:
            raise ValueError("restarts must be positive")


@dataclass(frozen=True, eq=False)
class QualityEstimate:
    """Fitted scores, dispersions and score covariance for one model."""

    stimulus_ids: tuple[str, ...]
    s_hat: np.ndarray
    sigma_hat: np.ndarray
    score_covariance: np.ndarray
    model_tag: str
    log_likelihood: float
    converged: bool
    sigma_covariance: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.stimulus_ids)
        s = np.asarray(self.s_hat, dtype=float)
        sigma = np.asarray(self.sigma_hat, dtype=float)
        cov = np.asarray(self.score_covariance, dtype=float)
        if s.shape != (n,) or sigma.shape != (n,):
            raise ValueError("estimate arrays do not match stimulus count")
        if cov.shape != (n, n):
            raise ValueError("covariance shape mismatch")
        if np.any(sigma <= 0):
            raise ValueError("invalid dispersion")
        if self.model_tag not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model_tag!r}")
        for name, arr in (("s_hat", s), ("sigma_hat", sigma), ("covariance", cov)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}")
        s.setflags(write=False)
        sigma.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        object.__setattr__(self, "s_hat", s)
        object.__setattr__(self, "sigma_hat", sigma)
        object.__setattr__(self, "score_covariance", cov)

    @property
    def n(self) -> int:
        return len(self.stimulus_ids)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_tag,
            "stimulus_ids": list(self.stimulus_ids),
            "s_hat": [float(v) for v in self.s_hat],
            "sigma_hat": [float(v) for v in self.sigma_hat],
            "covariance": [float(v) for v in self.score_covariance.ravel()],
            "log_likelihood": float(self.log_likelihood),
            "converged": bool(self.converged),
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, payload: dict) -> "QualityEstimate":
        try:
            ids = tuple(str(s) for s in payload["stimulus_ids"])
            n = len(ids)
            cov = np.array(payload["covariance"], dtype=float).reshape(n, n)
            return cls(
                stimulus_ids=ids,
                s_hat=np.array(payload["s_hat"], dtype=float),
                sigma_hat=np.array(payload["sigma_hat"], dtype=float),
                score_covariance=cov,
                model_tag=str(payload["model"]),
                log_likelihood=float(payload["log_likelihood"]),
                converged=bool(payload["converged"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad estimate payload: {exc}") from exc


def win_probability(
    s_i: float, s_j: float, sigma_i: float, sigma_j: float
) -> float:
    """Probability of preferring i over j under Thurstone Case III.

    The value is clamped to the representable open interval so extreme
    score differences never flatten to exactly 0 or 1.
    """
    if sigma_i <= 0 or sigma_j <= 0:
        raise ValueError("invalid dispersion")
    p = float(ndtr((s_i - s_j) / math.hypot(sigma_i, sigma_j)))
    return min(max(p, 1e-300), 1.0 - 1e-16)


@lru_cache(maxsize=128)
def _pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def _check_inputs(
    s: np.ndarray, sigma: np.ndarray | None, pcm: PairComparisonMatrix
) -> None:
    if s.shape != (pcm.n,):
        raise ValueError("score vector length does not match matrix")
    if sigma is not None:
        if sigma.shape != (pcm.n,):
            raise ValueError("dispersion vector length does not match matrix")
        if np.any(sigma <= 0):
            raise ValueError("invalid dispersion")


def _mills_pair(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi(d)/Phi(d) and phi(d)/Phi(-d), computed in log space."""
    log_pdf = -0.5 * d * d - _LOG_SQRT_2PI
    return np.exp(log_pdf - log_ndtr(d)), np.exp(log_pdf - log_ndtr(-d))


def _log_likelihood_m(s: np.ndarray, sigma: np.ndarray, m: np.ndarray) -> float:
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    c = np.sqrt(sigma[iu] ** 2 + sigma[ju] ** 2)
    d = np.clip((s[iu] - s[ju]) / c, -_D_CLAMP, _D_CLAMP)
    return float(m[iu, ju] @ log_ndtr(d) + m[ju, iu] @ log_ndtr(-d))


def log_likelihood(
    s: Sequence[float], sigma: Sequence[float], pcm: PairComparisonMatrix
) -> float:
    """Case III log-likelihood `sum m_ij log pi_ij + m_ji log(1 - pi_ij)`."""
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_inputs(s, sigma, pcm)
    return _log_likelihood_m(s, sigma, pcm.counts)


def _gradient_m(
    s: np.ndarray, sigma: np.ndarray, m: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]
    c2 = sigma[iu] ** 2 + sigma[ju] ** 2
    c = np.sqrt(c2)
    d = np.clip((s[iu] - s[ju]) / c, -_D_CLAMP, _D_CLAMP)
    r_pos, r_neg = _mills_pair(d)
    # d(loglik)/d(d) for each pair
    g_d = mij * r_pos - mji * r_neg
    gs_pair = g_d / c
    grad_s = np.bincount(iu, weights=gs_pair, minlength=n) - np.bincount(
        ju, weights=gs_pair, minlength=n
    )
    # d(d)/d(sigma_k) = -d * sigma_k / c^2 for k in {i, j}
    coef = -(g_d * d) / c2
    grad_sigma = sigma * (
        np.bincount(iu, weights=coef, minlength=n)
        + np.bincount(ju, weights=coef, minlength=n)
    )
    return grad_s, grad_sigma


def log_likelihood_gradient(
    s: Sequence[float], sigma: Sequence[float], pcm: PairComparisonMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`log_likelihood` w.r.t. scores and sigmas."""
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_inputs(s, sigma, pcm)
    return _gradient_m(s, sigma, pcm.counts)


def _hessian_scores_m(
    s: np.ndarray, sigma: np.ndarray, m: np.ndarray
) -> np.ndarray:
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]
    c2 = sigma[iu] ** 2 + sigma[ju] ** 2
    d = np.clip((s[iu] - s[ju]) / np.sqrt(c2), -_D_CLAMP, _D_CLAMP)
    r_pos, r_neg = _mills_pair(d)
    # second derivative of the pair term w.r.t. d (always negative)
    a = mij * (-r_pos * (d + r_pos)) + mji * (-r_neg * (-d + r_neg))
    h_pair = a / c2
    hess = np.zeros((n, n))
    hess[iu, ju] = -h_pair
    hess[ju, iu] = -h_pair
    diag = np.bincount(iu, weights=h_pair, minlength=n) + np.bincount(
        ju, weights=h_pair, minlength=n
    )
    hess[np.diag_indices(n)] = diag
    return hess


def hessian_scores(
    s: Sequence[float], sigma: Sequence[float], pcm: PairComparisonMatrix
) -> np.ndarray:
    """Second derivatives of the case III log-likelihood w.r.t. scores."""
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_inputs(s, sigma, pcm)
    return _hessian_scores_m(s, sigma, pcm.counts)


def _hessian_dispersions_m(
    s: np.ndarray, sigma: np.ndarray, m: np.ndarray
) -> np.ndarray:
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]
    si, sj = sigma[iu], sigma[ju]
    c2 = si**2 + sj**2
    d = np.clip((s[iu] - s[ju]) / np.sqrt(c2), -_D_CLAMP, _D_CLAMP)
    r_pos, r_neg = _mills_pair(d)
    b = mij * r_pos - mji * r_neg  # d(loglik)/d(d)
    a = mij * (-r_pos * (d + r_pos)) + mji * (-r_neg * (-d + r_neg))
    # dd/dsigma_k = -d sigma_k / c^2
    di = -d * si / c2
    dj = -d * sj / c2
    off = a * di * dj + b * (3.0 * d * si * sj / c2**2)
    diag_i = a * di * di + b * (3.0 * d * si * si / c2**2 - d / c2)
    diag_j = a * dj * dj + b * (3.0 * d * sj * sj / c2**2 - d / c2)
    hess = np.zeros((n, n))
    hess[iu, ju] = off
    hess[ju, iu] = off
    hess[np.diag_indices(n)] = np.bincount(
        iu, weights=diag_i, minlength=n
    ) + np.bincount(ju, weights=diag_j, minlength=n)
    return hess


def hessian_dispersions(
    s: Sequence[float], sigma: Sequence[float], pcm: PairComparisonMatrix
) -> np.ndarray:
    """Second derivatives of the case III log-likelihood w.r.t. sigmas."""
    s = np.asarray(s, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_inputs(s, sigma, pcm)
    return _hessian_dispersions_m(s, sigma, pcm.counts)


def _hessian_cross(
    s: np.ndarray, sigma: np.ndarray, m: np.ndarray
) -> np.ndarray:
    """Mixed second derivatives d^2 logL / (d s_row d sigma_col)."""
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]
    si, sj = sigma[iu], sigma[ju]
    c2 = si**2 + sj**2
    c = np.sqrt(c2)
    d = np.clip((s[iu] - s[ju]) / c, -_D_CLAMP, _D_CLAMP)
    r_pos, r_neg = _mills_pair(d)
    g = mij * r_pos - mji * r_neg
    a = mij * (-r_pos * (d + r_pos)) + mji * (-r_neg * (-d + r_neg))
    u = (a * d + g) / (c2 * c)
    cross = np.zeros((n, n))
    # each unordered pair owns a unique off-diagonal cell in both orders
    cross[iu, ju] = -sj * u
    cross[ju, iu] = si * u
    diag = np.bincount(iu, weights=-si * u, minlength=n) + np.bincount(
        ju, weights=sj * u, minlength=n
    )
    cross[np.diag_indices(n)] += diag
    return cross


def covariance_of_estimates(hessian: np.ndarray) -> np.ndarray:
    """Covariance of constrained estimates from a log-likelihood Hessian.

    Inverts the ones-augmented matrix ``[[-H, 1], [1', 0]]`` (the
    augmentation absorbs the translation invariance of the scores) and
    returns its leading n x n block, symmetrized.
    """
    hessian = np.asarray(hessian, dtype=float)
    n = hessian.shape[0]
    if hessian.shape != (n, n):
        raise ValueError("hessian must be square")
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = -hessian
    aug[:n, n] = 1.0
    aug[n, :n] = 1.0
    try:
        inv = np.linalg.inv(aug)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular information matrix") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericalError("singular information matrix")
    block = inv[:n, :n]
    return (block + block.T) / 2.0


def _connected_components(active: np.ndarray, ids: tuple[str, ...]) -> list[list[str]]:
    n = active.shape[0]
    seen = np.zeros(n, dtype=bool)
    components: list[list[str]] = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            u = stack.pop()
            members.append(ids[u])
            for v in np.flatnonzero(active[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        components.append(members)
    return components


def _check_connected(m: np.ndarray, ids: tuple[str, ...]) -> None:
    active = (m + m.T) > 0
    np.fill_diagonal(active, False)
    components = _connected_components(active, ids)
    if len(components) > 1:
        parts = "; ".join("{" + ", ".join(c) + "}" for c in components)
        raise DataError(f"disconnected design: components {parts}")


@dataclass
class _AscentResult:
    x: np.ndarray
    log_likelihood: float
    grad_norm: float
    iterations: int
    ll_trace: list[float]


def _newton_direction(
    x: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    constraint_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    frozen: np.ndarray,
    ridge_start: float = 0.0,
) -> tuple[np.ndarray, float] | None:
    """Ascent direction from the ones-augmented (KKT) Newton system.

    Gauge directions (score translation, joint score/dispersion scaling)
    leave the likelihood flat, so the bare Newton system is singular;
    the constraint-gradient rows pin them, exactly like the covariance
    construction.  Constraint residuals are not chased here (estimates
    are renormalized after the fit), which keeps every returned step an
    ascent direction.  Coordinates frozen at their box bound are
    eliminated, and a Levenberg-style ridge is raised until the system
    yields a finite ascent direction.
    """
    dim = x.size
    _, jac = constraint_fn(x)
    k = jac.shape[0]
    g = np.where(frozen, 0.0, grad)
    base = np.zeros((dim + k, dim + k))
    base[:dim, :dim] = -hess
    base[:dim, dim:] = jac.T
    base[dim:, :dim] = jac
    idx = np.flatnonzero(frozen)
    base[idx, :] = 0.0
    base[:, idx] = 0.0
    base[idx, idx] = 1.0
    rhs = np.concatenate([g, np.zeros(k)])
    scale = 1.0 + float(np.max(np.abs(np.diagonal(hess))))
    ridge = ridge_start
    for _ in range(12):
        kkt = base.copy()
        free = np.flatnonzero(~frozen)
        kkt[free, free] += ridge
        try:
            delta = np.linalg.solve(kkt, rhs)[:dim]
        except np.linalg.LinAlgError:
            delta = None
        if delta is not None and np.all(np.isfinite(delta)):
            delta[idx] = 0.0
            if float(np.max(np.abs(g))) == 0.0:
                return delta, ridge
            if float(g @ delta) > 0.0:
                return delta, ridge
        ridge = scale * 1e-6 if ridge == 0.0 else ridge * 100.0
    return None


def _ascend(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    hess_fn: Callable[[np.ndarray], np.ndarray],
    constraint_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    gauge_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: FitOptions,
    lower: np.ndarray,
    upper: np.ndarray,
    track_trace: bool = False,
) -> _AscentResult:
    """Maximize the likelihood by damped Newton ascent within box bounds.

    Every iterate is projected back onto the identifiability slice by
    ``gauge_fn`` (a likelihood-invariant transformation), which stops the
    flat gauge directions from drifting the parameters into the box
    bounds.  Phase one takes Newton-KKT steps with a backtracking
    (Armijo) line search, so the objective is non-decreasing across
    accepted iterates.  Once objective improvements fall below float
    resolution the line search stalls; phase two keeps taking damped
    Newton steps accepted on gradient-norm decrease alone, which
    polishes the gradient to the requested tolerance regardless of the
    objective's float resolution.
    """
    eps_bound = 1e-12
    x = np.clip(gauge_fn(np.clip(x0, lower, upper)), lower, upper)
    value, grad = objective(x)
    trace: list[float] = [value] if track_trace else []
    tol = options.gradient_tolerance
    iterations = 0

    def frozen_mask(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return ((x <= lower + eps_bound) & (grad < 0)) | (
            (x >= upper - eps_bound) & (grad > 0)
        )

    def projected_norm(x: np.ndarray, grad: np.ndarray) -> float:
        return float(np.max(np.abs(np.where(frozen_mask(x, grad), 0.0, grad))))

    # phase one: objective-monotone Newton steps with an adaptive
    # Levenberg ridge (damped steps raise it, clean unit steps drop it)
    lm_ridge = 0.0
    while iterations < options.max_iterations:
        if projected_norm(x, grad) <= tol:
            break
        frozen = frozen_mask(x, grad)
        direction = _newton_direction(
            x, grad, hess_fn(x), constraint_fn, frozen, ridge_start=lm_ridge
        )
        if direction is None:
            break
        delta, used_ridge = direction
        if float(np.max(np.abs(delta))) <= 1e-14 * (1.0 + float(np.max(np.abs(x)))):
            break
        ascent = float(np.where(frozen, 0.0, grad) @ delta)
        alpha = 1.0
        accepted = False
        for _ in range(40):
            candidate = np.clip(
                gauge_fn(np.clip(x + alpha * delta, lower, upper)), lower, upper
            )
            cand_value, cand_grad = objective(candidate)
            if np.isfinite(cand_value) and cand_value >= value + 1e-4 * alpha * ascent:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        scale = 1.0 + abs(float(value))
        if alpha >= 1.0:
            lm_ridge = 0.0 if used_ridge < 1e-9 * scale else used_ridge * 0.25
        elif alpha >= 0.5:
            lm_ridge = used_ridge
        else:
            lm_ridge = max(used_ridge * 4.0, 1e-8 * scale)
        x, value, grad = candidate, cand_value, cand_grad
        iterations += 1
        if track_trace:
            trace.append(value)

    # phase two: gradient-norm polish (float resolution of the objective
    # no longer limits progress)
    gn = projected_norm(x, grad)
    polish = 0
    while gn > tol and polish < 12:
        frozen = frozen_mask(x, grad)
        direction = _newton_direction(x, grad, hess_fn(x), constraint_fn, frozen)
        if direction is None:
            break
        step = direction[0]
        improved = False
        for _ in range(4):
            candidate = np.clip(
                gauge_fn(np.clip(x + step, lower, upper)), lower, upper
            )
            cand_value, cand_grad = objective(candidate)
            cand_gn = projected_norm(candidate, cand_grad)
            if np.isfinite(cand_gn) and cand_gn < gn:
                x, value, grad, gn = candidate, cand_value, cand_grad, cand_gn
                improved = True
                break
            step = step / 2.0
        polish += 1
        if not improved:
            break

    return _AscentResult(
        x=x,
        log_likelihood=float(value),
        grad_norm=float(np.max(np.abs(grad))),
        iterations=iterations,
        ll_trace=trace,
    )


def _mean_zero_gauge(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def _case3_gauge(n: int, ridge: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    def gauge(x: np.ndarray) -> np.ndarray:
        s = x[:n]
        t = x[n:]
        if ridge > 0.0:
            # scale gauge is pinned by the ridge; only recenter scores
            return np.concatenate([s - s.mean(), t])
        log_scale = 0.5 * math.log(float(np.mean(np.exp(2.0 * t))))
        return np.concatenate(
            [(s - s.mean()) * math.exp(-log_scale), t - log_scale]
        )

    return gauge


def _mean_zero_constraint(n: int) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    jac = np.ones((1, n)) / n

    def constraint(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.array([x.mean()]), jac

    return constraint


def _case3_constraint(
    n: int, ridge: float = 0.0
) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Gauge-pinning rows: score translation, plus joint scale when the
    dispersion ridge is off (the ridge itself pins the scale)."""

    def constraint(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if ridge > 0.0:
            values = np.array([x[:n].mean()])
            jac = np.zeros((1, 2 * n))
            jac[0, :n] = 1.0 / n
            return values, jac
        sig2 = np.exp(2.0 * x[n:])
        values = np.array([x[:n].mean(), sig2.mean() - 1.0])
        jac = np.zeros((2, 2 * n))
        jac[0, :n] = 1.0 / n
        jac[1, n:] = 2.0 * sig2 / n
        return values, jac

    return constraint


def _case3_hessian_t(
    x: np.ndarray, m: np.ndarray, n: int, ridge: float = 0.0
) -> np.ndarray:
    """Full Hessian of the case III log-likelihood in (s, log sigma)."""
    if _USE_KERNELS:
        iu, ju = _pair_arrays(n)
        return _kernels.case3_hessian(
            x[:n], x[n:], iu, ju, m[iu, ju], m[ju, iu], ridge, _D_CLAMP
        )
    return _case3_hessian_t_ref(x, m, n, ridge)


def _case3_hessian_t_ref(
    x: np.ndarray, m: np.ndarray, n: int, ridge: float = 0.0
) -> np.ndarray:
    """Vectorized numpy reference for :func:`_case3_hessian_t`.

    Single-pass kernel: the standardized differences and Mills ratios are
    computed once and shared by the score block, the dispersion block and
    the cross block (with the log-sigma chain-rule terms folded in).
    """
    s = x[:n]
    sigma = np.exp(x[n:])
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]
    si, sj = sigma[iu], sigma[ju]
    c2 = si**2 + sj**2
    c = np.sqrt(c2)
    d = np.clip((s[iu] - s[ju]) / c, -_D_CLAMP, _D_CLAMP)
    r_pos, r_neg = _mills_pair(d)
    g = mij * r_pos - mji * r_neg
    a = mij * (-r_pos * (d + r_pos)) + mji * (-r_neg * (-d + r_neg))

    hess = np.zeros((2 * n, 2 * n))
    diag_idx = np.arange(n)

    # score block
    h_pair = a / c2
    hess[iu, ju] = -h_pair
    hess[ju, iu] = -h_pair
    hess[diag_idx, diag_idx] = np.bincount(
        iu, weights=h_pair, minlength=n
    ) + np.bincount(ju, weights=h_pair, minlength=n)

    # dispersion block in sigma, then mapped to t = log sigma
    di = -d * si / c2
    dj = -d * sj / c2
    off = a * di * dj + g * (3.0 * d * si * sj / c2**2)
    qii = a * di * di + g * (3.0 * d * si * si / c2**2 - d / c2)
    qjj = a * dj * dj + g * (3.0 * d * sj * sj / c2**2 - d / c2)
    hess[n + iu, n + ju] = off * si * sj
    hess[n + ju, n + iu] = off * si * sj
    grad_sigma_i = g * di
    grad_sigma_j = g * dj
    tt_diag = (
        np.bincount(iu, weights=qii * si * si + grad_sigma_i * si, minlength=n)
        + np.bincount(ju, weights=qjj * sj * sj + grad_sigma_j * sj, minlength=n)
    )
    hess[n + diag_idx, n + diag_idx] = tt_diag

    # cross block d^2 / (ds dt)
    u = (a * d + g) / (c2 * c)
    hess[iu, n + ju] = -sj * sj * u
    hess[ju, n + iu] = si * si * u
    cross_diag = np.bincount(
        iu, weights=-si * si * u, minlength=n
    ) + np.bincount(ju, weights=sj * sj * u, minlength=n)
    hess[diag_idx, n + diag_idx] = cross_diag
    hess[n:, :n] = hess[:n, n:].T
    if ridge > 0.0:
        hess[n + diag_idx, n + diag_idx] -= 2.0 * ridge
    return hess


def _regularized_counts(pcm: PairComparisonMatrix, pseudocount: float) -> np.ndarray:
    m = pcm.counts.copy()
    if pseudocount > 0:
        m += pseudocount
        np.fill_diagonal(m, 0.0)
    return m


def _win_rate_scores(m: np.ndarray) -> np.ndarray:
    wins = m.sum(axis=1)
    totals = wins + m.sum(axis=0)
    rate = np.divide(wins, totals, out=np.full_like(wins, 0.5), where=totals > 0)
    rate = np.clip(rate, *_RATE_CLAMP)
    return ndtri(rate)


def _restart_inits(
    x0: np.ndarray, options: FitOptions
) -> list[np.ndarray]:
    inits = [x0]
    for r in range(1, options.restarts):
        rng = np.random.default_rng([options.seed, r])
        inits.append(x0 + _RESTART_SCALE * rng.standard_normal(x0.shape))
    return inits


def _best_ascent(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    hess_fn: Callable[[np.ndarray], np.ndarray],
    constraint_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    gauge_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: FitOptions,
    lower: np.ndarray,
    upper: np.ndarray,
) -> _AscentResult:
    best: _AscentResult | None = None
    for init in _restart_inits(x0, options):
        result = _ascend(
            objective, hess_fn, constraint_fn, gauge_fn, init, options, lower, upper
        )
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    assert best is not None
    return best


def _case3_objective(
    m: np.ndarray, n: int, ridge: float = 0.0
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]

    if _USE_KERNELS:
        def kernel_objective(x: np.ndarray) -> tuple[float, np.ndarray]:
            value, grad = _kernels.case3_value_grad(
                x[:n], x[n:], iu, ju, mij, mji, ridge, _D_CLAMP
            )
            return float(value), grad

        return kernel_objective

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        s = x[:n]
        t = x[n:]
        sig2 = np.exp(2.0 * t)
        c2 = sig2[iu] + sig2[ju]
        c = np.sqrt(c2)
        d = np.clip((s[iu] - s[ju]) / c, -_D_CLAMP, _D_CLAMP)
        value = mij @ log_ndtr(d) + mji @ log_ndtr(-d)
        r_pos, r_neg = _mills_pair(d)
        g_d = mij * r_pos - mji * r_neg
        gs_pair = g_d / c
        grad_s = np.bincount(iu, weights=gs_pair, minlength=n) - np.bincount(
            ju, weights=gs_pair, minlength=n
        )
        coef = -(g_d * d) / c2
        # in t = log sigma coordinates: d(d)/dt_k = -d sigma_k^2 / c^2
        grad_t = np.bincount(
            iu, weights=coef * sig2[iu], minlength=n
        ) + np.bincount(ju, weights=coef * sig2[ju], minlength=n)
        if ridge > 0.0:
            value -= ridge * float(t @ t)
            grad_t = grad_t - 2.0 * ridge * t
        return float(value), np.concatenate([grad_s, grad_t])

    return objective


def _probit_fixed_objective(
    m: np.ndarray, n: int, scale: float
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Case V objective: win probability Phi((s_i - s_j) / scale)."""
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]

    if _USE_KERNELS:
        def kernel_objective(x: np.ndarray) -> tuple[float, np.ndarray]:
            value, grad = _kernels.probit_value_grad(
                x, iu, ju, mij, mji, scale, _D_CLAMP
            )
            return float(value), grad

        return kernel_objective

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        d = np.clip((x[iu] - x[ju]) / scale, -_D_CLAMP, _D_CLAMP)
        value = mij @ log_ndtr(d) + mji @ log_ndtr(-d)
        r_pos, r_neg = _mills_pair(d)
        g = (mij * r_pos - mji * r_neg) / scale
        grad = np.bincount(iu, weights=g, minlength=n) - np.bincount(
            ju, weights=g, minlength=n
        )
        return float(value), grad

    return objective


def _bt_objective(
    m: np.ndarray, n: int
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    iu, ju = _pair_arrays(n)
    mij = m[iu, ju]
    mji = m[ju, iu]

    if _USE_KERNELS:
        def kernel_objective(x: np.ndarray) -> tuple[float, np.ndarray]:
            value, grad = _kernels.bt_value_grad(x, iu, ju, mij, mji)
            return float(value), grad

        return kernel_objective

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        d = x[iu] - x[ju]
        # log expit(d) = -log(1 + exp(-d))
        value = -(mij @ np.logaddexp(0.0, -d) + mji @ np.logaddexp(0.0, d))
        p = expit(d)
        g = mij * (1.0 - p) - mji * p
        grad = np.bincount(iu, weights=g, minlength=n) - np.bincount(
            ju, weights=g, minlength=n
        )
        return float(value), grad

    return objective


def _bt_hessian(m: np.ndarray, s: np.ndarray) -> np.ndarray:
    n = s.shape[0]
    iu, ju = _pair_arrays(n)
    if _USE_KERNELS:
        return _kernels.bt_hessian(s, iu, ju, m[iu, ju], m[ju, iu])
    p = expit(s[iu] - s[ju])
    a = -(m[iu, ju] + m[ju, iu]) * p * (1.0 - p)
    hess = np.zeros((n, n))
    hess[iu, ju] = -a
    hess[ju, iu] = -a
    diag = np.bincount(iu, weights=a, minlength=n) + np.bincount(
        ju, weights=a, minlength=n
    )
    hess[np.diag_indices(n)] = diag
    return hess


def _prepare_fit(
    pcm: PairComparisonMatrix, options: FitOptions
) -> np.ndarray:
    if pcm.n < 2:
        raise DataError("need at least two stimuli")
    m = _regularized_counts(pcm, options.pseudocount)
    _check_connected(m, pcm.stimulus_ids)
    return m


def fit_thurstone_case3(
    pcm: PairComparisonMatrix,
    options: FitOptions = FitOptions(),
    warm_start: QualityEstimate | None = None,
) -> QualityEstimate:
    """Fit Thurstone Case III by maximum likelihood.

    Returns scores and dispersions normalized to ``mean(s_hat) = 0`` and
    ``mean(sigma_hat^2) = 1``, with the score covariance estimated from
    the Hessian at the optimum.  ``warm_start`` seeds the optimizer with
    a previous estimate on the same stimulus set.
    """
    m = _prepare_fit(pcm, options)
    n = pcm.n
    lower = np.concatenate(
        [np.full(n, -_SCORE_BOUND), np.full(n, -_LOG_SIGMA_BOUND)]
    )
    upper = -lower
    if warm_start is not None and warm_start.stimulus_ids == pcm.stimulus_ids:
        x0 = np.concatenate([warm_start.s_hat, np.log(warm_start.sigma_hat)])
        x0 = np.clip(x0, lower, upper)
    else:
        x0 = np.concatenate([_win_rate_scores(m), np.zeros(n)])
    ridge = options.dispersion_ridge
    best = _best_ascent(
        _case3_objective(m, n, ridge),
        lambda x: _case3_hessian_t(x, m, n, ridge),
        _case3_constraint(n, ridge),
        _case3_gauge(n, ridge),
        x0,
        options,
        lower,
        upper,
    )
    s_raw = best.x[:n]
    sigma_raw = np.exp(best.x[n:])
    scale = math.sqrt(float(np.mean(sigma_raw**2)))
    s_hat = (s_raw - s_raw.mean()) / scale
    sigma_hat = sigma_raw / scale
    cov = covariance_of_estimates(_hessian_scores_m(s_hat, sigma_hat, m))
    try:
        sigma_cov = covariance_of_estimates(
            _hessian_dispersions_m(s_hat, sigma_hat, m)
        )
    except NumericalError:
        # dispersion information vanishes when all fitted scores
        # coincide (win probabilities are then independent of sigma)
        sigma_cov = None
    return QualityEstimate(
        stimulus_ids=pcm.stimulus_ids,
        s_hat=s_hat,
        sigma_hat=sigma_hat,
        score_covariance=cov,
        model_tag="case3",
        log_likelihood=_log_likelihood_m(s_hat, sigma_hat, m),
        converged=best.grad_norm <= options.gradient_tolerance,
        sigma_covariance=sigma_cov,
    )


def _fit_scores_only(
    pcm: PairComparisonMatrix,
    options: FitOptions,
    warm_start: QualityEstimate | None,
    model_tag: str,
) -> QualityEstimate:
    m = _prepare_fit(pcm, options)
    n = pcm.n
    if warm_start is not None and warm_start.stimulus_ids == pcm.stimulus_ids:
        x0 = np.clip(warm_start.s_hat, -_SCORE_BOUND, _SCORE_BOUND)
    else:
        x0 = _win_rate_scores(m)
    if model_tag == "case5":
        objective = _probit_fixed_objective(m, n, 1.0)
        sigma_value = CASE5_SIGMA
        if _USE_KERNELS:
            iu, ju = _pair_arrays(n)
            mij, mji = m[iu, ju], m[ju, iu]
            hess_fn = lambda x: _kernels.probit_hessian(  # noqa: E731
                x, iu, ju, mij, mji, 1.0, _D_CLAMP
            )
        else:
            sigma_vec = np.full(n, CASE5_SIGMA)
            hess_fn = lambda x: _hessian_scores_m(x, sigma_vec, m)  # noqa: E731
    else:
        objective = _bt_objective(m, n)
        sigma_value = BT_SIGMA
        hess_fn = lambda x: _bt_hessian(m, x)  # noqa: E731
    lower = np.full(n, -_SCORE_BOUND)
    upper = -lower
    best = _best_ascent(
        objective,
        hess_fn,
        _mean_zero_constraint(n),
        _mean_zero_gauge,
        x0,
        options,
        lower,
        upper,
    )
    s_hat = best.x - best.x.mean()
    sigma_hat = np.full(n, sigma_value)
    if model_tag == "case5":
        hess = _hessian_scores_m(s_hat, sigma_hat, m)
    else:
        hess = _bt_hessian(m, s_hat)
    cov = covariance_of_estimates(hess)
    return QualityEstimate(
        stimulus_ids=pcm.stimulus_ids,
        s_hat=s_hat,
        sigma_hat=sigma_hat,
        score_covariance=cov,
        model_tag=model_tag,
        log_likelihood=best.log_likelihood,
        converged=best.grad_norm <= options.gradient_tolerance,
    )


def fit_thurstone_case5(
    pcm: PairComparisonMatrix,
    options: FitOptions = FitOptions(),
    warm_start: QualityEstimate | None = None,
) -> QualityEstimate:
    """Fit Thurstone Case V (equal dispersions, probit link)."""
    return _fit_scores_only(pcm, options, warm_start, "case5")


def fit_bradley_terry(
    pcm: PairComparisonMatrix,
    options: FitOptions = FitOptions(),
    warm_start: QualityEstimate | None = None,
) -> QualityEstimate:
    """Fit the Bradley-Terry model (logistic link) on the log-odds scale."""
    return _fit_scores_only(pcm, options, warm_start, "bt")


FITTERS: dict[str, Callable[..., QualityEstimate]] = {
    "case3": fit_thurstone_case3,
    "case5": fit_thurstone_case5,
    "bt": fit_bradley_terry,
}


def fit_model(
    model: str,
    pcm: PairComparisonMatrix,
    options: FitOptions = FitOptions(),
    warm_start: QualityEstimate | None = None,
) -> QualityEstimate:
    """Dispatch to the fitter for ``model`` (one of case3, case5, bt)."""
    try:
        fitter = FITTERS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}") from None
    return fitter(pcm, options, warm_start)
