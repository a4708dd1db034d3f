"""Monte Carlo evaluation of the active fusion loop on synthetic observers.

Each repetition draws a fresh ground truth (latent scores uniform on
[1, 5], per-stimulus observation noise uniform on [0, 0.7]), then runs
the active comparison loop independently under each model.  A simulated
annotator judgment of pair (i, j) draws one noisy observation of each
stimulus and prefers the larger.  Budget is accounted in standard
trials of n(n-1)/2 pairwise labels each, consumed in spanning-tree
batches of n-1 pairs (the final batch of a trial is truncated); the
model is refit after every batch and the rank correlation against the
ground-truth scores is recorded at each trial boundary.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .metrics import srocc
from .pcm import AcrRatingTable, PairComparisonMatrix, pcm_from_acr, pcm_merge
from .recovery import MODEL_TAGS, FitOptions, fit_model
from .sampling import gauss_hermite_rule, select_batch

ACR_SCALE_LEVELS = (1.0, 5.0)


@dataclass(frozen=True)
class GroundTruth:
    """Latent scores and per-stimulus observation noise for one repetition."""

    s_true: np.ndarray
    sigma_true: np.ndarray
    seed: int

    def __post_init__(self):
        s = np.asarray(self.s_true, dtype=float)
        sigma = np.asarray(self.sigma_true, dtype=float)
        if s.shape != sigma.shape or s.ndim != 1:
            raise ValueError("scores and noise levels must match in length")
        if np.any(sigma < 0):
            raise ValueError("noise levels must be non-negative")
        s.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "s_true", s)
        object.__setattr__(self, "sigma_true", sigma)

    @property
    def n(self) -> int:
        return self.s_true.size

    @classmethod
    def generate(cls, n: int, seed: int) -> "GroundTruth":
        rng = np.random.default_rng(seed)
        return cls(
            s_true=rng.uniform(1.0, 5.0, n),
            sigma_true=rng.uniform(0.0, 0.7, n),
            seed=seed,
        )


def simulate_comparison(
    gt: GroundTruth,
    i: int,
    j: int,
    rng: np.random.Generator,
    noise_model: str = "gaussian",
) -> int:
    """One simulated judgment of pair (i, j); returns the winning index.

    ``gaussian`` draws each observed score from N(s, sigma^2); the
    ``uniform`` variant adds U(0, 0.7) noise per draw instead.  Exact
    ties are broken by a fair coin.
    """
    if i == j:
        raise ValueError("pair members must differ")
    if noise_model == "gaussian":
        r_i = gt.s_true[i] + gt.sigma_true[i] * rng.standard_normal()
        r_j = gt.s_true[j] + gt.sigma_true[j] * rng.standard_normal()
    elif noise_model == "uniform":
        r_i = gt.s_true[i] + rng.uniform(0.0, 0.7)
        r_j = gt.s_true[j] + rng.uniform(0.0, 0.7)
    else:
        raise ValueError(f"unknown noise model {noise_model!r}")
    if r_i > r_j:
        return i
    if r_j > r_i:
        return j
    return i if rng.integers(2) == 0 else j


def simulate_acr_table(
    gt: GroundTruth, n_observers: int, rng: np.random.Generator
) -> AcrRatingTable:
    """Quantized single-stimulus pass: each observer rates every stimulus
    on the 5-level scale (noisy observation rounded and clipped)."""
    lo, hi = ACR_SCALE_LEVELS
    ratings = {}
    for obs in range(n_observers):
        noisy = gt.s_true + gt.sigma_true * rng.standard_normal(gt.n)
        quantized = np.clip(np.rint(noisy), lo, hi)
        for k in range(gt.n):
            ratings[(f"obs{obs:03d}", f"s{k:03d}")] = float(quantized[k])
    return AcrRatingTable(ratings, scale_bounds=ACR_SCALE_LEVELS)


@dataclass(frozen=True)
class SimulationConfig:
    """Full-scale defaults: 60 stimuli, 100 repetitions, 50 trials."""

    n: int = 60
    reps: int = 100
    standard_trials: int = 50
    models: tuple[str, ...] = ("case3", "case5", "bt")
    seed: int = 0
    acr_init: bool = False
    acr_observers: int = 15
    noise_model: str = "gaussian"
    quadrature_order: int = 21
    fit_options: FitOptions = field(
        default_factory=lambda: FitOptions(restarts=1, gradient_tolerance=1e-5)
    )
    workers: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two stimuli")
        if self.reps < 1 or self.standard_trials < 1:
            raise ValueError("reps and standard_trials must be positive")
        for model in self.models:
            if model not in MODEL_TAGS:
                raise ValueError(f"unknown model {model!r}")
        if self.noise_model not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise model {self.noise_model!r}")
        if self.acr_observers < 1:
            raise ValueError("acr_observers must be positive")

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "reps": self.reps,
            "standard_trials": self.standard_trials,
            "models": list(self.models),
            "seed": self.seed,
            "acr_init": self.acr_init,
            "acr_observers": self.acr_observers,
            "noise_model": self.noise_model,
            "quadrature_order": self.quadrature_order,
            "fit_options": {
                "pseudocount": self.fit_options.pseudocount,
                "gradient_tolerance": self.fit_options.gradient_tolerance,
                "max_iterations": self.fit_options.max_iterations,
                "restarts": self.fit_options.restarts,
                "seed": self.fit_options.seed,
                "dispersion_ridge": self.fit_options.dispersion_ridge,
            },
        }


@dataclass(frozen=True)
class SimulationReport:
    """Mean and standard deviation of SROCC per model per trial."""

    config: dict
    models: tuple[str, ...]
    mean: Mapping[str, np.ndarray]
    std: Mapping[str, np.ndarray]

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "models": {
                model: [
                    {"mean": float(m), "std": float(s)}
                    for m, s in zip(self.mean[model], self.std[model])
                ]
                for model in self.models
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["model,trial,mean,std"]
        for model in self.models:
            for trial, (m, s) in enumerate(
                zip(self.mean[model], self.std[model]), start=1
            ):
                lines.append(f"{model},{trial},{float(m)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"


def _rep_seed(master: int, rep: int, *tail: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=(rep, *tail))


def _simulate_batch_counts(
    gt: GroundTruth,
    pairs: Sequence[tuple[int, int]],
    rng: np.random.Generator,
    noise_model: str,
) -> np.ndarray:
    """Vectorized draw of one judgment per pair (same law as
    :func:`simulate_comparison`)."""
    counts = np.zeros((gt.n, gt.n))
    if not pairs:
        return counts
    i_idx = np.fromiter((p[0] for p in pairs), dtype=int, count=len(pairs))
    j_idx = np.fromiter((p[1] for p in pairs), dtype=int, count=len(pairs))
    if noise_model == "gaussian":
        r_i = gt.s_true[i_idx] + gt.sigma_true[i_idx] * rng.standard_normal(
            len(pairs)
        )
        r_j = gt.s_true[j_idx] + gt.sigma_true[j_idx] * rng.standard_normal(
            len(pairs)
        )
    else:
        r_i = gt.s_true[i_idx] + rng.uniform(0.0, 0.7, len(pairs))
        r_j = gt.s_true[j_idx] + rng.uniform(0.0, 0.7, len(pairs))
    ties = r_i == r_j
    if np.any(ties):
        coin = rng.integers(2, size=int(ties.sum())).astype(bool)
        r_i = r_i.copy()
        r_i[ties] += np.where(coin, 1.0, -1.0)
    winners = np.where(r_i > r_j, i_idx, j_idx)
    losers = np.where(r_i > r_j, j_idx, i_idx)
    np.add.at(counts, (winners, losers), 1.0)
    return counts


def _run_repetition(config: SimulationConfig, rep: int) -> dict[str, list[float]]:
    """All models' SROCC-per-trial curves for one repetition."""
    gt_seed = int(_rep_seed(config.seed, rep).generate_state(1)[0])
    gt = GroundTruth.generate(config.n, gt_seed)
    ids = tuple(f"s{k:03d}" for k in range(config.n))
    rule = gauss_hermite_rule(config.quadrature_order)
    labels_per_trial = config.n * (config.n - 1) // 2
    batch_size = config.n - 1

    if config.acr_init:
        acr_rng = np.random.default_rng(_rep_seed(config.seed, rep, 1))
        initial_pcm = pcm_from_acr(
            simulate_acr_table(gt, config.acr_observers, acr_rng), ids
        )
    else:
        initial_pcm = PairComparisonMatrix.zeros(ids)

    curves: dict[str, list[float]] = {}
    for model_index, model in enumerate(config.models):
        rng = np.random.default_rng(_rep_seed(config.seed, rep, 2, model_index))
        pcm = initial_pcm
        est = fit_model(model, pcm, config.fit_options)
        curve = []
        for _ in range(config.standard_trials):
            remaining = labels_per_trial
            while remaining > 0:
                size = min(batch_size, remaining)
                batch = select_batch(est, size, rule)
                pairs = [(p.i, p.j) for p in batch.pairs]
                delta = _simulate_batch_counts(gt, pairs, rng, config.noise_model)
                pcm = pcm_merge(pcm, PairComparisonMatrix(ids, delta))
                est = fit_model(model, pcm, config.fit_options, warm_start=est)
                remaining -= size
            curve.append(srocc(est.s_hat, gt.s_true))
        curves[model] = curve
    return curves


def _resolve_workers(config: SimulationConfig) -> int:
    if config.workers is not None:
        return max(1, config.workers)
    cap = os.environ.get("QBOOST_THREADS")
    available = os.cpu_count() or 1
    if cap:
        try:
            available = min(available, max(1, int(cap)))
        except ValueError:
            pass
    return available


def run_simulation(config: SimulationConfig) -> SimulationReport:
    """Run all repetitions (parallel across processes when available) and
    aggregate SROCC means/stds per model per trial."""
    workers = _resolve_workers(config)
    reps = list(range(config.reps))
    if workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_repetition_worker, [(config, r) for r in reps]))
    else:
        results = [_run_repetition(config, r) for r in reps]
    mean: dict[str, np.ndarray] = {}
    std: dict[str, np.ndarray] = {}
    for model in config.models:
        stacked = np.array([res[model] for res in results])
        mean[model] = stacked.mean(axis=0)
        std[model] = stacked.std(axis=0, ddof=1) if config.reps > 1 else np.zeros(
            config.standard_trials
        )
    return SimulationReport(
        config=config.to_json_dict(),
        models=config.models,
        mean=mean,
        std=std,
    )


def _repetition_worker(args: tuple[SimulationConfig, int]) -> dict[str, list[float]]:
    config, rep = args
    return _run_repetition(config, rep)
