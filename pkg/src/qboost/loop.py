"""Iterative fusion of rating data with actively sampled comparisons.

One study round proceeds as: build the initial PCM (from rating data or
empty), fit the chosen model, select the highest-gain batch of pairs,
collect comparison outcomes for those pairs, merge them into the PCM, and
refit.  The round repeats until ``n_itr`` batches of ``n_pc`` pairs have
been issued, so a completed run asks for exactly ``n_pc * n_itr`` pairs.

States are immutable; :func:`step` returns a new state and never mutates
its input, which makes replaying a recorded study deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DataError
from .pcm import AcrRatingTable, PairComparisonMatrix, pcm_from_acr, pcm_merge
from .recovery import MODEL_TAGS, FitOptions, QualityEstimate, fit_model
from .sampling import (
    DEFAULT_QUADRATURE_ORDER,
    QuadratureRule,
    SamplingBatch,
    gauss_hermite_rule,
    select_batch,
)


@dataclass(frozen=True)
class LoopConfig:
    """Study-level configuration: budget, model, and fit parameters."""

    n_pc: int
    n_itr: int
    model: str = "case3"
    fit_options: FitOptions = FitOptions()
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    use_acr_init: bool = True
    acr_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_pc < 1:
            raise ValueError("n_pc must be positive")
        if self.n_itr < 1:
            raise ValueError("n_itr must be positive")
        if self.model not in MODEL_TAGS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.acr_weight <= 0:
            raise ValueError("acr_weight must be positive")
        if not 1 <= self.quadrature_order <= 128:
            raise ValueError("quadrature order must be in [1, 128]")

    @property
    def n_budget(self) -> int:
        return self.n_pc * self.n_itr

    def to_json_dict(self) -> dict:
        return {
            "n_pc": self.n_pc,
            "n_itr": self.n_itr,
            "model": self.model,
            "fit_options": {
                "pseudocount": self.fit_options.pseudocount,
                "gradient_tolerance": self.fit_options.gradient_tolerance,
                "max_iterations": self.fit_options.max_iterations,
                "restarts": self.fit_options.restarts,
                "seed": self.fit_options.seed,
            },
            "quadrature_order": self.quadrature_order,
            "use_acr_init": self.use_acr_init,
            "acr_weight": self.acr_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "LoopConfig":
        try:
            fit = payload.get("fit_options") or {}
            return cls(
                n_pc=int(payload["n_pc"]),
                n_itr=int(payload["n_itr"]),
                model=str(payload.get("model", "case3")),
                fit_options=FitOptions(
                    pseudocount=float(fit.get("pseudocount", 0.5)),
                    gradient_tolerance=float(fit.get("gradient_tolerance", 1e-8)),
                    max_iterations=int(fit.get("max_iterations", 2000)),
                    restarts=int(fit.get("restarts", 3)),
                    seed=int(fit.get("seed", 0)),
                ),
                quadrature_order=int(
                    payload.get("quadrature_order", DEFAULT_QUADRATURE_ORDER)
                ),
                use_acr_init=bool(payload.get("use_acr_init", True)),
                acr_weight=float(payload.get("acr_weight", 1.0)),
                seed=int(payload.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad loop config: {exc}") from exc


@dataclass(frozen=True)
class IterationRecord:
    """History entry: the state right after one fit, plus the issued batch."""

    iteration: int
    pcm_digest: str
    estimate: QualityEstimate
    issued_batch: SamplingBatch | None

    def to_json_dict(self) -> dict:
        est = self.estimate
        return {
            "iteration": self.iteration,
            "pcm_digest": self.pcm_digest,
            "estimate": {
                "model": est.model_tag,
                "s_hat": [float(v) for v in est.s_hat],
                "sigma_hat": [float(v) for v in est.sigma_hat],
                "log_likelihood": float(est.log_likelihood),
                "converged": bool(est.converged),
            },
            "batch": None
            if self.issued_batch is None
            else self.issued_batch.to_json_dict(),
        }


@dataclass(frozen=True)
class StudyState:
    """Immutable snapshot of a running study."""

    config: LoopConfig
    stimulus_ids: tuple[str, ...]
    pcm: PairComparisonMatrix
    iteration: int
    estimate: QualityEstimate
    outstanding: SamplingBatch | None
    history: tuple[IterationRecord, ...] = field(default_factory=tuple)

    @property
    def complete(self) -> bool:
        return self.outstanding is None

    def history_json(self) -> list[dict]:
        return [record.to_json_dict() for record in self.history]

    def digest(self) -> str:
        """SHA-256 over the full deterministic state content."""
        payload = {
            "config": self.config.to_json_dict(),
            "stimulus_ids": list(self.stimulus_ids),
            "pcm_digest": self.pcm.digest(),
            "iteration": self.iteration,
            "estimate": self.estimate.to_json_dict(),
            "outstanding": None
            if self.outstanding is None
            else self.outstanding.to_json_dict(),
            "history": self.history_json(),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _rule(config: LoopConfig) -> QuadratureRule:
    return gauss_hermite_rule(config.quadrature_order)


def init_state(
    acr: AcrRatingTable | None,
    stimulus_ids: Sequence[str],
    config: LoopConfig,
) -> StudyState:
    """Start a study: initial PCM (rating-derived or empty), fit, batch 1."""
    ids = tuple(str(s) for s in stimulus_ids)
    if not ids:
        raise DataError("stimulus_ids must be non-empty")
    if config.use_acr_init:
        if acr is None:
            raise DataError("ACR data required")
        pcm = pcm_from_acr(acr, ids)
        if config.acr_weight != 1.0:
            pcm = PairComparisonMatrix(ids, pcm.counts * config.acr_weight)
    else:
        pcm = PairComparisonMatrix.zeros(ids)
    estimate = fit_model(config.model, pcm, config.fit_options)
    batch = select_batch(estimate, config.n_pc, _rule(config), iteration=1)
    record = IterationRecord(0, pcm.digest(), estimate, batch)
    return StudyState(
        config=config,
        stimulus_ids=ids,
        pcm=pcm,
        iteration=0,
        estimate=estimate,
        outstanding=batch,
        history=(record,),
    )


def _check_responses(
    batch: SamplingBatch, responses: PairComparisonMatrix
) -> None:
    allowed = {(p.i, p.j) for p in batch.pairs}
    allowed |= {(j, i) for i, j in allowed}
    nonzero = zip(*responses.counts.nonzero())
    for i, j in nonzero:
        if (int(i), int(j)) not in allowed:
            raise DataError(
                "unsolicited response: pair "
                f"({responses.stimulus_ids[i]}, {responses.stimulus_ids[j]}) "
                "is not in the outstanding batch"
            )


def step(state: StudyState, responses: PairComparisonMatrix) -> StudyState:
    """Consume the outstanding batch: merge responses, refit, select next.

    ``responses`` may only carry mass on pairs of the outstanding batch.
    A zero-mass response matrix leaves the PCM unchanged and carries the
    previous estimate forward (a refit is deterministic and would
    reproduce it exactly).
    """
    if state.outstanding is None:
        raise DataError("budget exhausted")
    if responses.stimulus_ids != state.stimulus_ids:
        raise DataError("incompatible matrices: stimulus ids differ")
    _check_responses(state.outstanding, responses)
    pcm = pcm_merge(state.pcm, responses)
    if responses.total_mass() == 0.0:
        estimate = state.estimate
    else:
        estimate = fit_model(
            state.config.model,
            pcm,
            state.config.fit_options,
            warm_start=state.estimate,
        )
    iteration = state.iteration + 1
    if iteration < state.config.n_itr:
        batch = select_batch(
            estimate, state.config.n_pc, _rule(state.config), iteration=iteration + 1
        )
    else:
        batch = None
    record = IterationRecord(iteration, pcm.digest(), estimate, batch)
    return StudyState(
        config=state.config,
        stimulus_ids=state.stimulus_ids,
        pcm=pcm,
        iteration=iteration,
        estimate=estimate,
        outstanding=batch,
        history=state.history + (record,),
    )
