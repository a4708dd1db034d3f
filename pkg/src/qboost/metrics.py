"""Rank-based evaluation of recovered quality scales."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .pcm import PairComparisonMatrix, pcm_binarize


def srocc(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if a.size < 2:
        raise ValueError("need at least two observations")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("undefined correlation: constant input")
    ra = rankdata(a)
    rb = rankdata(b)
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    return float((ra @ rb) / np.sqrt((ra @ ra) * (rb @ rb)))


def agreement_proportion(
    pcm_gt: PairComparisonMatrix, scores: Sequence[float]
) -> float:
    """Fraction of binarized ground-truth preferences matched by scores.

    The ground-truth matrix is normalized per pair and thresholded at 0.5
    (strict; exact 50/50 splits map to 0 on both sides).  The score matrix
    sets 1 wherever ``scores[i] > scores[j]``.  Off-diagonal elements with
    no ground-truth data are dropped from the denominator with a warning;
    tied scores on compared pairs are flagged with a warning as well.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (pcm_gt.n,):
        raise ValueError("scores length does not match matrix")
    binary = pcm_binarize(pcm_gt, 0.5)
    mask = binary.defined
    missing = pcm_gt.n * (pcm_gt.n - 1) - int(mask.sum())
    if missing:
        warnings.warn(
            f"{missing} off-diagonal elements have no ground-truth data "
            "and were excluded",
            stacklevel=2,
        )
    diff = scores[:, None] - scores[None, :]
    tied_pairs = int(np.count_nonzero(mask & (diff == 0))) // 2
    if tied_pairs:
        warnings.warn(
            f"{tied_pairs} compared pairs have exactly tied scores",
            stacklevel=2,
        )
    converted = diff > 0
    matches = converted[mask] == binary.values[mask]
    return float(np.mean(matches))
