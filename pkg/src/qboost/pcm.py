"""Pair-comparison matrices and their construction from category ratings.

The central object is the pair-comparison matrix (PCM): an n x n array
where ``counts[i, j]`` accumulates the preference mass for stimulus ``i``
over stimulus ``j``.  Single-stimulus rating data is folded into the same
representation by comparing every pair of ratings given by one observer:
a strict preference contributes a full count, a tie contributes half a
count to each direction.  Counts are therefore stored as floats; every
value produced by ingestion is an exact multiple of 0.5.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

ACR_CSV_HEADER = ("observer_id", "stimulus_id", "rating")
PCM_CSV_HEADER = ("winner_id", "loser_id", "count")


@dataclass(frozen=True, eq=False)
class PairComparisonMatrix:
    """Accumulated pairwise preference counts over a fixed stimulus set.

    Invariants enforced at construction: square shape matching the id
    list, zero diagonal, non-negative finite entries, unique ids.
    """

    stimulus_ids: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.stimulus_ids)
        counts = np.array(self.counts, dtype=float)
        n = len(ids)
        if len(set(ids)) != n:
            raise DataError("duplicate stimulus ids")
        if counts.shape != (n, n):
            raise DataError(
                f"counts shape {counts.shape} does not match {n} stimulus ids"
            )
        if not np.all(np.isfinite(counts)):
            raise DataError("non-finite count")
        if np.any(counts < 0):
            raise DataError("negative count")
        if np.any(np.diagonal(counts) != 0):
            raise DataError("nonzero diagonal count")
        counts.setflags(write=False)
        object.__setattr__(self, "stimulus_ids", ids)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, stimulus_ids: Sequence[str]) -> "PairComparisonMatrix":
        n = len(stimulus_ids)
        return cls(tuple(stimulus_ids), np.zeros((n, n)))

    @property
    def n(self) -> int:
        return len(self.stimulus_ids)

    def total_mass(self) -> float:
        return float(self.counts.sum())

    def index_of(self, stimulus_id: str) -> int:
        try:
            return self.stimulus_ids.index(stimulus_id)
        except ValueError:
            raise DataError(f"unknown stimulus {stimulus_id!r}") from None

    def digest(self) -> str:
        """SHA-256 of the canonical long-form CSV serialization."""
        return hashlib.sha256(to_pcm_csv(self).encode()).hexdigest()


@dataclass(frozen=True)
class AcrRatingTable:
    """Raw per-observer, per-stimulus ratings from a single-stimulus test.

    ``ratings`` maps ``(observer_id, stimulus_id)`` to the rating value.
    Observers may rate only a subset of the stimuli; a pair contributes
    for an observer only when both members were rated.
    """

    ratings: Mapping[tuple[str, str], float]
    scale_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        ratings = dict(self.ratings)
        for (obs, stim), value in ratings.items():
            if not np.isfinite(value):
                raise DataError(f"non-finite rating for ({obs!r}, {stim!r})")
            if self.scale_bounds is not None:
                lo, hi = self.scale_bounds
                if not lo <= value <= hi:
                    raise DataError(
                        f"rating {value} for ({obs!r}, {stim!r}) outside "
                        f"scale bounds [{lo}, {hi}]"
                    )
        object.__setattr__(self, "ratings", ratings)

    @property
    def observers(self) -> tuple[str, ...]:
        return tuple(sorted({obs for obs, _ in self.ratings}))

    @property
    def n_obs(self) -> int:
        return len(self.observers)

    @property
    def stimulus_ids(self) -> tuple[str, ...]:
        return tuple(sorted({stim for _, stim in self.ratings}))

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[tuple[str, str, float]],
        scale_bounds: tuple[float, float] | None = None,
    ) -> "AcrRatingTable":
        ratings: dict[tuple[str, str], float] = {}
        for obs, stim, value in rows:
            key = (str(obs), str(stim))
            if key in ratings:
                raise DataError(f"duplicate rating for ({obs!r}, {stim!r})")
            ratings[key] = float(value)
        return cls(ratings, scale_bounds)


@dataclass(frozen=True, eq=False)
class BinaryPreferenceMatrix:
    """Thresholded preference relations derived from a PCM.

    ``values[i, j]`` is True when the normalized preference share of ``i``
    over ``j`` strictly exceeds the threshold.  ``defined`` marks
    off-diagonal pairs with positive total count; everything else is
    missing and must be ignored downstream.  ``ties`` flags pairs whose
    share hit the threshold exactly (both directions end up False).
    """

    stimulus_ids: tuple[str, ...]
    values: np.ndarray
    defined: np.ndarray
    ties: np.ndarray


def pcm_from_acr(
    table: AcrRatingTable,
    stimulus_ids: Sequence[str] | None = None,
) -> PairComparisonMatrix:
    """Fold a rating table into a pair-comparison matrix.

    For every observer and every unordered pair of stimuli that observer
    rated: the higher-rated side gains one count, an exact tie adds half
    a count to both directions.  Each unordered pair is processed exactly
    once per observer, so ``counts[i, j] + counts[j, i]`` equals the
    number of observers who rated both ``i`` and ``j``.
    """
    if not table.ratings:
        raise DataError("no ratings")
    if stimulus_ids is None:
        ids = table.stimulus_ids
    else:
        ids = tuple(str(s) for s in stimulus_ids)
        known = set(ids)
        for _, stim in table.ratings:
            if stim not in known:
                raise DataError(f"unknown stimulus {stim!r}")
    n = len(ids)
    if n < 2:
        raise DataError("need at least two stimuli")
    index = {s: k for k, s in enumerate(ids)}

    by_observer: dict[str, list[tuple[int, float]]] = {}
    for (obs, stim), value in table.ratings.items():
        by_observer.setdefault(obs, []).append((index[stim], value))

    counts = np.zeros((n, n))
    for entries in by_observer.values():
        if len(entries) < 2:
            continue
        idx = np.array([k for k, _ in entries])
        r = np.array([v for _, v in entries])
        diff = r[:, None] - r[None, :]
        contrib = (diff > 0) + 0.5 * (diff == 0)
        np.fill_diagonal(contrib, 0.0)
        counts[np.ix_(idx, idx)] += contrib
    return PairComparisonMatrix(ids, counts)


def pcm_merge(
    base: PairComparisonMatrix, delta: PairComparisonMatrix
) -> PairComparisonMatrix:
    """Element-wise sum of two matrices over the same stimulus set."""
    if base.stimulus_ids != delta.stimulus_ids:
        raise DataError("incompatible matrices: stimulus ids differ")
    return PairComparisonMatrix(base.stimulus_ids, base.counts + delta.counts)


def pcm_binarize(
    pcm: PairComparisonMatrix, threshold: float = 0.5
) -> BinaryPreferenceMatrix:
    """Threshold each pair's normalized preference share.

    The share ``counts[i, j] / (counts[i, j] + counts[j, i])`` is compared
    strictly against ``threshold``; a share exactly at the threshold maps
    to False on both sides and is flagged in ``ties``.  Pairs with zero
    total count are marked missing via ``defined``.
    """
    c = pcm.counts
    total = c + c.T
    defined = total > 0
    np.fill_diagonal(defined, False)
    share = np.divide(c, total, out=np.zeros_like(c), where=defined)
    values = defined & (share > threshold)
    ties = defined & (share == threshold)
    return BinaryPreferenceMatrix(pcm.stimulus_ids, values, defined, ties)


def read_acr_csv(source: IO[str]) -> AcrRatingTable:
    """Parse the ACR CSV format: header ``observer_id,stimulus_id,rating``."""
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file", line=1) from None
    if tuple(h.strip() for h in header) != ACR_CSV_HEADER:
        raise DataError(
            f"expected header {','.join(ACR_CSV_HEADER)!r}", line=1
        )
    ratings: dict[tuple[str, str], float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
        obs, stim, text = (field.strip() for field in row)
        if not obs or not stim:
            raise DataError("empty observer or stimulus id", line=lineno)
        try:
            value = float(text)
        except ValueError:
            raise DataError(f"bad rating {text!r}", line=lineno) from None
        if not np.isfinite(value):
            raise DataError(f"non-finite rating {text!r}", line=lineno)
        key = (obs, stim)
        if key in ratings:
            raise DataError(
                f"duplicate rating for ({obs!r}, {stim!r})", line=lineno
            )
        ratings[key] = value
    if not ratings:
        raise DataError("no ratings")
    return AcrRatingTable(ratings)


def read_pcm_csv(source: IO[str]) -> PairComparisonMatrix:
    """Parse the long-form PCM CSV: header ``winner_id,loser_id,count``.

    Rows with count 0 may be omitted; repeated (winner, loser) rows
    accumulate.  The stimulus set is the sorted union of all ids seen.
    """
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file", line=1) from None
    if tuple(h.strip() for h in header) != PCM_CSV_HEADER:
        raise DataError(
            f"expected header {','.join(PCM_CSV_HEADER)!r}", line=1
        )
    entries: list[tuple[str, str, float]] = []
    ids: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
        winner, loser, text = (field.strip() for field in row)
        if not winner or not loser:
            raise DataError("empty stimulus id", line=lineno)
        if winner == loser:
            raise DataError(f"self-comparison for {winner!r}", line=lineno)
        try:
            count = float(text)
        except ValueError:
            raise DataError(f"bad count {text!r}", line=lineno) from None
        if not np.isfinite(count) or count < 0:
            raise DataError(f"invalid count {text!r}", line=lineno)
        entries.append((winner, loser, count))
        ids.update((winner, loser))
    if len(ids) < 2:
        raise DataError("need at least two stimuli")
    ordered = tuple(sorted(ids))
    index = {s: k for k, s in enumerate(ordered)}
    counts = np.zeros((len(ordered), len(ordered)))
    for winner, loser, count in entries:
        counts[index[winner], index[loser]] += count
    return PairComparisonMatrix(ordered, counts)


def to_pcm_csv(pcm: PairComparisonMatrix) -> str:
    """Canonical long-form CSV: rows sorted by (winner, loser), zeros omitted."""
    lines = [",".join(PCM_CSV_HEADER)]
    order = sorted(range(pcm.n), key=lambda k: pcm.stimulus_ids[k])
    for i in order:
        for j in order:
            if i == j:
                continue
            count = float(pcm.counts[i, j])
            if count != 0.0:
                lines.append(
                    f"{pcm.stimulus_ids[i]},{pcm.stimulus_ids[j]},{count!r}"
                )
    return "\n".join(lines) + "\n"
