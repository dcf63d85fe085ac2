"""Positive/negative set construction and triplet enumeration.

Two triplet sources coexist:

* Threshold partitions (:func:`build_positive_sets` plus
  :func:`enumerate_triplets`): every candidate with relevancy at or above
  the threshold is a positive for the anchor, everything else a negative.
  Triples built this way always pair a positive with a negative.

* In-batch triples (:func:`in_batch_triplets`): each batch row is a
  sampled (video, text) pair; the diagonal entry is the designated
  positive and every other batch item serves as a negative regardless of
  its relevancy. Because the designated positive may itself be only a
  partial match (hard positive sampling admits any candidate at or above
  the threshold), a "negative" can carry higher relevancy than the
  positive. Such triples have a negative correlation gap and are exactly
  the case the sign-aware loss exists for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RelevancyMatrix, SimilarityMatrix
from .exceptions import (
    IndexOutOfRangeError,
    InvalidThresholdError,
    MissingSimilarityError,
    ShapeMismatchError,
)

VIDEO_TO_TEXT = "video_to_text"
TEXT_TO_VIDEO = "text_to_video"
DIRECTIONS = (VIDEO_TO_TEXT, TEXT_TO_VIDEO)


def _check_direction(direction: str) -> str:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return direction


def _oriented(relevancy: RelevancyMatrix, direction: str) -> np.ndarray:
    # Anchor along rows: transpose for text anchors.
    return relevancy.data if direction == VIDEO_TO_TEXT else relevancy.data.T


@dataclass(frozen=True)
class PositiveSets:
    """Per-anchor partition of candidates into positives and negatives.

    ``positives[i]`` holds candidate indices with relevancy >= threshold
    for anchor ``i``; ``negatives[i]`` holds the rest. The two lists are
    disjoint and together cover all candidates.
    """

    positives: tuple[np.ndarray, ...]
    negatives: tuple[np.ndarray, ...]
    threshold: float
    direction: str
    n_candidates: int

    @property
    def n_anchors(self) -> int:
        return len(self.positives)


@dataclass(frozen=True)
class TripletSet:
    """(anchor, positive, negative) index triples for one direction.

    ``triples`` is an M x 3 integer array. Rows are ordered by anchor,
    then positive, then negative index, which keeps downstream reductions
    deterministic.
    """

    direction: str
    triples: np.ndarray

    def __post_init__(self):
        _check_direction(self.direction)
        arr = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "triples", arr)

    def __len__(self) -> int:
        return self.triples.shape[0]


def build_positive_sets(
    relevancy: RelevancyMatrix,
    threshold: float = 0.1,
    direction: str = VIDEO_TO_TEXT,
) -> PositiveSets:
    """Partition candidates by thresholding the relevancy matrix.

    Candidate j is positive for anchor i iff ``c_ij >= threshold``. The
    threshold must lie in (0, 1]; 0 would make every candidate a
    positive of every anchor.
    """
    _check_direction(direction)
    if not (0.0 < threshold <= 1.0):
        raise InvalidThresholdError(f"threshold must be in (0, 1], got {threshold}")
    c = _oriented(relevancy, direction)
    positives = []
    negatives = []
    for row in c:
        mask = row >= threshold
        positives.append(np.flatnonzero(mask))
        negatives.append(np.flatnonzero(~mask))
    return PositiveSets(
        positives=tuple(positives),
        negatives=tuple(negatives),
        threshold=float(threshold),
        direction=direction,
        n_candidates=c.shape[1],
    )


def enumerate_triplets(
    sets: PositiveSets,
    strategy: str = "all_pairs",
    similarity: SimilarityMatrix | None = None,
) -> TripletSet:
    """Expand positive/negative sets into explicit triples.

    ``all_pairs`` yields every (i, j in P_i, k in N_i). ``hardest_negative``
    yields one triple per (i, j): the negative with the highest similarity
    to the anchor, ties broken by the lowest candidate index. Anchors with
    an empty positive or negative set contribute nothing.
    """
    if strategy not in ("all_pairs", "hardest_negative"):
        raise ValueError(f"unknown strategy {strategy!r}")
    sim = None
    if strategy == "hardest_negative":
        if similarity is None:
            raise MissingSimilarityError("hardest_negative mining needs a similarity matrix")
        sim = similarity.data if sets.direction == VIDEO_TO_TEXT else similarity.data.T
        if sim.shape != (sets.n_anchors, sets.n_candidates):
            raise ShapeMismatchError(
                f"similarity shape {sim.shape} does not match "
                f"{sets.n_anchors} anchors x {sets.n_candidates} candidates"
            )
    rows = []
    for i, (pos, neg) in enumerate(zip(sets.positives, sets.negatives)):
        if pos.size == 0 or neg.size == 0:
            continue
        if strategy == "all_pairs":
            jj, kk = np.meshgrid(pos, neg, indexing="ij")
            block = np.column_stack(
                [np.full(jj.size, i, dtype=np.int64), jj.ravel(), kk.ravel()]
            )
        else:
            # argmax returns the first maximum, i.e. the lowest index on ties
            k = neg[int(np.argmax(sim[i, neg]))]
            block = np.column_stack(
                [np.full(pos.size, i, dtype=np.int64), pos, np.full(pos.size, k, dtype=np.int64)]
            )
        rows.append(block)
    triples = np.concatenate(rows, axis=0) if rows else np.empty((0, 3), dtype=np.int64)
    return TripletSet(direction=sets.direction, triples=triples)


def in_batch_triplets(batch_size: int, direction: str) -> TripletSet:
    """Diagonal-positive triples for a batch of sampled pairs.

    For every anchor a, the positive is the paired item a and each other
    batch index k != a acts as a negative: (a, a, k).
    """
    _check_direction(direction)
    if batch_size < 2:
        raise ValueError(f"need at least 2 items for in-batch negatives, got {batch_size}")
    a = np.repeat(np.arange(batch_size, dtype=np.int64), batch_size - 1)
    k = np.concatenate(
        [np.delete(np.arange(batch_size, dtype=np.int64), i) for i in range(batch_size)]
    )
    return TripletSet(direction=direction, triples=np.column_stack([a, a, k]))


def pair_correlation(
    relevancy: RelevancyMatrix,
    triplet,
    direction: str = VIDEO_TO_TEXT,
) -> float:
    """Signed relevancy gap ``R = c_ij - c_ik`` of one triple.

    Positive R means the triple's positive slot really is the more
    relevant candidate; negative R means the mined "negative" outranks
    the designated positive; zero means both candidates are equally
    relevant. Always lies in [-1, 1] and is antisymmetric under swapping
    the positive and negative slots.
    """
    c = _oriented(relevancy, _check_direction(direction))
    i, j, k = (int(x) for x in triplet)
    n_anchors, n_candidates = c.shape
    if not (0 <= i < n_anchors and 0 <= j < n_candidates and 0 <= k < n_candidates):
        raise IndexOutOfRangeError(
            f"triple ({i}, {j}, {k}) out of range for {n_anchors}x{n_candidates}"
        )
    return float(c[i, j] - c[i, k])


def triplet_correlations(
    relevancy: RelevancyMatrix,
    triplets: TripletSet,
) -> np.ndarray:
    """Vectorized ``pair_correlation`` over a whole triplet set."""
    c = _oriented(relevancy, triplets.direction)
    t = triplets.triples
    if len(triplets) == 0:
        return np.empty(0)
    n_anchors, n_candidates = c.shape
    if t[:, 0].max() >= n_anchors or t[:, 1:].max() >= n_candidates or t.min() < 0:
        raise IndexOutOfRangeError(
            f"triplet indices out of range for {n_anchors}x{n_candidates}"
        )
    return c[t[:, 0], t[:, 1]] - c[t[:, 0], t[:, 2]]
