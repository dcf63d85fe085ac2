"""Core data model: embeddings, soft relevancy labels, and cosine similarity.

Conventions used everywhere in this package:

* ``FeatureMatrix`` holds one embedding per row (video or text side).
* ``RelevancyMatrix`` is the soft-label matrix ``C`` with ``C[i, j]`` in
  ``[0, 1]`` giving how strongly video ``i`` and text ``j`` correspond.
* ``SimilarityMatrix`` is the cosine-similarity matrix ``S`` obtained by
  multiplying row-normalized feature matrices.

All types are immutable after construction (underlying arrays are marked
read-only) and therefore safe to share across threads; every operation in
this module is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    EmptyLabelSetError,
    ShapeMismatchError,
    ZeroRowError,
)
from .validation import as_float_matrix, as_readonly, check_index_list

_UNIT_ROW_ATOL = 1e-6
_ZERO_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D matrix of embedding rows.

    Parameters
    ----------
    data : array-like of shape (n_rows, dim)
        Embedding coordinates; must be finite.
    normalized : bool
        Declares every row to have unit Euclidean norm (checked on
        construction to 1e-6).
    pre_norms : ndarray of shape (n_rows,), optional
        Row norms the data had before :func:`l2_normalize` divided them
        out. Needed to differentiate through the normalization; ``None``
        means the rows were unit norm to begin with.
    """

    data: np.ndarray
    normalized: bool = False
    pre_norms: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = as_float_matrix(self.data, "feature matrix")
        if self.normalized:
            norms = np.linalg.norm(arr, axis=1)
            if np.any(norms < _ZERO_NORM_FLOOR):
                raise ZeroRowError(int(np.argmin(norms)))
            if np.any(np.abs(norms - 1.0) > _UNIT_ROW_ATOL):
                bad = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(
                    f"row {bad} has norm {norms[bad]:.9f}, expected 1 within "
                    f"{_UNIT_ROW_ATOL:g} for a normalized matrix"
                )
        object.__setattr__(self, "data", as_readonly(arr))
        if self.pre_norms is not None:
            pn = np.asarray(self.pre_norms, dtype=np.float64)
            if pn.shape != (arr.shape[0],):
                raise ShapeMismatchError(
                    f"pre_norms shape {pn.shape} does not match {arr.shape[0]} rows"
                )
            object.__setattr__(self, "pre_norms", as_readonly(pn.reshape(-1)))

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RelevancyMatrix:
    """N_v x N_t soft-label matrix with entries in [0, 1].

    ``min_positive`` caches the smallest strictly positive entry (``None``
    when the matrix is all zero); it backs the cheap relaxation-factor
    sanity check in :class:`softsim.losses.LossConfig`.
    """

    data: np.ndarray
    min_positive: float | None = field(init=False, compare=False)

    def __post_init__(self):
        arr = as_float_matrix(self.data, "relevancy matrix")
        if arr.min() < 0.0 or arr.max() > 1.0:
            flat = np.argmax((arr < 0.0) | (arr > 1.0))
            r, c = np.unravel_index(flat, arr.shape)
            from .exceptions import RelevancyRangeError

            raise RelevancyRangeError(int(r), int(c), float(arr[r, c]))
        object.__setattr__(self, "data", as_readonly(arr))
        positive = arr[arr > 0.0]
        object.__setattr__(
            self, "min_positive", float(positive.min()) if positive.size else None
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class SimilarityMatrix:
    """N_v x N_t matrix of cosine similarities."""

    data: np.ndarray

    def __post_init__(self):
        arr = as_float_matrix(self.data, "similarity matrix")
        object.__setattr__(self, "data", as_readonly(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class DatasetBundle:
    """Paired video/text features plus the relevancy matrix tying them.

    Row counts of the two feature matrices must match the relevancy
    dimensions (N_v, N_t). Identifiers are optional but, when given, must
    be one per row.
    """

    video_features: FeatureMatrix
    text_features: FeatureMatrix
    relevancy: RelevancyMatrix
    video_ids: tuple[str, ...] | None = None
    text_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        n_v, n_t = self.relevancy.shape
        if self.video_features.n_rows != n_v or self.text_features.n_rows != n_t:
            raise ShapeMismatchError(
                f"relevancy is {n_v}x{n_t} but features have "
                f"{self.video_features.n_rows} video and "
                f"{self.text_features.n_rows} text rows"
            )
        for name, ids, n in (
            ("video_ids", self.video_ids, n_v),
            ("text_ids", self.text_ids, n_t),
        ):
            if ids is not None:
                ids = tuple(str(s) for s in ids)
                if len(ids) != n:
                    raise ShapeMismatchError(f"{name} has {len(ids)} entries, expected {n}")
                object.__setattr__(self, name, ids)

    @property
    def n_videos(self) -> int:
        return self.relevancy.shape[0]

    @property
    def n_texts(self) -> int:
        return self.relevancy.shape[1]


def l2_normalize(m: FeatureMatrix) -> FeatureMatrix:
    """Divide every row by its Euclidean norm.

    Raises :class:`ZeroRowError` for rows with norm below 1e-12. The
    returned matrix carries the original row norms in ``pre_norms`` so
    gradients can be chained through the normalization.
    """
    norms = np.linalg.norm(m.data, axis=1)
    small = norms < _ZERO_NORM_FLOOR
    if np.any(small):
        raise ZeroRowError(int(np.argmax(small)))
    return FeatureMatrix(m.data / norms[:, None], normalized=True, pre_norms=norms)


def cosine_similarity(v: FeatureMatrix, t: FeatureMatrix) -> SimilarityMatrix:
    """Similarity of every (video, text) row pair as a plain dot product.

    Both inputs must already be row-normalized, so the product is the
    cosine of the angle between rows.
    """
    if not (v.normalized and t.normalized):
        raise ValueError("cosine_similarity requires normalized inputs; call l2_normalize first")
    if v.dim != t.dim:
        raise DimensionMismatchError(
            f"feature dimensions differ: {v.dim} vs {t.dim}"
        )
    return SimilarityMatrix(v.data @ t.data.T)


def _jaccard(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _as_label_sets(labels: Iterable, kind: str) -> list[frozenset]:
    sets = []
    for i, s in enumerate(labels):
        fs = frozenset(s)
        if not fs:
            raise EmptyLabelSetError(i, kind)
        sets.append(fs)
    return sets


def relevancy_from_labels(
    verb_labels_a: Sequence[Iterable],
    noun_labels_a: Sequence[Iterable],
    verb_labels_b: Sequence[Iterable] | None = None,
    noun_labels_b: Sequence[Iterable] | None = None,
) -> RelevancyMatrix:
    """Soft relevancy from class-label overlap.

    Entry (i, j) is the equally weighted mean of the Jaccard overlaps of
    the verb-label sets and the noun-label sets of items i (side a) and j
    (side b). Identical label pairs give 1.0, fully disjoint ones 0.0,
    and partial matches land strictly inside (0, 1). This is a synthetic
    stand-in generator; values always lie in [0, 1] by construction.

    Omitting the b-side labels reuses the a-side ones, which yields a
    symmetric matrix.
    """
    verbs_a = _as_label_sets(verb_labels_a, "verb")
    nouns_a = _as_label_sets(noun_labels_a, "noun")
    if len(verbs_a) != len(nouns_a):
        raise ShapeMismatchError(
            f"side a has {len(verbs_a)} verb sets but {len(nouns_a)} noun sets"
        )
    if verb_labels_b is None and noun_labels_b is None:
        verbs_b, nouns_b = verbs_a, nouns_a
    else:
        if verb_labels_b is None or noun_labels_b is None:
            raise ValueError("provide both verb_labels_b and noun_labels_b, or neither")
        verbs_b = _as_label_sets(verb_labels_b, "verb")
        nouns_b = _as_label_sets(noun_labels_b, "noun")
        if len(verbs_b) != len(nouns_b):
            raise ShapeMismatchError(
                f"side b has {len(verbs_b)} verb sets but {len(nouns_b)} noun sets"
            )
    out = np.empty((len(verbs_a), len(verbs_b)))
    for i, (va, na) in enumerate(zip(verbs_a, nouns_a)):
        for j, (vb, nb) in enumerate(zip(verbs_b, nouns_b)):
            out[i, j] = 0.5 * _jaccard(va, vb) + 0.5 * _jaccard(na, nb)
    return RelevancyMatrix(out)


def gather_batch_relevancy(
    full: RelevancyMatrix,
    video_indices,
    text_indices,
) -> RelevancyMatrix:
    """B x B submatrix for one batch of sampled (video, text) pairs.

    Entry (a, b) is ``full[video_indices[a], text_indices[b]]``. Gathering
    happens in the data pipeline, once per batch, so loss evaluation never
    touches the full matrix.
    """
    n_v, n_t = full.shape
    vi = check_index_list(video_indices, n_v, "video_indices")
    ti = check_index_list(text_indices, n_t, "text_indices")
    if vi.size != ti.size:
        raise ShapeMismatchError(
            f"video_indices ({vi.size}) and text_indices ({ti.size}) must have equal length"
        )
    return RelevancyMatrix(full.data[np.ix_(vi, ti)])
