"""Margin-based ranking losses with analytic gradients.

Five losses over a batch similarity matrix S (cosine similarities of
normalized embeddings), all differentiable through S back to the
embeddings:

* :func:`mi_mm_loss` - bidirectional max-margin triplet loss with a fixed
  margin: sum of ``[margin - S_ij + S_ik]_+`` over both retrieval
  directions.
* :func:`adaptive_mi_mm_loss` - same structure, but each triple's margin
  is scaled by the positive pair's relevancy ``c_ij``.
* :func:`ms_loss` - smooth log-sum-exp loss over per-anchor positive and
  negative sets with separate positive/negative scale factors.
* :func:`ms_loss_limit` - the large-scale limit of the above: independent
  hinges pushing positives above the margin and negatives below it.
* :func:`sms_loss` - sign-aware symmetric loss. Per triple, the relevancy
  gap ``R = c_ij - c_ik`` selects the branch: R > 0 enforces
  ``S_ij - S_ik >= R * margin``; R < 0 enforces the reverse ordering with
  the mirrored margin; R == 0 pulls the two similarities together, but
  only while they differ by more than the relaxation width.

Loss values are plain sums over triples (means over anchors for
:func:`ms_loss`); :class:`LossResult` also exposes the per-triple mean
because the sign-aware loss runs on systematically smaller margins and
per-triple magnitudes are the quantity to compare when picking learning
rates.

Conventions: ``[x]_+`` denotes ``max(x, 0)``; its subgradient at the kink
``x = 0`` is taken to be 0, and the subgradient of ``|d|`` at ``d = 0``
is 0 as well. Relevancy gaps are compared to zero exactly, not within a
tolerance: relevancy values come from files or generators where equality
is meaningful, and a tolerance would silently move triples between
branches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import (
    DatasetBundle,
    FeatureMatrix,
    RelevancyMatrix,
    SimilarityMatrix,
    cosine_similarity,
    l2_normalize,
)
from .exceptions import (
    IndexOutOfRangeError,
    NumericalOverflowError,
    ShapeMismatchError,
    TauRelaxationWarning,
)
from .mining import (
    TEXT_TO_VIDEO,
    VIDEO_TO_TEXT,
    PositiveSets,
    TripletSet,
    build_positive_sets,
    enumerate_triplets,
)

LOSS_NAMES = ("mi_mm", "adaptive_mi_mm", "ms", "ms_limit", "sms")


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters shared by the loss family.

    margin : separation required between positive and negative
        similarities (also the log-sum-exp center of :func:`ms_loss`).
    relaxation : dead-zone half-width for equal-relevancy triples in
        :func:`sms_loss`; within it, tied pairs stop being optimized.
    scale_pos, scale_neg : positive/negative exponents of :func:`ms_loss`.
    mining_threshold : relevancy level at and above which a candidate
        counts as a positive.
    """

    margin: float = 0.6
    relaxation: float = 0.1
    scale_pos: float = 2.0
    scale_neg: float = 40.0
    mining_threshold: float = 0.1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.relaxation < 0:
            raise ValueError(f"relaxation must be >= 0, got {self.relaxation}")
        if not (self.scale_pos > 0 and self.scale_neg > 0):
            raise ValueError(
                f"scale factors must be > 0, got {self.scale_pos}, {self.scale_neg}"
            )
        if not (0.0 < self.mining_threshold <= 1.0):
            raise ValueError(
                f"mining_threshold must be in (0, 1], got {self.mining_threshold}"
            )

    def check_relaxation(self, relevancy: RelevancyMatrix) -> None:
        """Warn when the relaxation width reaches the smallest positive label.

        Below that level the dead zone only absorbs exactly tied pairs;
        at or above it, pairs with genuinely different labels can fall
        inside as well. That is allowed (a wider dead zone keeps nearly
        tied pairs from dominating) but usually deliberate, hence a
        warning rather than an error.
        """
        mp = relevancy.min_positive
        if mp is not None and self.relaxation >= mp:
            warnings.warn(
                f"relaxation {self.relaxation} >= smallest positive relevancy {mp}",
                TauRelaxationWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class LossResult:
    """Loss value plus gradients with respect to the similarity matrices.

    ``grad_s_v2t`` and ``grad_s_t2v`` hold d(value)/dS for the
    video-to-text and text-to-video similarity matrices; a direction a
    loss never touched is ``None``. Entries not reached by any active
    term are exactly zero. ``kink_margins`` lists, for every hinge the
    loss evaluated, the distance of its argument from the kink; the
    finite-difference checker uses it to stay away from non-smooth
    points. ``triple_count`` is the number of summed triples (anchors,
    for the set-based smooth loss).
    """

    value: float
    grad_s_v2t: np.ndarray | None
    grad_s_t2v: np.ndarray | None
    triple_count: int
    kink_margins: np.ndarray = field(default_factory=lambda: np.empty(0), compare=False)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalOverflowError(f"loss value is {self.value}")
        if self.value < 0:
            raise ValueError(f"loss value must be non-negative, got {self.value}")

    @property
    def mean_value(self) -> float:
        """Value per summed triple (0 when nothing was summed)."""
        return self.value / self.triple_count if self.triple_count else 0.0


def _check_square_pair(s_v2t: SimilarityMatrix, s_t2v: SimilarityMatrix) -> int:
    n = s_v2t.shape[0]
    if s_v2t.shape != (n, n) or s_t2v.shape != (n, n):
        raise ShapeMismatchError(
            f"expected square batch matrices of equal size, got "
            f"{s_v2t.shape} and {s_t2v.shape}"
        )
    return n


def _check_triples(triplets: TripletSet, n: int, direction: str) -> np.ndarray:
    if triplets.direction != direction:
        raise ValueError(
            f"triplet set has direction {triplets.direction!r}, expected {direction!r}"
        )
    t = triplets.triples
    if len(triplets) and (t.min() < 0 or t.max() >= n):
        raise IndexOutOfRangeError(f"triplet indices out of range for batch size {n}")
    return t


def _pair_relevancies(
    relevancy: RelevancyMatrix, t: np.ndarray, direction: str
) -> tuple[np.ndarray, np.ndarray]:
    c = relevancy.data if direction == VIDEO_TO_TEXT else relevancy.data.T
    return c[t[:, 0], t[:, 1]], c[t[:, 0], t[:, 2]]


def _paired_hinge_direction(
    s: np.ndarray, t: np.ndarray, margins: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sum of ``[margins - S_ij + S_ik]_+`` plus its gradient and kink distances."""
    grad = np.zeros_like(s)
    if t.shape[0] == 0:
        return 0.0, grad, np.empty(0)
    i, j, k = t[:, 0], t[:, 1], t[:, 2]
    args = margins - s[i, j] + s[i, k]
    active = args > 0
    value = float(args[active].sum())
    coef = np.where(active, -1.0, 0.0)
    np.add.at(grad, (i, j), coef)
    np.add.at(grad, (i, k), -coef)
    return value, grad, np.abs(args)


def mi_mm_loss(
    s_v2t: SimilarityMatrix,
    s_t2v: SimilarityMatrix,
    triplets_v2t: TripletSet,
    triplets_t2v: TripletSet,
    cfg: LossConfig,
) -> LossResult:
    """Bidirectional max-margin triplet loss with a fixed margin.

    Every triple contributes ``[margin - S_ij + S_ik]_+`` in its own
    direction. An active hinge contributes -1 at (i, j) and +1 at (i, k)
    to that direction's gradient.
    """
    n = _check_square_pair(s_v2t, s_t2v)
    t1 = _check_triples(triplets_v2t, n, VIDEO_TO_TEXT)
    t2 = _check_triples(triplets_t2v, n, TEXT_TO_VIDEO)
    v1, g1, k1 = _paired_hinge_direction(s_v2t.data, t1, np.full(len(t1), cfg.margin))
    v2, g2, k2 = _paired_hinge_direction(s_t2v.data, t2, np.full(len(t2), cfg.margin))
    return LossResult(
        value=v1 + v2,
        grad_s_v2t=g1,
        grad_s_t2v=g2,
        triple_count=len(t1) + len(t2),
        kink_margins=np.concatenate([k1, k2]),
    )


def adaptive_mi_mm_loss(
    s_v2t: SimilarityMatrix,
    s_t2v: SimilarityMatrix,
    triplets_v2t: TripletSet,
    triplets_t2v: TripletSet,
    relevancy: RelevancyMatrix,
    cfg: LossConfig,
) -> LossResult:
    """Max-margin loss whose per-triple margin is ``c_ij * margin``.

    Identical to :func:`mi_mm_loss` except that each triple's required
    gap shrinks with the positive pair's relevancy, so partially matched
    positives are pushed less aggressively.
    """
    n = _check_square_pair(s_v2t, s_t2v)
    if relevancy.shape != (n, n):
        raise ShapeMismatchError(
            f"relevancy shape {relevancy.shape} does not match batch size {n}"
        )
    t1 = _check_triples(triplets_v2t, n, VIDEO_TO_TEXT)
    t2 = _check_triples(triplets_t2v, n, TEXT_TO_VIDEO)
    cij_1, _ = _pair_relevancies(relevancy, t1, VIDEO_TO_TEXT)
    cij_2, _ = _pair_relevancies(relevancy, t2, TEXT_TO_VIDEO)
    v1, g1, k1 = _paired_hinge_direction(s_v2t.data, t1, cij_1 * cfg.margin)
    v2, g2, k2 = _paired_hinge_direction(s_t2v.data, t2, cij_2 * cfg.margin)
    return LossResult(
        value=v1 + v2,
        grad_s_v2t=g1,
        grad_s_t2v=g2,
        triple_count=len(t1) + len(t2),
        kink_margins=np.concatenate([k1, k2]),
    )


def _sms_direction(
    s: np.ndarray,
    t: np.ndarray,
    cij: np.ndarray,
    cik: np.ndarray,
    cfg: LossConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    grad = np.zeros_like(s)
    if t.shape[0] == 0:
        return 0.0, grad, np.empty(0)
    i, j, k = t[:, 0], t[:, 1], t[:, 2]
    gap = cij - cik
    d = s[i, j] - s[i, k]

    args = np.empty_like(d)
    pos = gap > 0
    neg = gap < 0
    tie = ~(pos | neg)
    args[pos] = gap[pos] * cfg.margin - d[pos]
    args[neg] = -gap[neg] * cfg.margin + d[neg]
    args[tie] = np.abs(d[tie]) - cfg.relaxation

    active = args > 0
    value = float(args[active].sum())

    # Gradient coefficient at (i, j); the one at (i, k) is its negation.
    coef = np.zeros_like(d)
    coef[pos] = -1.0
    coef[neg] = 1.0
    coef[tie] = np.sign(d[tie])
    coef[~active] = 0.0
    np.add.at(grad, (i, j), coef)
    np.add.at(grad, (i, k), -coef)
    return value, grad, np.abs(args)


def sms_loss(
    s_v2t: SimilarityMatrix,
    s_t2v: SimilarityMatrix,
    triplets_v2t: TripletSet,
    triplets_t2v: TripletSet,
    relevancy: RelevancyMatrix,
    cfg: LossConfig,
) -> LossResult:
    """Sign-aware symmetric margin loss over both retrieval directions.

    Per triple, with ``R = c_ij - c_ik`` and ``d = S_ij - S_ik``:

    * ``R > 0``: add ``[R * margin - d]_+`` (positive must win by the
      scaled margin);
    * ``R < 0``: add ``[-R * margin + d]_+`` (the roles are reversed, so
      the "negative" must win);
    * ``R == 0``: add ``[|d| - relaxation]_+`` (tied pairs are pulled
      together until they differ by at most the relaxation width).

    Swapping a triple's positive and negative slots negates both R and d
    and leaves the contribution unchanged. Active-hinge gradients are
    +/-1 at (i, j) and the negation at (i, k); the tie branch uses
    ``sign(d)``, with subgradient 0 when the similarities are exactly
    equal.
    """
    n = _check_square_pair(s_v2t, s_t2v)
    if relevancy.shape != (n, n):
        raise ShapeMismatchError(
            f"relevancy shape {relevancy.shape} does not match batch size {n}"
        )
    t1 = _check_triples(triplets_v2t, n, VIDEO_TO_TEXT)
    t2 = _check_triples(triplets_t2v, n, TEXT_TO_VIDEO)
    cij_1, cik_1 = _pair_relevancies(relevancy, t1, VIDEO_TO_TEXT)
    cij_2, cik_2 = _pair_relevancies(relevancy, t2, TEXT_TO_VIDEO)
    v1, g1, k1 = _sms_direction(s_v2t.data, t1, cij_1, cik_1, cfg)
    v2, g2, k2 = _sms_direction(s_t2v.data, t2, cij_2, cik_2, cfg)
    return LossResult(
        value=v1 + v2,
        grad_s_v2t=g1,
        grad_s_t2v=g2,
        triple_count=len(t1) + len(t2),
        kink_margins=np.concatenate([k1, k2]),
    )


def ms_loss(s: SimilarityMatrix, sets: PositiveSets, cfg: LossConfig) -> LossResult:
    """Smooth set-based loss: per-anchor log-sum-exp over both set sides.

    For anchor i with positives P_i and negatives N_i::

        (1/a) log(1 + sum_{j in P_i} exp(-a (S_ij - margin)))
      + (1/b) log(1 + sum_{k in N_i} exp( b (S_ik - margin)))

    averaged over anchors, with a = scale_pos and b = scale_neg. Exponents
    are max-shifted before summation, so the value stays finite for any
    ``|scale * (S - margin)|`` up to ~700; past that the result would not
    be representable and :class:`NumericalOverflowError` is raised.

    The gradient at a positive entry is ``-w_j / n`` where ``w_j`` is that
    entry's softmax-style weight ``exp(-a (S_ij - margin))`` over
    ``1 + sum(...)``; negative entries get the mirrored positive sign.
    ``triple_count`` is the anchor count here.
    """
    data = s.data
    if data.shape != (sets.n_anchors, sets.n_candidates):
        raise ShapeMismatchError(
            f"similarity shape {data.shape} does not match "
            f"{sets.n_anchors} anchors x {sets.n_candidates} candidates"
        )
    n = sets.n_anchors
    grad = np.zeros_like(data)
    value = 0.0
    for i, (pos, neg) in enumerate(zip(sets.positives, sets.negatives)):
        if pos.size:
            x = -cfg.scale_pos * (data[i, pos] - cfg.margin)
            shift = max(0.0, float(x.max()))
            expx = np.exp(x - shift)
            denom = np.exp(-shift) + expx.sum()
            value += (shift + np.log(denom)) / cfg.scale_pos
            grad[i, pos] += -expx / denom / n
        if neg.size:
            y = cfg.scale_neg * (data[i, neg] - cfg.margin)
            shift = max(0.0, float(y.max()))
            expy = np.exp(y - shift)
            denom = np.exp(-shift) + expy.sum()
            value += (shift + np.log(denom)) / cfg.scale_neg
            grad[i, neg] += expy / denom / n
    value /= n
    if not np.isfinite(value):
        raise NumericalOverflowError("set-based loss overflowed despite max-shift")
    result = LossResult(
        value=value,
        grad_s_v2t=grad if sets.direction == VIDEO_TO_TEXT else None,
        grad_s_t2v=grad if sets.direction == TEXT_TO_VIDEO else None,
        triple_count=n,
    )
    return result


def ms_loss_limit(s: SimilarityMatrix, triplets: TripletSet, cfg: LossConfig) -> LossResult:
    """Large-scale limit of :func:`ms_loss`: two independent hinges per triple.

    Adds ``[margin - S_ij]_+ + [S_ik - margin]_+``: positives are pushed
    up to the margin and negatives below it, independently of each other.
    Subgradients are -1 at active positive hinges, +1 at active negative
    hinges.
    """
    data = s.data
    t = triplets.triples
    if len(t) and (
        t.min() < 0 or t[:, 0].max() >= data.shape[0] or t[:, 1:].max() >= data.shape[1]
    ):
        raise IndexOutOfRangeError(f"triplet indices out of range for {data.shape}")
    grad = np.zeros_like(data)
    if len(t):
        i, j, k = t[:, 0], t[:, 1], t[:, 2]
        pos_args = cfg.margin - data[i, j]
        neg_args = data[i, k] - cfg.margin
        value = float(pos_args[pos_args > 0].sum() + neg_args[neg_args > 0].sum())
        np.add.at(grad, (i, j), np.where(pos_args > 0, -1.0, 0.0))
        np.add.at(grad, (i, k), np.where(neg_args > 0, 1.0, 0.0))
        kinks = np.concatenate([np.abs(pos_args), np.abs(neg_args)])
    else:
        value, kinks = 0.0, np.empty(0)
    return LossResult(
        value=value,
        grad_s_v2t=grad if triplets.direction == VIDEO_TO_TEXT else None,
        grad_s_t2v=grad if triplets.direction == TEXT_TO_VIDEO else None,
        triple_count=len(t),
        kink_margins=kinks,
    )


def backprop_to_embeddings(
    grad_s: np.ndarray,
    v: FeatureMatrix,
    t: FeatureMatrix,
) -> tuple[np.ndarray, np.ndarray]:
    """Chain a similarity-matrix gradient back to raw embedding rows.

    With ``S = V T^T`` over row-normalized V and T, the embedding
    gradients are ``grad_s @ T`` and ``grad_s^T @ V``; each row gradient
    is then projected onto the tangent space of the unit sphere at that
    row and divided by the row's pre-normalization norm, which is the
    exact derivative of the normalization itself. Matrices built directly
    as normalized (no recorded pre-norms) use norm 1.
    """
    if not (v.normalized and t.normalized):
        raise ValueError("backprop_to_embeddings expects normalized feature matrices")
    g = np.asarray(grad_s, dtype=np.float64)
    if g.shape != (v.n_rows, t.n_rows):
        raise ShapeMismatchError(
            f"grad_s shape {g.shape} does not match {v.n_rows} x {t.n_rows}"
        )
    grad_v = g @ t.data
    grad_t = g.T @ v.data
    for grad, feats in ((grad_v, v), (grad_t, t)):
        radial = np.sum(grad * feats.data, axis=1, keepdims=True)
        grad -= radial * feats.data
        if feats.pre_norms is not None:
            grad /= feats.pre_norms[:, None]
    return grad_v, grad_t


LossEvaluator = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, np.ndarray, np.ndarray]]


def compute_loss(
    name: str,
    s_v2t: SimilarityMatrix,
    s_t2v: SimilarityMatrix,
    relevancy: RelevancyMatrix,
    cfg: LossConfig,
    triplets_v2t: TripletSet | None = None,
    triplets_t2v: TripletSet | None = None,
    sets_v2t: PositiveSets | None = None,
    sets_t2v: PositiveSets | None = None,
) -> LossResult:
    """Uniform bidirectional entry point over the loss family.

    Triplet-based losses need both triplet sets; the set-based smooth
    loss needs both positive-set partitions and is applied to each
    direction, with values and counts summed.
    """
    if name not in LOSS_NAMES:
        raise ValueError(f"unknown loss {name!r}, expected one of {LOSS_NAMES}")
    if name == "ms":
        if sets_v2t is None or sets_t2v is None:
            raise ValueError("the set-based loss needs positive sets for both directions")
        r1 = ms_loss(s_v2t, sets_v2t, cfg)
        r2 = ms_loss(s_t2v, sets_t2v, cfg)
        return LossResult(
            value=r1.value + r2.value,
            grad_s_v2t=r1.grad_s_v2t,
            grad_s_t2v=r2.grad_s_t2v,
            triple_count=r1.triple_count + r2.triple_count,
        )
    if triplets_v2t is None or triplets_t2v is None:
        raise ValueError(f"loss {name!r} needs triplet sets for both directions")
    if name == "mi_mm":
        return mi_mm_loss(s_v2t, s_t2v, triplets_v2t, triplets_t2v, cfg)
    if name == "adaptive_mi_mm":
        return adaptive_mi_mm_loss(s_v2t, s_t2v, triplets_v2t, triplets_t2v, relevancy, cfg)
    if name == "sms":
        return sms_loss(s_v2t, s_t2v, triplets_v2t, triplets_t2v, relevancy, cfg)
    # ms_limit: one independent result per direction
    r1 = ms_loss_limit(s_v2t, triplets_v2t, cfg)
    r2 = ms_loss_limit(s_t2v, triplets_t2v, cfg)
    return LossResult(
        value=r1.value + r2.value,
        grad_s_v2t=r1.grad_s_v2t,
        grad_s_t2v=r2.grad_s_t2v,
        triple_count=r1.triple_count + r2.triple_count,
        kink_margins=np.concatenate([r1.kink_margins, r2.kink_margins]),
    )


def make_loss_evaluator(
    name: str,
    relevancy: RelevancyMatrix,
    cfg: LossConfig,
) -> LossEvaluator:
    """Close over fixed mining so a loss becomes a function of raw features.

    Triplets (threshold partition, all pairs) and positive sets are built
    once from the relevancy matrix; the returned callable maps raw
    (pre-normalization) video and text matrices to
    ``(value, grad_video, grad_text, kink_margins)`` through the full
    normalize -> similarity -> loss chain. Keeping the mining fixed makes
    the map piecewise smooth in the features, which is what a
    finite-difference probe requires.
    """
    sets_v2t = build_positive_sets(relevancy, cfg.mining_threshold, VIDEO_TO_TEXT)
    sets_t2v = build_positive_sets(relevancy, cfg.mining_threshold, TEXT_TO_VIDEO)
    trip_v2t = enumerate_triplets(sets_v2t, "all_pairs")
    trip_t2v = enumerate_triplets(sets_t2v, "all_pairs")

    def evaluate(v_raw: np.ndarray, t_raw: np.ndarray):
        vf = l2_normalize(FeatureMatrix(v_raw))
        tf = l2_normalize(FeatureMatrix(t_raw))
        s1 = cosine_similarity(vf, tf)
        s2 = cosine_similarity(tf, vf)
        res = compute_loss(
            name, s1, s2, relevancy, cfg,
            triplets_v2t=trip_v2t, triplets_t2v=trip_t2v,
            sets_v2t=sets_v2t, sets_t2v=sets_t2v,
        )
        grad_v = np.zeros_like(vf.data)
        grad_t = np.zeros_like(tf.data)
        if res.grad_s_v2t is not None:
            gv, gt = backprop_to_embeddings(res.grad_s_v2t, vf, tf)
            grad_v = grad_v + gv
            grad_t = grad_t + gt
        if res.grad_s_t2v is not None:
            gt2, gv2 = backprop_to_embeddings(res.grad_s_t2v, tf, vf)
            grad_t = grad_t + gt2
            grad_v = grad_v + gv2
        return res.value, grad_v, grad_t, res.kink_margins

    return evaluate


def finite_difference_check(
    loss: str | LossEvaluator,
    bundle: DatasetBundle,
    cfg: LossConfig,
    step: float = 1e-6,
) -> float:
    """Compare analytic feature gradients against central differences.

    ``loss`` is a loss name or an evaluator from
    :func:`make_loss_evaluator`; the bundle's feature matrices are the
    raw evaluation point. Every raw coordinate is perturbed by ``step``
    both ways and the centered slope is compared to the analytic entry.
    Coordinates are only checked while every hinge argument sits at least
    ``10 * step`` away from its kink (a single-coordinate perturbation
    of that size cannot flip any hinge then); if some argument is closer,
    all coordinates are skipped and the check reports 0 over an empty
    set, so callers should probe such instances with fresh data instead.

    Returns the maximum of ``|fd - analytic| / max(1, |fd|, |analytic|)``
    over checked coordinates; the unit floor makes near-zero entries
    compare absolutely, which matches their scale here (subgradient sums
    of unit terms).
    """
    if not (1e-8 <= step <= 1e-4):
        raise ValueError(f"step must lie in [1e-8, 1e-4], got {step}")
    evaluator = loss if callable(loss) else make_loss_evaluator(loss, bundle.relevancy, cfg)
    v0 = np.array(bundle.video_features.data, dtype=np.float64)
    t0 = np.array(bundle.text_features.data, dtype=np.float64)
    _, grad_v, grad_t, kinks = evaluator(v0, t0)
    if kinks.size and kinks.min() < 10.0 * step:
        return 0.0
    worst = 0.0
    for arr, grad in ((v0, grad_v), (t0, grad_t)):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for c in range(flat.size):
            orig = flat[c]
            flat[c] = orig + step
            f_plus = evaluator(v0, t0)[0]
            flat[c] = orig - step
            f_minus = evaluator(v0, t0)[0]
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(fd - gflat[c]) / max(1.0, abs(fd), abs(gflat[c]))
            worst = max(worst, err)
    return worst
