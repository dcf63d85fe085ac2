"""Multi-instance retrieval metrics: mAP and nDCG in both directions.

Rankings are induced per anchor by sorting candidates on descending
similarity, ties broken by ascending candidate index for
reproducibility. Mean average precision binarizes the soft labels with a
configurable relevance threshold (default: any strictly positive
relevancy counts as relevant); nDCG consumes the soft labels directly as
gains. Anchors with no relevant candidate cannot be scored and are
excluded from the corresponding mean rather than scored zero, which
would punish label sparsity instead of ranking quality; the report
carries their count per direction. The nDCG mean excludes the all-zero
subset of those anchors.

Both metrics depend on similarities only through the induced ordering,
so any strictly increasing transform of the similarity matrix leaves the
report unchanged. Reported values are percentages in [0, 100].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import RelevancyMatrix, SimilarityMatrix
from .exceptions import InvalidThresholdError, ShapeMismatchError

REPORT_KEYS = (
    "map_v2t",
    "map_t2v",
    "map_avg",
    "ndcg_v2t",
    "ndcg_t2v",
    "ndcg_avg",
    "skipped_anchors_v2t",
    "skipped_anchors_t2v",
)


@dataclass(frozen=True)
class RetrievalReport:
    """Evaluation summary; metric fields are percentages in [0, 100].

    ``skipped_anchors_*`` count anchors excluded from that direction's
    mAP mean because no candidate reached the relevance threshold.
    """

    map_v2t: float
    map_t2v: float
    map_avg: float
    ndcg_v2t: float
    ndcg_t2v: float
    ndcg_avg: float
    skipped_anchors_v2t: int = 0
    skipped_anchors_t2v: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Flat key-value block with values truncated to 3 significant digits."""
        lines = []
        for key in REPORT_KEYS:
            value = getattr(self, key)
            if key.startswith("skipped"):
                lines.append(f"{key} {value}")
            else:
                lines.append(f"{key} {format_percent(value)}")
        return "\n".join(lines)


def format_percent(value: float, digits: int = 3) -> str:
    """First ``digits`` significant digits without rounding.

    Truncation (not rounding) keeps printed values comparable across
    tools that follow the same reporting convention.
    """
    if value == 0:
        return "0.00"
    exponent = math.floor(math.log10(abs(value)))
    scale = 10.0 ** (digits - 1 - exponent)
    truncated = math.trunc(value * scale) / scale
    decimals = max(0, digits - 1 - exponent)
    return f"{truncated:.{decimals}f}"


def average_precision(ranking, relevant) -> float:
    """AP of one ranked list against a set of relevant items.

    Mean over relevant items of the precision at their rank; the ranking
    must be a permutation of all candidate indices.
    """
    order = np.asarray(ranking, dtype=np.int64)
    rel = frozenset(int(r) for r in relevant)
    if not rel:
        raise ValueError("relevant set must be non-empty")
    if len(set(order.tolist())) != order.size:
        raise ValueError("ranking contains duplicate indices")
    if not rel.issubset(set(order.tolist())):
        raise ValueError("relevant items missing from the ranking")
    hits = 0
    total = 0.0
    for rank, item in enumerate(order, start=1):
        if int(item) in rel:
            hits += 1
            total += hits / rank
    return total / len(rel)


def ndcg(ranking, gains) -> float:
    """Normalized discounted cumulative gain of one ranked list.

    ``gains[c]`` is the non-negative gain of candidate ``c``; at least
    one gain must be positive. Rank r (1-based) is discounted by
    ``log2(r + 1)``; the normalizer is the DCG of the gains sorted
    descending, so the result lies in [0, 1].
    """
    order = np.asarray(ranking, dtype=np.int64)
    g = np.asarray(gains, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("gains must be non-negative")
    if not np.any(g > 0):
        raise ValueError("gains must include at least one positive value")
    discounts = 1.0 / np.log2(np.arange(2, order.size + 2))
    dcg = float(np.sum(g[order] * discounts))
    ideal = float(np.sum(np.sort(g)[::-1] * discounts))
    return dcg / ideal


def rank_candidates(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending index."""
    return np.argsort(-scores, kind="stable")


def _evaluate_direction(
    s: np.ndarray, c: np.ndarray, threshold: float | None
) -> tuple[float, float, int]:
    ap_values = []
    ndcg_values = []
    skipped = 0
    for scores, gains in zip(s, c):
        relevant = np.flatnonzero(gains > 0 if threshold is None else gains >= threshold)
        order = rank_candidates(scores)
        if relevant.size == 0:
            skipped += 1
        else:
            ap_values.append(average_precision(order, relevant))
        if np.any(gains > 0):
            ndcg_values.append(ndcg(order, gains))
    mean_ap = float(np.mean(ap_values)) if ap_values else 0.0
    mean_ndcg = float(np.mean(ndcg_values)) if ndcg_values else 0.0
    return mean_ap, mean_ndcg, skipped


def evaluate(
    s: SimilarityMatrix,
    relevancy: RelevancyMatrix,
    relevance_threshold: float | None = None,
) -> RetrievalReport:
    """Score a similarity matrix against soft labels in both directions.

    Video anchors rank texts along rows; text anchors rank videos along
    the transposed matrices. ``relevance_threshold`` binarizes labels for
    mAP (``None`` counts any strictly positive label as relevant);
    it must lie in (0, 1] otherwise.
    """
    if s.shape != relevancy.shape:
        raise ShapeMismatchError(
            f"similarity shape {s.shape} does not match relevancy {relevancy.shape}"
        )
    if relevance_threshold is not None and not (0.0 < relevance_threshold <= 1.0):
        raise InvalidThresholdError(
            f"relevance_threshold must be in (0, 1], got {relevance_threshold}"
        )
    map_v2t, ndcg_v2t, skip_v2t = _evaluate_direction(
        s.data, relevancy.data, relevance_threshold
    )
    map_t2v, ndcg_t2v, skip_t2v = _evaluate_direction(
        s.data.T, relevancy.data.T, relevance_threshold
    )
    return RetrievalReport(
        map_v2t=100.0 * map_v2t,
        map_t2v=100.0 * map_t2v,
        map_avg=100.0 * (map_v2t + map_t2v) / 2.0,
        ndcg_v2t=100.0 * ndcg_v2t,
        ndcg_t2v=100.0 * ndcg_t2v,
        ndcg_avg=100.0 * (ndcg_v2t + ndcg_t2v) / 2.0,
        skipped_anchors_v2t=skip_v2t,
        skipped_anchors_t2v=skip_t2v,
    )
