"""Evaluation metrics: detection mAP, relation F1, text overlap scores, navigation rates.

Detection follows the greedy matching convention: predictions are visited in
order of descending confidence (input order breaks ties) and each one claims
the not-yet-matched ground-truth box of the same image and category with the
highest IoU, counting as a true positive when that IoU reaches the threshold.
Average precision is the all-points interpolated area under the resulting
precision/recall curve, and mAP averages it over the categories present in
the ground truth.

Box IoU treats coordinates as inclusive integer cell indices, so a box covers
(x2 - x1 + 1) * (y2 - y1 + 1) cells.

Text metrics operate on a shared tokenizer: casefold, strip punctuation
unless it sits between two digits (keeping "3.5" intact), split on
whitespace.  BLEU uses clipped n-gram precision with the standard brevity
penalty and no smoothing; any empty n-gram order zeroes the score.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .errors import (
    EmptyEpisodeSet,
    EmptyGroundTruth,
    InvariantViolation,
    LengthMismatch,
)
from .markup import Box, Pos3

__all__ = [
    "DetPrediction",
    "DetGroundTruth",
    "iou",
    "map50",
    "RelationTriple",
    "LocalizedTriple",
    "relation_overlap",
    "relation_f1",
    "relation_f1_localized",
    "PRF1",
    "tokenize",
    "bleu",
    "bleu_corpus",
    "rouge_l",
    "accuracy",
    "NavEpisode",
    "NavMetrics",
    "nav_metrics",
    "EvalReport",
]


# --- Detection ------------------------------------------------------------


@dataclass(frozen=True)
class DetPrediction:
    category: str
    box: Box
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "confidence", float(self.confidence))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class DetGroundTruth:
    category: str
    box: Box


def iou(a: Box, b: Box) -> float:
    """Intersection over union with inclusive integer extents."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    inter = max(0, ix2 - ix1 + 1) * max(0, iy2 - iy1 + 1)
    if inter == 0:
        return 0.0
    area_a = (a.x2 - a.x1 + 1) * (a.y2 - a.y1 + 1)
    area_b = (b.x2 - b.x1 + 1) * (b.y2 - b.y1 + 1)
    return inter / (area_a + area_b - inter)


def _interpolated_ap(recalls: list[float], precisions: list[float]) -> float:
    # all-points interpolation: precision envelope from the right,
    # summed over recall increments
    mrec = [0.0, *recalls, 1.0]
    mpre = [0.0, *precisions, 0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return sum(
        (mrec[i + 1] - mrec[i]) * mpre[i + 1]
        for i in range(len(mrec) - 1)
        if mrec[i + 1] != mrec[i]
    )


def map50(
    preds: Mapping[str, Sequence[DetPrediction]],
    gts: Mapping[str, Sequence[DetGroundTruth]],
    iou_threshold: float = 0.5,
) -> tuple[dict[str, float], float]:
    """Per-category AP and their mean, both as fractions in [0, 1].

    ``preds`` and ``gts`` map image ids to box lists.  Categories that only
    appear in predictions are ignored; categories with ground truth but no
    predictions score zero.  Raises EmptyGroundTruth when no image has any
    ground-truth box.
    """
    gt_boxes: dict[str, list[DetGroundTruth]] = {img: list(seq) for img, seq in gts.items()}
    n_gt = Counter(g.category for seq in gt_boxes.values() for g in seq)
    if not n_gt:
        raise EmptyGroundTruth("no ground-truth boxes to evaluate against")

    flat: list[tuple[str, DetPrediction]] = [
        (img, p) for img, seq in preds.items() for p in seq
    ]
    order = sorted(range(len(flat)), key=lambda i: (-flat[i][1].confidence, i))

    matched: dict[str, list[bool]] = {img: [False] * len(seq) for img, seq in gt_boxes.items()}
    outcomes: list[tuple[str, bool]] = []
    for i in order:
        img, pred = flat[i]
        best_j = -1
        best_iou = 0.0
        for j, g in enumerate(gt_boxes.get(img, ())):
            if matched[img][j] or g.category != pred.category:
                continue
            v = iou(pred.box, g.box)
            if v > best_iou:
                best_iou = v
                best_j = j
        hit = best_j >= 0 and best_iou >= iou_threshold
        if hit:
            matched[img][best_j] = True
        outcomes.append((pred.category, hit))

    per_class: dict[str, float] = {}
    for category in sorted(n_gt):
        tp = 0
        fp = 0
        recalls: list[float] = []
        precisions: list[float] = []
        for cat, hit in outcomes:
            if cat != category:
                continue
            if hit:
                tp += 1
            else:
                fp += 1
            recalls.append(tp / n_gt[category])
            precisions.append(tp / (tp + fp))
        per_class[category] = _interpolated_ap(recalls, precisions)
    mean_ap = sum(per_class.values()) / len(per_class)
    return per_class, mean_ap


# --- Relations -------------------------------------------------------------


@dataclass(frozen=True)
class RelationTriple:
    """A (subject category, object category, relation) assertion.

    Fields are trimmed and case-folded on construction so equality means
    semantic equality; none may end up empty.
    """

    subject_cat: str
    object_cat: str
    relation: str

    def __post_init__(self):
        for name in ("subject_cat", "object_cat", "relation"):
            value = getattr(self, name).strip().casefold()
            if not value:
                raise InvariantViolation(f"triple field {name!r} is empty")
            object.__setattr__(self, name, value)


class PRF1(NamedTuple):
    precision: float
    recall: float
    f1: float


def relation_overlap(
    preds: Sequence[RelationTriple], gts: Sequence[RelationTriple]
) -> tuple[int, int, int]:
    """Multiset overlap: (matched count, prediction count, ground-truth count)."""
    common = Counter(preds) & Counter(gts)
    return sum(common.values()), len(preds), len(gts)


def _prf1(tp: int, n_pred: int, n_gt: int) -> PRF1:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    # 2PR/(P+R) reduced to counts: exact where the quotient is representable
    f1 = 2 * tp / (n_pred + n_gt) if n_pred + n_gt else 0.0
    return PRF1(precision, recall, f1)


def relation_f1(preds: Sequence[RelationTriple], gts: Sequence[RelationTriple]) -> PRF1:
    return _prf1(*relation_overlap(preds, gts))


@dataclass(frozen=True)
class LocalizedTriple:
    """A relation triple tied to its subject and object boxes."""

    triple: RelationTriple
    subject_box: Box
    object_box: Box


def relation_f1_localized(
    preds: Sequence[LocalizedTriple],
    gts: Sequence[LocalizedTriple],
    iou_threshold: float = 0.5,
) -> PRF1:
    """Triple scoring gated on localization agreement.

    A prediction counts only when an unmatched ground truth carries the same
    triple and both its boxes overlap the prediction's at the threshold;
    predictions claim the candidate whose weaker box overlap is highest, in
    input order.
    """
    matched = [False] * len(gts)
    tp = 0
    for pred in preds:
        best_j = -1
        best_v = -1.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.triple != pred.triple:
                continue
            v = min(iou(pred.subject_box, gt.subject_box), iou(pred.object_box, gt.object_box))
            if v >= iou_threshold and v > best_v:
                best_v = v
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            tp += 1
    return _prf1(tp, len(preds), len(gts))


# --- Text overlap ------------------------------------------------------------


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> tuple[str, ...]:
    folded = text.casefold()
    kept = []
    for i, ch in enumerate(folded):
        if _is_punct(ch):
            between_digits = (
                i > 0 and folded[i - 1].isdigit()
                and i + 1 < len(folded) and folded[i + 1].isdigit()
            )
            if not between_digits:
                continue
        kept.append(ch)
    return tuple("".join(kept).split())


def _token_list(value, what: str) -> tuple[str, ...]:
    # a bare string here means someone skipped tokenize(); iterating it would
    # silently score characters
    if isinstance(value, str):
        raise InvariantViolation(f"{what} must be a token sequence; run tokenize() first")
    return tuple(value)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(c: int, ref_lengths: Sequence[int]) -> int:
    # ties go to the shorter reference
    return min(ref_lengths, key=lambda r: (abs(r - c), r))


def bleu_corpus(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    n: int = 4,
) -> float:
    """Corpus BLEU-n over token lists: pooled clipped precisions, geometric mean, brevity penalty."""
    if len(candidates) != len(references):
        raise LengthMismatch(
            f"{len(candidates)} candidates against {len(references)} reference sets"
        )
    if n < 1:
        raise InvariantViolation("n-gram order must be at least 1")
    clipped = [0] * n
    total = [0] * n
    c_len = 0
    r_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise InvariantViolation("every segment needs at least one reference")
        cand_tokens = _token_list(cand, "candidate")
        ref_tokens = [_token_list(r, "reference") for r in refs]
        c_len += len(cand_tokens)
        r_len += _closest_ref_length(len(cand_tokens), [len(r) for r in ref_tokens])
        for i in range(1, n + 1):
            counts = _ngrams(cand_tokens, i)
            if not counts:
                continue
            max_ref: Counter = Counter()
            for rt in ref_tokens:
                for gram, cnt in _ngrams(rt, i).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            total[i - 1] += sum(counts.values())
            clipped[i - 1] += sum(min(cnt, max_ref[gram]) for gram, cnt in counts.items())
    if c_len == 0 or any(t == 0 for t in total) or any(cl == 0 for cl in clipped):
        return 0.0
    log_prec = sum(math.log(cl / t) for cl, t in zip(clipped, total)) / n
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_prec)


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int = 4) -> float:
    """Single-segment BLEU-n (the corpus score of one segment)."""
    return bleu_corpus([candidate], [references], n=n)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Plain LCS-based F1 over token lists."""
    cand = _token_list(candidate, "candidate")
    ref = _token_list(reference, "reference")
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _normalize_answer(text: str) -> str:
    return text.strip().casefold().rstrip(".")


def accuracy(preds: Sequence[str], gts: Sequence[str]) -> float:
    """Exact-match rate after trimming, casefolding and dropping trailing periods."""
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions against {len(gts)} answers")
    if not preds:
        return 0.0
    hits = sum(_normalize_answer(p) == _normalize_answer(g) for p, g in zip(preds, gts))
    return hits / len(preds)


# --- Navigation ----------------------------------------------------------------


def _dist(a: Pos3, b: Pos3) -> float:
    return math.dist(a.as_tuple(), b.as_tuple())


@dataclass(frozen=True)
class NavEpisode:
    predicted_path: tuple[Pos3, ...]
    goal: Pos3
    shortest_path_length: float
    success_radius: float

    def __post_init__(self):
        object.__setattr__(self, "predicted_path", tuple(self.predicted_path))
        if not self.predicted_path:
            raise InvariantViolation("predicted path must hold at least one waypoint")
        if self.shortest_path_length < 0:
            raise InvariantViolation("shortest path length cannot be negative")
        if not self.success_radius > 0:
            raise InvariantViolation("success radius must be positive")

    def path_length(self) -> float:
        pts = self.predicted_path
        return sum(_dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))


class NavMetrics(NamedTuple):
    ne: float
    sr: float
    osr: float
    spl: float


def nav_metrics(episodes: Sequence[NavEpisode]) -> NavMetrics:
    """Navigation error (scene units) plus success, oracle-success and SPL rates (percent).

    Success means the final waypoint lies within the episode radius of the
    goal; oracle success relaxes that to any waypoint.  SPL scales success by
    shortest/max(taken, shortest) path length, and a degenerate episode with
    both lengths zero scores its plain success.
    """
    if not episodes:
        raise EmptyEpisodeSet("no episodes to aggregate")
    ne_sum = sr_sum = osr_sum = spl_sum = 0.0
    for ep in episodes:
        ne = _dist(ep.predicted_path[-1], ep.goal)
        success = ne <= ep.success_radius
        oracle = any(_dist(p, ep.goal) <= ep.success_radius for p in ep.predicted_path)
        taken = ep.path_length()
        best = ep.shortest_path_length
        if success:
            spl = 1.0 if max(taken, best) == 0.0 else best / max(taken, best)
        else:
            spl = 0.0
        ne_sum += ne
        sr_sum += success
        osr_sum += oracle
        spl_sum += spl
    n = len(episodes)
    return NavMetrics(ne_sum / n, 100.0 * sr_sum / n, 100.0 * osr_sum / n, 100.0 * spl_sum / n)


# --- Reporting ------------------------------------------------------------------


@dataclass
class EvalReport:
    """Result bundle for one task: headline metrics plus optional per-class detail."""

    task: str
    count: int
    metrics: dict[str, float] = field(default_factory=dict)
    per_class: dict[str, float] | None = None
    unsupported: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"task": self.task, "count": self.count, "metrics": self.metrics}
        if self.per_class is not None:
            out["per_class"] = self.per_class
        if self.unsupported:
            out["unsupported"] = list(self.unsupported)
        return out

    def render(self) -> str:
        lines = [f"task: {self.task}", f"records: {self.count}"]
        for name, value in self.metrics.items():
            lines.append(f"{name}: {value:.4f}")
        if self.per_class is not None:
            lines.append("per-class AP:")
            for name, value in sorted(self.per_class.items()):
                lines.append(f"  {name}: {value:.4f}")
        if self.unsupported:
            lines.append("not computed here: " + ", ".join(self.unsupported))
        return "\n".join(lines)
