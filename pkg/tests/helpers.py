"""Shared generators for the test suite.

The doc generator is deliberately independent of the library's own
serialization logic: it assembles node tuples directly so roundtrip tests
exercise parse/emit rather than mirroring them.
"""

import random

from rsvl.markup import (
    Box,
    Det,
    MarkupDoc,
    Pos,
    Pos3,
    Pose6,
    PoseSeq,
    Ref,
    Rel,
    Task,
    TaskKind,
    Text,
)

_WORDS = (
    "ship", "harbor", "runway", "aircraft", "bridge", "tank", "vehicle",
    "the", "a", "two", "near", "left", "crossing", "Übergang", "路口",
)


def _text_value(rng: random.Random) -> str:
    n = rng.randint(1, 5)
    value = " ".join(rng.choice(_WORDS) for _ in range(n))
    return value + rng.choice(["", " ", ".", ", ", "\n"])


def _float(rng: random.Random) -> float:
    kind = rng.random()
    if kind < 0.3:
        return float(rng.randint(-50, 50))
    if kind < 0.6:
        return round(rng.uniform(-100.0, 100.0), rng.randint(1, 6))
    return rng.uniform(-1e6, 1e6)


def _box(rng: random.Random) -> Box:
    x1 = rng.randint(0, 999)
    y1 = rng.randint(0, 999)
    return Box(x1, y1, rng.randint(x1, 999), rng.randint(y1, 999))


def _node(rng: random.Random):
    pick = rng.randrange(7)
    if pick == 0:
        return Text(_text_value(rng))
    if pick == 1:
        return Ref(" ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 3))))
    if pick == 2:
        return Rel(rng.choice(["near", "driving on", "parked alongside", "intersects with"]))
    if pick == 3:
        return Task(rng.choice(list(TaskKind)))
    if pick == 4:
        return Pos(Pos3(_float(rng), _float(rng), _float(rng)))
    if pick == 5:
        poses = tuple(
            Pose6(*(_float(rng) for _ in range(6)))
            for _ in range(rng.randint(1, 3))
        )
        return PoseSeq(poses)
    return Det(tuple(_box(rng) for _ in range(rng.randint(1, 4))))


def random_doc(rng: random.Random, max_nodes: int = 6) -> MarkupDoc:
    """A structurally valid doc: no adjacent Text nodes, all payloads legal."""
    nodes = []
    for _ in range(rng.randint(0, max_nodes)):
        node = _node(rng)
        while isinstance(node, Text) and nodes and isinstance(nodes[-1], Text):
            node = _node(rng)
        nodes.append(node)
    return MarkupDoc(tuple(nodes))


# --- detection oracle -------------------------------------------------------
#
# Exact-arithmetic re-derivation of mean average precision: IoU by
# enumerating integer grid cells into sets, matching and AP with Fractions.
# Slow and obvious on purpose.

from fractions import Fraction

from rsvl.metrics import DetGroundTruth, DetPrediction


def _cells(box: Box) -> set:
    return {
        (x, y)
        for x in range(box.x1, box.x2 + 1)
        for y in range(box.y1, box.y2 + 1)
    }


def iou_exact(a: Box, b: Box) -> Fraction:
    ca, cb = _cells(a), _cells(b)
    return Fraction(len(ca & cb), len(ca | cb))


def oracle_map(preds_by_img, gts_by_img, threshold=Fraction(1, 2)):
    """Per-class AP and mean as exact Fractions."""
    classes = sorted({g.category for gs in gts_by_img.values() for g in gs})
    matched = {img: [False] * len(gs) for img, gs in gts_by_img.items()}
    per_class = {}
    for cat in classes:
        ranked = sorted(
            (
                (img, p)
                for img, ps in preds_by_img.items()
                for p in ps
                if p.category == cat
            ),
            key=lambda row: -row[1].confidence,
        )
        n_gt = sum(
            1 for gs in gts_by_img.values() for g in gs if g.category == cat
        )
        hits = []
        for img, p in ranked:
            best, best_iou = None, None
            for gi, g in enumerate(gts_by_img.get(img, ())):
                if g.category != cat or matched[img][gi]:
                    continue
                v = iou_exact(p.box, g.box)
                if v >= threshold and (best_iou is None or v > best_iou):
                    best, best_iou = gi, v
            if best is not None:
                matched[img][best] = True
            hits.append(best is not None)
        precisions, recalls, tp = [], [], 0
        for k, hit in enumerate(hits, start=1):
            tp += hit
            precisions.append(Fraction(tp, k))
            recalls.append(Fraction(tp, n_gt))
        ap, prev_r = Fraction(0), Fraction(0)
        for i, r in enumerate(recalls):
            if r > prev_r:
                ap += (r - prev_r) * max(precisions[i:])
                prev_r = r
        per_class[cat] = ap
    mean = (
        sum(per_class.values(), Fraction(0)) / len(per_class)
        if per_class
        else Fraction(0)
    )
    return per_class, mean


def random_det_instance(rng: random.Random):
    """Small random detection problem with distinct confidences."""

    def box():
        x1 = rng.randint(0, 24)
        y1 = rng.randint(0, 24)
        return Box(x1, y1, x1 + rng.randint(0, 11), y1 + rng.randint(0, 11))

    images = [f"im{k}" for k in range(rng.randint(1, 2))]
    classes = ["c0", "c1"][: rng.randint(1, 2)]
    confs = iter(rng.sample(range(1, 100000), 60))
    preds, gts = {}, {}
    for img in images:
        preds[img] = []
        gts[img] = []
        for cat in classes:
            for _ in range(rng.randint(0, 5)):
                gts[img].append(DetGroundTruth(cat, box()))
            for _ in range(rng.randint(0, 5)):
                preds[img].append(
                    DetPrediction(cat, box(), next(confs) / 100000.0)
                )
    if not any(gts.values()):
        img = images[0]
        gts[img].append(DetGroundTruth(classes[0], box()))
    return preds, gts
