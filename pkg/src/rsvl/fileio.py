"""File formats: instruction-record JSONL, annotation JSON, weight and curve files.

Records travel as UTF-8 JSONL with LF line endings, one object per line with
exactly the keys image_refs, modality, task, prompt, response (in that
order when written here).  Annotation and evaluation inputs are JSON arrays;
decoder weights are a single JSON object.  Full layouts with examples live in
docs/formats.md.

Loaders raise SchemaError pointing at the offending record index for any
structural problem and print a warning to stderr for keys they do not know,
so that a typo in an optional key does not silently drop data.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .builders import (
    ImageAnnotation,
    InstructionRecord,
    ObjectAnnotation,
    RelationAnnotation,
    SceneRecord,
    TaskType,
)
from .errors import SchemaError, ToolkitError
from .markup import Box, Modality, Pos3, Pose6
from .metrics import DetGroundTruth, DetPrediction, RelationTriple
from .trajectory import PARAM_FIELDS, DecoderConfig, DecoderWeights

__all__ = [
    "RECORD_KEYS",
    "WEIGHT_KEYS",
    "record_to_dict",
    "write_records",
    "read_records",
    "read_record_lines",
    "parse_record_line",
    "load_image_annotations",
    "load_vqa_items",
    "load_relation_items",
    "load_decomposition_items",
    "load_decision_items",
    "load_scene_records",
    "load_synonyms",
    "load_det_predictions",
    "load_det_ground_truth",
    "load_triple_file",
    "load_decomposition_eval",
    "load_text_eval",
    "load_similarity_scores",
    "TextEvalRow",
    "load_path_predictions",
    "load_nav_ground_truth",
    "save_weights",
    "load_weights",
    "load_latent",
    "load_targets",
    "write_loss_curve",
    "VqaItem",
    "DecompositionItem",
    "DecisionItem",
]

RECORD_KEYS = ("image_refs", "modality", "task", "prompt", "response")
WEIGHT_KEYS = ("d_e", "d_h") + PARAM_FIELDS


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


# --- Structural helpers -------------------------------------------------------


def _require_keys(
    obj: dict,
    required: Sequence[str],
    optional: Sequence[str],
    index: int | None,
    *,
    reject_unknown: bool = False,
):
    if not isinstance(obj, dict):
        raise SchemaError(f"expected an object, got {type(obj).__name__}", index)
    for key in required:
        if key not in obj:
            raise SchemaError(f"missing key {key!r}", index)
    for key in obj:
        if key not in required and key not in optional:
            if reject_unknown:
                raise SchemaError(f"unknown key {key!r}", index)
            _warn(f"record {index}: ignoring unknown key {key!r}" if index is not None
                  else f"ignoring unknown key {key!r}")


def _as_str(obj: dict, key: str, index: int | None) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(f"{key!r} must be a string, got {type(value).__name__}", index)
    return value


def _as_int(value, what: str, index: int | None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} must be an integer, got {value!r}", index)
    return value


def _as_number(value, what: str, index: int | None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{what} must be a number, got {value!r}", index)
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise SchemaError(f"{what} must be finite, got {value!r}", index)
    return value


def _as_str_list(obj: dict, key: str, index: int | None, *, allow_empty=True) -> tuple[str, ...]:
    value = obj[key]
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise SchemaError(f"{key!r} must be a list of strings", index)
    if not value and not allow_empty:
        raise SchemaError(f"{key!r} must not be empty", index)
    return tuple(value)


def _as_numbers(value, what: str, arity: int, index: int | None) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != arity:
        raise SchemaError(f"{what} must be a list of {arity} numbers", index)
    return tuple(_as_number(v, what, index) for v in value)


def _as_int4(value, what: str, index: int | None) -> tuple[int, int, int, int]:
    if not isinstance(value, list) or len(value) != 4:
        raise SchemaError(f"{what} must be a list of 4 integers", index)
    a, b, c, d = (_as_int(v, what, index) for v in value)
    return a, b, c, d


def _modality(obj: dict, index: int | None, default: str = "opt") -> Modality:
    raw = obj.get("modality", default)
    if not isinstance(raw, str):
        raise SchemaError(f"'modality' must be a string, got {type(raw).__name__}", index)
    try:
        return Modality(raw)
    except ValueError:
        raise SchemaError(
            f"unknown modality {raw!r} (expected one of {[m.value for m in Modality]})", index
        ) from None


def _wrap(index: int | None):
    """Context decorator: re-raise toolkit validation errors with the record index."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, ToolkitError) and not isinstance(exc, SchemaError):
                raise SchemaError(str(exc), index) from exc
            return False

    return _Ctx()


def _load_array(path: str | Path, what: str) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise SchemaError(f"{what} file must hold a JSON array, got {type(data).__name__}")
    return data


# --- Instruction records --------------------------------------------------------


def record_to_dict(record: InstructionRecord) -> dict:
    return {
        "image_refs": list(record.image_refs),
        "modality": record.modality.value,
        "task": record.task.value,
        "prompt": record.prompt,
        "response": record.response,
    }


def write_records(target: str | Path | IO[str], records: Iterable[InstructionRecord]) -> None:
    if hasattr(target, "write"):
        for rec in records:
            target.write(json.dumps(record_to_dict(rec), ensure_ascii=False))
            target.write("\n")
        return
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        write_records(fh, records)


def parse_record_line(line: str, index: int) -> InstructionRecord:
    """One JSONL line to a record; raises SchemaError naming the line."""
    if not line:
        raise SchemaError("blank line in record stream", index)
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", index) from None
    _require_keys(obj, RECORD_KEYS, (), index, reject_unknown=True)
    refs = _as_str_list(obj, "image_refs", index, allow_empty=False)
    modality = _modality(obj, index)
    raw_task = _as_str(obj, "task", index)
    try:
        task = TaskType(raw_task)
    except ValueError:
        raise SchemaError(f"unknown task {raw_task!r}", index) from None
    with _wrap(index):
        return InstructionRecord(
            image_refs=refs,
            modality=modality,
            task=task,
            prompt=_as_str(obj, "prompt", index),
            response=_as_str(obj, "response", index),
        )


def read_record_lines(path: str | Path) -> list[str]:
    """Raw JSONL lines without trailing newlines; a final empty line is dropped."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def read_records(path: str | Path) -> list[InstructionRecord]:
    return [parse_record_line(line, i) for i, line in enumerate(read_record_lines(path))]


# --- Annotation inputs ------------------------------------------------------------


def _parse_object(value, index: int | None) -> ObjectAnnotation:
    _require_keys(value, ("category", "box"), ("shape",), index)
    x1, y1, x2, y2 = _as_int4(value["box"], "'box'", index)
    shape = value.get("shape")
    if shape is not None and not isinstance(shape, str):
        raise SchemaError(f"'shape' must be a string, got {type(shape).__name__}", index)
    with _wrap(index):
        return ObjectAnnotation(
            category=_as_str(value, "category", index),
            px_box=(x1, y1, x2, y2),
            shape_attr=shape,
        )


def _parse_image_annotation(
    obj, index: int | None, extra_optional: Sequence[str] = (), default_modality: str = "opt"
) -> ImageAnnotation:
    required = ("image_id", "width", "height")
    optional = ("modality", "objects", "scene_label", *extra_optional)
    _require_keys(obj, required, optional, index)
    raw_objects = obj.get("objects", [])
    if not isinstance(raw_objects, list):
        raise SchemaError("'objects' must be a list", index)
    scene = obj.get("scene_label")
    if scene is not None and not isinstance(scene, str):
        raise SchemaError(f"'scene_label' must be a string, got {type(scene).__name__}", index)
    with _wrap(index):
        return ImageAnnotation(
            image_id=_as_str(obj, "image_id", index),
            modality=_modality(obj, index, default_modality),
            width=_as_int(obj["width"], "'width'", index),
            height=_as_int(obj["height"], "'height'", index),
            objects=tuple(_parse_object(o, index) for o in raw_objects),
            scene_label=scene,
        )


def load_image_annotations(
    path: str | Path, default_modality: str = "opt"
) -> list[ImageAnnotation]:
    """Detection / caption / classification input: one entry per image."""
    return [
        _parse_image_annotation(obj, i, ("similarity_score",), default_modality)
        for i, obj in enumerate(_load_array(path, "annotation"))
    ]


def load_similarity_scores(path: str | Path) -> dict[str, float]:
    """Per-image similarity_score values from the same annotation file, when present."""
    scores: dict[str, float] = {}
    for i, obj in enumerate(_load_array(path, "annotation")):
        if isinstance(obj, dict) and "similarity_score" in obj:
            image_id = _as_str(obj, "image_id", i)
            scores[image_id] = _as_number(obj["similarity_score"], "'similarity_score'", i)
    return scores


class VqaItem(NamedTuple):
    image_id: str
    question: str
    answer: str
    modality: Modality


def load_vqa_items(path: str | Path, default_modality: str = "opt") -> list[VqaItem]:
    items = []
    for i, obj in enumerate(_load_array(path, "vqa")):
        _require_keys(obj, ("image_id", "question", "answer"), ("modality",), i)
        items.append(VqaItem(
            image_id=_as_str(obj, "image_id", i),
            question=_as_str(obj, "question", i),
            answer=_as_str(obj, "answer", i),
            modality=_modality(obj, i, default_modality),
        ))
    return items


def load_relation_items(
    path: str | Path, default_modality: str = "opt"
) -> list[tuple[RelationAnnotation, ImageAnnotation]]:
    """Relation input: subject and object boxes in pixels on a named image."""
    items = []
    for i, obj in enumerate(_load_array(path, "relation")):
        _require_keys(obj, ("image_id", "width", "height", "subject", "object", "relation"),
                      ("modality",), i)
        subject = _parse_object(obj["subject"], i)
        target = _parse_object(obj["object"], i)
        with _wrap(i):
            ann = ImageAnnotation(
                image_id=_as_str(obj, "image_id", i),
                modality=_modality(obj, i, default_modality),
                width=_as_int(obj["width"], "'width'", i),
                height=_as_int(obj["height"], "'height'", i),
                objects=(subject, target),
            )
            rel = RelationAnnotation(
                subject=subject, object=target, relation=_as_str(obj, "relation", i)
            )
        items.append((rel, ann))
    return items


class DecompositionItem(NamedTuple):
    annotation: ImageAnnotation
    region_px: tuple[int, int, int, int]
    relations: tuple[RelationAnnotation, ...]


def load_decomposition_items(
    path: str | Path, default_modality: str = "opt"
) -> list[DecompositionItem]:
    """Decomposition input: an image annotation, a pixel region, object-index relations."""
    items = []
    for i, obj in enumerate(_load_array(path, "decomposition")):
        _require_keys(obj, ("image", "region"), ("relations",), i)
        ann = _parse_image_annotation(obj["image"], i, (), default_modality)
        region = _as_int4(obj["region"], "'region'", i)
        raw_rels = obj.get("relations", [])
        if not isinstance(raw_rels, list):
            raise SchemaError("'relations' must be a list", i)
        relations = []
        for rel in raw_rels:
            _require_keys(rel, ("subject", "object", "relation"), (), i)
            s = _as_int(rel["subject"], "'subject'", i)
            o = _as_int(rel["object"], "'object'", i)
            for idx in (s, o):
                if not 0 <= idx < len(ann.objects):
                    raise SchemaError(
                        f"relation object index {idx} outside 0..{len(ann.objects) - 1}", i
                    )
            with _wrap(i):
                relations.append(RelationAnnotation(
                    subject=ann.objects[s],
                    object=ann.objects[o],
                    relation=_as_str(rel, "relation", i),
                ))
        items.append(DecompositionItem(ann, region, tuple(relations)))
    return items


class DecisionItem(NamedTuple):
    start: Pose6
    goal: Pose6
    steps: tuple[str, ...]
    image_ids: tuple[str, ...]
    modality: Modality


def load_decision_items(path: str | Path, default_modality: str = "opt") -> list[DecisionItem]:
    items = []
    for i, obj in enumerate(_load_array(path, "decision")):
        _require_keys(obj, ("start", "goal", "steps", "image_ids"), ("modality",), i)
        with _wrap(i):
            items.append(DecisionItem(
                start=Pose6(*_as_numbers(obj["start"], "'start'", 6, i)),
                goal=Pose6(*_as_numbers(obj["goal"], "'goal'", 6, i)),
                steps=_as_str_list(obj, "steps", i, allow_empty=False),
                image_ids=_as_str_list(obj, "image_ids", i, allow_empty=False),
                modality=_modality(obj, i, default_modality),
            ))
    return items


def load_scene_records(path: str | Path, default_modality: str = "opt") -> list[SceneRecord]:
    items = []
    for i, obj in enumerate(_load_array(path, "scene")):
        _require_keys(
            obj,
            ("image_id", "description", "landmark_name", "landmark_pos",
             "target_name", "target_pos", "surroundings", "trajectory"),
            ("modality", "start_pose"),
            i,
        )
        raw_traj = obj["trajectory"]
        if not isinstance(raw_traj, list) or not raw_traj:
            raise SchemaError("'trajectory' must be a non-empty list of pose rows", i)
        start = obj.get("start_pose")
        with _wrap(i):
            items.append(SceneRecord(
                image_id=_as_str(obj, "image_id", i),
                modality=_modality(obj, i, default_modality),
                description=_as_str(obj, "description", i),
                landmark_name=_as_str(obj, "landmark_name", i),
                landmark_pos=Pos3(*_as_numbers(obj["landmark_pos"], "'landmark_pos'", 3, i)),
                target_name=_as_str(obj, "target_name", i),
                target_pos=Pos3(*_as_numbers(obj["target_pos"], "'target_pos'", 3, i)),
                surroundings=_as_str_list(obj, "surroundings", i),
                trajectory=tuple(
                    Pose6(*_as_numbers(row, "'trajectory' row", 6, i)) for row in raw_traj
                ),
                start_pose=None if start is None
                else Pose6(*_as_numbers(start, "'start_pose'", 6, i)),
            ))
    return items


def load_synonyms(path: str | Path) -> dict[str, str]:
    """Flat {variant: canonical} table for caption validation."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or any(
        not isinstance(k, str) or not isinstance(v, str) for k, v in data.items()
    ):
        raise SchemaError("synonym file must map strings to strings")
    return data


# --- Evaluation inputs ---------------------------------------------------------


def _grid_box(value, index: int | None) -> Box:
    x1, y1, x2, y2 = _as_int4(value, "'box'", index)
    with _wrap(index):
        return Box(x1, y1, x2, y2)


def load_det_predictions(path: str | Path) -> dict[str, list[DetPrediction]]:
    """Detection predictions: grid boxes with confidences, grouped by image id."""
    out: dict[str, list[DetPrediction]] = {}
    for i, obj in enumerate(_load_array(path, "prediction")):
        _require_keys(obj, ("image_id", "category", "box", "confidence"), (), i)
        with _wrap(i):
            pred = DetPrediction(
                category=_as_str(obj, "category", i),
                box=_grid_box(obj["box"], i),
                confidence=_as_number(obj["confidence"], "'confidence'", i),
            )
        out.setdefault(_as_str(obj, "image_id", i), []).append(pred)
    return out


def load_det_ground_truth(path: str | Path) -> dict[str, list[DetGroundTruth]]:
    out: dict[str, list[DetGroundTruth]] = {}
    for i, obj in enumerate(_load_array(path, "ground-truth")):
        _require_keys(obj, ("image_id", "category", "box"), (), i)
        gt = DetGroundTruth(category=_as_str(obj, "category", i), box=_grid_box(obj["box"], i))
        out.setdefault(_as_str(obj, "image_id", i), []).append(gt)
    return out


def _as_triples(value, index: int | None) -> tuple[RelationTriple, ...]:
    if not isinstance(value, list):
        raise SchemaError("'triples' must be a list", index)
    triples = []
    for row in value:
        if not isinstance(row, list) or len(row) != 3 or any(not isinstance(v, str) for v in row):
            raise SchemaError("each triple must be [subject, relation, object] strings", index)
        with _wrap(index):
            triples.append(RelationTriple(subject_cat=row[0], relation=row[1], object_cat=row[2]))
    return tuple(triples)


def load_triple_file(path: str | Path) -> dict[str, tuple[RelationTriple, ...]]:
    """Relation eval input: one entry per image with its triple list."""
    out: dict[str, tuple[RelationTriple, ...]] = {}
    for i, obj in enumerate(_load_array(path, "triples")):
        _require_keys(obj, ("image_id", "triples"), (), i)
        image_id = _as_str(obj, "image_id", i)
        if image_id in out:
            raise SchemaError(f"duplicate image_id {image_id!r}", i)
        out[image_id] = _as_triples(obj["triples"], i)
    return out


def load_decomposition_eval(
    path: str | Path, with_confidence: bool
) -> tuple[dict[str, list], dict[str, tuple[RelationTriple, ...]]]:
    """Decomposition eval rows: per-image detections plus triples.

    With ``with_confidence`` the detections parse as predictions, otherwise as
    ground truth.
    """
    boxes: dict[str, list] = {}
    triples: dict[str, tuple[RelationTriple, ...]] = {}
    for i, obj in enumerate(_load_array(path, "decomposition eval")):
        _require_keys(obj, ("image_id", "detections", "triples"), (), i)
        image_id = _as_str(obj, "image_id", i)
        if image_id in boxes:
            raise SchemaError(f"duplicate image_id {image_id!r}", i)
        dets = obj["detections"]
        if not isinstance(dets, list):
            raise SchemaError("'detections' must be a list", i)
        parsed = []
        for det in dets:
            if with_confidence:
                _require_keys(det, ("category", "box", "confidence"), (), i)
                with _wrap(i):
                    parsed.append(DetPrediction(
                        category=_as_str(det, "category", i),
                        box=_grid_box(det["box"], i),
                        confidence=_as_number(det["confidence"], "'confidence'", i),
                    ))
            else:
                _require_keys(det, ("category", "box"), (), i)
                parsed.append(DetGroundTruth(
                    category=_as_str(det, "category", i), box=_grid_box(det["box"], i)
                ))
        boxes[image_id] = parsed
        triples[image_id] = _as_triples(obj["triples"], i)
    return boxes, triples


class TextEvalRow(NamedTuple):
    value: object  # str, or tuple[str, ...] when loaded with as_list
    question_type: str | None


def load_text_eval(
    path: str | Path, value_key: str, *, as_list: bool
) -> dict[str, TextEvalRow]:
    """Generic id-to-text loader for caption/classification/vqa/decision eval files.

    ``value_key`` names the payload field; with ``as_list`` it must be a
    non-empty list of strings (a reference set), otherwise a single string.
    """
    out: dict[str, TextEvalRow] = {}
    for i, obj in enumerate(_load_array(path, value_key)):
        _require_keys(obj, ("id", value_key), ("question_type",), i)
        key = _as_str(obj, "id", i)
        if key in out:
            raise SchemaError(f"duplicate id {key!r}", i)
        value: object
        if as_list:
            value = _as_str_list(obj, value_key, i, allow_empty=False)
        else:
            value = _as_str(obj, value_key, i)
        qtype = _as_str(obj, "question_type", i) if "question_type" in obj else None
        out[key] = TextEvalRow(value, qtype)
    return out


def load_path_predictions(path: str | Path) -> dict[str, tuple[Pos3, ...]]:
    """Flight-plan eval predictions: id plus waypoint rows of 3 (or 6) numbers."""
    out: dict[str, tuple[Pos3, ...]] = {}
    for i, obj in enumerate(_load_array(path, "path")):
        _require_keys(obj, ("id", "path"), (), i)
        key = _as_str(obj, "id", i)
        if key in out:
            raise SchemaError(f"duplicate id {key!r}", i)
        rows = obj["path"]
        if not isinstance(rows, list) or not rows:
            raise SchemaError("'path' must be a non-empty list of waypoints", i)
        points = []
        for row in rows:
            if not isinstance(row, list) or len(row) not in (3, 6):
                raise SchemaError("each waypoint must list 3 coordinates (or a 6-number pose)", i)
            coords = tuple(_as_number(v, "'path'", i) for v in row[:3])
            with _wrap(i):
                points.append(Pos3(*coords))
        out[key] = tuple(points)
    return out


def load_nav_ground_truth(path: str | Path) -> dict[str, tuple[Pos3, float]]:
    """Flight-plan eval ground truth: goal position and shortest path length per id."""
    out: dict[str, tuple[Pos3, float]] = {}
    for i, obj in enumerate(_load_array(path, "navigation ground-truth")):
        _require_keys(obj, ("id", "goal", "shortest_path_length"), (), i)
        key = _as_str(obj, "id", i)
        if key in out:
            raise SchemaError(f"duplicate id {key!r}", i)
        with _wrap(i):
            goal = Pos3(*_as_numbers(obj["goal"], "'goal'", 3, i))
        length = _as_number(obj["shortest_path_length"], "'shortest_path_length'", i)
        if length < 0:
            raise SchemaError(f"'shortest_path_length' must be non-negative, got {length!r}", i)
        out[key] = (goal, length)
    return out


# --- Decoder weights, latents, targets, curves -----------------------------------


def save_weights(path: str | Path, weights: DecoderWeights, cfg: DecoderConfig) -> None:
    weights.check(cfg)
    payload: dict = {"d_e": cfg.d_e, "d_h": cfg.d_h}
    for name in PARAM_FIELDS:
        payload[name] = getattr(weights, name).tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _reject_constant(token: str):
    raise SchemaError(f"non-finite number {token!r} in weight file")


def load_weights(path: str | Path) -> tuple[DecoderWeights, int, int]:
    """Read a weight file back as (weights, d_e, d_h), validating shapes."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh, parse_constant=_reject_constant)
    if not isinstance(data, dict):
        raise SchemaError("weight file must hold a JSON object")
    missing = [k for k in WEIGHT_KEYS if k not in data]
    extra = [k for k in data if k not in WEIGHT_KEYS]
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing keys: " + ", ".join(missing))
        if extra:
            parts.append("unexpected keys: " + ", ".join(extra))
        raise SchemaError("; ".join(parts))
    d_e = _as_int(data["d_e"], "'d_e'", None)
    d_h = _as_int(data["d_h"], "'d_h'", None)
    if d_e < 1 or d_h < 1:
        raise SchemaError(f"dimensions must be positive, got d_e={d_e}, d_h={d_h}")
    arrays = {}
    for name in PARAM_FIELDS:
        try:
            arr = np.asarray(data[name], dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{name}: {e}") from None
        if not np.all(np.isfinite(arr)):
            raise SchemaError(f"{name}: contains non-finite values")
        arrays[name] = arr
    weights = DecoderWeights(**arrays)
    try:
        weights.check(DecoderConfig(d_e=d_e, d_h=d_h, max_steps=1))
    except ToolkitError as e:
        raise SchemaError(str(e)) from e
    return weights, d_e, d_h


def load_latent(path: str | Path) -> np.ndarray:
    """Trajectory embedding: a JSON array of finite numbers."""
    data = _load_array(path, "latent")
    if not data:
        raise SchemaError("latent file must hold at least one number")
    return np.array([_as_number(v, "latent entry", i) for i, v in enumerate(data)])


def load_targets(path: str | Path) -> np.ndarray:
    """Target states: rows of 6 numbers, each strictly inside (0, 1)."""
    data = _load_array(path, "target")
    if not data:
        raise SchemaError("target file must hold at least one state row")
    rows = []
    for i, row in enumerate(data):
        values = _as_numbers(row, "target row", 6, i)
        for v in values:
            if not 0.0 < v < 1.0:
                raise SchemaError(f"target component {v!r} outside the open interval (0, 1)", i)
        rows.append(values)
    return np.array(rows)


def write_loss_curve(path: str | Path, curve: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(curve):
            fh.write(f"{i},{float(loss)!r}\n")
