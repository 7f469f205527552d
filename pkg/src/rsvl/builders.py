"""Instruction record builders for the eight supervision tasks.

Every builder returns an :class:`InstructionRecord` whose prompt and response
are valid markup (see :mod:`rsvl.markup`) rendered in canonical form.  The
response templates are fixed sentences; identical annotations produce byte
identical records on every run and platform.

Perception tasks (caption, classification, VQA, detection) use plain prompts.
Reasoning tasks open their prompt with the matching task marker:

    scheduling     <|navigation|>
    decision       <|decision|>
    decomposition  <|decomposition|>
    relation       <|reasoning|>

Also here: rule-based caption validation against annotations, the 3x3 image
direction grid, and the tiling planner that picks how many 384-pixel tiles an
image is resized to.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import (
    EmptyAnnotation,
    EmptyLabel,
    EmptySteps,
    InvalidExtent,
    InvariantViolation,
)
from .markup import (
    Box,
    Det,
    MarkupDoc,
    Modality,
    Pos,
    Pos3,
    Pose6,
    PoseSeq,
    Ref,
    Rel,
    Task,
    TaskKind,
    Text,
    emit,
    normalize_box,
)

__all__ = [
    "TaskType",
    "ObjectAnnotation",
    "ImageAnnotation",
    "RelationAnnotation",
    "SceneRecord",
    "InstructionRecord",
    "TilingPlan",
    "CaptionValidation",
    "SimilarityScorer",
    "StubScorer",
    "DETECTION_PROMPT",
    "CAPTION_PROMPT",
    "CLASSIFICATION_PROMPT",
    "build_detection_record",
    "build_caption_record",
    "build_classification_record",
    "build_vqa_record",
    "build_relation_record",
    "build_decomposition_record",
    "build_scheduling_record",
    "build_decision_record",
    "validate_caption",
    "region_direction",
    "plan_tiling",
    "TILE_SIZE",
    "MAX_TILES",
]


class TaskType(str, Enum):
    CAPTION = "caption"
    CLASSIFICATION = "classification"
    VQA = "vqa"
    DETECTION = "detection"
    RELATION = "relation"
    DECOMPOSITION = "decomposition"
    DECISION = "decision"
    SCHEDULING = "scheduling"


DETECTION_PROMPT = "Detect all objects shown in the remote sensing image and describe using HBBs."
CAPTION_PROMPT = "Please provide a short depiction of the picture:"
CLASSIFICATION_PROMPT = "Please output the scene corresponding to the image:"

TILE_SIZE = 384
MAX_TILES = 9


# --- Input annotations -------------------------------------------------------


@dataclass(frozen=True)
class ObjectAnnotation:
    """One object: category, pixel rectangle, optional coarse size attribute."""

    category: str
    px_box: tuple[float, float, float, float]
    shape_attr: str | None = None

    def __post_init__(self):
        if not self.category or not self.category.strip():
            raise EmptyLabel("object category must be non-empty")
        box = tuple(self.px_box)
        if len(box) != 4:
            raise InvariantViolation(f"pixel box must have 4 coordinates, got {box!r}")
        object.__setattr__(self, "px_box", box)


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: str
    modality: Modality
    width: int
    height: int
    objects: tuple[ObjectAnnotation, ...] = ()
    scene_label: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise EmptyLabel("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise InvalidExtent(f"image extent {self.width} x {self.height}")
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "modality", Modality(self.modality))


@dataclass(frozen=True)
class RelationAnnotation:
    """A directed subject/object pair with a relation label."""

    subject: ObjectAnnotation
    object: ObjectAnnotation
    relation: str

    def __post_init__(self):
        if not self.relation or not self.relation.strip():
            raise EmptyLabel("relation label must be non-empty")


@dataclass(frozen=True)
class SceneRecord:
    """Flight-scene annotation backing one task-scheduling record.

    ``trajectory[0]`` is the start pose; ``start_pose`` may be omitted and is
    then taken from the trajectory.
    """

    image_id: str
    modality: Modality
    description: str
    landmark_name: str
    landmark_pos: Pos3
    target_name: str
    target_pos: Pos3
    surroundings: tuple[str, ...]
    trajectory: tuple[Pose6, ...]
    start_pose: Pose6 | None = None

    def __post_init__(self):
        for label, value in (
            ("image_id", self.image_id),
            ("description", self.description),
            ("landmark_name", self.landmark_name),
            ("target_name", self.target_name),
        ):
            if not value or not str(value).strip():
                raise EmptyLabel(f"scene {label} must be non-empty")
        object.__setattr__(self, "surroundings", tuple(self.surroundings))
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        object.__setattr__(self, "modality", Modality(self.modality))
        if not self.trajectory:
            raise EmptySteps("scene trajectory must hold at least the start pose")
        if self.start_pose is None:
            object.__setattr__(self, "start_pose", self.trajectory[0])
        elif self.start_pose != self.trajectory[0]:
            raise InvariantViolation("trajectory[0] must equal start_pose")


@dataclass(frozen=True)
class InstructionRecord:
    """One prompt/response supervision pair tied to one or more images."""

    image_refs: tuple[str, ...]
    modality: Modality
    task: TaskType
    prompt: str
    response: str

    def __post_init__(self):
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        if not self.image_refs or any(not r for r in self.image_refs):
            raise InvariantViolation("image_refs must hold at least one non-empty id")
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "task", TaskType(self.task))


# --- Small shared helpers ----------------------------------------------------


class _DocBuilder:
    """Accumulates nodes, merging adjacent text, and emits canonical markup."""

    def __init__(self):
        self._nodes: list = []

    def text(self, piece: str) -> "_DocBuilder":
        if piece:
            if self._nodes and isinstance(self._nodes[-1], Text):
                self._nodes[-1] = Text(self._nodes[-1].value + piece)
            else:
                self._nodes.append(Text(piece))
        return self

    def add(self, node) -> "_DocBuilder":
        self._nodes.append(node)
        return self

    def build(self) -> str:
        return emit(MarkupDoc(tuple(self._nodes)))


def _sentence(text: str) -> str:
    text = text.strip()
    return text if text.endswith(".") else text + "."


def _plural(noun: str, count: int) -> str:
    return noun if count == 1 else noun + "s"


def _group_by_category(objects: Iterable[ObjectAnnotation]):
    """Category -> objects, categories kept in first-appearance order."""
    order: list[str] = []
    groups: dict[str, list[ObjectAnnotation]] = {}
    for obj in objects:
        if obj.category not in groups:
            order.append(obj.category)
            groups[obj.category] = []
        groups[obj.category].append(obj)
    return [(cat, groups[cat]) for cat in order]


def _norm_object_box(obj: ObjectAnnotation, ann: ImageAnnotation) -> Box:
    return normalize_box(obj.px_box, ann.width, ann.height)


# --- Perception tasks --------------------------------------------------------


def build_detection_record(ann: ImageAnnotation) -> InstructionRecord:
    """Detection record: every object, grouped by category.

    Response shape: ``There is/are M <|ref|>cat<|/ref|><|det|>[[...], ...]<|/det|>,
    ... in the image.`` with is/are chosen by the total object count and
    categories in first-appearance order.  Raises EmptyAnnotation when the
    image has no objects.
    """
    if not ann.objects:
        raise EmptyAnnotation(f"{ann.image_id}: no objects to detect")
    total = len(ann.objects)
    b = _DocBuilder()
    b.text(f"There {'is' if total == 1 else 'are'} ")
    for idx, (category, objs) in enumerate(_group_by_category(ann.objects)):
        if idx:
            b.text(", ")
        b.text(f"{len(objs)} ")
        b.add(Ref(category))
        b.add(Det(tuple(_norm_object_box(o, ann) for o in objs)))
    b.text(" in the image.")
    return InstructionRecord(
        image_refs=(ann.image_id,),
        modality=ann.modality,
        task=TaskType.DETECTION,
        prompt=DETECTION_PROMPT,
        response=b.build(),
    )


def build_caption_record(ann: ImageAnnotation) -> InstructionRecord:
    """Short rule-based caption from object counts and size attributes.

    One sentence per category: ``There are 2 aircrafts in the image, which
    are small in size.``  The size clause appears only when every object of
    the category carries the same attribute.  Without objects the scene label
    backs a fallback sentence; without either the annotation is empty.
    """
    sentences = []
    for category, objs in _group_by_category(ann.objects):
        n = len(objs)
        verb = "is" if n == 1 else "are"
        sentence = f"There {verb} {n} {_plural(category, n)} in the image"
        shapes = {o.shape_attr for o in objs}
        if len(shapes) == 1 and None not in shapes:
            sentence += f", which {verb} {shapes.pop()} in size"
        sentences.append(sentence + ".")
    if not sentences:
        if ann.scene_label:
            sentences.append(f"The image shows a {ann.scene_label} scene.")
        else:
            raise EmptyAnnotation(f"{ann.image_id}: neither objects nor scene label")
    return InstructionRecord(
        image_refs=(ann.image_id,),
        modality=ann.modality,
        task=TaskType.CAPTION,
        prompt=CAPTION_PROMPT,
        response=" ".join(sentences),
    )


def build_classification_record(ann: ImageAnnotation) -> InstructionRecord:
    if not ann.scene_label or not ann.scene_label.strip():
        raise EmptyLabel(f"{ann.image_id}: classification needs a scene label")
    return InstructionRecord(
        image_refs=(ann.image_id,),
        modality=ann.modality,
        task=TaskType.CLASSIFICATION,
        prompt=CLASSIFICATION_PROMPT,
        response=_sentence(ann.scene_label),
    )


def build_vqa_record(
    question: str, answer: str, image_id: str, modality: Modality = Modality.OPT
) -> InstructionRecord:
    """VQA record: the question passes through verbatim as the prompt."""
    if not question or not question.strip():
        raise EmptyLabel("VQA question must be non-empty")
    if not answer or not answer.strip():
        raise EmptyLabel("VQA answer must be non-empty")
    return InstructionRecord(
        image_refs=(image_id,),
        modality=modality,
        task=TaskType.VQA,
        prompt=question,
        response=_sentence(answer),
    )


# --- Reasoning tasks ---------------------------------------------------------


def build_relation_record(rel: RelationAnnotation, ann: ImageAnnotation) -> InstructionRecord:
    """Relation reasoning pair: subject named with its box, object by box only."""
    subj_box = _norm_object_box(rel.subject, ann)
    obj_box = _norm_object_box(rel.object, ann)
    prompt = (
        _DocBuilder()
        .add(Task(TaskKind.REASONING))
        .text("What is the relationship between ")
        .add(Ref(rel.subject.category))
        .add(Det((subj_box,)))
        .text(" and the object in ")
        .add(Det((obj_box,)))
        .text(" in the image? And output their categories.")
        .build()
    )
    response = (
        _DocBuilder()
        .text(f"subject: {rel.subject.category}, object: {rel.object.category}, ")
        .text(f"the {rel.subject.category} is ")
        .add(Rel(rel.relation))
        .text(f" the {rel.object.category}.")
        .build()
    )
    return InstructionRecord(
        image_refs=(ann.image_id,),
        modality=ann.modality,
        task=TaskType.RELATION,
        prompt=prompt,
        response=response,
    )


def _center_inside(box: Box, region: Box) -> bool:
    cx, cy = box.center()
    return region.x1 <= cx <= region.x2 and region.y1 <= cy <= region.y2


def build_decomposition_record(
    region: Box,
    ann: ImageAnnotation,
    relations: Sequence[RelationAnnotation] = (),
) -> InstructionRecord:
    """Four-step region analysis: direction, detection, relations, summary.

    Objects count as in-region when their normalized box center falls inside
    ``region`` (bounds inclusive); relations require both endpoints in-region.
    Step4 reports the number of distinct in-region categories and the number
    of Step3 relation clauses, so the record stays self-consistent under
    re-parsing.  An empty region is well-formed and reports zeros.
    """
    prompt = (
        _DocBuilder()
        .add(Task(TaskKind.DECOMPOSITION))
        .text("Analyze the region ")
        .add(Det((region,)))
        .text(" of the image.")
        .build()
    )

    boxed = [(obj, _norm_object_box(obj, ann)) for obj in ann.objects]
    inside = [(obj, box) for obj, box in boxed if _center_inside(box, region)]
    groups = _group_by_category(obj for obj, _ in inside)
    box_of = {id(obj): box for obj, box in boxed}

    kept_relations = []
    for rel in relations:
        sbox = _norm_object_box(rel.subject, ann)
        obox = _norm_object_box(rel.object, ann)
        if _center_inside(sbox, region) and _center_inside(obox, region):
            kept_relations.append((rel, sbox, obox))

    b = _DocBuilder()
    b.text(
        "Step1: Locate the target area: "
        f"The target area locates at the {region_direction(region)} of the image. "
    )

    total = len(inside)
    b.text(f"Step2: Perform object detection: There are {total} entities in the target area")
    if total:
        b.text(", including: ")
        for idx, (category, objs) in enumerate(groups):
            if idx:
                b.text(", ")
            b.text(f"{len(objs)} ")
            b.add(Ref(category))
            b.add(Det(tuple(box_of[id(o)] for o in objs)))
    b.text(". ")

    m = len(kept_relations)
    b.text(f"Step3: Perform relation analysis: There are {m} relations found")
    if m:
        b.text(": ")
        for idx, (rel, sbox, obox) in enumerate(kept_relations):
            if idx:
                b.text("; ")
            b.add(Ref(rel.subject.category))
            b.add(Det((sbox,)))
            b.text(" is ")
            b.add(Rel(rel.relation))
            b.text(" the ")
            b.add(Ref(rel.object.category))
            b.add(Det((obox,)))
        b.text(";")
    else:
        b.text(".")

    b.text(f" Step4: Perform context summary: {len(groups)} object types with {m} interactions.")

    return InstructionRecord(
        image_refs=(ann.image_id,),
        modality=ann.modality,
        task=TaskType.DECOMPOSITION,
        prompt=prompt,
        response=b.build(),
    )


def build_scheduling_record(scene: SceneRecord) -> InstructionRecord:
    """Flight-plan record: description and landmark into the prompt, four response steps."""
    prompt = (
        _DocBuilder()
        .add(Task(TaskKind.NAVIGATION))
        .text(
            "You need to formulate a flight plan for a quadcopter based on this map, "
            "enabling it to fly over all the buildings and reach the destination. "
            f"The target location is described as follows: {scene.description}. "
            "The 3D coordinates of the landmark are as follows: "
        )
        .add(Ref(scene.landmark_name))
        .add(Pos(scene.landmark_pos))
        .text(". Your starting 3D coordinates and orientation angles are ")
        .add(PoseSeq((scene.start_pose,)))
        .text(
            ". You need to provide a series of 3D waypoints and attitude angles "
            "for the quadcopter to reach the target location."
        )
        .build()
    )
    response = (
        _DocBuilder()
        .text(
            "Step 1: Extract basic information as follows: "
            f"Target: {scene.target_name}. Landmarks: {scene.landmark_name}. "
            f"Surroundings: {', '.join(scene.surroundings)}. "
            "Step 2: Get landmarks position: "
        )
        .add(Ref(scene.landmark_name))
        .add(Pos(scene.landmark_pos))
        .text(". Step 3: Get target position: ")
        .add(Ref(scene.target_name))
        .add(Pos(scene.target_pos))
        .text(". Step 4: Trajectory: ")
        .add(PoseSeq(scene.trajectory))
        .text(".")
        .build()
    )
    return InstructionRecord(
        image_refs=(scene.image_id,),
        modality=scene.modality,
        task=TaskType.SCHEDULING,
        prompt=prompt,
        response=response,
    )


def build_decision_record(
    start: Pose6,
    goal: Pose6,
    steps: Sequence[str],
    image_ids: Sequence[str],
    modality: Modality = Modality.OPT,
) -> InstructionRecord:
    """Pose-to-pose flight plan as a numbered step list.

    Response shape: ``Step1: <text>. Step2: <text>. ... Stepn: <text>.``
    Raises EmptySteps when no step descriptions are given.
    """
    steps = [s.strip() for s in steps]
    if not steps or any(not s for s in steps):
        raise EmptySteps("decision plan needs at least one non-empty step")
    prompt = (
        _DocBuilder()
        .add(Task(TaskKind.DECISION))
        .text("How to fly from position")
        .add(PoseSeq((start,)))
        .text(" to position")
        .add(PoseSeq((goal,)))
        .text(", and provide a detailed plan.")
        .build()
    )
    response = " ".join(f"Step{i}: {_sentence(s)}" for i, s in enumerate(steps, start=1))
    return InstructionRecord(
        image_refs=tuple(image_ids),
        modality=modality,
        task=TaskType.DECISION,
        prompt=prompt,
        response=response,
    )


# --- Direction grid ----------------------------------------------------------

_DIRECTION_GRID = (
    ("upper left", "upper", "upper right"),
    ("left", "center", "right"),
    ("lower left", "lower", "lower right"),
)


def _third(coord: float) -> int:
    # grid cell boundaries sit at 333 and 666
    if coord < 333:
        return 0
    if coord < 666:
        return 1
    return 2


def region_direction(box: Box) -> str:
    """Which of the nine image regions holds the box center."""
    cx, cy = box.center()
    return _DIRECTION_GRID[_third(cy)][_third(cx)]


# --- Caption validation ------------------------------------------------------

SIMILARITY_FRACTION = 0.8

_NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12,
}

_CLAIM_RE = re.compile(
    r"\bthere (?:is|are) (\d+|[a-z]+) ([a-z][a-z ]*?) in the (?:image|picture|scene)"
    r"(?:, which (?:is|are) ([a-z][a-z ]*?) in size)?[.!]",
)


class SimilarityScorer(Protocol):
    """Caption-to-image similarity on an arbitrary non-negative scale."""

    def score(self, caption: str, image_id: str) -> float: ...


class StubScorer:
    """Deterministic hash-based scorer in [0, 1], for tests and dry runs."""

    def score(self, caption: str, image_id: str) -> float:
        digest = hashlib.sha256(f"{image_id}\n{caption}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") / 2.0**64


@dataclass(frozen=True)
class CaptionValidation:
    passed: bool
    failures: tuple[str, ...]


def _canon(term: str, table: Mapping[str, str]) -> str:
    return table.get(term, term)


def _terms_match(stated: str, actual: str, table: Mapping[str, str]) -> bool:
    # identity is always kept alongside table lookups, so growing the table
    # can only add matches, never remove one
    forms = {stated}
    if stated.endswith("s"):
        forms.add(stated[:-1])
    for form in forms:
        if (
            form == actual
            or _canon(form, table) == actual
            or form == _canon(actual, table)
            or _canon(form, table) == _canon(actual, table)
        ):
            return True
    return False


def validate_caption(
    caption: str,
    ann: ImageAnnotation,
    synonyms: Mapping[str, str] | None = None,
    score: float | None = None,
    benchmark: float | None = None,
) -> CaptionValidation:
    """Check a caption's stated object facts against the annotation.

    Every ``There is/are N <category> ...`` claim is checked for category
    presence, exact count, and (when a size clause is present) the size
    attribute, all up to the synonym table.  When ``score`` is given the
    caption must also reach ``SIMILARITY_FRACTION * benchmark``.  Claims the
    caption does not make are not required.
    """
    table = {k.casefold().strip(): v.casefold().strip() for k, v in (synonyms or {}).items()}
    failures: list[str] = []

    for count_raw, category, shape in _CLAIM_RE.findall(caption.casefold()):
        if count_raw.isdigit():
            count = int(count_raw)
        elif count_raw in _NUMBER_WORDS:
            count = _NUMBER_WORDS[count_raw]
        else:
            failures.append(f"count: cannot read quantity {count_raw!r}")
            continue
        category = category.strip()
        matched = [
            obj for obj in ann.objects if _terms_match(category, obj.category.casefold(), table)
        ]
        if not matched:
            failures.append(f"category: {category!r} not found in annotation")
            continue
        if count != len(matched):
            failures.append(
                f"count: caption states {count} {category!r}, annotation has {len(matched)}"
            )
        if shape:
            shape = shape.strip()
            bad = [
                obj for obj in matched
                if obj.shape_attr is None or not _terms_match(shape, obj.shape_attr.casefold(), table)
            ]
            if bad:
                failures.append(f"shape: {shape!r} does not match annotation for {category!r}")

    if score is not None:
        if benchmark is None or not benchmark > 0:
            raise InvariantViolation("similarity gate needs a positive benchmark")
        if score < SIMILARITY_FRACTION * benchmark:
            failures.append(
                f"similarity: score {score} below {SIMILARITY_FRACTION} x benchmark {benchmark}"
            )

    return CaptionValidation(passed=not failures, failures=tuple(failures))


# --- Tiling ------------------------------------------------------------------


@dataclass(frozen=True)
class TilingPlan:
    """How an image is cut for the encoder: m x n tiles plus one thumbnail.

    ``m`` counts tiles along the height, ``n`` along the width.
    """

    m: int
    n: int
    tile_count: int
    includes_global_thumbnail: bool = True

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvariantViolation("tile counts must be at least 1")
        if self.m * self.n > MAX_TILES:
            raise InvariantViolation(f"tile grid {self.m} x {self.n} exceeds {MAX_TILES}")
        if self.tile_count != self.m * self.n:
            raise InvariantViolation("tile_count must equal m * n")
        if not self.includes_global_thumbnail:
            raise InvariantViolation("the global thumbnail is not optional")


def plan_tiling(height: int, width: int) -> TilingPlan:
    """Tile counts for an H x W image.

    Starts from the smallest multiples of 384 covering each side, then, while
    the grid exceeds 9 tiles, decrements the larger count (the height count on
    ties) until it fits.  Exact cover is kept whenever it is feasible.
    """
    if isinstance(height, bool) or isinstance(width, bool):
        raise InvalidExtent(f"extent must be integral, got {height!r} x {width!r}")
    if not isinstance(height, int) or not isinstance(width, int):
        raise InvalidExtent(f"extent must be integral, got {height!r} x {width!r}")
    if height < 1 or width < 1:
        raise InvalidExtent(f"extent must be at least 1x1, got {height} x {width}")
    m = math.ceil(height / TILE_SIZE)
    n = math.ceil(width / TILE_SIZE)
    while m * n > MAX_TILES:
        if m >= n:
            m -= 1
        else:
            n -= 1
    return TilingPlan(m=m, n=n, tile_count=m * n)
