"""Special-token task markup: parsing, canonical serialization, coordinates.

Instruction records address image content through inline tags:

    <|navigation|> <|decision|> <|decomposition|> <|reasoning|>   task markers
    <|ref|>name<|/ref|>                  named entity (free text payload)
    <|pos|>[x, y, z]<|/pos|>             one 3D point, scene units
    <|pose|>[[x,y,z,phi,theta,psi], ...]<|/pose|>   6-DoF pose sequence
    <|det|>[[x1,y1,x2,y2], ...]<|/det|>  boxes on the normalized pixel grid
    <|rel|>label<|/rel|>                 relation label (free text payload)

Task markers stand alone; the other five kinds come as balanced open/close
pairs.  Box coordinates live on a fixed [0, 999] grid regardless of source
image size; ``normalize_box`` / ``denormalize_box`` convert pixel rectangles
to and from that grid.  3D points and poses are not rescaled, they pass
through in scene units.

``parse`` turns a string into a :class:`MarkupDoc`, ``emit`` serializes one
back.  Serialization is canonical: no whitespace inside a numeric tuple, a
single space after the comma between tuples.  ``emit(parse(s))`` equals
``canonical(s)``, which rewrites only whitespace inside numeric payloads and
leaves every other byte alone.  Numeric literals keep their original spelling
through a parse/emit cycle.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    CoordOutOfRange,
    EmptyList,
    InvalidExtent,
    InvariantViolation,
    InvertedBox,
    MalformedNumber,
    UnbalancedTag,
    UnknownTag,
)

__all__ = [
    "TaskKind",
    "Modality",
    "Pos3",
    "Pose6",
    "Box",
    "Text",
    "Task",
    "Ref",
    "Pos",
    "PoseSeq",
    "Det",
    "Rel",
    "MarkupNode",
    "MarkupDoc",
    "parse",
    "emit",
    "canonical",
    "normalize_box",
    "denormalize_box",
    "normalize_point",
    "check_rel_vocabulary",
]

GRID = 1000  # normalized coordinates run 0..GRID-1

_OPEN = "<|"
_CLOSE_DELIM = "|>"

_TAG_NAME_RE = re.compile(r"/?[a-z]+")
_FLOAT_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_INT_RE = re.compile(r"[+-]?\d+")


class TaskKind(str, Enum):
    """Reasoning-task markers that may open a prompt."""

    NAVIGATION = "navigation"
    DECISION = "decision"
    DECOMPOSITION = "decomposition"
    REASONING = "reasoning"


class Modality(str, Enum):
    """Sensor modality of the referenced imagery."""

    OPT = "opt"
    SAR = "sar"
    IR = "ir"


_TASK_NAMES = {kind.value for kind in TaskKind}
_PAIRED_NAMES = ("ref", "pos", "pose", "det", "rel")


def _byte_offset(text: str, index: int) -> int:
    """UTF-8 byte offset of character ``index`` in ``text``."""
    return len(text[:index].encode("utf-8"))


def _require_finite_float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvariantViolation(f"{what} must be a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise InvariantViolation(f"{what} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Pos3:
    """A 3D point in scene units."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _require_finite_float(getattr(self, name), f"pos {name}"))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Pose6:
    """Position plus attitude: (x, y, z, phi, theta, psi) in scene units."""

    x: float
    y: float
    z: float
    phi: float
    theta: float
    psi: float

    def __post_init__(self):
        for name in ("x", "y", "z", "phi", "theta", "psi"):
            object.__setattr__(self, name, _require_finite_float(getattr(self, name), f"pose {name}"))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.z, self.phi, self.theta, self.psi)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle on the normalized [0, 999] grid, corners inclusive."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise InvariantViolation(f"box {name} must be an int, got {v!r}")
            if not 0 <= v < GRID:
                raise CoordOutOfRange(v)
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise InvertedBox((self.x1, self.y1, self.x2, self.y2))

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)


# --- AST nodes --------------------------------------------------------------
#
# Lexeme fields remember the exact spelling of numeric literals seen by the
# parser so a parse/emit cycle never rewrites digits.  They are excluded from
# equality: programmatically built nodes compare equal to parsed ones.


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Task:
    kind: TaskKind


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Pos:
    point: Pos3
    lexemes: tuple[str, str, str] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.lexemes is not None:
            _check_lexemes(self.lexemes, self.point.as_tuple(), _FLOAT_RE, float, "pos")


@dataclass(frozen=True)
class PoseSeq:
    poses: tuple[Pose6, ...]
    lexemes: tuple[tuple[str, ...], ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if not self.poses:
            raise InvariantViolation("pose sequence must hold at least one pose")
        if self.lexemes is not None:
            if len(self.lexemes) != len(self.poses):
                raise InvariantViolation("pose lexeme count mismatch")
            for lex, pose in zip(self.lexemes, self.poses):
                _check_lexemes(lex, pose.as_tuple(), _FLOAT_RE, float, "pose")


@dataclass(frozen=True)
class Det:
    boxes: tuple[Box, ...]
    lexemes: tuple[tuple[str, ...], ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise InvariantViolation("det must hold at least one box")
        if self.lexemes is not None:
            if len(self.lexemes) != len(self.boxes):
                raise InvariantViolation("det lexeme count mismatch")
            for lex, box in zip(self.lexemes, self.boxes):
                _check_lexemes(lex, box.as_tuple(), _INT_RE, int, "det")


@dataclass(frozen=True)
class Rel:
    label: str


MarkupNode = Text | Task | Ref | Pos | PoseSeq | Det | Rel


def _check_lexemes(lexemes, values, pattern, convert, what: str) -> None:
    if len(lexemes) != len(values):
        raise InvariantViolation(f"{what} lexeme arity mismatch")
    for lex, value in zip(lexemes, values):
        if not isinstance(lex, str) or pattern.fullmatch(lex) is None or convert(lex) != value:
            raise InvariantViolation(f"{what} lexeme {lex!r} does not spell {value!r}")


@dataclass(frozen=True)
class MarkupDoc:
    """Parsed markup: node sequence plus, when parsed, the original string."""

    nodes: tuple[MarkupNode, ...]
    raw: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))


# --- Parsing ----------------------------------------------------------------


def parse(text: str) -> MarkupDoc:
    """Parse markup text into a :class:`MarkupDoc`.

    Every byte of the input lands in exactly one node; Text nodes are maximal
    runs between tags.  Any malformed input raises a
    :class:`~rsvl.errors.MarkupError` subtype carrying a byte offset:
    UnbalancedTag, UnknownTag, MalformedNumber, CoordOutOfRange or EmptyList.
    """
    if not isinstance(text, str):
        raise InvariantViolation(f"parse wants str, got {type(text).__name__}")
    nodes: list[MarkupNode] = []
    i = 0
    n = len(text)
    while i < n:
        k = text.find(_OPEN, i)
        if k == -1:
            nodes.append(Text(text[i:]))
            break
        if k > i:
            nodes.append(Text(text[i:k]))
        name, after = _read_tag(text, k)
        if name in _TASK_NAMES:
            nodes.append(Task(TaskKind(name)))
            i = after
        elif name in ("ref", "rel"):
            node, i = _parse_text_tag(text, name, k, after)
            nodes.append(node)
        elif name in ("pos", "pose", "det"):
            node, i = _parse_numeric_tag(text, name, k, after)
            nodes.append(node)
        elif name.startswith("/") and name[1:] in _PAIRED_NAMES:
            raise UnbalancedTag(name, _byte_offset(text, k))
        else:
            raise UnknownTag(name, _byte_offset(text, k))
    return MarkupDoc(tuple(nodes), raw=text)


def _read_tag(text: str, k: int) -> tuple[str, int]:
    """Read the ``<|name|>`` token starting at ``k``; return (name, end index)."""
    j = text.find(_CLOSE_DELIM, k + 2)
    nxt = text.find(_OPEN, k + 2)
    if j == -1 or (nxt != -1 and nxt < j):
        end = nxt if nxt != -1 and (j == -1 or nxt < j) else min(len(text), k + 34)
        raise UnknownTag(text[k + 2 : end][:32], _byte_offset(text, k))
    name = text[k + 2 : j]
    if _TAG_NAME_RE.fullmatch(name) is None:
        raise UnknownTag(name[:32], _byte_offset(text, k))
    return name, j + 2


def _parse_text_tag(text: str, name: str, open_pos: int, i: int):
    close = f"<|/{name}|>"
    m = text.find(_OPEN, i)
    if m == -1:
        raise UnbalancedTag(name, _byte_offset(text, open_pos))
    if not text.startswith(close, m):
        raise UnbalancedTag(name, _byte_offset(text, m))
    payload = text[i:m]
    node: MarkupNode = Ref(payload) if name == "ref" else Rel(payload)
    return node, m + len(close)


def _skip_ws(text: str, i: int) -> int:
    n = len(text)
    while i < n and text[i].isspace():
        i += 1
    return i


def _scan_number(text: str, i: int, pattern, convert):
    m = pattern.match(text, i)
    if m is None:
        raise MalformedNumber(_byte_offset(text, i), "expected a number")
    lex = m.group()
    value = convert(lex)
    if isinstance(value, float) and not math.isfinite(value):
        raise MalformedNumber(_byte_offset(text, i), f"{lex!r} is not finite")
    return lex, value, m.end()


def _scan_tuple(text: str, i: int, tag: str, arity: int, pattern, convert):
    """Scan ``[v, v, ...]`` at ``i``; enforce exactly ``arity`` members."""
    i = _skip_ws(text, i)
    if not text.startswith("[", i):
        raise MalformedNumber(_byte_offset(text, i), "expected '['")
    i = _skip_ws(text, i + 1)
    if text.startswith("]", i):
        raise EmptyList(tag, _byte_offset(text, i))
    lexemes: list[str] = []
    values: list = []
    while True:
        lex, value, i = _scan_number(text, i, pattern, convert)
        lexemes.append(lex)
        values.append(value)
        i = _skip_ws(text, i)
        if text.startswith(",", i):
            i = _skip_ws(text, i + 1)
            continue
        if text.startswith("]", i):
            i += 1
            break
        raise MalformedNumber(_byte_offset(text, i), "expected ',' or ']'")
    if len(values) != arity:
        raise MalformedNumber(
            _byte_offset(text, i), f"<|{tag}|> tuple wants {arity} numbers, got {len(values)}"
        )
    return lexemes, values, i


def _parse_numeric_tag(text: str, name: str, open_pos: int, i: int):
    close = f"<|/{name}|>"

    if name == "pos":
        lexemes, values, i = _scan_tuple(text, i, name, 3, _FLOAT_RE, float)
        node: MarkupNode = Pos(Pos3(*values), tuple(lexemes))
    else:
        i = _skip_ws(text, i)
        if not text.startswith("[", i):
            raise MalformedNumber(_byte_offset(text, i), "expected '['")
        i = _skip_ws(text, i + 1)
        if text.startswith("]", i):
            raise EmptyList(name, _byte_offset(text, i))
        tuples: list[tuple] = []
        all_lexemes: list[tuple[str, ...]] = []
        while True:
            if name == "pose":
                lexemes, values, i = _scan_tuple(text, i, name, 6, _FLOAT_RE, float)
                tuples.append(Pose6(*values))
            else:
                start = i
                lexemes, values, i = _scan_tuple(text, i, name, 4, _INT_RE, int)
                for v in values:
                    if not 0 <= v < GRID:
                        raise CoordOutOfRange(v, _byte_offset(text, start))
                if values[2] < values[0] or values[3] < values[1]:
                    raise InvertedBox(tuple(values), _byte_offset(text, start))
                tuples.append(Box(*values))
            all_lexemes.append(tuple(lexemes))
            i = _skip_ws(text, i)
            if text.startswith(",", i):
                i = _skip_ws(text, i + 1)
                continue
            if text.startswith("]", i):
                i += 1
                break
            raise MalformedNumber(_byte_offset(text, i), "expected ',' or ']'")
        if name == "pose":
            node = PoseSeq(tuple(tuples), tuple(all_lexemes))
        else:
            node = Det(tuple(tuples), tuple(all_lexemes))

    i = _skip_ws(text, i)
    if i >= len(text):
        raise UnbalancedTag(name, _byte_offset(text, open_pos))
    if not text.startswith(close, i):
        raise MalformedNumber(_byte_offset(text, i), f"expected {close}")
    return node, i + len(close)


# --- Serialization ----------------------------------------------------------


def _fmt_float(value: float) -> str:
    # repr is the shortest spelling that parses back to the same double;
    # integral values drop the ".0" so a zero pose reads [[0,0,0,0,0,0]]
    if value.is_integer():
        return repr(int(value))
    return repr(value)


def _pos_body(node: Pos) -> str:
    parts = node.lexemes if node.lexemes is not None else tuple(_fmt_float(v) for v in node.point.as_tuple())
    return "[" + ",".join(parts) + "]"


def _seq_body(tuples, lexemes, fmt) -> str:
    rendered = []
    for idx, tup in enumerate(tuples):
        parts = lexemes[idx] if lexemes is not None else tuple(fmt(v) for v in tup.as_tuple())
        rendered.append("[" + ",".join(parts) + "]")
    return "[" + ", ".join(rendered) + "]"


def emit(doc: MarkupDoc) -> str:
    """Serialize a doc to canonical markup text.

    Raises InvariantViolation when the doc could not round-trip: empty or
    adjacent Text nodes, or a raw payload containing the ``<|`` delimiter.
    ``parse(emit(doc)) == doc`` holds for every doc this function accepts.
    """
    parts: list[str] = []
    prev_was_text = False
    for node in doc.nodes:
        if isinstance(node, Text):
            if prev_was_text:
                raise InvariantViolation("adjacent Text nodes are not canonical")
            if not node.value:
                raise InvariantViolation("empty Text node")
            if _OPEN in node.value:
                raise InvariantViolation("Text payload contains '<|'")
            parts.append(node.value)
            prev_was_text = True
            continue
        prev_was_text = False
        if isinstance(node, Task):
            parts.append(f"<|{node.kind.value}|>")
        elif isinstance(node, Ref):
            if _OPEN in node.name:
                raise InvariantViolation("ref name contains '<|'")
            parts.append(f"<|ref|>{node.name}<|/ref|>")
        elif isinstance(node, Rel):
            if _OPEN in node.label:
                raise InvariantViolation("rel label contains '<|'")
            parts.append(f"<|rel|>{node.label}<|/rel|>")
        elif isinstance(node, Pos):
            parts.append(f"<|pos|>{_pos_body(node)}<|/pos|>")
        elif isinstance(node, PoseSeq):
            parts.append(f"<|pose|>{_seq_body(node.poses, node.lexemes, _fmt_float)}<|/pose|>")
        elif isinstance(node, Det):
            parts.append(f"<|det|>{_seq_body(node.boxes, node.lexemes, str)}<|/det|>")
        else:
            raise InvariantViolation(f"unknown node type {type(node).__name__}")
    return "".join(parts)


_NUM_SPAN_RE = re.compile(r"(<\|(pos|pose|det)\|>)(.*?)(<\|/\2\|>)", re.S)


def canonical(text: str) -> str:
    """Rewrite whitespace inside numeric payloads to the canonical form.

    All other bytes pass through untouched.  For any string ``s`` accepted by
    :func:`parse`, ``emit(parse(s)) == canonical(s)``.
    """

    def _fix(m: re.Match) -> str:
        payload = "".join(ch for ch in m.group(3) if not ch.isspace())
        payload = payload.replace("],[", "], [")
        return m.group(1) + payload + m.group(4)

    return _NUM_SPAN_RE.sub(_fix, text)


# --- Coordinate normalization ------------------------------------------------


def _check_extent(width: int, height: int) -> None:
    if isinstance(width, bool) or isinstance(height, bool):
        raise InvalidExtent(f"extent must be integral, got {width!r} x {height!r}")
    if not isinstance(width, int) or not isinstance(height, int):
        raise InvalidExtent(f"extent must be integral, got {width!r} x {height!r}")
    if width < 1 or height < 1:
        raise InvalidExtent(f"extent must be at least 1x1, got {width} x {height}")


def normalize_box(px_box, width: int, height: int) -> Box:
    """Map a pixel rectangle (x1, y1, x2, y2) onto the [0, 999] grid.

    Each coordinate becomes floor(px * 1000 / extent), clamped into range;
    x uses the image width, y the height.  Exact for integer pixels.
    """
    _check_extent(width, height)
    try:
        x1, y1, x2, y2 = px_box
    except (TypeError, ValueError):
        raise InvariantViolation(f"pixel box must have 4 coordinates, got {px_box!r}") from None
    for v, extent in ((x1, width), (x2, width), (y1, height), (y2, height)):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            raise InvariantViolation(f"pixel coordinate {v!r} is not a finite number")
        if not 0 <= v <= extent:
            raise CoordOutOfRange(v)
    if x2 < x1 or y2 < y1:
        raise InvertedBox((x1, y1, x2, y2))
    return Box(
        _norm_coord(x1, width),
        _norm_coord(y1, height),
        _norm_coord(x2, width),
        _norm_coord(y2, height),
    )


def _norm_coord(v, extent: int) -> int:
    if isinstance(v, int):
        q = v * GRID // extent
    else:
        q = math.floor(v * GRID / extent)
    return max(0, min(GRID - 1, q))


def denormalize_box(box: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Inverse of :func:`normalize_box`: grid value to nearest pixel.

    Targets the midpoint (v + 0.5) / 1000 * extent of the source interval,
    rounding halves down; the result is clamped to [0, extent - 1].  For any
    extent >= 1000 this is an exact right inverse of normalize_box.
    """
    _check_extent(width, height)
    return (
        _denorm_coord(box.x1, width),
        _denorm_coord(box.y1, height),
        _denorm_coord(box.x2, width),
        _denorm_coord(box.y2, height),
    )


def _denorm_coord(v: int, extent: int) -> int:
    # nearest integer to (2v + 1) * extent / 2000 with ties rounded down,
    # in exact integer arithmetic
    px = -(-((2 * v + 1) * extent - GRID) // (2 * GRID))
    return max(0, min(extent - 1, px))


def normalize_point(values, extents) -> tuple[int, ...]:
    """Map coordinate values onto the 0..GRID-1 grid, one axis at a time.

    Position and pose payloads normally travel verbatim in whatever units
    the data uses; this is the opt-in grid mapping for callers that want
    them on the same footing as box coordinates.  Each axis uses the same
    floor rule as :func:`normalize_box` against its own extent.
    """
    vals = tuple(float(v) for v in values)
    exts = tuple(extents)
    if len(vals) != len(exts):
        raise InvariantViolation(
            f"need one extent per value, got {len(vals)} values and {len(exts)} extents"
        )
    for e in exts:
        if not e > 0:
            raise InvalidExtent(f"extents must be positive, got {e!r}")
    return tuple(_norm_coord(v, e) for v, e in zip(vals, exts))


def check_rel_vocabulary(doc: MarkupDoc, vocabulary) -> list[str]:
    """Return relation labels in ``doc`` that are not in ``vocabulary``.

    Labels are free text by default; callers with a closed predicate set can
    gate on this.  Comparison is casefolded on both sides.  Unknown labels
    come back in document order, first occurrence only.
    """
    known = {str(v).casefold() for v in vocabulary}
    unknown: list[str] = []
    seen: set[str] = set()
    for node in doc.nodes:
        if isinstance(node, Rel):
            key = node.label.casefold()
            if key not in known and key not in seen:
                seen.add(key)
                unknown.append(node.label)
    return unknown
