"""Scene description types, validation, and the canonical JSON schema.

The structured scene is the contract between the language-model side and
the numeric side. Canonical JSON layout::

    {
      "complex_prompt": str,
      "background": str,
      "objects": [
        {"name": str, "characteristics": str,
         "box": [x, y, w, h], "depth": int},
        ...
      ],
      "action_relations":  [[subject, predicate, object], ...],
      "spatial_relations": [[subject, predicate, object], ...]
    }

Box coordinates are normalized to the unit frame: (0, 0) is the top-left
corner, (1, 1) the bottom-right. Depth 0 is the layer nearest the viewer
and depths over a scene must form the permutation {0 .. n-1}.

Boxes are clamped into the unit frame when a scene file is ingested here.
Scenes assembled by the orchestrator are NOT clamped, so a layout that
walked out of frame surfaces as a validation violation and can be fed
back to the agents instead of being silently repaired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from .errors import MalformedSceneError, SchemaViolationError
from .jsonish import loads_object

# Bounds checks allow this much float slack so a box that was clamped on
# ingest (where w = 1 - x may round above the exact remainder) never
# re-reports as out of frame.
_EDGE_SLACK = 1e-9

BOX_OUT_OF_BOUNDS = "box-out-of-bounds"
ZERO_AREA_BOX = "zero-area-box"
DUPLICATE_DEPTH = "duplicate-depth"
BAD_DEPTH_SET = "bad-depth-set"
UNKNOWN_REFERENCE = "unknown-reference"
MISSING_BACKGROUND = "missing-background"
NO_OBJECTS = "no-objects"
DUPLICATE_NAME = "duplicate-name"
EMPTY_NAME = "empty-name"


@dataclass(frozen=True)
class BoundingBox:
    """Normalized [x, y, w, h] box plus integer layer depth (0 = nearest)."""

    x: float
    y: float
    w: float
    h: float
    depth: int

    def clamped(self) -> "BoundingBox":
        """Intersect the box with the unit frame, preserving depth.

        Identity (the same object) for boxes already in frame; width or
        height collapses to zero for boxes entirely outside it.
        """
        if (
            0.0 <= self.x
            and 0.0 <= self.y
            and self.w > 0.0
            and self.h > 0.0
            and self.x + self.w <= 1.0
            and self.y + self.h <= 1.0
        ):
            return self
        x0 = min(max(self.x, 0.0), 1.0)
        y0 = min(max(self.y, 0.0), 1.0)
        x1 = min(max(self.x + self.w, 0.0), 1.0)
        y1 = min(max(self.y + self.h, 0.0), 1.0)
        return BoundingBox(x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0), self.depth)


@dataclass(frozen=True)
class SceneObject:
    name: str
    characteristics: str
    box: BoundingBox

    @property
    def prompt_text(self) -> str:
        """Denoiser-facing prompt: name (disambiguation suffix stripped) plus characteristics."""
        base = self.name.split("#", 1)[0].strip()
        if self.characteristics.strip():
            return f"{base}, {self.characteristics.strip()}"
        return base


class RelationKind(str, Enum):
    ACTION = "action"
    SPATIAL = "spatial"


@dataclass(frozen=True)
class Relation:
    subject: str
    predicate: str
    object: str
    kind: RelationKind


@dataclass(frozen=True)
class SceneElements:
    """The integrated scene: prompt, background, placed objects, relations."""

    complex_prompt: str
    background: str
    objects: tuple[SceneObject, ...]
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relations", tuple(self.relations))

    @property
    def object_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.objects)


@dataclass(frozen=True)
class Violation:
    """One validation finding. ``subject`` names the offending object or
    relation; empty for scene-level findings."""

    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def summary(self) -> str:
        """Human-readable findings, one per line; empty string when clean."""
        return "\n".join(f"- {v.message}" for v in self.violations)


def validate_scene(scene: SceneElements) -> ValidationReport:
    """Check every scene invariant; an empty report means all of them hold.

    Checked: background present, at least one object, nonempty unique
    names, boxes inside the unit frame with positive area, depths forming
    the permutation {0 .. n-1}, and relations referencing known objects.
    """
    found: list[Violation] = []

    if not scene.background.strip():
        found.append(Violation(MISSING_BACKGROUND, "", "scene has no background description"))
    if not scene.objects:
        found.append(Violation(NO_OBJECTS, "", "scene has no objects"))

    seen_names: set[str] = set()
    for obj in scene.objects:
        name = obj.name
        if not name.strip():
            found.append(Violation(EMPTY_NAME, name, "object has an empty name"))
        elif name in seen_names:
            found.append(Violation(DUPLICATE_NAME, name, f"duplicate object name {name!r}"))
        seen_names.add(name)

        b = obj.box
        if b.w <= 0.0 or b.h <= 0.0:
            found.append(
                Violation(ZERO_AREA_BOX, name, f"box of {name!r} has no area (w={b.w}, h={b.h})")
            )
        if (
            b.x < -_EDGE_SLACK
            or b.y < -_EDGE_SLACK
            or b.x + max(b.w, 0.0) > 1.0 + _EDGE_SLACK
            or b.y + max(b.h, 0.0) > 1.0 + _EDGE_SLACK
        ):
            found.append(
                Violation(
                    BOX_OUT_OF_BOUNDS,
                    name,
                    f"box of {name!r} exceeds the unit frame: "
                    f"[{b.x}, {b.y}, {b.w}, {b.h}]",
                )
            )

    if scene.objects:
        n = len(scene.objects)
        depths = [o.box.depth for o in scene.objects]
        seen_depths: set[int] = set()
        for obj, d in zip(scene.objects, depths):
            if d in seen_depths:
                found.append(
                    Violation(DUPLICATE_DEPTH, obj.name, f"depth {d} assigned more than once")
                )
            seen_depths.add(d)
        if seen_depths != set(range(n)):
            found.append(
                Violation(
                    BAD_DEPTH_SET,
                    "",
                    f"depths {sorted(seen_depths)} must be exactly 0..{n - 1}",
                )
            )

    names = set(scene.object_names)
    for rel in scene.relations:
        for end in (rel.subject, rel.object):
            if end not in names:
                found.append(
                    Violation(
                        UNKNOWN_REFERENCE,
                        end,
                        f"{rel.kind.value} relation "
                        f"({rel.subject!r}, {rel.predicate!r}, {rel.object!r}) "
                        f"references unknown object {end!r}",
                    )
                )

    return ValidationReport(tuple(found))


def serialize_scene(scene: SceneElements) -> bytes:
    """Render the canonical JSON document, UTF-8, two-space indent."""
    doc = {
        "complex_prompt": scene.complex_prompt,
        "background": scene.background,
        "objects": [
            {
                "name": o.name,
                "characteristics": o.characteristics,
                "box": [o.box.x, o.box.y, o.box.w, o.box.h],
                "depth": o.box.depth,
            }
            for o in scene.objects
        ],
        "action_relations": [
            [r.subject, r.predicate, r.object]
            for r in scene.relations
            if r.kind is RelationKind.ACTION
        ],
        "spatial_relations": [
            [r.subject, r.predicate, r.object]
            for r in scene.relations
            if r.kind is RelationKind.SPATIAL
        ],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def disambiguate_names(names: Iterable[str]) -> list[str]:
    """Make names unique by suffixing repeats with #2, #3, ...

    The first occurrence keeps the bare name so relations that mention it
    still resolve.
    """
    counts: dict[str, int] = {}
    out: list[str] = []
    for name in names:
        counts[name] = counts.get(name, 0) + 1
        out.append(name if counts[name] == 1 else f"{name}#{counts[name]}")
    return out


def _want(doc: dict, key: str, kind: type, problems: list[str]) -> Any:
    if key not in doc:
        problems.append(f"missing field {key!r}")
        return None
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"field {key!r} must be a number, got {type(value).__name__}")
            return None
        return float(value)
    if not isinstance(value, kind):
        problems.append(f"field {key!r} must be {kind.__name__}, got {type(value).__name__}")
        return None
    return value


def _coerce_depth(value: Any, where: str, problems: list[str]) -> int:
    if isinstance(value, bool):
        problems.append(f"{where}: depth must be an integer")
        return 0
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    problems.append(f"{where}: depth must be an integer, got {value!r}")
    return 0


def _parse_relations(
    doc: dict, key: str, kind: RelationKind, problems: list[str]
) -> list[Relation]:
    raw = doc.get(key, [])
    if not isinstance(raw, list):
        problems.append(f"field {key!r} must be a list of triples")
        return []
    out: list[Relation] = []
    for i, item in enumerate(raw):
        if (
            not isinstance(item, list)
            or len(item) != 3
            or not all(isinstance(part, str) for part in item)
        ):
            problems.append(f"{key}[{i}] must be a [subject, predicate, object] string triple")
            continue
        out.append(Relation(item[0], item[1], item[2], kind))
    return out


def parse_scene(data: bytes | str, *, allow_empty_objects: bool = False) -> SceneElements:
    """Parse and validate a scene document.

    Accepts the canonical JSON, falling back to one repair pass for text
    with surrounding prose or python-style quoting. Boxes are clamped into
    the unit frame on the way in; duplicate object names are disambiguated
    with #k suffixes. Raises MalformedSceneError when no JSON object can
    be recovered and SchemaViolationError (carrying the report) when the
    content breaks the schema or fails scene validation.

    ``allow_empty_objects`` tolerates a scene with no objects; the static
    fusion path uses it for background-only compositions.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as err:
            raise MalformedSceneError(f"scene document is not UTF-8: {err}") from None
    else:
        text = data

    try:
        doc = loads_object(text)
    except ValueError as err:
        raise MalformedSceneError(f"scene document is not a JSON object: {err}") from None

    problems: list[str] = []
    complex_prompt = _want(doc, "complex_prompt", str, problems)
    background = _want(doc, "background", str, problems)

    raw_objects = doc.get("objects")
    if not isinstance(raw_objects, list):
        problems.append("field 'objects' must be a list")
        raw_objects = []

    names: list[str] = []
    parsed: list[tuple[str, BoundingBox]] = []
    for i, entry in enumerate(raw_objects):
        where = f"objects[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{where} must be an object")
            continue
        sub: list[str] = []
        name = _want(entry, "name", str, sub)
        characteristics = entry.get("characteristics", "")
        if not isinstance(characteristics, str):
            sub.append("field 'characteristics' must be a string")
        box = entry.get("box")
        if (
            not isinstance(box, list)
            or len(box) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in box)
        ):
            sub.append("field 'box' must be [x, y, w, h] numbers")
            box = None
        depth = _coerce_depth(entry.get("depth", None), where, sub) if "depth" in entry else None
        if depth is None:
            sub.append("missing field 'depth'")
        if sub:
            problems.extend(f"{where}: {p}" for p in sub)
            continue
        bbox = BoundingBox(float(box[0]), float(box[1]), float(box[2]), float(box[3]), depth)
        clamped = bbox.clamped()
        if bbox.w > 0 and bbox.h > 0 and (clamped.w <= 0 or clamped.h <= 0):
            problems.append(f"{where}: box {box} lies entirely outside the unit frame")
            continue
        names.append(name)
        parsed.append((characteristics, clamped))

    relations = _parse_relations(doc, "action_relations", RelationKind.ACTION, problems)
    relations += _parse_relations(doc, "spatial_relations", RelationKind.SPATIAL, problems)

    if problems:
        report = ValidationReport(
            tuple(Violation("malformed-field", "", p) for p in problems)
        )
        raise SchemaViolationError(
            "scene document violates the schema:\n" + report.summary(), report
        )

    unique = disambiguate_names(names)
    objects = tuple(
        SceneObject(name, characteristics, box)
        for name, (characteristics, box) in zip(unique, parsed)
    )
    scene = SceneElements(
        complex_prompt=complex_prompt,
        background=background,
        objects=objects,
        relations=tuple(relations),
    )

    report = validate_scene(scene)
    if allow_empty_objects and not scene.objects:
        report = ValidationReport(
            tuple(v for v in report.violations if v.kind != NO_OBJECTS)
        )
    if not report.ok:
        raise SchemaViolationError(
            "scene fails validation:\n" + report.summary(), report
        )
    return scene
