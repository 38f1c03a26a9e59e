"""Scene-graph data model and ingestion.

Scene graphs arrive either in the Visual-Genome public release layout
(``vg_json``: a directory with ``image_data.json``, ``objects.json`` and
``relationships.json`` joined on image id) or in the toolkit's canonical
``triple_jsonl`` exchange format (one image record per line, boxes in
``[x, y, w, h]``).  Boxes are stored internally as integer ``xyxy`` pixels
with the origin at the top-left corner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import EmptyCorpusError

VG_JSON = "vg_json"
TRIPLE_JSONL = "triple_jsonl"
FORMATS = (VG_JSON, TRIPLE_JSONL)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in integer xyxy pixels, origin top-left."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not isinstance(v, int):
                raise ValueError(f"box coordinates must be integers, got {v!r}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"box coordinates must be non-negative: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate box: {self}")

    @classmethod
    def from_xywh(cls, x, y, w, h) -> "BBox":
        return cls(int(x), int(y), int(x) + int(w), int(y) + int(h))

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def inside(self, image_width: int, image_height: int) -> bool:
        return self.x_max <= image_width and self.y_max <= image_height

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Entity:
    """A named, boxed object within one image."""

    entity_id: str
    name: str
    bbox: BBox
    image_id: str

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError(f"entity {self.entity_id!r} has an empty name")

    @property
    def name_words(self) -> tuple[str, ...]:
        return tuple(self.name.lower().split())


@dataclass(frozen=True)
class Predicate:
    """Directed ``<subject, relation, object>`` triple over entity ids."""

    subject_id: str
    relation: str
    object_id: str

    def __post_init__(self):
        if self.subject_id == self.object_id:
            raise ValueError(f"predicate relates an entity to itself: {self.subject_id!r}")
        if not self.relation.strip():
            raise ValueError("predicate has an empty relation")

    @property
    def endpoints(self) -> frozenset[str]:
        return frozenset((self.subject_id, self.object_id))


@dataclass(frozen=True)
class RegionDescription:
    """Free-text description of one entity, usable as a direct level-two pair."""

    text: str
    entity_id: str


@dataclass(frozen=True)
class SceneGraph:
    """One image's entities and relation predicates.

    Cross-reference invariants (predicate endpoints resolve, boxes fit the
    image) are checked by :func:`validate`, not at construction, so that
    malformed graphs can be represented and reported.
    """

    image_id: str
    width: int
    height: int
    entities: tuple[Entity, ...]
    predicates: tuple[Predicate, ...]
    regions: tuple[RegionDescription, ...] = ()
    _by_id: dict = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.entity_id: e for e in self.entities})

    def entity(self, entity_id: str) -> Entity:
        return self._by_id[entity_id]

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._by_id

    @property
    def usable_for_composition(self) -> bool:
        return bool(self.predicates)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str


@dataclass
class ValidationReport:
    image_id: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, subject: str, detail: str) -> None:
        self.violations.append(Violation(kind, subject, detail))


def validate(graph: SceneGraph) -> ValidationReport:
    """List every invariant violation in ``graph``; empty report iff valid."""
    report = ValidationReport(graph.image_id)
    seen_ids = set()
    for entity in graph.entities:
        if entity.entity_id in seen_ids:
            report.add("duplicate-entity-id", entity.entity_id, "entity id occurs more than once")
        seen_ids.add(entity.entity_id)
        if not entity.bbox.inside(graph.width, graph.height):
            report.add(
                "bbox-out-of-bounds",
                entity.entity_id,
                f"box {entity.bbox.to_list()} exceeds image ({graph.width}x{graph.height})",
            )
    for pred in graph.predicates:
        for ref in (pred.subject_id, pred.object_id):
            if not graph.has_entity(ref):
                report.add("dangling-reference", ref, f"predicate {pred.subject_id}-{pred.relation}-{pred.object_id} references missing entity {ref!r}")
    for region in graph.regions:
        if not graph.has_entity(region.entity_id):
            report.add("dangling-reference", region.entity_id, f"region {region.text!r} references missing entity {region.entity_id!r}")
    return report


@dataclass(frozen=True)
class Rejection:
    record_key: str
    reason: str


@dataclass
class IngestResult:
    """Accepted graphs plus a rejection report for one ingestion run."""

    graphs: list[SceneGraph]
    rejections: list[Rejection]
    unusable: list[str]

    @property
    def accepted(self) -> int:
        return len(self.graphs)

    @property
    def rejected(self) -> int:
        return len(self.rejections)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected


def ingest_scene_graphs(path, fmt: str) -> IngestResult:
    """Read and validate scene graphs from ``path`` in the declared format.

    Records with dangling references, degenerate or out-of-bounds boxes, or
    missing fields are dropped whole and counted in the rejection report.
    Duplicate predicates within a record are silently deduplicated.  Raises
    :class:`EmptyCorpusError` when no record survives.
    """
    path = Path(path)
    if fmt == TRIPLE_JSONL:
        records = _read_triple_jsonl(path)
    elif fmt == VG_JSON:
        records = _read_vg_dir(path)
    else:
        raise ValueError(f"unknown scene-graph format {fmt!r}; expected one of {FORMATS}")

    result = IngestResult(graphs=[], rejections=[], unusable=[])
    for key, record in records:
        try:
            graph = _build_graph(record)
        except (KeyError, TypeError, ValueError) as exc:
            result.rejections.append(Rejection(key, str(exc)))
            continue
        report = validate(graph)
        if not report.ok:
            first = report.violations[0]
            result.rejections.append(Rejection(key, f"{first.kind}: {first.detail}"))
            continue
        if not graph.usable_for_composition:
            result.unusable.append(graph.image_id)
        result.graphs.append(graph)
    if not result.graphs:
        raise EmptyCorpusError(f"no valid scene graphs in {path}")
    return result


def _read_triple_jsonl(path: Path) -> Iterable[tuple[str, dict]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append((f"{path.name}:{lineno}", json.loads(line)))
            except json.JSONDecodeError as exc:
                records.append((f"{path.name}:{lineno}", {"_malformed": str(exc)}))
    return records


def _read_vg_dir(path: Path) -> Iterable[tuple[str, dict]]:
    """Join the VG release files on image id into triple-style records."""
    if not path.is_dir():
        raise FileNotFoundError(f"vg_json expects a directory, got {path}")
    with open(path / "image_data.json", encoding="utf-8") as fh:
        image_meta = {rec["image_id"]: rec for rec in json.load(fh)}
    with open(path / "objects.json", encoding="utf-8") as fh:
        objects = {rec["image_id"]: rec.get("objects", []) for rec in json.load(fh)}
    with open(path / "relationships.json", encoding="utf-8") as fh:
        relationships = {rec["image_id"]: rec.get("relationships", []) for rec in json.load(fh)}

    records = []
    for image_id in sorted(objects, key=str):
        key = f"image:{image_id}"
        meta = image_meta.get(image_id)
        if meta is None:
            records.append((key, {"_malformed": f"image {image_id} missing from image_data.json"}))
            continue
        entities = [
            {
                "id": str(obj["object_id"]),
                "name": (obj.get("names") or [""])[0],
                "bbox": [obj["x"], obj["y"], obj["w"], obj["h"]],
            }
            for obj in objects[image_id]
        ]
        predicates = [
            {
                "subject": str(rel["subject"]["object_id"]),
                "relation": rel["predicate"],
                "object": str(rel["object"]["object_id"]),
            }
            for rel in relationships.get(image_id, [])
        ]
        records.append(
            (
                key,
                {
                    "image_id": str(image_id),
                    "width": meta["width"],
                    "height": meta["height"],
                    "entities": entities,
                    "predicates": predicates,
                },
            )
        )
    return records


def _build_graph(record: dict) -> SceneGraph:
    if "_malformed" in record:
        raise ValueError(record["_malformed"])
    image_id = str(record["image_id"])
    width = int(record["width"])
    height = int(record["height"])
    if width <= 0 or height <= 0:
        raise ValueError(f"non-positive image dimensions {width}x{height}")
    entities = tuple(
        Entity(
            entity_id=str(raw["id"]),
            name=_norm_text(raw["name"]),
            bbox=BBox.from_xywh(*raw["bbox"]),
            image_id=image_id,
        )
        for raw in record.get("entities", [])
    )
    predicates = []
    seen = set()
    for raw in record.get("predicates", []):
        pred = Predicate(
            subject_id=str(raw["subject"]),
            relation=_norm_text(raw["relation"]),
            object_id=str(raw["object"]),
        )
        triple = (pred.subject_id, pred.relation, pred.object_id)
        if triple in seen:
            continue
        seen.add(triple)
        predicates.append(pred)
    regions = tuple(
        RegionDescription(text=_norm_text(raw["text"]), entity_id=str(raw["entity"]))
        for raw in record.get("regions", [])
    )
    return SceneGraph(
        image_id=image_id,
        width=width,
        height=height,
        entities=entities,
        predicates=tuple(predicates),
        regions=regions,
    )


def _norm_text(value) -> str:
    return " ".join(str(value).lower().split())
