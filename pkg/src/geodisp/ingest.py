"""Parsing and validation of instance files and image metadata.

Instance files are line-delimited JSON, one object per line::

    {"image_id": "img1", "class": "bus", "bbox": [x, y, w, h],
     "mask": {"size": [h, w], "counts": [bg, fg, bg, ...]}, "score": 0.93}

``score`` is required for predictions and ignored for ground truth. ``bbox``
may be omitted, in which case the tight box of the mask is used.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import ConfigError, GeometryError, IngestError
from .geometry import Box2D, RleMask, tight_box

log = logging.getLogger(__name__)

DEFAULT_CLASSES = ("person", "car", "bus", "truck", "bicycle", "motorcycle", "rider")
DEFAULT_ALIASES = {"motorcyclist": "rider", "bicyclist": "rider"}
POINT_LIKE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class ImageMeta:
    image_id: str
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise IngestError(f"image {self.image_id!r} has non-positive size {self.width}x{self.height}")

    @property
    def pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class LabelPolicy:
    class_whitelist: Tuple[str, ...] = DEFAULT_CLASSES
    aliases: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_ALIASES))

    def __post_init__(self):
        object.__setattr__(self, "class_whitelist", tuple(self.class_whitelist))
        object.__setattr__(self, "aliases", dict(self.aliases))
        if len(set(self.class_whitelist)) != len(self.class_whitelist):
            raise ConfigError(f"class whitelist has duplicates: {list(self.class_whitelist)}")
        for src, dst in self.aliases.items():
            if dst not in self.class_whitelist:
                raise ConfigError(f"alias {src!r} -> {dst!r} targets a class outside the whitelist")

    def resolve(self, label: str) -> Optional[str]:
        """Post-alias label, or None when the label is not whitelisted."""
        label = self.aliases.get(label, label)
        return label if label in self.class_whitelist else None

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "LabelPolicy":
        if d is None:
            return cls()
        return cls(
            class_whitelist=tuple(d.get("class_whitelist", DEFAULT_CLASSES)),
            aliases=d.get("aliases", DEFAULT_ALIASES),
        )

    def to_dict(self) -> dict:
        return {"class_whitelist": list(self.class_whitelist), "aliases": dict(sorted(self.aliases.items()))}


@dataclass(frozen=True)
class InstanceRecord:
    image_id: str
    class_label: str
    mask: RleMask
    bbox: Box2D
    instance_index: int

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "class": self.class_label,
            "bbox": self.bbox.as_list(),
            "mask": self.mask.to_json(),
        }


@dataclass(frozen=True)
class PredictionRecord(InstanceRecord):
    score: float

    def to_json(self) -> dict:
        d = super().to_json()
        d["score"] = self.score
        return d


AnyRecord = Union[InstanceRecord, PredictionRecord]


@dataclass
class IngestStats:
    """Per-file counters; nothing is dropped without being counted here."""

    path: str
    kind: str
    lines: int = 0
    kept: int = 0
    aliased: Counter = field(default_factory=Counter)
    dropped_class: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "file": Path(self.path).name,
            "kind": self.kind,
            "lines": self.lines,
            "kept": self.kept,
            "aliased": dict(sorted(self.aliased.items())),
            "dropped_not_whitelisted": dict(sorted(self.dropped_class.items())),
        }


def load_image_meta(path) -> Dict[str, ImageMeta]:
    """Read an ``image_id,width,height`` CSV."""
    path = Path(path)
    out: Dict[str, ImageMeta] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image_id", "width", "height"]:
            raise IngestError(f"expected header 'image_id,width,height', got {header!r}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise IngestError(f"expected 3 fields, got {len(row)}", path, lineno)
            image_id = row[0].strip()
            try:
                width, height = int(row[1]), int(row[2])
            except ValueError:
                raise IngestError(f"width/height must be integers, got {row[1:]!r}", path, lineno) from None
            if image_id in out:
                raise IngestError(f"duplicate image_id {image_id!r}", path, lineno)
            try:
                out[image_id] = ImageMeta(image_id, width, height)
            except IngestError as exc:
                raise IngestError(str(exc), path, lineno) from None
    return out


def write_image_meta(path, meta: Iterable[ImageMeta]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "width", "height"])
        for m in meta:
            w.writerow([m.image_id, m.width, m.height])


def _parse_record(obj, meta: Mapping[str, ImageMeta], kind: str) -> Tuple[str, str, RleMask, Optional[Box2D], Optional[float]]:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    image_id = obj.get("image_id")
    if not isinstance(image_id, str):
        raise ValueError("missing or non-string 'image_id'")
    label = obj.get("class")
    if not isinstance(label, str):
        raise ValueError("missing or non-string 'class'")
    if image_id not in meta:
        raise ValueError(f"unknown image_id {image_id!r}")
    im = meta[image_id]

    m = obj.get("mask")
    if not isinstance(m, dict) or "size" not in m or "counts" not in m:
        raise ValueError("missing 'mask' with 'size' and 'counts'")
    size = m["size"]
    if not (isinstance(size, list) and len(size) == 2):
        raise ValueError("mask 'size' must be [h, w]")
    if tuple(size) != (im.height, im.width):
        raise ValueError(f"mask size {size} does not match image {image_id!r} size [{im.height}, {im.width}]")
    counts = m["counts"]
    if not isinstance(counts, list):
        raise ValueError("mask 'counts' must be an integer array (compressed RLE strings are not supported)")
    mask = RleMask(size[0], size[1], tuple(counts))
    if mask.area == 0:
        raise ValueError("mask has no foreground pixels")

    bbox = None
    if obj.get("bbox") is not None:
        b = obj["bbox"]
        if not (isinstance(b, list) and len(b) == 4 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in b)):
            raise ValueError("'bbox' must be [x, y, w, h] numbers")
        bbox = Box2D(*b)
        if bbox.x + bbox.w > im.width or bbox.y + bbox.h > im.height:
            raise ValueError(f"bbox {b} exceeds image {image_id!r} bounds {im.width}x{im.height}")

    score = None
    if kind == "pred":
        score = obj.get("score")
        if score is None:
            raise ValueError("prediction record missing 'score'")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ValueError(f"score must be a number in [0, 1], got {score!r}")
        score = float(score)
    return image_id, label, mask, bbox, score


def load_instances(
    path,
    meta: Mapping[str, ImageMeta],
    policy: LabelPolicy,
    kind: str = "gt",
) -> Tuple[List[AnyRecord], IngestStats]:
    """Load a ground-truth (``kind="gt"``) or prediction (``kind="pred"``) file.

    Aliases are applied before the whitelist, so ``bicyclist`` survives as
    ``rider``. ``instance_index`` is the record's 0-based position in the file
    (blank lines skipped), so it stays stable when earlier records are dropped.
    Any malformed line aborts the load with ``path:line`` in the message.
    """
    if kind not in ("gt", "pred"):
        raise ValueError(f"kind must be 'gt' or 'pred', got {kind!r}")
    path = Path(path)
    stats = IngestStats(str(path), kind)
    records: List[AnyRecord] = []
    position = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            stats.lines += 1
            try:
                obj = json.loads(line)
                image_id, label, mask, bbox, score = _parse_record(obj, meta, kind)
            except json.JSONDecodeError as exc:
                raise IngestError(f"malformed JSON: {exc.msg}", path, lineno) from None
            except (ValueError, GeometryError) as exc:
                raise IngestError(str(exc), path, lineno) from None
            index = position
            position += 1
            resolved = policy.resolve(label)
            if resolved is None:
                stats.dropped_class[label] += 1
                continue
            if resolved != label:
                stats.aliased[f"{label}->{resolved}"] += 1
            if bbox is None:
                bbox = tight_box(mask)
            if kind == "pred":
                records.append(PredictionRecord(image_id, resolved, mask, bbox, index, score))
            else:
                records.append(InstanceRecord(image_id, resolved, mask, bbox, index))
    stats.kept = len(records)
    if stats.dropped_class:
        log.info("%s: dropped %d non-whitelisted records", path, sum(stats.dropped_class.values()))
    return records, stats


def write_instances(path, records: Iterable[AnyRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), separators=(",", ":")))
            fh.write("\n")


def is_point_like(record: InstanceRecord, image: ImageMeta, threshold: float) -> bool:
    # decimal-exact threshold: 100 px of 1e6 must not count as below 0.01%
    return Fraction(record.mask.area, image.pixels) < Fraction(repr(float(threshold)))


def apply_point_like_filter(
    records: Sequence[AnyRecord],
    meta: Mapping[str, ImageMeta],
    threshold: float = POINT_LIKE_THRESHOLD,
) -> Tuple[List[AnyRecord], Counter]:
    """Drop ground-truth instances covering less than ``threshold`` of their image.

    Predictions pass through untouched. Returns the kept records and a
    per-class counter of exclusions.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"point-like threshold must be in [0, 1), got {threshold}")
    kept: List[AnyRecord] = []
    excluded: Counter = Counter()
    for r in records:
        if not isinstance(r, PredictionRecord) and is_point_like(r, meta[r.image_id], threshold):
            excluded[r.class_label] += 1
            continue
        kept.append(r)
    return kept, excluded
