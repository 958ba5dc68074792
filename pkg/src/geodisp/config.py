"""Run configuration: one JSON file, every field overridable from the CLI."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError
from .ingest import POINT_LIKE_THRESHOLD, LabelPolicy
from .matching import CRITERIA
from .merging import DEFAULT_GROUPS, MergePolicy

SCHEMA_VERSION = 1
THREADS_ENV = "GEODISP_THREADS"
HIGHLIGHT_THRESHOLD = 0.05


@dataclass(frozen=True)
class ModelInput:
    model_id: str
    path: Path


@dataclass
class RunConfig:
    gt: Path
    predictions: List[ModelInput]
    image_meta: Path
    geo: Path
    output_dir: Path = Path("report")
    geo_mode: str = "explicit"
    region_file: Optional[Path] = None
    label_policy: LabelPolicy = field(default_factory=LabelPolicy)
    merge_groups: Tuple[Tuple[str, ...], ...] = DEFAULT_GROUPS
    point_like_threshold: float = POINT_LIKE_THRESHOLD
    highlight_threshold: float = HIGHLIGHT_THRESHOLD
    score_threshold: float = 0.0
    criteria: Tuple[str, ...] = CRITERIA
    threads: Optional[int] = None

    def __post_init__(self):
        ids = [m.model_id for m in self.predictions]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"model_ids must be unique, got {ids}")
        if self.geo_mode not in ("explicit", "latlon"):
            raise ConfigError(f"geo_mode must be 'explicit' or 'latlon', got {self.geo_mode!r}")
        self.criteria = tuple(self.criteria)
        bad = [c for c in self.criteria if c not in CRITERIA]
        if bad or not self.criteria:
            raise ConfigError(f"criteria must be a non-empty subset of {CRITERIA}, got {list(self.criteria)}")
        if not 0.0 <= self.point_like_threshold < 1.0:
            raise ConfigError(f"point_like_threshold must be in [0, 1), got {self.point_like_threshold}")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError(f"score_threshold must be in [0, 1], got {self.score_threshold}")
        if self.highlight_threshold < 0:
            raise ConfigError("highlight_threshold must be non-negative")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.merge_policy  # validates groups against the whitelist

    @property
    def merge_policy(self) -> MergePolicy:
        return MergePolicy(self.merge_groups, self.label_policy.class_whitelist)

    def resolved_threads(self) -> int:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if self.threads is not None:
            return self.threads
        return os.cpu_count() or 1

    def check_paths(self) -> None:
        paths = [("gt", self.gt), ("image_meta", self.image_meta), ("geo", self.geo)]
        paths += [(f"predictions[{m.model_id}]", m.path) for m in self.predictions]
        if self.region_file is not None:
            paths.append(("region_file", self.region_file))
        missing = [f"{name}={p}" for name, p in paths if not Path(p).is_file()]
        if missing:
            raise ConfigError("missing input files: " + ", ".join(missing))

    def echo(self) -> dict:
        """Settings that shape the metrics; paths and thread count are left out
        so the metrics file is identical across machines and worker counts."""
        return {
            "schema_version": SCHEMA_VERSION,
            "geo_mode": self.geo_mode,
            "label_policy": self.label_policy.to_dict(),
            "merge_groups": [list(g) for g in self.merge_groups],
            "point_like_threshold": self.point_like_threshold,
            "highlight_threshold": self.highlight_threshold,
            "score_threshold": self.score_threshold,
            "criteria": list(self.criteria),
            "models": [m.model_id for m in self.predictions],
        }


def _path(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def config_from_dict(d: dict, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    known = {
        "schema_version", "gt", "predictions", "image_meta", "geo", "output_dir", "geo_mode",
        "region_file", "label_policy", "merge_groups", "point_like_threshold",
        "highlight_threshold", "score_threshold", "criteria", "threads",
    }
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {unknown}")
    try:
        preds = []
        for entry in d["predictions"]:
            preds.append(ModelInput(str(entry["model_id"]), _path(base, entry["path"])))
        return RunConfig(
            gt=_path(base, d["gt"]),
            predictions=preds,
            image_meta=_path(base, d["image_meta"]),
            geo=_path(base, d["geo"]),
            output_dir=_path(base, d.get("output_dir", "report")),
            geo_mode=d.get("geo_mode", "explicit"),
            region_file=_path(base, d["region_file"]) if d.get("region_file") else None,
            label_policy=LabelPolicy.from_dict(d.get("label_policy")),
            merge_groups=tuple(tuple(g) for g in d.get("merge_groups", DEFAULT_GROUPS)),
            point_like_threshold=float(d.get("point_like_threshold", POINT_LIKE_THRESHOLD)),
            highlight_threshold=float(d.get("highlight_threshold", HIGHLIGHT_THRESHOLD)),
            score_threshold=float(d.get("score_threshold", 0.0)),
            criteria=tuple(d.get("criteria", CRITERIA)),
            threads=d.get("threads"),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing required field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path, overrides: Optional[Dict] = None) -> RunConfig:
    """Read a config file and apply ``overrides`` (already-parsed field values)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return config_from_dict(doc, base_dir=path.parent)
