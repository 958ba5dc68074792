"""End-to-end audit: ingest, continent assignment, matching, metrics."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from . import __version__
from .config import RunConfig
from .errors import InvariantViolation
from .geo import CONTINENTS, Continent, load_geo, load_region_table
from .ingest import (
    ImageMeta,
    InstanceRecord,
    PredictionRecord,
    apply_point_like_filter,
    load_image_meta,
    load_instances,
)
from .matching import MatchResult, evaluate_dataset, flatten
from .metrics import class_criterion_metrics

log = logging.getLogger(__name__)

METRICS_SCHEMA = "geodisp.metrics/1"


@dataclass
class Prepared:
    meta: Dict[str, ImageMeta]
    gts: List[InstanceRecord]
    predictions: Dict[str, List[PredictionRecord]]
    continent_of: Dict[str, Continent]
    counters: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)

    def images_per_continent(self) -> Dict[str, int]:
        counts = Counter(self.continent_of.values())
        return {c.value: counts.get(c, 0) for c in CONTINENTS}

    def instances_per_class(self) -> Dict[str, Dict[str, int]]:
        table: Dict[str, Counter] = defaultdict(Counter)
        for r in self.gts:
            table[r.class_label][self.continent_of[r.image_id]] += 1
        return {cls: {c.value: table[cls].get(c, 0) for c in CONTINENTS} for cls in sorted(table)}


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def prepare(config: RunConfig) -> Prepared:
    """Load and validate every input; no matching happens here."""
    config.check_paths()
    meta = load_image_meta(config.image_meta)
    policy = config.label_policy
    gts, gt_stats = load_instances(config.gt, meta, policy, kind="gt")
    gts, point_like = apply_point_like_filter(gts, meta, config.point_like_threshold)

    table = load_region_table(config.region_file) if config.geo_mode == "latlon" else None
    tags, geo_report = load_geo(config.geo, config.geo_mode, table)
    continent_of = {i: tags[i].continent for i in meta if i in tags}
    no_geo = sorted(i for i in meta if i not in tags and i not in set(geo_report.unknown))
    if no_geo:
        log.warning("%d images have no location metadata and are excluded", len(no_geo))
    if geo_report.unknown:
        log.warning("%d images fall outside every continent region and are excluded", len(geo_report.unknown))

    kept_gts = [r for r in gts if r.image_id in continent_of]
    geo_dropped_gt = Counter(r.class_label for r in gts if r.image_id not in continent_of)

    predictions = {}
    pred_stats = {}
    geo_dropped_pred = {}
    for m in config.predictions:
        preds, stats = load_instances(m.path, meta, policy, kind="pred")
        predictions[m.model_id] = [p for p in preds if p.image_id in continent_of]
        pred_stats[m.model_id] = stats.to_dict()
        geo_dropped_pred[m.model_id] = len(preds) - len(predictions[m.model_id])

    counters = {
        "images": len(meta),
        "images_analyzed": len(continent_of),
        "images_without_geo": len(no_geo),
        "images_unknown_continent": len(geo_report.unknown),
        "geo_rows_not_in_meta": len(set(tags) - set(meta)),
        "gt": gt_stats.to_dict(),
        "gt_point_like_excluded": dict(sorted(point_like.items())),
        "gt_excluded_no_continent": dict(sorted(geo_dropped_gt.items())),
        "gt_analyzed": len(kept_gts),
        "predictions": pred_stats,
        "predictions_excluded_no_continent": geo_dropped_pred,
        "geo": geo_report.to_dict(),
    }
    digests = {
        "gt": {"name": Path(config.gt).name, "sha256": file_digest(config.gt)},
        "image_meta": {"name": Path(config.image_meta).name, "sha256": file_digest(config.image_meta)},
        "geo": {"name": Path(config.geo).name, "sha256": file_digest(config.geo)},
        "predictions": {
            m.model_id: {"name": Path(m.path).name, "sha256": file_digest(m.path)} for m in config.predictions
        },
    }
    return Prepared(meta, kept_gts, predictions, continent_of, counters, digests)


def _check_monotone(plain: List[MatchResult], corrected: List[MatchResult], criterion: str) -> None:
    for p, c in zip(plain, corrected):
        if p.gt_ref != c.gt_ref:
            raise InvariantViolation("plain and corrected runs are misaligned")
        if c.iou(criterion) < p.iou(criterion):
            raise InvariantViolation(
                f"corrected IoU fell below plain IoU for {p.gt_ref} ({c.iou(criterion)} < {p.iou(criterion)})"
            )


def run_matching(config: RunConfig, data: Prepared, model_id: str, criterion: str, workers: int):
    preds = data.predictions[model_id]
    common = dict(workers=workers, image_ids=data.continent_of, score_threshold=config.score_threshold)
    plain = flatten(evaluate_dataset(data.gts, preds, criterion, **common))
    corrected = flatten(evaluate_dataset(data.gts, preds, criterion, relabel=config.merge_policy, **common))
    _check_monotone(plain, corrected, criterion)
    return plain, corrected


def compute_metrics(config: RunConfig, data: Prepared, workers: int = 1, keep_results: bool = False):
    """Build the metrics document. With ``keep_results`` the per-instance match
    results are returned alongside it as ``{(model, criterion): (plain, corrected)}``."""
    classes = list(config.label_policy.class_whitelist)
    models = {}
    kept = {}
    for m in config.predictions:
        by_class: Dict[str, dict] = {cls: {} for cls in classes}
        for criterion in config.criteria:
            plain, corrected = run_matching(config, data, m.model_id, criterion, workers)
            blocks = class_criterion_metrics(plain, corrected, data.continent_of, classes, criterion)
            for cls in classes:
                by_class[cls][criterion] = blocks[cls]
            if keep_results:
                kept[(m.model_id, criterion)] = (plain, corrected)
        models[m.model_id] = {"classes": by_class}
    doc = {
        "schema": METRICS_SCHEMA,
        "tool_version": __version__,
        "continents": [c.value for c in CONTINENTS],
        "config": config.echo(),
        "inputs": data.digests,
        "counters": data.counters,
        "images_per_continent": data.images_per_continent(),
        "instances_per_class": data.instances_per_class(),
        "models": models,
    }
    return (doc, kept) if keep_results else doc
