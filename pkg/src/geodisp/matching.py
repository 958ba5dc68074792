"""Best-IoU association of ground truth to predictions.

Every ground-truth instance independently takes the same-class prediction
with the highest IoU under the chosen criterion. One prediction may serve
several ground-truth instances, and predictions nobody picks are ignored.
A ground truth with no overlapping same-class prediction scores 0.
"""

from __future__ import annotations

import multiprocessing
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import InputError
from .geometry import box_iou, mask_iou
from .ingest import InstanceRecord, PredictionRecord

CRITERIA = ("mask", "box")


@dataclass(frozen=True)
class MatchResult:
    image_id: str
    instance_index: int
    class_label: str
    effective_class: str
    matched_pred: Optional[int]
    box_iou: float
    mask_iou: float

    @property
    def gt_ref(self) -> Tuple[str, int]:
        return (self.image_id, self.instance_index)

    def iou(self, criterion: str) -> float:
        return self.mask_iou if criterion == "mask" else self.box_iou


def _identity(label: str) -> str:
    return label


def _check_criterion(criterion: str) -> None:
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")


def match_instances(
    gts: Sequence[InstanceRecord],
    preds: Sequence[PredictionRecord],
    criterion: str = "mask",
    relabel: Callable[[str], str] = _identity,
) -> List[MatchResult]:
    """Match the ground truth of one image.

    ``relabel`` maps a class label to the label matching runs under; the
    identity gives plain matching, a merge-group lookup gives the corrected
    run. Ties on IoU go to the higher score, then the lower prediction index.
    Results come back in ``instance_index`` order.
    """
    _check_criterion(criterion)
    image_ids = {r.image_id for r in gts} | {p.image_id for p in preds}
    if len(image_ids) > 1:
        raise InputError(f"match_instances expects one image, got {sorted(image_ids)}")

    by_class: Dict[str, List[PredictionRecord]] = defaultdict(list)
    for p in preds:
        by_class[relabel(p.class_label)].append(p)

    out = []
    for gt in sorted(gts, key=lambda r: r.instance_index):
        eff = relabel(gt.class_label)
        best = None
        best_key = None
        for p in by_class.get(eff, ()):
            if criterion == "mask":
                value = mask_iou(gt.mask, p.mask)
            else:
                value = box_iou(gt.bbox, p.bbox)
            if value <= 0.0:
                continue
            key = (value, p.score, -p.instance_index)
            if best_key is None or key > best_key:
                best, best_key = p, key
        if best is None:
            out.append(MatchResult(gt.image_id, gt.instance_index, gt.class_label, eff, None, 0.0, 0.0))
            continue
        if criterion == "mask":
            m_iou, b_iou = best_key[0], box_iou(gt.bbox, best.bbox)
        else:
            m_iou, b_iou = mask_iou(gt.mask, best.mask), best_key[0]
        out.append(
            MatchResult(gt.image_id, gt.instance_index, gt.class_label, eff, best.instance_index, b_iou, m_iou)
        )
    return out


def _group(records: Iterable, key=lambda r: r.image_id) -> Dict[str, list]:
    groups: Dict[str, list] = defaultdict(list)
    for r in records:
        groups[key(r)].append(r)
    return groups


def _match_chunk(args):
    chunk, criterion, relabel = args
    return [(image_id, match_instances(g, p, criterion, relabel)) for image_id, g, p in chunk]


def _pool_context():
    # fork keeps worker start-up cheap; other platforms use their default
    if sys.platform.startswith("linux"):
        return multiprocessing.get_context("fork")
    return None


def evaluate_dataset(
    gts: Sequence[InstanceRecord],
    preds: Sequence[PredictionRecord],
    criterion: str = "mask",
    relabel: Callable[[str], str] = _identity,
    workers: int = 1,
    image_ids: Optional[Iterable[str]] = None,
    score_threshold: float = 0.0,
) -> Dict[str, List[MatchResult]]:
    """Match every image; returns ``image_id -> results`` in sorted image order.

    When ``image_ids`` is given, a prediction on an image outside it is an
    error. Predictions on images without ground truth are otherwise ignored.
    ``relabel`` must be picklable when ``workers > 1``.
    """
    _check_criterion(criterion)
    if image_ids is not None:
        known = set(image_ids)
        for p in preds:
            if p.image_id not in known:
                raise InputError(f"prediction #{p.instance_index} references unknown image_id {p.image_id!r}")
    gt_by_image = _group(gts)
    pred_by_image = _group(p for p in preds if p.score >= score_threshold)
    jobs = [(i, gt_by_image[i], pred_by_image.get(i, [])) for i in sorted(gt_by_image)]

    if workers <= 1 or len(jobs) < 2:
        return {i: match_instances(g, p, criterion, relabel) for i, g, p in jobs}

    n_chunks = min(len(jobs), workers * 4)
    chunks = [jobs[k::n_chunks] for k in range(n_chunks)]
    results: Dict[str, List[MatchResult]] = {}
    with ProcessPoolExecutor(max_workers=workers, mp_context=_pool_context()) as pool:
        for part in pool.map(_match_chunk, [(c, criterion, relabel) for c in chunks]):
            results.update(part)
    return {i: results[i] for i in sorted(results)}


def flatten(results: Dict[str, List[MatchResult]]) -> List[MatchResult]:
    return [r for image_id in sorted(results) for r in results[image_id]]
