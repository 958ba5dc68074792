"""Continent-level aggregation and disparity statistics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import MetricError
from .geo import CONTINENTS, Continent
from .matching import MatchResult

Means = Union[Sequence[float], Mapping[Continent, Optional[float]]]


@dataclass(frozen=True)
class ContinentIoU:
    model_id: str
    class_label: str
    continent: Continent
    mean_iou: float
    n_instances: int
    criterion: str
    corrected: bool


@dataclass(frozen=True)
class DisparityRow:
    model_id: str
    class_label: str
    criterion: str
    disp: Optional[float]
    disp_corrected: Optional[float]
    pct_change: Optional[float]


@dataclass(frozen=True)
class BoxPlotSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    iqr: float

    def to_dict(self) -> dict:
        return asdict(self)


def mean(values: Sequence[float]) -> float:
    # fsum is exactly rounded, so the result does not depend on summation order
    return math.fsum(values) / len(values)


def continent_iou(
    results: Iterable[MatchResult],
    continent_of: Mapping[str, Continent],
    class_label: str,
    continent: Continent,
    criterion: str,
    model_id: str = "",
    corrected: bool = False,
) -> Optional[ContinentIoU]:
    """Mean per-instance IoU of one class in one continent; None when the cell is empty."""
    values = []
    for r in sorted(results, key=lambda r: (r.image_id, r.instance_index)):
        if r.class_label != class_label:
            continue
        try:
            c = continent_of[r.image_id]
        except KeyError:
            raise MetricError(f"image {r.image_id!r} has no continent assignment") from None
        if c is Continent.UNKNOWN:
            raise MetricError(f"image {r.image_id!r} has Unknown continent and cannot be aggregated")
        if c is continent:
            values.append(r.iou(criterion))
    if not values:
        return None
    return ContinentIoU(model_id, class_label, continent, mean(values), len(values), criterion, corrected)


def _six(means: Means) -> List[float]:
    if isinstance(means, Mapping):
        missing = [c.value for c in CONTINENTS if means.get(c) is None]
        if missing:
            raise MetricError(f"continent means missing for: {', '.join(missing)}")
        return [float(means[c]) for c in CONTINENTS]
    values = list(means)
    if len(values) != len(CONTINENTS):
        raise MetricError(f"expected {len(CONTINENTS)} continent means, got {len(values)}")
    gaps = [CONTINENTS[i].value for i, v in enumerate(values) if v is None]
    if gaps:
        raise MetricError(f"continent means missing for: {', '.join(gaps)}")
    return [float(v) for v in values]


def population_std(values: Sequence[float]) -> float:
    mu = mean(values)
    dev = [v - mu for v in values]
    m = max(abs(d) for d in dev)
    if m == 0.0:
        return 0.0
    # scale before squaring so tiny spreads cannot underflow to zero
    return m * math.sqrt(math.fsum((d / m) ** 2 for d in dev) / len(dev))


def geo_disparity(means: Means) -> Optional[float]:
    """Population standard deviation over the mean of the six continent means.

    Returns None when the mean is zero (disparity undefined) and exactly 0.0
    when all six means are equal.
    """
    values = _six(means)
    total = math.fsum(values)
    if total == 0.0:
        return None
    if all(v == values[0] for v in values):
        return 0.0
    return len(values) * population_std(values) / total


def pct_change_disparity(before: Optional[float], after: Optional[float]) -> float:
    if before is None or after is None:
        raise MetricError("disparity undefined; percentage change not computable")
    if before <= 0.0:
        raise MetricError(f"baseline disparity must be positive, got {before}")
    return (after - before) / before * 100.0


def quantile_type7(values: Sequence[float], p: float) -> float:
    """Linear interpolation between order statistics at position ``(n - 1) * p``."""
    xs = sorted(values)
    pos = (len(xs) - 1) * p
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] + (xs[hi] - xs[lo]) * frac


def box_plot_summary(means: Means) -> BoxPlotSummary:
    values = _six(means)
    q1 = quantile_type7(values, 0.25)
    q3 = quantile_type7(values, 0.75)
    return BoxPlotSummary(min(values), q1, quantile_type7(values, 0.5), q3, max(values), q3 - q1)


def _cell_stats(values_by_continent: Dict[Continent, List[float]]) -> dict:
    ious = {}
    counts = {}
    for c in CONTINENTS:
        vals = values_by_continent.get(c, [])
        ious[c.value] = mean(vals) if vals else None
        counts[c.value] = len(vals)
    all_vals = [v for c in CONTINENTS for v in values_by_continent.get(c, [])]
    block = {
        "continent_iou": ious,
        "n_instances": counts,
        "global_mean": mean(all_vals) if all_vals else None,
        "disp": None,
        "disp_note": None,
        "box_plot": None,
    }
    missing = [c.value for c in CONTINENTS if ious[c.value] is None]
    if missing:
        block["disp_note"] = "missing continents: " + ", ".join(missing)
        return block
    by_cont = {c: ious[c.value] for c in CONTINENTS}
    block["box_plot"] = box_plot_summary(by_cont).to_dict()
    disp = geo_disparity(by_cont)
    if disp is None:
        block["disp_note"] = "mean continent-IoU is zero"
    block["disp"] = disp
    return block


def _collect(results: Iterable[MatchResult], continent_of: Mapping[str, Continent], criterion: str):
    out: Dict[str, Dict[Continent, List[float]]] = defaultdict(lambda: defaultdict(list))
    for r in sorted(results, key=lambda r: (r.image_id, r.instance_index)):
        c = continent_of.get(r.image_id)
        if c is None or c is Continent.UNKNOWN:
            raise MetricError(f"image {r.image_id!r} has no known continent")
        out[r.class_label][c].append(r.iou(criterion))
    return out


def class_criterion_metrics(
    plain: Sequence[MatchResult],
    corrected: Sequence[MatchResult],
    continent_of: Mapping[str, Continent],
    classes: Sequence[str],
    criterion: str,
) -> Dict[str, dict]:
    """Per-class plain/corrected blocks plus the disparity change for one criterion."""
    plain_vals = _collect(plain, continent_of, criterion)
    corr_vals = _collect(corrected, continent_of, criterion)
    out = {}
    for cls in classes:
        p = _cell_stats(plain_vals.get(cls, {}))
        c = _cell_stats(corr_vals.get(cls, {}))
        if p["n_instances"] != c["n_instances"]:
            raise MetricError(f"plain and corrected runs disagree on instance counts for {cls!r}")
        pct = None
        if p["disp"] is not None and p["disp"] > 0.0 and c["disp"] is not None:
            pct = pct_change_disparity(p["disp"], c["disp"])
        out[cls] = {"plain": p, "corrected": c, "pct_change": pct}
    return out


def disparity_rows(metrics: dict, model_id: str) -> List[DisparityRow]:
    rows = []
    model = metrics["models"][model_id]
    for cls, by_crit in model["classes"].items():
        for crit, block in by_crit.items():
            rows.append(
                DisparityRow(
                    model_id, cls, crit, block["plain"]["disp"], block["corrected"]["disp"], block["pct_change"]
                )
            )
    return rows


def continent_ious(metrics: dict, model_id: str, criterion: str, corrected: bool) -> List[ContinentIoU]:
    key = "corrected" if corrected else "plain"
    out = []
    for cls, by_crit in metrics["models"][model_id]["classes"].items():
        block = by_crit.get(criterion)
        if block is None:
            continue
        for c in CONTINENTS:
            v = block[key]["continent_iou"][c.value]
            if v is not None:
                out.append(ContinentIoU(model_id, cls, c, v, block[key]["n_instances"][c.value], criterion, corrected))
    return out
