"""Synthetic fixtures with controlled confusion and localization, plus the
closed-form expectations the pipeline should reproduce on them.

Each ground-truth instance is a filled rectangle alone in its own tile of a
square image, so predictions never overlap a neighbour's ground truth. Its
prediction, unless missed, is a sub-rectangle whose area fraction hits the
drawn IoU target. Box and mask IoU coincide for these shapes.

Random draws come from one ``random.Random(rng_seed)`` stream. Instances are
visited in continent order, then class order, and each takes ten draws:
width, height, x offset, y offset, miss, predicted class, IoU target,
prediction x offset, prediction y offset, score. Missed instances still take
all ten so the stream never shifts.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import GeoError, SynthError
from .geo import CONTINENTS, Continent, GeoTag, parse_continent, write_geo
from .geometry import Box2D, rectangle_mask
from .ingest import DEFAULT_CLASSES, ImageMeta, InstanceRecord, PredictionRecord, write_image_meta, write_instances
from .merging import DEFAULT_GROUPS, MergePolicy
from .metrics import geo_disparity

IOU_CONSTRUCTION_TOL = 0.02


@dataclass(frozen=True)
class Localization:
    base_iou: float = 0.75
    jitter: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.base_iou <= 1.0) or self.jitter < 0:
            raise SynthError(f"invalid localization {self}")
        if self.base_iou - self.jitter <= 0.0 or self.base_iou + self.jitter > 1.0:
            raise SynthError(f"base IoU {self.base_iou} +/- {self.jitter} leaves (0, 1]")


@dataclass
class SynthSpec:
    rng_seed: int = 0
    continents: Tuple[Continent, ...] = CONTINENTS
    classes: Tuple[str, ...] = ("bus",)
    # counts[continent][class]
    counts: Dict[Continent, Dict[str, int]] = field(default_factory=dict)
    # confusion[continent][true_class] -> {pred_class: prob}; missing rows are identity
    confusion: Dict[Continent, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    localization: Dict[str, Localization] = field(default_factory=dict)
    continent_localization: Dict[Continent, Dict[str, Localization]] = field(default_factory=dict)
    miss_rate: float = 0.0
    image_size: int = 96
    tile_size: int = 48
    merge_groups: Tuple[Tuple[str, ...], ...] = DEFAULT_GROUPS

    def __post_init__(self):
        self.continents = tuple(self.continents)
        self.classes = tuple(self.classes)
        if not self.classes:
            raise SynthError("at least one class is required")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise SynthError(f"miss_rate must be in [0, 1], got {self.miss_rate}")
        if self.tile_size < 8 or self.image_size < self.tile_size:
            raise SynthError(f"tile_size {self.tile_size} must be >= 8 and fit image_size {self.image_size}")
        for c in self.continents:
            for cls in self.classes:
                if self.count(c, cls) < 1:
                    raise SynthError(f"instance count for ({c.value}, {cls}) must be >= 1")
                row = self.confusion_row(c, cls)
                total = math.fsum(row.values())
                if abs(total - 1.0) > 1e-9:
                    raise SynthError(f"confusion row ({c.value}, {cls}) sums to {total}, not 1")
                for label, p in row.items():
                    if label not in self.classes:
                        raise SynthError(f"confusion target {label!r} is not one of the listed classes")
                    if p < 0:
                        raise SynthError(f"negative confusion probability in ({c.value}, {cls})")
                self.loc(c, cls)

    def count(self, continent: Continent, cls: str) -> int:
        return self.counts.get(continent, {}).get(cls, 0)

    def confusion_row(self, continent: Continent, cls: str) -> Dict[str, float]:
        return self.confusion.get(continent, {}).get(cls, {cls: 1.0})

    def loc(self, continent: Continent, cls: str) -> Localization:
        override = self.continent_localization.get(continent, {}).get(cls)
        return override or self.localization.get(cls, Localization())

    @property
    def gt_size_range(self) -> Tuple[int, int]:
        # sides of at least 9/16 tile keep every target in (0, 1] constructible at the default tile
        return (self.tile_size * 9) // 16, self.tile_size - 2

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        try:
            continents = tuple(parse_continent(c) for c in d.get("continents", [c.value for c in CONTINENTS]))
            classes = tuple(d["classes"])
            counts = _parse_counts(d.get("instances", 100), continents, classes)
            confusion = _per_continent(d.get("confusion", {}), continents)
            conf = {c: {k: {p: float(v) for p, v in row.items()} for k, row in rows.items()} for c, rows in confusion.items()}
            loc = {k: Localization(**v) for k, v in d.get("localization", {}).items()}
            cloc = {
                c: {k: Localization(**v) for k, v in rows.items()}
                for c, rows in _per_continent(d.get("continent_localization", {}), continents).items()
            }
            return cls(
                rng_seed=int(d.get("rng_seed", 0)),
                continents=continents,
                classes=classes,
                counts=counts,
                confusion=conf,
                localization=loc,
                continent_localization=cloc,
                miss_rate=float(d.get("miss_rate", 0.0)),
                image_size=int(d.get("image_size", 96)),
                tile_size=int(d.get("tile_size", 48)),
                merge_groups=tuple(tuple(g) for g in d.get("merge_groups", DEFAULT_GROUPS)),
            )
        except (KeyError, TypeError, ValueError, GeoError) as exc:
            raise SynthError(f"invalid synth spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "SynthSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SynthError(f"{path}: malformed JSON: {exc.msg}") from None
        return cls.from_dict(doc)

    def policy(self) -> MergePolicy:
        return MergePolicy(self.merge_groups)


def _per_continent(raw: Mapping, continents) -> Dict[Continent, dict]:
    """Expand ``{"*": rows, "Africa": rows}`` into a per-continent mapping."""
    out = {}
    for c in continents:
        rows = dict(raw.get("*", {}))
        rows.update(raw.get(c.value, {}))
        if rows:
            out[c] = rows
    for key in raw:
        if key != "*":
            parse_continent(key)
    return out


def _parse_counts(raw, continents, classes) -> Dict[Continent, Dict[str, int]]:
    if isinstance(raw, int):
        return {c: {k: raw for k in classes} for c in continents}
    if not isinstance(raw, dict):
        raise SynthError("'instances' must be an int or an object")
    if raw and all(k in {c.value for c in Continent} or k == "*" for k in raw):
        out = {}
        for c, per_class in _per_continent(raw, continents).items():
            out[c] = {k: int(v) for k, v in per_class.items()}
        return out
    return {c: {k: int(raw.get(k, 0)) for k in classes} for c in continents}


@lru_cache(maxsize=None)
def best_subrect(w: int, h: int, target: float) -> Tuple[int, int]:
    """Sub-rectangle ``(w', h')`` of a ``w x h`` rectangle whose area fraction is closest to ``target``."""
    want = target * w * h
    best = None
    for sw in range(1, w + 1):
        # the two integer heights bracketing the wanted area for this width
        for sh in {max(1, min(h, math.floor(want / sw))), max(1, min(h, math.ceil(want / sw)))}:
            err = abs(sw * sh - want)
            key = (err, -sw, -sh)
            if best is None or key < best[0]:
                best = (key, sw, sh)
    return best[1], best[2]


def achieved_iou(w: int, h: int, target: float) -> float:
    sw, sh = best_subrect(w, h, target)
    return (sw * sh) / (w * h)


@dataclass
class SynthOutput:
    gt: List[InstanceRecord]
    predictions: List[PredictionRecord]
    images: List[ImageMeta]
    geo: List[GeoTag]
    targets: List[float]


def generate_records(spec: SynthSpec) -> SynthOutput:
    rng = random.Random(spec.rng_seed)
    size, tile = spec.image_size, spec.tile_size
    per_row = size // tile
    slots = per_row * per_row
    lo, hi = spec.gt_size_range
    gts: List[InstanceRecord] = []
    preds: List[PredictionRecord] = []
    images: List[ImageMeta] = []
    geo: List[GeoTag] = []
    targets: List[float] = []
    image_no = 0
    for continent in spec.continents:
        slot = slots  # forces a new image for each continent
        image_id = None
        for cls in spec.classes:
            row = spec.confusion_row(continent, cls)
            labels = sorted(row)
            loc = spec.loc(continent, cls)
            for _ in range(spec.count(continent, cls)):
                if slot == slots:
                    image_id = f"syn{image_no:06d}"
                    image_no += 1
                    images.append(ImageMeta(image_id, size, size))
                    geo.append(GeoTag(image_id, continent))
                    slot = 0
                tx, ty = (slot % per_row) * tile, (slot // per_row) * tile
                slot += 1

                w = rng.randint(lo, hi)
                h = rng.randint(lo, hi)
                x = tx + rng.randint(1, tile - w - 1)
                y = ty + rng.randint(1, tile - h - 1)
                miss = rng.random() < spec.miss_rate
                u = rng.random()
                target = loc.base_iou + loc.jitter * (2.0 * rng.random() - 1.0)
                px_u, py_u, score = rng.random(), rng.random(), rng.random()

                gt_mask = rectangle_mask(size, size, x, y, w, h)
                gts.append(InstanceRecord(image_id, cls, gt_mask, Box2D(x, y, w, h), len(gts)))
                if miss:
                    continue
                pred_label = _pick(labels, row, u)
                sw, sh = best_subrect(w, h, target)
                got = (sw * sh) / (w * h)
                if abs(got - target) > IOU_CONSTRUCTION_TOL:
                    raise SynthError(
                        f"IoU target {target:.4f} infeasible for a {w}x{h} rectangle (best {got:.4f}); "
                        "increase tile_size"
                    )
                px = x + min(w - sw, int(px_u * (w - sw + 1)))
                py = y + min(h - sh, int(py_u * (h - sh + 1)))
                pred_mask = rectangle_mask(size, size, px, py, sw, sh)
                preds.append(
                    PredictionRecord(
                        image_id, pred_label, pred_mask, Box2D(px, py, sw, sh), len(preds), round(0.5 + 0.5 * score, 6)
                    )
                )
                targets.append(target)
    return SynthOutput(gts, preds, images, geo, targets)


def _pick(labels: Sequence[str], row: Mapping[str, float], u: float) -> str:
    acc = 0.0
    for label in labels:
        acc += row[label]
        if u < acc:
            return label
    return labels[-1]


def generate(spec: SynthSpec, out_dir) -> Dict[str, Path]:
    """Write ``gt.jsonl``, ``predictions.jsonl``, ``images.csv``, ``geo.csv``
    and a ready-to-run ``config.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_records(spec)
    paths = {
        "gt": out / "gt.jsonl",
        "predictions": out / "predictions.jsonl",
        "image_meta": out / "images.csv",
        "geo": out / "geo.csv",
        "config": out / "config.json",
    }
    write_instances(paths["gt"], data.gt)
    write_instances(paths["predictions"], data.predictions)
    write_image_meta(paths["image_meta"], data.images)
    write_geo(paths["geo"], data.geo, mode="explicit")
    whitelist = list(DEFAULT_CLASSES) + [c for c in spec.classes if c not in DEFAULT_CLASSES]
    config = {
        "schema_version": 1,
        "gt": "gt.jsonl",
        "predictions": [{"model_id": "synthetic", "path": "predictions.jsonl"}],
        "image_meta": "images.csv",
        "geo": "geo.csv",
        "geo_mode": "explicit",
        "output_dir": "report",
        "label_policy": {"class_whitelist": whitelist, "aliases": {}},
        "merge_groups": [list(g) for g in spec.merge_groups],
    }
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return paths


# ---------------------------------------------------------------- oracle


@dataclass(frozen=True)
class Expected:
    value: Optional[float]
    tol: float

    def holds(self, observed: Optional[float]) -> bool:
        if self.value is None or observed is None:
            return self.value is None and observed is None
        return abs(observed - self.value) <= self.tol


def expected_iou(spec: SynthSpec, loc: Localization, nodes: int = 33) -> Tuple[float, float]:
    """Mean and second moment of the constructed IoU, averaged over the GT size
    grid and (for jitter > 0) a midpoint rule over the uniform target."""
    lo, hi = spec.gt_size_range
    sizes = [(w, h) for w in range(lo, hi + 1) for h in range(lo, hi + 1)]
    if loc.jitter == 0:
        ts = [loc.base_iou]
    else:
        ts = [loc.base_iou - loc.jitter + loc.jitter * (2 * k + 1) / nodes for k in range(nodes)]
    vals = [achieved_iou(w, h, t) for t in ts for (w, h) in sizes]
    m1 = math.fsum(vals) / len(vals)
    m2 = math.fsum(v * v for v in vals) / len(vals)
    return m1, m2


def _cell(q: float, m1: float, m2: float, n: int, z: float) -> Expected:
    mu = q * m1
    var = q * m2 - mu * mu
    return Expected(mu, z * math.sqrt(max(var, 0.0) / n) + 1e-3)


def _disp_bounds(means: List[Expected]) -> Tuple[Optional[float], float]:
    values = [e.value for e in means]
    mu = math.fsum(values) / len(values)
    if mu == 0.0:
        return None, math.inf
    disp = geo_disparity(values)
    # sigma and mu are both 1/sqrt(n)-Lipschitz in the l2 norm of the means
    delta = math.sqrt(math.fsum(e.tol ** 2 for e in means)) / math.sqrt(len(means))
    if delta >= mu:
        return disp, math.inf
    sigma = disp * mu
    hi = (sigma + delta) / (mu - delta)
    lo = max(0.0, sigma - delta) / (mu + delta)
    return disp, max(hi - disp, disp - lo)


def _disp_gradient(values: List[float]) -> Optional[List[float]]:
    n = len(values)
    mu = math.fsum(values) / n
    sigma = math.sqrt(math.fsum((v - mu) ** 2 for v in values) / n)
    if mu <= 0.0 or sigma == 0.0:
        return None
    d = sigma / mu
    return [((v - mu) / sigma - d) / (n * mu) for v in values]


def _pct_delta_sd(cells: List[Tuple[float, float, float, float, int]]) -> Optional[float]:
    """Delta-method standard deviation of the percentage change.

    ``cells`` holds ``(q_right, q_group, m1, m2, n)`` per continent. Plain and
    corrected means of one continent share their instances, hence the
    covariance term; different continents are independent.
    """
    plain = [qr * m1 for qr, _, m1, _, _ in cells]
    corr = [qg * m1 for _, qg, m1, _, _ in cells]
    gp, gc = _disp_gradient(plain), _disp_gradient(corr)
    if gp is None or gc is None:
        return None
    dp, dc = geo_disparity(plain), geo_disparity(corr)
    var = 0.0
    for (qr, qg, m1, m2, n), a, b in zip(cells, gp, gc):
        a, b = -100.0 * dc / dp ** 2 * a, 100.0 / dp * b
        vx = (qr * m2 - (qr * m1) ** 2) / n
        vy = (qg * m2 - (qg * m1) ** 2) / n
        cxy = (qr * m2 - qr * m1 * qg * m1) / n
        var += a * a * vx + b * b * vy + 2 * a * b * cxy
    return math.sqrt(max(var, 0.0))


def oracle_metrics(spec: SynthSpec, policy: Optional[MergePolicy] = None, z: float = 4.0) -> Dict[str, dict]:
    """Expected plain/corrected continent-IoUs, Disp and percentage change per class.

    plain mean = (1 - miss) * P(pred == true) * E[IoU];
    corrected mean = (1 - miss) * P(pred in true's merge group) * E[IoU].
    Tolerances are ``z`` standard deviations of the per-cell sample mean, and
    Disp bounds follow from the Lipschitz constants of sigma and mu. The
    percentage change uses a delta-method standard deviation when both
    disparities are positive, falling back to the Lipschitz corners otherwise.
    """
    policy = policy if policy is not None else spec.policy()
    out: Dict[str, dict] = {}
    for cls in spec.classes:
        plain: Dict[Continent, Expected] = {}
        corrected: Dict[Continent, Expected] = {}
        moments = {}
        for c in spec.continents:
            row = spec.confusion_row(c, cls)
            m1, m2 = expected_iou(spec, spec.loc(c, cls))
            keep = 1.0 - spec.miss_rate
            p_right = row.get(cls, 0.0)
            p_group = math.fsum(p for label, p in row.items() if policy.same_group(label, cls))
            n = spec.count(c, cls)
            moments[c] = (keep * p_right, keep * p_group, m1, m2, n)
            plain[c] = _cell(keep * p_right, m1, m2, n, z)
            corrected[c] = _cell(keep * p_group, m1, m2, n, z)
        entry = {"plain": plain, "corrected": corrected, "disp": None, "disp_corrected": None, "pct_change": None}
        if set(spec.continents) == set(CONTINENTS):
            dp, dp_tol = _disp_bounds([plain[c] for c in CONTINENTS])
            dc, dc_tol = _disp_bounds([corrected[c] for c in CONTINENTS])
            entry["disp"] = Expected(dp, dp_tol)
            entry["disp_corrected"] = Expected(dc, dc_tol)
            if dp is not None and dp > 0 and dc is not None:
                pct = (dc - dp) / dp * 100.0
                corners = [
                    (c_ - p_) / p_ * 100.0
                    for p_ in (max(dp - dp_tol, 1e-12), dp + dp_tol)
                    for c_ in (max(dc - dc_tol, 0.0), dc + dc_tol)
                ]
                tol = max(abs(v - pct) for v in corners)
                sd = _pct_delta_sd([moments[c] for c in CONTINENTS])
                if sd is not None:
                    # second-order bias of the ratio is O(1/n); the 0.5 point floor covers it
                    tol = min(tol, z * sd + 0.5)
                entry["pct_change"] = Expected(pct, tol)
        out[cls] = entry
    return out
