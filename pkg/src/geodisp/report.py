"""Render audit artifacts from a metrics document.

Nothing here recomputes a metric: every printed number is read from the
metrics document and rounded only at render time.
"""

from __future__ import annotations

import csv
import io
import json
import re
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import MetricError
from .geo import CONTINENTS, DISPLAY_NAMES

MINUS = "−"
ARROW = "→"
HIGHLIGHT_MARK = "*"
CRITERION_TAG = {"box": "det", "mask": "seg"}


def fmt_iou(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def fmt_pct(v: Optional[float]) -> str:
    if v is None:
        return "n/a"
    text = f"{abs(v):.2f}"
    # no sign on values that round to zero, and positive values carry none
    if v < 0 and text != "0.00":
        return f"{MINUS}{text}%"
    return f"{text}%"


@dataclass(frozen=True)
class Cell:
    text: str
    highlighted: bool = False


@dataclass
class Table:
    title: str
    header: List[str]
    rows: List[List[Cell]]
    row_labels: List[str]
    footnotes: List[str]

    def cell(self, row_label: str, column: str) -> Cell:
        return self.rows[self.row_labels.index(row_label)][self.header.index(column) - 1]

    def to_csv(self, with_highlights: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header + (["highlighted"] if with_highlights else []))
        for label, cells in zip(self.row_labels, self.rows):
            row = [label] + [c.text for c in cells]
            if with_highlights:
                row.append(";".join(h for h, c in zip(self.header[1:], cells) if c.highlighted))
            w.writerow(row)
        return buf.getvalue()

    def to_text(self) -> str:
        shown = [[label] + [c.text + (f" {HIGHLIGHT_MARK}" if c.highlighted else "") for c in cells]
                 for label, cells in zip(self.row_labels, self.rows)]
        widths = [max(len(r[i]) for r in [self.header] + shown) for i in range(len(self.header))]
        lines = [self.title, ""]
        lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(self.header)).rstrip())
        lines.append("  ".join("-" * wd for wd in widths))
        for r in shown:
            lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(r)).rstrip())
        if self.footnotes:
            lines.append("")
            lines.extend(self.footnotes)
        return "\n".join(lines) + "\n"


def _model(metrics: dict, model_id: str) -> dict:
    try:
        return metrics["models"][model_id]
    except KeyError:
        raise MetricError(f"model {model_id!r} not in metrics") from None


def render_iou_table(metrics: dict, model_id: str, criterion: str, highlight_threshold: Optional[float] = None) -> Table:
    """Rows are classes, columns continents, cells ``before → after``.

    A cell is highlighted when the corrected value exceeds the plain value by
    strictly more than the threshold (full-precision comparison).
    """
    if highlight_threshold is None:
        highlight_threshold = metrics.get("config", {}).get("highlight_threshold", 0.05)
    model = _model(metrics, model_id)
    rows, labels = [], []
    for cls, by_crit in model["classes"].items():
        block = by_crit.get(criterion)
        if block is None:
            raise MetricError(f"no {criterion} metrics for {model_id}/{cls}")
        if "corrected" not in block:
            raise MetricError(f"missing corrected run for {model_id}/{cls}/{criterion}")
        cells = []
        for c in CONTINENTS:
            before = block["plain"]["continent_iou"][c.value]
            after = block["corrected"]["continent_iou"][c.value]
            if before is None or after is None:
                cells.append(Cell("n/a"))
                continue
            cells.append(Cell(f"{fmt_iou(before)} {ARROW} {fmt_iou(after)}", (after - before) > highlight_threshold))
        rows.append(cells)
        labels.append(cls)
    kind = "mask" if criterion == "mask" else "box"
    return Table(
        title=f"{model_id}: continent-{kind}-IoU before {ARROW} after class-merging",
        header=["class"] + [DISPLAY_NAMES[c] for c in CONTINENTS],
        rows=rows,
        row_labels=labels,
        footnotes=[f"{HIGHLIGHT_MARK} improvement > {highlight_threshold:g}"],
    )


def render_disparity_table(metrics: dict, model_id: str) -> Table:
    """Percentage change in geo-disparity per class, one column per criterion run."""
    model = _model(metrics, model_id)
    criteria = [c for c in ("box", "mask") if any(c in b for b in model["classes"].values())]
    if not criteria:
        raise MetricError(f"no disparity metrics for model {model_id!r}")
    header = ["class"] + [f"Disp_{CRITERION_TAG[c]}-{CRITERION_TAG[c]}-corrected" for c in criteria]
    rows, labels = [], []
    undefined = False
    for cls, by_crit in model["classes"].items():
        cells = []
        for crit in criteria:
            block = by_crit.get(crit)
            pct = block["pct_change"] if block else None
            undefined |= pct is None
            cells.append(Cell(fmt_pct(pct)))
        rows.append(cells)
        labels.append(cls)
    notes = ["n/a: disparity undefined (missing continent, zero mean, or zero baseline disparity)"] if undefined else []
    return Table(f"{model_id}: percentage change in geo-disparity", header, rows, labels, notes)


# ---------------------------------------------------------------- SVG

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_box_plots(metrics: dict, criterion: str, corrected: bool) -> str:
    """One box-and-whisker glyph per (class, model), grouped by class.

    Boxes span q1..q3, whiskers reach min and max, and the six continent
    values are drawn as dots. Output is deterministic for identical input.
    """
    key = "corrected" if corrected else "plain"
    models = list(metrics["models"])
    classes: List[str] = []
    for m in models:
        for cls in metrics["models"][m]["classes"]:
            if cls not in classes:
                classes.append(cls)

    glyph_w, glyph_gap, group_gap = 18, 8, 28
    left, top, plot_h, bottom = 56, 40, 300, 70
    group_w = len(models) * glyph_w + (len(models) - 1) * glyph_gap
    width = left + len(classes) * (group_w + group_gap) + 20
    legend_h = 18 * len(models)
    height = top + plot_h + bottom + legend_h

    def y(v: float) -> float:
        return top + plot_h * (1.0 - v)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="13">'
        f'{_esc(f"continent-{criterion}-IoU ({key})")}</text>',
    ]
    for k in range(6):
        v = k / 5
        yy = y(v)
        out.append(f'<line x1="{left}" y1="{yy:.2f}" x2="{width - 20}" y2="{yy:.2f}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{left - 6}" y="{yy + 4:.2f}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#000000"/>')
    out.append(
        f'<text x="14" y="{top + plot_h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + plot_h / 2:.2f})">IoU</text>'
    )

    for gi, cls in enumerate(classes):
        gx = left + group_gap / 2 + gi * (group_w + group_gap)
        out.append(
            f'<text x="{gx + group_w / 2:.2f}" y="{top + plot_h + 18}" text-anchor="middle">{_esc(cls)}</text>'
        )
        for mi, m in enumerate(models):
            block = metrics["models"][m]["classes"].get(cls, {}).get(criterion)
            if block is None or block[key]["box_plot"] is None:
                continue
            s = block[key]["box_plot"]
            x0 = gx + mi * (glyph_w + glyph_gap)
            xc = x0 + glyph_w / 2
            color = PALETTE[mi % len(PALETTE)]
            out.append(f'<g class="glyph" data-class="{_esc(cls)}" data-model="{_esc(m)}" data-iqr="{s["iqr"]:.6f}">')
            out.append(f'<line x1="{xc:.2f}" y1="{y(s["max"]):.2f}" x2="{xc:.2f}" y2="{y(s["q3"]):.2f}" stroke="#333333"/>')
            out.append(f'<line x1="{xc:.2f}" y1="{y(s["q1"]):.2f}" x2="{xc:.2f}" y2="{y(s["min"]):.2f}" stroke="#333333"/>')
            for v in (s["min"], s["max"]):
                out.append(
                    f'<line x1="{x0 + 4:.2f}" y1="{y(v):.2f}" x2="{x0 + glyph_w - 4:.2f}" y2="{y(v):.2f}" stroke="#333333"/>'
                )
            box_h = y(s["q1"]) - y(s["q3"])
            out.append(
                f'<rect class="box" x="{x0:.2f}" y="{y(s["q3"]):.2f}" width="{glyph_w}" height="{box_h:.2f}" '
                f'fill="{color}" fill-opacity="0.6" stroke="#333333"/>'
            )
            out.append(
                f'<line x1="{x0:.2f}" y1="{y(s["median"]):.2f}" x2="{x0 + glyph_w:.2f}" '
                f'y2="{y(s["median"]):.2f}" stroke="#000000" stroke-width="1.5"/>'
            )
            for c in CONTINENTS:
                v = block[key]["continent_iou"][c.value]
                out.append(f'<circle cx="{xc:.2f}" cy="{y(v):.2f}" r="1.8" fill="#000000"><title>{c.value}</title></circle>')
            out.append("</g>")

    ly = top + plot_h + 40
    for mi, m in enumerate(models):
        color = PALETTE[mi % len(PALETTE)]
        out.append(f'<rect x="{left}" y="{ly + 18 * mi}" width="12" height="12" fill="{color}" fill-opacity="0.6"/>')
        out.append(f'<text x="{left + 18}" y="{ly + 18 * mi + 10}">{_esc(m)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- files


def safe_name(model_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", model_id)


def metrics_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, ensure_ascii=False) + "\n"


def render_summary(metrics: dict) -> str:
    lines = [f"geodisp {metrics.get('tool_version', '?')} audit summary", ""]
    cfg = metrics.get("config", {})
    lines.append("config:")
    for k, v in cfg.items():
        lines.append(f"  {k}: {json.dumps(v, ensure_ascii=False)}")
    lines.append("")
    lines.append("inputs:")
    for k, v in metrics.get("inputs", {}).items():
        if k == "predictions":
            for m, d in v.items():
                lines.append(f"  predictions[{m}]: {d['name']} sha256={d['sha256']}")
        else:
            lines.append(f"  {k}: {v['name']} sha256={v['sha256']}")
    lines.append("")
    lines.append("counters:")
    for k, v in metrics.get("counters", {}).items():
        lines.append(f"  {k}: {json.dumps(v, ensure_ascii=False)}")
    lines.append("")
    lines.append("images per continent:")
    for c, n in metrics.get("images_per_continent", {}).items():
        lines.append(f"  {c}: {n}")
    lines.append("")
    for m in metrics["models"]:
        lines.append(render_disparity_table(metrics, m).to_text())
    return "\n".join(lines)


def report_files(metrics: dict) -> Dict[str, str]:
    """File name -> content for the full report directory."""
    files: Dict[str, str] = {}
    criteria = metrics.get("config", {}).get("criteria") or ["mask", "box"]
    for m in metrics["models"]:
        name = safe_name(m)
        for crit in criteria:
            table = render_iou_table(metrics, m, crit)
            files[f"iou_{name}_{crit}.csv"] = table.to_csv(with_highlights=True)
            files[f"iou_{name}_{crit}.txt"] = table.to_text()
        files[f"disparity_{name}.csv"] = render_disparity_table(metrics, m).to_csv()
    for crit in criteria:
        for corrected in (False, True):
            tag = "corrected" if corrected else "plain"
            files[f"boxplots_{crit}_{tag}.svg"] = render_box_plots(metrics, crit, corrected)
    files["summary.txt"] = render_summary(metrics)
    files["metrics.json"] = metrics_json(metrics)
    return files


def write_report(metrics: dict, out_dir) -> Path:
    """Write every report file into a temp directory, then swap it into place.

    Readers see either the previous report or the complete new one.
    """
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    files = report_files(metrics)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
    try:
        for name, content in files.items():
            (tmp / name).write_text(content, encoding="utf-8")
        backup = None
        if out.exists():
            backup = Path(tempfile.mkdtemp(prefix=f".{out.name}.old-", dir=out.parent))
            backup.rmdir()
            out.rename(backup)
        try:
            tmp.rename(out)
        except BaseException:
            if backup is not None:
                backup.rename(out)
            raise
        if backup is not None:
            shutil.rmtree(backup, ignore_errors=True)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out
