import copy
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given
from hypothesis import strategies as st

from geodisp.errors import MetricError
from geodisp.report import (
    MINUS,
    fmt_pct,
    render_box_plots,
    render_disparity_table,
    render_iou_table,
    report_files,
    write_report,
)

# reference Swin-L mask IoU cells, before -> after merging
SWIN_L_ROWS = {
    "person": "0.59 0.60|0.55 0.56|0.58 0.58|0.56 0.56|0.57 0.58|0.57 0.58",
    "car": "0.75 0.75|0.71 0.72|0.74 0.74|0.74 0.74|0.73 0.74|0.75 0.76",
    "bus": "0.43 0.54|0.17 0.52|0.28 0.54|0.40 0.57|0.36 0.55|0.40 0.56",
    "truck": "0.47 0.55|0.33 0.45|0.43 0.50|0.40 0.51|0.47 0.55|0.44 0.51",
    "bicycle": "0.46 0.47|0.51 0.51|0.49 0.50|0.52 0.52|0.42 0.43|0.46 0.47",
    "motorcycle": "0.46 0.46|0.24 0.34|0.47 0.50|0.44 0.47|0.45 0.48|0.49 0.51",
    "rider": "0.46 0.55|0.29 0.43|0.48 0.55|0.44 0.51|0.40 0.49|0.46 0.52",
}
# cells expected to carry the highlight marker
SWIN_L_GREEN = {
    "bus": [True] * 6,
    "truck": [True] * 6,
    "rider": [True] * 6,
    "motorcycle": [False, True, False, False, False, False],
}


def test_fmt_pct_signs():
    assert fmt_pct(-88.68) == f"{MINUS}88.68%"
    assert fmt_pct(32.55) == "32.55%"
    assert fmt_pct(-0.001) == "0.00%"
    assert fmt_pct(0.0) == "0.00%"
    assert fmt_pct(None) == "n/a"


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_fmt_pct_roundtrip(v):
    text = fmt_pct(v)
    back = float(text.rstrip("%").replace(MINUS, "-"))
    assert abs(back - v) <= 0.005 + 1e-9
    assert not text.startswith("+") and "-" not in text


def test_swin_l_iou_table(reference_metrics):
    table = render_iou_table(reference_metrics, "Swin-L", "mask")
    assert table.header == ["class", "Europe", "Africa", "N. America", "S. America", "Asia", "Oceania"]
    assert table.row_labels == list(SWIN_L_ROWS)
    for cls, row in SWIN_L_ROWS.items():
        want = [c.replace(" ", " → ") for c in row.split("|")]
        assert [c.text for c in table.rows[table.row_labels.index(cls)]] == want
        marks = [c.highlighted for c in table.rows[table.row_labels.index(cls)]]
        assert marks == SWIN_L_GREEN.get(cls, [False] * 6), cls
    assert table.cell("bus", "Africa").text == "0.17 → 0.52"


def test_swin_l_disparity_table(reference_metrics):
    table = render_disparity_table(reference_metrics, "Swin-L")
    assert table.header == ["class", "Disp_det-det-corrected", "Disp_seg-seg-corrected"]
    bus = [c.text for c in table.rows[table.row_labels.index("bus")]]
    assert bus == [f"{MINUS}88.68%", f"{MINUS}90.07%"]
    car = [c.text for c in table.rows[table.row_labels.index("car")]]
    assert car == ["6.07%", "0.61%"]


def test_faster_rcnn_positive_change(reference_metrics):
    table = render_disparity_table(reference_metrics, "Faster-RCNN")
    assert table.header == ["class", "Disp_det-det-corrected"]
    assert table.cell("bus", "Disp_det-det-corrected").text == "32.55%"
    assert table.cell("truck", "Disp_det-det-corrected").text == f"{MINUS}51.98%"


def _set(metrics, before, after, continent="Africa"):
    m = copy.deepcopy(metrics)
    block = m["models"]["Swin-L"]["classes"]["car"]["mask"]
    block["plain"]["continent_iou"][continent] = before
    block["corrected"]["continent_iou"][continent] = after
    return m


def test_highlight_is_strict_and_full_precision(reference_metrics):
    # a gain exactly equal to the threshold is not highlighted
    at = _set(reference_metrics, 0.25, 0.3125)
    assert not render_iou_table(at, "Swin-L", "mask", highlight_threshold=0.0625).cell("car", "Africa").highlighted
    # 0.5499 prints as 0.55 but the unrounded gain is below 0.05
    below = _set(reference_metrics, 0.500, 0.5499)
    assert not render_iou_table(below, "Swin-L", "mask").cell("car", "Africa").highlighted
    above = _set(reference_metrics, 0.500, 0.5501)
    assert render_iou_table(above, "Swin-L", "mask").cell("car", "Africa").highlighted


def test_missing_cell_renders_na(reference_metrics):
    m = _set(reference_metrics, None, None, "Asia")
    assert render_iou_table(m, "Swin-L", "mask").cell("car", "Asia").text == "n/a"


def test_missing_corrected_run_is_an_error(reference_metrics):
    m = copy.deepcopy(reference_metrics)
    del m["models"]["Swin-L"]["classes"]["bus"]["mask"]["corrected"]
    with pytest.raises(MetricError):
        render_iou_table(m, "Swin-L", "mask")


def _with_box_plots(metrics):
    from geodisp.metrics import box_plot_summary

    m = copy.deepcopy(metrics)
    for model in m["models"].values():
        for by_crit in model["classes"].values():
            for block in by_crit.values():
                for key in ("plain", "corrected"):
                    vals = list(block[key]["continent_iou"].values())
                    block[key]["box_plot"] = None if None in vals else box_plot_summary(vals).to_dict()
    return m


def test_box_plot_svg(reference_metrics):
    m = _with_box_plots(reference_metrics)
    svg = render_box_plots(m, "mask", corrected=False)
    root = ET.fromstring(svg.split("\n", 1)[1])
    glyphs = [g for g in root.iter("{http://www.w3.org/2000/svg}g")]
    assert len(glyphs) == 7
    bus = next(g for g in glyphs if g.get("data-class") == "bus")
    # bus plain values 0.43 0.17 0.28 0.40 0.36 0.40: q1 0.30, q3 0.40
    assert float(bus.get("data-iqr")) == pytest.approx(0.10, abs=1e-6)
    assert len(bus.findall("{http://www.w3.org/2000/svg}circle")) == 6
    assert svg == render_box_plots(m, "mask", corrected=False)


def test_write_report_replaces_atomically(tmp_path, reference_metrics):
    m = _with_box_plots(reference_metrics)
    m["config"]["criteria"] = ["mask"]
    del m["models"]["Faster-RCNN"]
    out = tmp_path / "report"
    out.mkdir()
    (out / "stale.txt").write_text("old")
    write_report(m, out)
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(report_files(m))
    assert "iou_Swin-L_mask.csv" in names and "disparity_Swin-L.csv" in names
    assert [p.name for p in tmp_path.iterdir()] == ["report"]


def test_failed_render_leaves_previous_report(tmp_path, reference_metrics):
    out = tmp_path / "report"
    out.mkdir()
    (out / "keep.txt").write_text("old")
    broken = copy.deepcopy(reference_metrics)
    broken["config"]["criteria"] = ["mask"]
    del broken["models"]["Swin-L"]["classes"]["bus"]["mask"]["corrected"]
    with pytest.raises(MetricError):
        write_report(broken, out)
    assert [p.name for p in out.iterdir()] == ["keep.txt"]
    assert [p.name for p in tmp_path.iterdir()] == ["report"]


def test_csv_lists_highlighted_columns(reference_metrics):
    csv_text = render_iou_table(reference_metrics, "Swin-L", "mask").to_csv(with_highlights=True)
    lines = csv_text.splitlines()
    assert lines[0].endswith(",highlighted")
    motorcycle = next(l for l in lines if l.startswith("motorcycle,"))
    assert motorcycle.endswith(",Africa")
