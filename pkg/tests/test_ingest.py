import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from geodisp.errors import ConfigError, IngestError
from geodisp.geometry import rectangle_mask
from geodisp.ingest import (
    ImageMeta,
    InstanceRecord,
    LabelPolicy,
    PredictionRecord,
    apply_point_like_filter,
    is_point_like,
    load_image_meta,
    load_instances,
    write_image_meta,
    write_instances,
)


def rec(label="car", area_rect=(0, 0, 2, 2), size=(10, 10), index=0, image_id="a"):
    x, y, w, h = area_rect
    return {
        "image_id": image_id,
        "class": label,
        "mask": {"size": list(size), "counts": list(rectangle_mask(size[0], size[1], x, y, w, h).counts)},
    }


@pytest.fixture
def meta():
    return {"a": ImageMeta("a", 10, 10), "b": ImageMeta("b", 20, 10)}


def write_lines(path, objs):
    path.write_text("".join((o if isinstance(o, str) else json.dumps(o)) + "\n" for o in objs), encoding="utf-8")
    return path


def test_meta_roundtrip(tmp_path):
    rows = [ImageMeta("x", 640, 480), ImageMeta("y", 1, 1)]
    write_image_meta(tmp_path / "m.csv", rows)
    loaded = load_image_meta(tmp_path / "m.csv")
    assert list(loaded.values()) == rows


def test_meta_rejects_duplicates(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("image_id,width,height\nx,1,1\nx,2,2\n")
    with pytest.raises(IngestError):
        load_image_meta(p)


def test_alias_before_whitelist(tmp_path, meta):
    p = write_lines(tmp_path / "gt.jsonl", [rec("bicyclist"), rec("motorcyclist"), rec("tree"), rec("car")])
    records, stats = load_instances(p, meta, LabelPolicy())
    assert [r.class_label for r in records] == ["rider", "rider", "car"]
    assert [r.instance_index for r in records] == [0, 1, 3]
    assert stats.dropped_class == {"tree": 1}
    assert stats.aliased == {"bicyclist->rider": 1, "motorcyclist->rider": 1}


def test_missing_bbox_defaults_to_tight_box(tmp_path, meta):
    p = write_lines(tmp_path / "gt.jsonl", [rec(area_rect=(3, 4, 2, 5))])
    (r,), _ = load_instances(p, meta, LabelPolicy())
    assert r.bbox.as_list() == [3, 4, 2, 5]


@pytest.mark.parametrize(
    "line,needle",
    [
        ("{not json", "malformed JSON"),
        (json.dumps({**rec(), "image_id": "zzz"}), "unknown image_id"),
        (json.dumps({**rec(), "mask": {"size": [5, 5], "counts": [25]}}), "does not match"),
        (json.dumps({**rec(), "mask": {"size": [10, 10], "counts": "abc"}}), "compressed RLE"),
        (json.dumps({**rec(), "mask": {"size": [10, 10], "counts": [100]}}), "no foreground"),
        (json.dumps({**rec(), "bbox": [8, 8, 5, 5]}), "exceeds"),
    ],
)
def test_malformed_line_names_file_and_line(tmp_path, meta, line, needle):
    p = write_lines(tmp_path / "gt.jsonl", [rec(), "", line])
    with pytest.raises(IngestError) as err:
        load_instances(p, meta, LabelPolicy())
    assert f"gt.jsonl:3:" in str(err.value)
    assert needle in str(err.value)


def test_prediction_score_required(tmp_path, meta):
    p = write_lines(tmp_path / "p.jsonl", [rec()])
    with pytest.raises(IngestError, match="score"):
        load_instances(p, meta, LabelPolicy(), kind="pred")
    write_lines(p, [{**rec(), "score": 1.5}])
    with pytest.raises(IngestError, match="score"):
        load_instances(p, meta, LabelPolicy(), kind="pred")


def test_write_then_load(tmp_path, meta):
    m = rectangle_mask(10, 10, 1, 1, 3, 3)
    from geodisp.geometry import tight_box

    recs = [PredictionRecord("a", "bus", m, tight_box(m), 0, 0.5)]
    write_instances(tmp_path / "p.jsonl", recs)
    loaded, _ = load_instances(tmp_path / "p.jsonl", meta, LabelPolicy(), kind="pred")
    assert loaded == recs


def test_label_policy_validation():
    with pytest.raises(ConfigError):
        LabelPolicy(("car", "car"), {})
    with pytest.raises(ConfigError):
        LabelPolicy(("car",), {"lorry": "truck"})


def test_point_like_boundary_is_strict():
    # 100 px of a 1000x1000 image is exactly 0.01% and must be kept
    im = ImageMeta("a", 1000, 1000)
    exact = InstanceRecord("a", "car", rectangle_mask(1000, 1000, 0, 0, 10, 10), None, 0)
    below = InstanceRecord("a", "car", rectangle_mask(1000, 1000, 0, 0, 11, 9), None, 1)
    assert not is_point_like(exact, im, 1e-4)
    assert is_point_like(below, im, 1e-4)


def test_point_like_filter_skips_predictions():
    im = {"a": ImageMeta("a", 1000, 1000)}
    m = rectangle_mask(1000, 1000, 0, 0, 1, 1)
    g = InstanceRecord("a", "car", m, None, 0)
    p = PredictionRecord("a", "car", m, None, 0, 0.9)
    kept, excluded = apply_point_like_filter([g, p], im, 1e-4)
    assert kept == [p]
    assert excluded == {"car": 1}


@given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 10**6))
def test_point_like_matches_integer_rule(w, h, seed):
    import random

    r = random.Random(seed)
    mw, mh = r.randint(1, w), r.randint(1, h)
    im = ImageMeta("a", w, h)
    g = InstanceRecord("a", "car", rectangle_mask(h, w, 0, 0, mw, mh), None, 0)
    # area/pixels < 1/100 without any floating point
    assert is_point_like(g, im, 0.01) == (100 * mw * mh < w * h)
