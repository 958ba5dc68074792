import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodisp.errors import SynthError
from geodisp.geo import CONTINENTS, Continent
from geodisp.geometry import mask_iou
from geodisp.synth import (
    IOU_CONSTRUCTION_TOL,
    Localization,
    SynthSpec,
    achieved_iou,
    best_subrect,
    generate,
    generate_records,
    oracle_metrics,
)


def small_spec(**kw):
    base = {"rng_seed": 3, "classes": ["bus", "car"], "instances": 20,
            "localization": {"bus": {"base_iou": 0.7, "jitter": 0.1}}}
    base.update(kw)
    return SynthSpec.from_dict(base)


@settings(max_examples=60)
@given(st.integers(1, 30), st.integers(1, 30), st.floats(0.05, 1.0))
def test_best_subrect_is_optimal(w, h, target):
    sw, sh = best_subrect(w, h, target)
    assert 1 <= sw <= w and 1 <= sh <= h
    best = min(abs(a * b - target * w * h) for a in range(1, w + 1) for b in range(1, h + 1))
    assert abs(sw * sh - target * w * h) == pytest.approx(best, abs=1e-9)


def test_construction_hits_targets():
    spec = small_spec()
    out = generate_records(spec)
    gts = {(g.image_id, g.bbox.as_list()[0] // spec.tile_size, g.bbox.as_list()[1] // spec.tile_size): g for g in out.gt}
    assert len(out.predictions) == len(out.targets) == len(out.gt)
    for p, t in zip(out.predictions, out.targets):
        g = gts[p.image_id, p.bbox.x // spec.tile_size, p.bbox.y // spec.tile_size]
        assert abs(mask_iou(g.mask, p.mask) - t) <= IOU_CONSTRUCTION_TOL


def test_same_seed_same_bytes(tmp_path):
    a = generate(small_spec(), tmp_path / "a")
    b = generate(small_spec(), tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key
    c = generate(small_spec(rng_seed=4), tmp_path / "c")
    assert a["gt"].read_bytes() != c["gt"].read_bytes()


def test_misses_do_not_shift_the_stream():
    full = generate_records(small_spec())
    missed = generate_records(small_spec(miss_rate=0.5))
    assert [g.bbox for g in full.gt] == [g.bbox for g in missed.gt]
    assert 0 < len(missed.predictions) < len(full.predictions)


def test_instances_never_share_tiles():
    spec = small_spec(instances=30)
    t = spec.tile_size
    seen = set()
    for g in generate_records(spec).gt:
        key = (g.image_id, g.bbox.x // t, g.bbox.y // t)
        assert key not in seen
        seen.add(key)
        assert g.bbox.x % t + g.bbox.w < t and g.bbox.y % t + g.bbox.h < t


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1.0))
def test_every_target_constructible_at_default_tile(target):
    lo, hi = SynthSpec.from_dict({"classes": ["bus"]}).gt_size_range
    worst = max(abs(achieved_iou(w, h, target) - target) for w in range(lo, hi + 1) for h in range(lo, hi + 1))
    assert worst <= IOU_CONSTRUCTION_TOL


def test_wildcard_confusion_and_counts():
    spec = SynthSpec.from_dict({
        "classes": ["bus", "car"],
        "instances": {"*": {"bus": 5, "car": 2}, "Africa": {"bus": 9}},
        "confusion": {"*": {"bus": {"bus": 0.9, "car": 0.1}}, "Africa": {"bus": {"car": 1.0}}},
    })
    assert spec.count(Continent.AFRICA, "bus") == 9 and spec.count(Continent.AFRICA, "car") == 2
    assert spec.confusion_row(Continent.ASIA, "bus") == {"bus": 0.9, "car": 0.1}
    assert spec.confusion_row(Continent.AFRICA, "bus") == {"car": 1.0}


@pytest.mark.parametrize(
    "doc",
    [
        {"classes": ["bus"], "confusion": {"*": {"bus": {"bus": 0.5}}}},
        {"classes": ["bus"], "confusion": {"*": {"bus": {"plane": 1.0}}}},
        {"classes": ["bus"], "instances": 0},
        {"classes": ["bus"], "miss_rate": 2},
        {"classes": ["bus"], "confusion": {"Atlantis": {}}},
        {"classes": ["bus"], "localization": {"bus": {"base_iou": 0.9, "jitter": 0.2}}},
    ],
    ids=["row-sum", "unknown-target", "zero-count", "miss-rate", "bad-continent", "iou-range"],
)
def test_invalid_specs(doc):
    with pytest.raises(SynthError):
        SynthSpec.from_dict(doc)


def test_infeasible_target_is_reported():
    spec = SynthSpec.from_dict({"classes": ["bus"], "instances": 3, "tile_size": 8, "image_size": 8,
                                "localization": {"bus": {"base_iou": 0.02}}})
    with pytest.raises(SynthError, match="infeasible"):
        generate_records(spec)


def test_oracle_identity_confusion():
    spec = small_spec()
    o = oracle_metrics(spec)
    for c in CONTINENTS:
        assert o["bus"]["plain"][c].value == o["bus"]["corrected"][c].value
    assert o["bus"]["pct_change"] is None or o["bus"]["pct_change"].value == 0.0


def test_oracle_africa_bus_closed_form():
    spec = SynthSpec.from_dict({
        "classes": ["bus", "car"], "instances": 2000,
        "confusion": {"Africa": {"bus": {"bus": 0.2, "car": 0.8}}},
        "localization": {"bus": {"base_iou": 0.6}, "car": {"base_iou": 0.6}},
    })
    o = oracle_metrics(spec)
    m = o["bus"]["plain"][Continent.EUROPE].value
    assert m == pytest.approx(0.6, abs=IOU_CONSTRUCTION_TOL)
    assert o["bus"]["plain"][Continent.AFRICA].value == pytest.approx(0.2 * m, abs=1e-12)
    # closed form: five cells at m and one at 0.2 m
    vals = [m] * 5 + [0.2 * m]
    mu = sum(vals) / 6
    sd = math.sqrt(sum((v - mu) ** 2 for v in vals) / 6)
    assert o["bus"]["disp"].value == pytest.approx(sd / mu, rel=1e-12)
    assert o["bus"]["disp_corrected"].value == 0.0
    assert o["bus"]["pct_change"].value == pytest.approx(-100.0)


def test_achieved_iou_and_localization_bounds():
    assert achieved_iou(10, 10, 0.5) == 0.5
    with pytest.raises(SynthError):
        Localization(0.5, 0.5)
