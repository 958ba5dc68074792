import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodisp.errors import ConfigError
from geodisp.matching import match_instances
from geodisp.merging import DEFAULT_GROUPS, MergePolicy, corrected_match, merged_label, default_policy

from oracles import brute_match
from scenes import LABELS, random_scene


def test_default_groups():
    p = default_policy()
    assert merged_label("bus", p) == "car-bus-truck"
    assert merged_label("rider", p) == "person-rider"
    assert p.same_group("motorcycle", "bicycle")
    assert not p.same_group("car", "person")


def test_ungrouped_label_passes_through():
    assert MergePolicy((("car", "bus"),))("truck") == "truck"


@pytest.mark.parametrize(
    "groups,whitelist",
    [
        ((("car", "bus"), ("bus", "truck")), None),
        (((),), None),
        ((("car", "plane"),), ("car", "bus")),
        ((("car", "bus"),), ("car", "bus", "car-bus")),
    ],
    ids=["overlap", "empty-group", "not-whitelisted", "name-collision"],
)
def test_policy_validation(groups, whitelist):
    with pytest.raises(ConfigError):
        MergePolicy(groups, whitelist)


def test_bus_predicted_as_car_is_rescued():
    from test_matching import gt, pred

    g = [gt("bus", (0, 0, 6, 6), 0)]
    p = [pred("car", (0, 0, 6, 3), 0, 0.9)]
    assert match_instances(g, p)[0].mask_iou == 0.0
    r = corrected_match(g, p, default_policy())[0]
    assert r.mask_iou == 0.5
    assert r.class_label == "bus" and r.effective_class == "car-bus-truck"


policies = st.lists(st.sampled_from(LABELS), unique=True).flatmap(
    lambda labels: st.lists(st.integers(0, 2), min_size=len(labels), max_size=len(labels)).map(
        lambda ks: tuple(tuple(l for l, k in zip(labels, ks) if k == j) for j in range(3))
    )
).map(lambda gs: MergePolicy(tuple(g for g in gs if g)))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), policies, st.sampled_from(["mask", "box"]))
def test_corrected_never_below_plain(seed, policy, criterion):
    gts, preds, grids = random_scene(np.random.default_rng(seed), labels=LABELS)
    plain = match_instances(gts, preds, criterion)
    corr = corrected_match(gts, preds, policy, criterion)
    for p, c in zip(plain, corr):
        assert c.gt_ref == p.gt_ref
        assert c.iou(criterion) >= p.iou(criterion)
    want = brute_match(gts, preds, grids, criterion, relabel=policy)
    assert [(r.matched_pred, r.iou(criterion)) for r in corr] == [(m, float(v)) for _, m, v in want]


@given(st.integers(0, 2**32 - 1))
def test_empty_policy_is_plain(seed):
    gts, preds, _ = random_scene(np.random.default_rng(seed), labels=LABELS)
    for criterion in ("mask", "box"):
        assert corrected_match(gts, preds, MergePolicy(), criterion) == match_instances(gts, preds, criterion)


def test_groups_constant_matches_labels():
    assert sorted(l for g in DEFAULT_GROUPS for l in g) == sorted(
        ["car", "bus", "truck", "motorcycle", "bicycle", "person", "rider"]
    )
