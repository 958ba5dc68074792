"""Class merging: match under coarser labels, report under the original ones.

A bus predicted as a car scores 0 for bus in plain matching. With the group
``car-bus-truck`` both sides are relabeled to the group name before matching,
so the bus gets the overlap of the car prediction; the result stays keyed by
the ground truth's original class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigError
from .ingest import InstanceRecord, PredictionRecord
from .matching import MatchResult, evaluate_dataset, match_instances

DEFAULT_GROUPS = (("car", "bus", "truck"), ("motorcycle", "bicycle"), ("person", "rider"))


@dataclass(frozen=True)
class MergePolicy:
    groups: Tuple[Tuple[str, ...], ...] = ()
    whitelist: Optional[Tuple[str, ...]] = None
    _lookup: Dict[str, str] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.whitelist is not None:
            object.__setattr__(self, "whitelist", tuple(self.whitelist))
        lookup = {}
        for g in groups:
            if not g:
                raise ConfigError("merge groups must not be empty")
            name = "-".join(g)
            for label in g:
                if label in lookup:
                    raise ConfigError(f"label {label!r} appears in more than one merge group")
                if self.whitelist is not None and label not in self.whitelist:
                    raise ConfigError(f"merge group member {label!r} is not in the class whitelist")
                lookup[label] = name
        if self.whitelist is not None:
            for name in set(lookup.values()):
                if name in self.whitelist and lookup.get(name) != name:
                    raise ConfigError(f"merge group name {name!r} collides with an ungrouped class")
        object.__setattr__(self, "_lookup", lookup)

    def group_names(self) -> List[str]:
        return ["-".join(g) for g in self.groups]

    def merged_label(self, label: str) -> str:
        if self.whitelist is not None and label not in self.whitelist:
            raise ConfigError(f"unknown label {label!r}")
        return self._lookup.get(label, label)

    __call__ = merged_label

    def same_group(self, a: str, b: str) -> bool:
        return self._lookup.get(a, a) == self._lookup.get(b, b)

    def to_list(self) -> List[List[str]]:
        return [list(g) for g in self.groups]


def default_policy(whitelist: Optional[Iterable[str]] = None) -> MergePolicy:
    return MergePolicy(DEFAULT_GROUPS, tuple(whitelist) if whitelist is not None else None)


def merged_label(label: str, policy: MergePolicy) -> str:
    return policy.merged_label(label)


def corrected_match(
    gts: Sequence[InstanceRecord],
    preds: Sequence[PredictionRecord],
    policy: MergePolicy,
    criterion: str = "mask",
) -> List[MatchResult]:
    """Corrected-IoU results for one image, keyed by the original ground-truth class."""
    return match_instances(gts, preds, criterion, relabel=policy)


def corrected_dataset(
    gts: Sequence[InstanceRecord],
    preds: Sequence[PredictionRecord],
    policy: MergePolicy,
    criterion: str = "mask",
    **kwargs,
) -> Dict[str, List[MatchResult]]:
    return evaluate_dataset(gts, preds, criterion, relabel=policy, **kwargs)
