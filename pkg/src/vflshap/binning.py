"""Local discretization of feature columns and grouping of encrypted IDs by bin."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from vflshap.errors import InputError

EQUAL_WIDTH = "equal-width"
CATEGORICAL = "categorical-passthrough"
STRATEGIES = (EQUAL_WIDTH, CATEGORICAL)


@dataclass(frozen=True)
class BinningSpec:
    bin_count: int = 5
    strategy: str = EQUAL_WIDTH

    def __post_init__(self):
        if isinstance(self.bin_count, bool) or not isinstance(self.bin_count, int):
            raise InputError("bin_count must be an integer")
        if self.bin_count < 1:
            raise InputError(f"bin_count must be >= 1, got {self.bin_count}")
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown binning strategy {self.strategy!r}")


def equal_width_bins(values: np.ndarray, lo: float, hi: float, bin_count: int) -> np.ndarray:
    """floor((v - lo) * k / (hi - lo)) clamped to [0, k - 1]; constant ranges give bin 0."""
    values = np.asarray(values, dtype=float)
    if not hi > lo:
        return np.zeros(values.shape, dtype=np.int64)
    raw = np.floor((values - lo) * bin_count / (hi - lo))
    return np.clip(raw, 0, bin_count - 1).astype(np.int64)


def _sort_key(value):
    # numbers before text so mixed label columns still have a total order
    if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
        return (0, float(value), "")
    return (1, 0.0, str(value))


def categorical_bins(values: Sequence) -> list[int]:
    distinct = sorted(set(values), key=_sort_key)
    rank = {v: i for i, v in enumerate(distinct)}
    return [rank[v] for v in values]


def make_bins(values: Sequence, spec: BinningSpec = BinningSpec()) -> list[int]:
    """Assign a bin index to every value, using the column's own min and max."""
    if len(values) == 0:
        raise InputError("cannot bin an empty column")
    if spec.strategy == CATEGORICAL:
        for v in values:
            if isinstance(v, float) and math.isnan(v):
                raise InputError("missing value in categorical column")
        return categorical_bins(values)
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"non-numeric value in equal-width column: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise InputError("equal-width binning requires finite values")
    return equal_width_bins(arr, arr.min(), arr.max(), spec.bin_count).tolist()


@dataclass
class FeatureGroups:
    """One feature's partition of encrypted IDs into bins: the unit sent to the server."""

    feature_label: str
    owner: str
    is_label: bool
    groups: list[tuple[int, frozenset]] = field(default_factory=list)

    def ids(self) -> set:
        out = set()
        for _, members in self.groups:
            out.update(members)
        return out

    def to_wire(self) -> dict:
        return {
            "feature_label": self.feature_label,
            "is_label": self.is_label,
            "groups": [
                {"bin_index": b, "members": sorted(members)} for b, members in self.groups
            ],
        }

    @classmethod
    def from_wire(cls, payload: dict, owner: str) -> "FeatureGroups":
        return cls(
            feature_label=payload["feature_label"],
            owner=owner,
            is_label=bool(payload.get("is_label", False)),
            groups=[(g["bin_index"], frozenset(g["members"])) for g in payload["groups"]],
        )


def build_feature_groups(
    feature_label: str,
    owner: str,
    encrypted_ids: Sequence[str],
    bin_assignments: Sequence[int],
    is_label: bool = False,
) -> FeatureGroups:
    if len(encrypted_ids) != len(bin_assignments):
        raise InputError(
            f"{len(encrypted_ids)} ids but {len(bin_assignments)} bin assignments"
        )
    buckets: dict[int, set] = {}
    seen = set()
    for eid, b in zip(encrypted_ids, bin_assignments):
        if eid in seen:
            raise InputError(f"duplicate encrypted id in feature {feature_label}")
        seen.add(eid)
        buckets.setdefault(int(b), set()).add(eid)
    groups = [(b, frozenset(buckets[b])) for b in sorted(buckets)]
    return FeatureGroups(feature_label, owner, bool(is_label), groups)


class EqualWidthBinner(TransformerMixin, BaseEstimator):
    """Column-wise equal-width discretizer with fitted per-column ranges.

    Parameters
    ----------
    n_bins : int, default=5
        Number of intervals per column.
    """

    def __init__(self, n_bins=5):
        self.n_bins = n_bins

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        # output is integer bin codes
        tags.transformer_tags.preserves_dtype = []
        return tags

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=float)
        BinningSpec(self.n_bins)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        return self

    def transform(self, X):
        check_is_fitted(self, ["data_min_", "data_max_"])
        X = validate_data(self, X, dtype=float, reset=False)
        out = np.empty(X.shape, dtype=np.int64)
        for j in range(X.shape[1]):
            out[:, j] = equal_width_bins(X[:, j], self.data_min_[j], self.data_max_[j], self.n_bins)
        return out

    def bin_edges(self) -> list[np.ndarray]:
        check_is_fitted(self, ["data_min_", "data_max_"])
        return [
            lo + np.arange(self.n_bins + 1) * (hi - lo) / self.n_bins
            for lo, hi in zip(self.data_min_, self.data_max_)
        ]
