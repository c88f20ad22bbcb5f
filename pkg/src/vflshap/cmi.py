"""Conditional mutual information from intersection counts, and Shapley averaging.

All logarithms are natural, so values are in nats.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from vflshap.binning import EqualWidthBinner, categorical_bins
from vflshap.errors import InputError, ProtocolCorruptionError
from vflshap.permutations import generate_permutations, validate_permutations

LOG_BASE = "e"


@dataclass(frozen=True)
class PsiQuad:
    """Intersection sizes for one observed (feature bin, conditioning bins, label) combination.

    a: IDs sharing all groups; b: conditioning groups and label group;
    c: feature group and conditioning groups; d: conditioning groups only.
    """

    a: int
    b: int
    c: int
    d: int

    def is_consistent(self) -> bool:
        return 1 <= self.a <= min(self.b, self.c) and max(self.b, self.c) <= self.d

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass
class PermutationResult:
    feature_label: str
    permutation_index: int
    quads: list[PsiQuad]


@dataclass
class ShapleyEstimate:
    feature_label: str
    value: float
    per_permutation_cmi: list[float]
    permutation_count: int


@dataclass
class ValuationReport:
    estimates: list[ShapleyEstimate]
    normalized_shares: dict[str, float]
    degenerate_total: bool = False
    log_base: str = LOG_BASE
    metadata: dict = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        return {e.feature_label: e.value for e in self.estimates}


def cmi_from_quads(quads: Sequence[PsiQuad], n: int) -> float:
    """(1/n) * sum of a * ln(a*d / (b*c)) over the quads, compensated summation."""
    if n < 1:
        raise ProtocolCorruptionError(f"common id count must be positive, got {n}")
    terms = []
    for q in quads:
        if not q.is_consistent():
            raise ProtocolCorruptionError(f"inconsistent intersection counts {q}")
        num = q.a * q.d
        den = q.b * q.c
        if num != den:
            terms.append(q.a * math.log(num / den))
    return math.fsum(terms) / n


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def shapley_from_permutations(per_feature: Mapping[str, Sequence[float]]) -> list[ShapleyEstimate]:
    counts = {len(v) for v in per_feature.values()}
    if len(counts) > 1:
        raise ProtocolCorruptionError(
            f"features carry different permutation counts: {sorted(counts)}"
        )
    if counts and counts.pop() < 1:
        raise ProtocolCorruptionError("each feature needs at least one permutation")
    return [
        ShapleyEstimate(label, _mean(cmis), [float(c) for c in cmis], len(cmis))
        for label, cmis in per_feature.items()
    ]


def normalize_report(estimates: Sequence[ShapleyEstimate]) -> ValuationReport:
    if not estimates:
        raise InputError("no estimates to normalize")
    total = math.fsum(e.value for e in estimates)
    if total == 0:
        shares = {e.feature_label: 0.0 for e in estimates}
        return ValuationReport(list(estimates), shares, degenerate_total=True)
    shares = {e.feature_label: e.value / total for e in estimates}
    return ValuationReport(list(estimates), shares)


def _joint_counts(columns: Sequence[Sequence[int]]) -> Counter:
    return Counter(zip(*columns)) if columns else Counter()


def conditional_mi(x, y, given: Sequence[Sequence[int]]) -> float:
    """Plug-in I(x; y | given) by direct joint counting over the raw columns."""
    n = len(x)
    if n == 0:
        raise InputError("empty columns")
    z = list(zip(*given)) if given else [()] * n
    n_xyz = Counter(zip(x, y, z))
    n_xz = Counter(zip(x, z))
    n_yz = Counter(zip(y, z))
    n_z = Counter(z)
    terms = []
    for (xv, yv, zv), count in n_xyz.items():
        num = count * n_z[zv]
        den = n_xz[(xv, zv)] * n_yz[(yv, zv)]
        if num != den:
            terms.append(count * math.log(num / den))
    return math.fsum(terms) / n


def mutual_information(features: Sequence[Sequence[int]], label: Sequence[int]) -> float:
    """Plug-in I(features jointly; label)."""
    n = len(label)
    x = list(zip(*features)) if features else [()] * n
    return conditional_mi(x, list(label), [])


def oracle_shapley_cmi(
    columns: Mapping[str, Sequence[int]],
    label: Sequence[int],
    permutations: Sequence[Sequence[str]],
) -> list[ShapleyEstimate]:
    """Centralized Shapley-CMI on binned data, without any protocol in between."""
    n = len(label)
    for name, col in columns.items():
        if len(col) != n:
            raise InputError(f"column {name} has {len(col)} rows, label has {n}")
    permutations = validate_permutations(permutations, list(columns))
    label = list(label)
    cols = {k: list(v) for k, v in columns.items()}
    per_feature: dict[str, list[float]] = {k: [] for k in columns}
    for perm in permutations:
        preceding: list[list[int]] = []
        for name in perm:
            per_feature[name].append(conditional_mi(cols[name], label, preceding))
            preceding.append(cols[name])
    return shapley_from_permutations(per_feature)


class ShapleyCMIValuator(SelectorMixin, BaseEstimator):
    """Model-free feature valuation: Monte-Carlo Shapley values of plug-in CMI.

    Parameters
    ----------
    n_bins : int or None, default=5
        Equal-width intervals per feature. ``None`` treats X as already discrete.
    n_permutations : int, default=20
        Number of random feature orderings to average over.
    random_state : int, default=0
        Seed for the ordering generator.
    permutations : list of list of int, optional
        Explicit orderings (column indices); overrides ``n_permutations``.

    Attributes
    ----------
    shapley_values_ : ndarray of shape (n_features,)
    feature_importances_ : ndarray of shape (n_features,)
        Shapley values normalized to sum to one.
    permutations_ : list of list of int
    per_permutation_cmi_ : ndarray of shape (n_permutations, n_features)
    joint_mutual_information_ : float
    """

    def __init__(self, n_bins=5, n_permutations=20, random_state=0, permutations=None):
        self.n_bins = n_bins
        self.n_permutations = n_permutations
        self.random_state = random_state
        self.permutations = permutations

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=None)
        check_classification_targets(y)
        if self.n_bins is None:
            binned = np.column_stack([categorical_bins(X[:, j].tolist()) for j in range(X.shape[1])])
        else:
            self.binner_ = EqualWidthBinner(self.n_bins).fit(X.astype(float))
            binned = self.binner_.transform(X.astype(float))
        target = categorical_bins(list(y))
        n_features = X.shape[1]
        names = [str(j) for j in range(n_features)]
        if self.permutations is not None:
            perms = [[str(j) for j in p] for p in self.permutations]
        else:
            perms = generate_permutations(names, self.n_permutations, self.random_state)
        columns = {names[j]: binned[:, j].tolist() for j in range(n_features)}
        estimates = oracle_shapley_cmi(columns, target, perms)
        report = normalize_report(estimates)

        self.permutations_ = [[int(s) for s in p] for p in perms]
        self.shapley_values_ = np.array([e.value for e in estimates])
        self.per_permutation_cmi_ = np.array([e.per_permutation_cmi for e in estimates]).T
        self.feature_importances_ = np.array([report.normalized_shares[s] for s in names])
        self.joint_mutual_information_ = mutual_information(
            [binned[:, j].tolist() for j in range(n_features)], target
        )
        return self

    def _get_support_mask(self):
        # transform() keeps the features carrying any information about the target
        check_is_fitted(self, "shapley_values_")
        return self.shapley_values_ > 0
