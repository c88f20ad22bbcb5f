"""Intersection counting over the common encrypted IDs.

Walking the common IDs and skipping those already covered by an earlier
A-set is the same as visiting each observed (conditioning bins, feature bin,
label bin) combination once, at its first occurrence. That is what
``count_permutation`` does, using grouped counts instead of repeated set
intersections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from vflshap.binning import FeatureGroups
from vflshap.cmi import PermutationResult, PsiQuad
from vflshap.errors import ErrorCode, ProtocolCorruptionError, ProtocolError


def compute_common_ids(submissions: Mapping[str, Sequence[FeatureGroups]]) -> set:
    common = None
    for groups in submissions.values():
        for fg in groups:
            ids = fg.ids()
            common = ids if common is None else common & ids
    if not common:
        raise ProtocolError(ErrorCode.NO_OVERLAP, "parties share no identifiers")
    return common


@dataclass
class IdIndex:
    """Dense bin codes of every feature over the common IDs (sorted by digest)."""

    common_ids: list[str]
    codes: dict[str, np.ndarray]
    label: np.ndarray

    @property
    def n(self) -> int:
        return len(self.common_ids)


def _dense_codes(fg: FeatureGroups, position: Mapping[str, int], n: int) -> np.ndarray:
    out = np.full(n, -1, dtype=np.int64)
    for code, (_, members) in enumerate(sorted(fg.groups, key=lambda g: g[0])):
        for eid in members:
            pos = position.get(eid)
            if pos is not None:
                out[pos] = code
    if (out < 0).any():
        raise ProtocolCorruptionError(f"common id without a bin in feature {fg.feature_label}")
    return out


def build_id_index(features: Iterable[FeatureGroups], common_ids: Iterable[str]) -> IdIndex:
    ordered = sorted(common_ids)
    position = {eid: i for i, eid in enumerate(ordered)}
    codes = {}
    label = None
    for fg in features:
        dense = _dense_codes(fg, position, len(ordered))
        if fg.is_label:
            label = dense
        else:
            codes[fg.feature_label] = dense
    if label is None:
        raise ProtocolCorruptionError("no label feature submitted")
    return IdIndex(ordered, codes, label)


def _group(*columns: np.ndarray):
    """Per-row group code, per-group size and first row of each group."""
    stacked = np.column_stack(columns)
    _, first, inverse, counts = np.unique(
        stacked, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    return inverse.reshape(-1), counts, first


def count_permutation(
    index: IdIndex, order: Sequence[str], permutation_index: int
) -> dict[str, PermutationResult]:
    n = index.n
    y = index.label
    cond = np.zeros(n, dtype=np.int64)
    out = {}
    for feature in order:
        x = index.codes[feature]
        _, a_counts, first = _group(cond, x, y)
        b_inv, b_counts, _ = _group(cond, y)
        c_inv, c_counts, _ = _group(cond, x)
        d_inv, d_counts, _ = _group(cond)
        quads = []
        # visit combinations in order of their first common ID
        order_idx = np.argsort(first, kind="stable")
        for k in order_idx:
            row = first[k]
            quads.append(
                PsiQuad(
                    int(a_counts[k]),
                    int(b_counts[b_inv[row]]),
                    int(c_counts[c_inv[row]]),
                    int(d_counts[d_inv[row]]),
                )
            )
        out[feature] = PermutationResult(feature, permutation_index, quads)
        cond = c_inv.astype(np.int64)
    return out
