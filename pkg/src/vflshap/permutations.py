"""Seeded feature orderings, shared by the coordinator and the centralized oracle."""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from vflshap.errors import InputError

PRNG_NAME = "numpy.PCG64"
MAX_SEED = 2**64 - 1


def generate_permutations(feature_labels: Sequence[str], count: int, seed: int) -> list[list[str]]:
    """Fisher-Yates shuffles of ``feature_labels`` driven by PCG64(seed).

    For i from len-1 down to 1 the element at i is swapped with a uniform pick
    from [0, i]. The stream is consumed in that order for every permutation.
    """
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise InputError(f"permutation count must be a positive integer, got {count!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise InputError("rng seed must fit in 64 unsigned bits")
    if len(set(feature_labels)) != len(feature_labels):
        raise InputError("feature labels must be distinct")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    out = []
    for _ in range(count):
        order = list(feature_labels)
        for i in range(len(order) - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            order[i], order[j] = order[j], order[i]
        out.append(order)
    return out


def validate_permutations(permutations, feature_labels) -> list[list[str]]:
    expected = sorted(feature_labels)
    checked = []
    for k, perm in enumerate(permutations):
        perm = list(perm)
        if sorted(perm) != expected:
            raise InputError(f"permutation {k} is not an ordering of the feature labels")
        checked.append(perm)
    if not checked:
        raise InputError("at least one permutation is required")
    return checked


def dump_permutations(permutations, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"prng": PRNG_NAME, "permutations": permutations}, fh, indent=1)
        fh.write("\n")


def load_permutations(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = payload["permutations"]
    return [list(p) for p in payload]
