"""Reference computations that share no code with the package under test."""

import hashlib
import itertools
import math
from collections import Counter


def reference_hmac_sha256(key: bytes, message: bytes) -> bytes:
    block = 64
    if len(key) > block:
        key = hashlib.sha256(key).digest()
    key = key.ljust(block, b"\x00")
    ipad = bytes(k ^ 0x36 for k in key)
    opad = bytes(k ^ 0x5C for k in key)
    return hashlib.sha256(opad + hashlib.sha256(ipad + message).digest()).digest()


def entropy(*columns) -> float:
    n = len(columns[0])
    counts = Counter(zip(*columns))
    return -sum(c / n * math.log(c / n) for c in counts.values())


def cmi_by_entropy(x, y, given):
    """I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)."""
    z = list(zip(*given)) if given else [0] * len(x)
    return entropy(x, z) + entropy(y, z) - entropy(x, y, z) - entropy(z)


def exact_shapley(columns: dict, label) -> dict:
    """Factorial-weighted sum over every subset of the other features."""
    names = list(columns)
    m = len(names)
    out = {}
    for d in names:
        others = [f for f in names if f != d]
        total = 0.0
        for size in range(m):
            weight = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for subset in itertools.combinations(others, size):
                total += weight * cmi_by_entropy(columns[d], label, [columns[s] for s in subset])
        out[d] = total
    return out


def naive_quads(groups: dict, label_groups, order, common):
    """Enumerate every combination of bins with nested set intersections.

    ``groups`` maps feature -> list of id sets; returns feature -> sorted list of
    (a, b, c, d) tuples for combinations with a nonzero A-set.
    """
    common = set(common)
    out = {}
    for k, f in enumerate(order):
        conditioning = [groups[g] for g in order[:k]]
        quads = []
        for combo in itertools.product(*conditioning):
            xd_set = set(common)
            for s in combo:
                xd_set &= s
            for xf in groups[f]:
                for ys in label_groups:
                    a = len(xf & xd_set & ys & common)
                    if a == 0:
                        continue
                    b = len(xd_set & ys & common)
                    c = len(xf & xd_set & common)
                    d = len(xd_set & common)
                    quads.append((a, b, c, d))
        out[f] = sorted(quads)
    return out


def mutual_information_direct(features, label) -> float:
    """I(all features jointly; label) = H(X) + H(Y) - H(X, Y)."""
    joint = list(zip(*features)) if features else [0] * len(label)
    return entropy(joint) + entropy(label) - entropy(joint, label)
