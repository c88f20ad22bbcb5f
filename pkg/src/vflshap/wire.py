"""JSON wire forms exchanged between parties and the coordinator.

Result payloads are canonical (sorted keys, compact separators) so repeated
fetches are byte-identical. They carry only labels and counts.
"""

from __future__ import annotations

import json
from typing import Sequence

from vflshap.binning import FeatureGroups
from vflshap.cmi import PermutationResult, PsiQuad
from vflshap.errors import ErrorCode, ProtocolError


def dumps(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_submission(party_id: str, features: Sequence[FeatureGroups]) -> dict:
    return {"party_id": party_id, "features": [fg.to_wire() for fg in features]}


def decode_submission(body) -> tuple[str, list[FeatureGroups]]:
    try:
        party = body["party_id"]
        if not isinstance(party, str):
            raise TypeError("party_id must be a string")
        features = []
        for f in body["features"]:
            groups = []
            for g in f["groups"]:
                members = g["members"]
                if not isinstance(members, list):
                    raise TypeError("members must be a list")
                groups.append((g["bin_index"], frozenset(members)))
                if len(groups[-1][1]) != len(members):
                    raise ProtocolError(ErrorCode.MALFORMED_GROUPS, "repeated id inside a group")
            is_label = f.get("is_label", False)
            if not isinstance(is_label, bool):
                raise TypeError("is_label must be a boolean")
            features.append(FeatureGroups(f["feature_label"], party, is_label, groups))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"bad submission body: {exc}") from exc
    return party, features


def results_to_dict(results: Sequence[PermutationResult], common_id_count: int) -> dict:
    by_feature: dict[str, list] = {}
    for r in results:
        by_feature.setdefault(r.feature_label, []).append(
            {
                "permutation_index": r.permutation_index,
                "quads": [q.to_dict() for q in r.quads],
            }
        )
    return {
        "common_id_count": common_id_count,
        "features": [
            {"feature_label": label, "permutations": sorted(perms, key=lambda p: p["permutation_index"])}
            for label, perms in by_feature.items()
        ],
    }


def encode_results(results: Sequence[PermutationResult], common_id_count: int) -> bytes:
    return dumps(results_to_dict(results, common_id_count))


def decode_results(payload) -> tuple[list[PermutationResult], int]:
    if isinstance(payload, (bytes, str)):
        payload = json.loads(payload)
    out = []
    for f in payload["features"]:
        for p in f["permutations"]:
            quads = [PsiQuad(q["a"], q["b"], q["c"], q["d"]) for q in p["quads"]]
            out.append(PermutationResult(f["feature_label"], p["permutation_index"], quads))
    return out, int(payload["common_id_count"])
