"""Builders for coordinator-level tests working directly on binned columns."""

from vflshap.binning import build_feature_groups
from vflshap.coordinator import Coordinator, PartySpec, SessionConfig
from vflshap.crypto import encrypt_id

KEY = bytes(range(32))


def eid(i) -> str:
    return encrypt_id(KEY, f"row-{i}")


def submissions_from_columns(columns: dict, label, owners: dict, task="p1", row_ids=None):
    """Build per-party FeatureGroups; ``row_ids[party]`` optionally restricts a party's rows."""
    n = len(label)
    parties = sorted(set(owners.values()) | {task})
    out = {}
    for p in parties:
        rows = row_ids[p] if row_ids else list(range(n))
        ids = [eid(i) for i in rows]
        fgs = [
            build_feature_groups(f, p, ids, [columns[f][i] for i in rows])
            for f in columns if owners[f] == p
        ]
        if p == task:
            fgs.append(build_feature_groups(f"{p}.label", p, ids, [label[i] for i in rows], is_label=True))
        out[p] = fgs
    return out


def run_coordinator(submissions, task="p1", permutations=None, count=1, seed=0):
    co = Coordinator()
    parties = [PartySpec(p, p == task) for p in submissions]
    if permutations is not None:
        count = len(permutations)
    sid = co.create_session(SessionConfig("s", parties, count, seed, permutations=permutations))
    for p, fgs in submissions.items():
        co.accept_submission(sid, p, fgs)
    return co, sid
