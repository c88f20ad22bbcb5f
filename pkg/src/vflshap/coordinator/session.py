"""In-memory session registry and the collecting -> computing -> done state machine."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from vflshap import wire
from vflshap.binning import FeatureGroups
from vflshap.cmi import PermutationResult
from vflshap.coordinator.psi import build_id_index, compute_common_ids, count_permutation
from vflshap.crypto import is_encrypted_id
from vflshap.errors import ErrorCode, InputError, ProtocolError, VFLError
from vflshap.permutations import MAX_SEED, generate_permutations, validate_permutations

log = logging.getLogger(__name__)


class Phase(str, Enum):
    COLLECTING = "collecting"
    COMPUTING = "computing"
    DONE = "done"
    FAILED = "failed"


_NEXT = {
    Phase.COLLECTING: {Phase.COMPUTING, Phase.FAILED},
    Phase.COMPUTING: {Phase.DONE, Phase.FAILED},
    Phase.DONE: set(),
    Phase.FAILED: set(),
}


@dataclass(frozen=True)
class PartySpec:
    party_id: str
    is_task_party: bool = False


@dataclass
class SessionConfig:
    session_id: str
    expected_parties: list[PartySpec]
    permutation_count: int
    rng_seed: int
    created_at: float = field(default_factory=time.time)
    permutations: Optional[list[list[str]]] = None

    def __post_init__(self):
        ids = [p.party_id for p in self.expected_parties]
        if len(ids) < 2:
            raise InputError("a session needs at least two parties")
        if len(set(ids)) != len(ids):
            raise InputError("party identifiers must be distinct")
        if not all(isinstance(i, str) and i for i in ids):
            raise InputError("party identifiers must be non-empty strings")
        if sum(p.is_task_party for p in self.expected_parties) != 1:
            raise InputError("exactly one task party is required")
        if isinstance(self.permutation_count, bool) or not isinstance(self.permutation_count, int):
            raise InputError("permutation_count must be an integer")
        if self.permutation_count < 1:
            raise InputError("permutation_count must be >= 1")
        if isinstance(self.rng_seed, bool) or not isinstance(self.rng_seed, int):
            raise InputError("rng_seed must be an integer")
        if not 0 <= self.rng_seed <= MAX_SEED:
            raise InputError("rng_seed must fit in 64 unsigned bits")
        if self.permutations is not None and len(self.permutations) != self.permutation_count:
            raise InputError("pinned permutations must match permutation_count")

    @property
    def task_party(self) -> str:
        return next(p.party_id for p in self.expected_parties if p.is_task_party)

    @property
    def party_ids(self) -> list[str]:
        return [p.party_id for p in self.expected_parties]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "expected_parties": [
                {"id": p.party_id, "is_task_party": p.is_task_party} for p in self.expected_parties
            ],
            "permutation_count": self.permutation_count,
            "rng_seed": self.rng_seed,
            "created_at": self.created_at,
            "permutations": self.permutations,
        }

    @classmethod
    def from_dict(cls, payload: dict, session_id: Optional[str] = None) -> "SessionConfig":
        try:
            parties = [
                PartySpec(p["id"], bool(p.get("is_task_party", False)))
                for p in payload["expected_parties"]
            ]
            return cls(
                session_id=session_id or payload["session_id"],
                expected_parties=parties,
                permutation_count=payload["permutation_count"],
                rng_seed=payload["rng_seed"],
                created_at=payload.get("created_at", time.time()),
                permutations=payload.get("permutations"),
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed session config: {exc}") from exc


@dataclass
class SessionState:
    config: SessionConfig
    submissions: dict[str, list[FeatureGroups]] = field(default_factory=dict)
    phase: Phase = Phase.COLLECTING
    results: dict[str, list[PermutationResult]] = field(default_factory=dict)
    common_id_count: int = 0
    permutations: list[list[str]] = field(default_factory=list)
    error: Optional[ProtocolError] = None
    last_activity: float = field(default_factory=time.monotonic)
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)
    _payloads: dict[str, bytes] = field(default_factory=dict, repr=False)

    @property
    def parties_remaining(self) -> int:
        return len(self.config.expected_parties) - len(self.submissions)

    def advance(self, phase: Phase) -> None:
        if phase not in _NEXT[self.phase]:
            raise RuntimeError(f"illegal phase transition {self.phase.value} -> {phase.value}")
        self.phase = phase

    def feature_labels(self) -> list[str]:
        """Non-label features in expected-party order, then submission order."""
        labels = []
        for party in self.config.party_ids:
            labels.extend(fg.feature_label for fg in self.submissions.get(party, []) if not fg.is_label)
        return labels


def _validate_groups(party: str, features: list[FeatureGroups], task_party: str) -> None:
    if not features:
        raise ProtocolError(ErrorCode.MALFORMED_GROUPS, "submission carries no features")
    labels = [fg.feature_label for fg in features]
    if len(set(labels)) != len(labels):
        raise ProtocolError(ErrorCode.MALFORMED_GROUPS, "duplicate feature labels")
    n_label = sum(fg.is_label for fg in features)
    if n_label and party != task_party:
        raise ProtocolError(ErrorCode.LABEL_FROM_DATA_PARTY, f"party {party} is not the task party")
    if party == task_party and n_label != 1:
        raise ProtocolError(ErrorCode.MALFORMED_GROUPS, "task party must submit exactly one label")
    id_set = None
    for fg in features:
        if not isinstance(fg.feature_label, str) or not fg.feature_label:
            raise ProtocolError(ErrorCode.MALFORMED_GROUPS, "feature label must be a non-empty string")
        if not fg.groups:
            raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"{fg.feature_label} has no groups")
        bins = [b for b, _ in fg.groups]
        if any(isinstance(b, bool) or not isinstance(b, int) for b in bins) or len(set(bins)) != len(bins):
            raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"{fg.feature_label} has invalid bin indices")
        seen = set()
        total = 0
        for _, members in fg.groups:
            if not members:
                raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"{fg.feature_label} has an empty group")
            if not all(is_encrypted_id(m) for m in members):
                raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"{fg.feature_label} has a malformed id")
            seen |= members
            total += len(members)
        if total != len(seen):
            raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"{fg.feature_label} has overlapping bins")
        if id_set is None:
            id_set = seen
        elif seen != id_set:
            raise ProtocolError(
                ErrorCode.MALFORMED_GROUPS, "features of one party must cover the same ids"
            )


class Coordinator:
    """Session registry implementing the PSI server's side of the protocol.

    With ``background=True`` the intersection counting runs on a worker thread
    once the last party submits; otherwise it runs inline in that call.
    """

    def __init__(
        self,
        background: bool = False,
        idle_timeout: Optional[float] = None,
        snapshot_dir: Optional[str] = None,
        workers: int = 1,
    ):
        self.background = background
        self.idle_timeout = idle_timeout
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.workers = max(1, int(workers))
        self._sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        if self.snapshot_dir:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # session registry

    def create_session(self, config: SessionConfig | dict) -> str:
        if isinstance(config, dict):
            config = SessionConfig.from_dict(config, session_id=uuid.uuid4().hex)
        if config.permutations is not None:
            config.permutations = [list(p) for p in config.permutations]
        state = SessionState(config)
        with self._lock:
            if config.session_id in self._sessions:
                raise InputError(f"session {config.session_id} already exists")
            self._sessions[config.session_id] = state
        self._snapshot(state)
        log.info("session %s created for %d parties", config.session_id, len(config.expected_parties))
        return config.session_id

    def get(self, session_id: str) -> SessionState:
        self.expire_idle()
        with self._lock:
            state = self._sessions.get(session_id)
        if state is None:
            raise ProtocolError(ErrorCode.UNKNOWN_SESSION, f"no session {session_id}")
        state.last_activity = time.monotonic()
        return state

    def expire_idle(self, now: Optional[float] = None) -> list[str]:
        if self.idle_timeout is None:
            return []
        now = time.monotonic() if now is None else now
        with self._lock:
            stale = [
                sid for sid, s in self._sessions.items()
                if now - s.last_activity > self.idle_timeout and s.phase != Phase.COMPUTING
            ]
            for sid in stale:
                del self._sessions[sid]
        for sid in stale:
            log.info("session %s expired", sid)
            if self.snapshot_dir:
                (self.snapshot_dir / f"{sid}.json").unlink(missing_ok=True)
        return stale

    # protocol operations

    def accept_submission(self, session_id: str, party: str, features: list[FeatureGroups]) -> int:
        state = self.get(session_id)
        with state.lock:
            if party not in state.config.party_ids:
                raise ProtocolError(ErrorCode.UNAUTHORIZED_PARTY, f"party {party} is not expected")
            if party in state.submissions:
                raise ProtocolError(ErrorCode.DUPLICATE_SUBMISSION, f"party {party} already submitted")
            if state.phase != Phase.COLLECTING:
                raise ProtocolError(ErrorCode.DUPLICATE_SUBMISSION, "session is no longer collecting")
            _validate_groups(party, features, state.config.task_party)
            taken = {fg.feature_label for fgs in state.submissions.values() for fg in fgs}
            clash = taken & {fg.feature_label for fg in features}
            if clash:
                raise ProtocolError(ErrorCode.MALFORMED_GROUPS, f"feature labels already used: {sorted(clash)}")
            state.submissions[party] = [
                FeatureGroups(fg.feature_label, party, fg.is_label, list(fg.groups)) for fg in features
            ]
            remaining = state.parties_remaining
            if remaining == 0:
                state.advance(Phase.COMPUTING)
            self._snapshot(state)
        if remaining == 0:
            self._start(state)
        return remaining

    def _start(self, state: SessionState) -> None:
        if self.background:
            t = threading.Thread(target=self.run_psi_computation, args=(state,), daemon=True)
            self._threads.append(t)
            t.start()
        else:
            self.run_psi_computation(state)

    def run_psi_computation(self, state: SessionState) -> None:
        with state.lock:
            if state.phase != Phase.COMPUTING:
                raise RuntimeError("computation requires the computing phase")
            try:
                common = compute_common_ids(state.submissions)
                labels = state.feature_labels()
                if state.config.permutations is not None:
                    perms = validate_permutations(state.config.permutations, labels)
                else:
                    perms = generate_permutations(
                        labels, state.config.permutation_count, state.config.rng_seed
                    )
                all_features = [fg for fgs in state.submissions.values() for fg in fgs]
                index = build_id_index(all_features, common)
                if self.workers > 1:
                    with ThreadPoolExecutor(self.workers) as pool:
                        slots = list(pool.map(lambda ip: count_permutation(index, ip[1], ip[0]), enumerate(perms)))
                else:
                    slots = [count_permutation(index, p, i) for i, p in enumerate(perms)]
                owner = {fg.feature_label: fg.owner for fg in all_features}
                results: dict[str, list[PermutationResult]] = {p: [] for p in state.config.party_ids}
                for label in labels:
                    for slot in slots:
                        results[owner[label]].append(slot[label])
                state.common_id_count = index.n
                state.permutations = perms
                state.results = results
                state._payloads = {
                    p: wire.encode_results(results[p], index.n) for p in state.config.party_ids
                }
                state.advance(Phase.DONE)
                log.info("session %s done: %d common ids, %d permutations",
                         state.config.session_id, index.n, len(perms))
            except ProtocolError as exc:
                state.error = exc
                state.advance(Phase.FAILED)
            except VFLError as exc:
                state.error = ProtocolError(ErrorCode.INTERNAL, str(exc))
                state.advance(Phase.FAILED)
            except Exception as exc:  # noqa: BLE001 - a worker thread must not die silently
                log.exception("session %s failed", state.config.session_id)
                state.error = ProtocolError(ErrorCode.INTERNAL, f"{type(exc).__name__}: {exc}")
                state.advance(Phase.FAILED)
            self._snapshot(state)

    def status(self, session_id: str) -> dict:
        state = self.get(session_id)
        with state.lock:
            out = {"phase": state.phase.value, "parties_remaining": state.parties_remaining}
            if state.error is not None:
                out["error_code"] = state.error.code.value
            return out

    def _done_state(self, session_id: str, party: Optional[str]) -> SessionState:
        state = self.get(session_id)
        if party is not None and party not in state.config.party_ids:
            raise ProtocolError(ErrorCode.UNAUTHORIZED_PARTY, f"party {party} is not expected")
        if state.phase == Phase.FAILED:
            raise state.error or ProtocolError(ErrorCode.INTERNAL, "session failed")
        if state.phase != Phase.DONE:
            raise ProtocolError(ErrorCode.NOT_READY, f"session is {state.phase.value}")
        return state

    def fetch_results(self, session_id: str, party: str) -> tuple[list[PermutationResult], int]:
        state = self._done_state(session_id, party)
        return list(state.results[party]), state.common_id_count

    def results_payload(self, session_id: str, party: str) -> bytes:
        state = self._done_state(session_id, party)
        return state._payloads[party]

    def export_permutations(self, session_id: str) -> list[list[str]]:
        state = self._done_state(session_id, None)
        return [list(p) for p in state.permutations]

    def join(self, timeout: Optional[float] = None) -> None:
        for t in list(self._threads):
            t.join(timeout)

    # persistence

    def _snapshot(self, state: SessionState) -> None:
        if not self.snapshot_dir:
            return
        payload = {
            "config": state.config.to_dict(),
            "phase": state.phase.value,
            "submissions": {
                p: [fg.to_wire() for fg in fgs] for p, fgs in state.submissions.items()
            },
        }
        if state.error is not None:
            payload["error"] = state.error.to_dict()
        path = self.snapshot_dir / f"{state.config.session_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        os.replace(tmp, path)

    def _restore(self) -> None:
        for path in sorted(self.snapshot_dir.glob("*.json")):
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
                config = SessionConfig.from_dict(payload["config"])
            except (ValueError, KeyError, InputError) as exc:
                log.warning("skipping unreadable snapshot %s: %s", path, exc)
                continue
            state = SessionState(config)
            state.submissions = {
                p: [FeatureGroups.from_wire(f, p) for f in fgs]
                for p, fgs in payload.get("submissions", {}).items()
            }
            phase = Phase(payload.get("phase", "collecting"))
            self._sessions[config.session_id] = state
            if phase == Phase.FAILED:
                err = payload.get("error", {})
                state.phase = Phase.FAILED
                state.error = ProtocolError(ErrorCode(err.get("error_code", "INTERNAL")), err.get("message", ""))
            elif phase != Phase.COLLECTING:
                # results are not persisted; they are recomputed deterministically
                state.phase = Phase.COMPUTING
                self._start(state)
