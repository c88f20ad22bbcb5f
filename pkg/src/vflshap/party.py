"""A party's local agent: ingest, pseudonymize, bin, submit, fetch, value."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from vflshap import wire
from vflshap.binning import CATEGORICAL, BinningSpec, FeatureGroups, build_feature_groups, make_bins
from vflshap.cmi import (
    PermutationResult,
    ShapleyEstimate,
    cmi_from_quads,
    normalize_report,
    shapley_from_permutations,
)
from vflshap.crypto import encrypt_column
from vflshap.errors import (
    ErrorCode,
    IngestionError,
    InputError,
    ProtocolCorruptionError,
    ProtocolError,
    TransportError,
)

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass
class PartyDataset:
    party_id: str
    ids: list[str]
    features: dict[str, list[float]]
    label_name: Optional[str] = None
    label: Optional[list] = None
    bin_specs: dict[str, BinningSpec] = field(default_factory=dict)

    def __post_init__(self):
        if not self.ids:
            raise InputError(f"party {self.party_id} has no rows")
        if len(set(self.ids)) != len(self.ids):
            raise InputError(f"party {self.party_id} has duplicate ids")
        if any(not str(i) for i in self.ids):
            raise InputError(f"party {self.party_id} has an empty id")
        if not self.features:
            raise InputError(f"party {self.party_id} holds no feature columns")
        for name, col in self.features.items():
            if len(col) != len(self.ids):
                raise InputError(f"column {name} length does not match the id column")
        if self.label is not None and len(self.label) != len(self.ids):
            raise InputError("label length does not match the id column")

    @property
    def is_task_party(self) -> bool:
        return self.label is not None

    def spec_for(self, column: str) -> BinningSpec:
        return self.bin_specs.get(column, BinningSpec())

    def feature_mapping(self) -> dict[str, str]:
        """Pseudonymous wire label -> local column name."""
        return {f"{self.party_id}.f{k}": name for k, name in enumerate(self.features, start=1)}

    def label_pseudonym(self) -> str:
        return f"{self.party_id}.label"


def _parse_number(cell: str) -> float:
    value = float(cell)
    if not math.isfinite(value):
        raise ValueError(cell)
    return value


def ingest_csv(
    path,
    id_column: str,
    label_column: Optional[str] = None,
    bin_specs: Optional[Mapping[str, BinningSpec]] = None,
    party_id: Optional[str] = None,
    feature_columns: Optional[Sequence[str]] = None,
    delimiter: str = ",",
) -> PartyDataset:
    """Read a UTF-8 CSV with a header row into a validated dataset.

    Row numbers in error messages are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if not header:
            raise IngestionError(f"{path} is empty")
        header = [h.strip() for h in header]
        rows = [(line, r) for line, r in enumerate(reader, start=2) if any(c.strip() for c in r)]
    if not rows:
        raise IngestionError(f"{path} has a header but no data rows")
    wanted = [id_column] + ([label_column] if label_column else [])
    if feature_columns is None:
        feature_columns = [h for h in header if h not in wanted]
    for col in wanted + list(feature_columns):
        if col not in header:
            raise IngestionError(f"column {col!r} not found in {path}", column=col)
    pos = {h: i for i, h in enumerate(header)}

    ids, seen = [], {}
    features = {c: [] for c in feature_columns}
    label_raw = []
    for line, row in rows:
        if len(row) != len(header):
            raise IngestionError(f"line {line} has {len(row)} cells, expected {len(header)}", row=line)

        def cell(col):
            value = row[pos[col]].strip()
            if value.lower() in MISSING_TOKENS:
                raise IngestionError(f"missing value at line {line}, column {col!r}", row=line, column=col)
            return value

        rid = cell(id_column)
        if rid in seen:
            raise IngestionError(
                f"duplicate id {rid!r} at line {line} (first seen at line {seen[rid]})",
                row=line, column=id_column,
            )
        seen[rid] = line
        ids.append(rid)
        for col in feature_columns:
            text = cell(col)
            try:
                features[col].append(_parse_number(text))
            except ValueError:
                raise IngestionError(
                    f"non-numeric value {text!r} at line {line}, column {col!r}", row=line, column=col
                ) from None
        if label_column:
            label_raw.append(cell(label_column))

    label = None
    if label_column:
        try:
            label = [_parse_number(v) for v in label_raw]
        except ValueError:
            label = label_raw
    return PartyDataset(
        party_id=party_id or path.stem,
        ids=ids,
        features=features,
        label_name=label_column,
        label=label,
        bin_specs=dict(bin_specs or {}),
    )


def bin_dataset(dataset: PartyDataset) -> tuple[dict[str, list[int]], Optional[list[int]]]:
    """Local bin indices per pseudonymous feature label, plus the label's categories."""
    binned = {
        pseudo: make_bins(dataset.features[col], dataset.spec_for(col))
        for pseudo, col in dataset.feature_mapping().items()
    }
    label = None
    if dataset.label is not None:
        label = make_bins(dataset.label, BinningSpec(strategy=CATEGORICAL))
    return binned, label


def prepare_submission(dataset: PartyDataset, key: bytes) -> list[FeatureGroups]:
    encrypted = encrypt_column(key, dataset.ids)
    binned, label = bin_dataset(dataset)
    out = [
        build_feature_groups(pseudo, dataset.party_id, encrypted, bins)
        for pseudo, bins in binned.items()
    ]
    if label is not None:
        out.append(
            build_feature_groups(dataset.label_pseudonym(), dataset.party_id, encrypted, label, is_label=True)
        )
    return out


@dataclass
class LocalValuation:
    party_id: str
    estimates: list[ShapleyEstimate]
    common_id_count: int
    column_names: dict[str, str] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        return {e.feature_label: e.value for e in self.estimates}

    def to_dict(self) -> dict:
        shares = normalize_report(self.estimates).normalized_shares
        return {
            "party_id": self.party_id,
            "common_id_count": self.common_id_count,
            "log_base": "e",
            "features": [
                {
                    "feature": e.feature_label,
                    "column": self.column_names.get(e.feature_label),
                    "shapley_cmi": e.value,
                    "local_share": shares[e.feature_label],
                    "per_permutation_cmi": e.per_permutation_cmi,
                }
                for e in self.estimates
            ],
        }

    def to_text(self) -> str:
        shares = normalize_report(self.estimates).normalized_shares
        lines = [f"party {self.party_id}: {self.common_id_count} common ids"]
        lines.append(f"{'feature':<14}{'column':<32}{'shapley_cmi':>14}{'local_share':>13}")
        for e in self.estimates:
            col = self.column_names.get(e.feature_label, "")
            lines.append(f"{e.feature_label:<14}{col:<32}{e.value:>14.6f}{shares[e.feature_label]:>13.4f}")
        return "\n".join(lines) + "\n"


def compute_local_valuation(
    party_id: str,
    results: Sequence[PermutationResult],
    common_id_count: int,
    column_names: Optional[Mapping[str, str]] = None,
) -> LocalValuation:
    per_feature: dict[str, list[PermutationResult]] = {}
    for r in results:
        per_feature.setdefault(r.feature_label, []).append(r)
    cmis = {}
    for label, perms in per_feature.items():
        perms.sort(key=lambda r: r.permutation_index)
        values = []
        for r in perms:
            covered = sum(q.a for q in r.quads)
            if covered != common_id_count:
                raise ProtocolCorruptionError(
                    f"{label} permutation {r.permutation_index} covers {covered} of {common_id_count} ids"
                )
            values.append(cmi_from_quads(r.quads, common_id_count))
        cmis[label] = values
    return LocalValuation(
        party_id, shapley_from_permutations(cmis), common_id_count, dict(column_names or {})
    )


@dataclass
class RetryPolicy:
    initial_delay: float = 0.25
    factor: float = 2.0
    max_delay: float = 8.0
    poll_budget: float = 600.0
    transport_attempts: int = 4

    def delays(self):
        delay = self.initial_delay
        while True:
            yield delay
            delay = min(delay * self.factor, self.max_delay)


class CoordinatorClient:
    """Thin JSON-over-HTTP client; protocol errors are raised with their codes."""

    def __init__(self, base_url: str, retry: RetryPolicy | None = None, token: str | None = None,
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.retry = retry or RetryPolicy()
        self.token = token
        self.timeout = timeout

    def _request(self, method: str, path: str, body=None) -> bytes:
        data = wire.dumps(body) if body is not None else None
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last = None
        delays = self.retry.delays()
        for attempt in range(self.retry.transport_attempts):
            req = urllib.request.Request(self.base_url + path, data=data, method=method, headers=headers)
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read()
            except urllib.error.HTTPError as exc:
                raw = exc.read()
                try:
                    err = json.loads(raw)
                    code = ErrorCode(err["error_code"])
                except (ValueError, KeyError, TypeError):
                    raise TransportError(f"HTTP {exc.code} from {path}: {raw[:200]!r}") from exc
                raise ProtocolError(code, err.get("message", "")) from None
            except (urllib.error.URLError, OSError) as exc:
                last = exc
                log.warning("%s %s failed (attempt %d): %s", method, path, attempt + 1, exc)
                if attempt + 1 < self.retry.transport_attempts:
                    time.sleep(next(delays))
        raise TransportError(
            f"{method} {self.base_url}{path} failed after {self.retry.transport_attempts} attempts: {last}"
        )

    def create_session(self, parties: Sequence[tuple[str, bool]], permutation_count: int, rng_seed: int,
                       permutations=None) -> str:
        body = {
            "expected_parties": [{"id": p, "is_task_party": t} for p, t in parties],
            "permutation_count": permutation_count,
            "rng_seed": rng_seed,
        }
        if permutations is not None:
            body["permutations"] = permutations
        return json.loads(self._request("POST", "/sessions", body))["session_id"]

    def submit(self, session_id: str, party_id: str, features: Sequence[FeatureGroups]) -> dict:
        body = wire.encode_submission(party_id, features)
        return json.loads(self._request("POST", f"/sessions/{session_id}/submissions", body))

    def status(self, session_id: str) -> dict:
        return json.loads(self._request("GET", f"/sessions/{session_id}/status"))

    def results_bytes(self, session_id: str, party_id: str) -> bytes:
        return self._request("GET", f"/sessions/{session_id}/results?party={party_id}")

    def results(self, session_id: str, party_id: str) -> tuple[list[PermutationResult], int]:
        return wire.decode_results(self.results_bytes(session_id, party_id))

    def permutations(self, session_id: str) -> list[list[str]]:
        return json.loads(self._request("GET", f"/sessions/{session_id}/permutations"))["permutations"]

    def wait_until_done(self, session_id: str) -> dict:
        deadline = time.monotonic() + self.retry.poll_budget
        for delay in self.retry.delays():
            status = self.status(session_id)
            if status["phase"] == "done":
                return status
            if status["phase"] == "failed":
                code = ErrorCode(status.get("error_code", "INTERNAL"))
                raise ProtocolError(code, "session failed on the coordinator")
            if time.monotonic() + delay > deadline:
                raise TransportError(
                    f"session {session_id} still {status['phase']} after {self.retry.poll_budget}s"
                )
            time.sleep(delay)
        raise AssertionError("unreachable")


def run_party(
    dataset: PartyDataset,
    key: bytes,
    server_url: str,
    session_id: str,
    retry: RetryPolicy | None = None,
    token: str | None = None,
) -> LocalValuation:
    client = CoordinatorClient(server_url, retry, token)
    features = prepare_submission(dataset, key)
    client.submit(session_id, dataset.party_id, features)
    client.wait_until_done(session_id)
    results, n = client.results(session_id, dataset.party_id)
    return compute_local_valuation(dataset.party_id, results, n, dataset.feature_mapping())
