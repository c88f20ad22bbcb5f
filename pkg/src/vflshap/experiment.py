"""Single-machine reproduction of the federated valuation against the centralized oracle."""

from __future__ import annotations

import json
import math
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from vflshap.binning import BinningSpec
from vflshap.cmi import normalize_report, oracle_shapley_cmi
from vflshap.coordinator.server import CoordinatorServer, ServerConfig
from vflshap.crypto import load_key
from vflshap.errors import ConfigurationError, InputError
from vflshap.party import CoordinatorClient, LocalValuation, PartyDataset, RetryPolicy, bin_dataset, ingest_csv, run_party
from vflshap.permutations import dump_permutations

DEFAULT_TOLERANCE = 1e-9


@dataclass
class ExperimentConfig:
    dataset: str
    id_column: str
    label_column: str
    out_dir: str
    party_count: int = 3
    bin_count: int = 5
    permutation_count: int = 20
    rng_seed: int = 42
    key_file: Optional[str] = None
    tolerance: float = DEFAULT_TOLERANCE
    host: str = "127.0.0.1"
    port: int = 0
    delimiter: str = ","

    def __post_init__(self):
        if self.party_count < 2:
            raise ConfigurationError("at least two parties are required")
        if self.permutation_count < 1:
            raise ConfigurationError("permutation count must be positive")
        if self.bin_count < 1:
            raise ConfigurationError("bin count must be positive")
        if not self.tolerance >= 0:
            raise ConfigurationError("tolerance must be non-negative")


def split_dataset(table: PartyDataset, party_count: int, policy: str = "round-robin") -> list[PartyDataset]:
    """Deal feature columns round-robin; party ``p1`` is the task party and keeps the label."""
    if policy != "round-robin":
        raise ConfigurationError(f"unknown split policy {policy!r}")
    if table.label is None:
        raise InputError("the table has no label column")
    columns = list(table.features)
    if len(columns) < party_count:
        raise InputError(f"{len(columns)} features cannot be split among {party_count} parties")
    parties = []
    for p in range(party_count):
        mine = columns[p::party_count]
        parties.append(
            PartyDataset(
                party_id=f"p{p + 1}",
                ids=list(table.ids),
                features={c: list(table.features[c]) for c in mine},
                label_name=table.label_name if p == 0 else None,
                label=list(table.label) if p == 0 else None,
                bin_specs={c: table.spec_for(c) for c in mine},
            )
        )
    return parties


def central_columns(datasets: Sequence[PartyDataset]) -> tuple[dict[str, list[int]], list[int], list[str]]:
    """Each party's locally binned columns joined on the raw IDs every party holds."""
    common = set(datasets[0].ids)
    for ds in datasets[1:]:
        common &= set(ds.ids)
    if not common:
        raise InputError("datasets share no identifiers")
    order = sorted(common)
    columns: dict[str, list[int]] = {}
    label = None
    for ds in datasets:
        binned, lab = bin_dataset(ds)
        row = {rid: i for i, rid in enumerate(ds.ids)}
        take = [row[rid] for rid in order]
        for pseudo, bins in binned.items():
            columns[pseudo] = [bins[i] for i in take]
        if lab is not None:
            label = [lab[i] for i in take]
    if label is None:
        raise InputError("no dataset carries the label")
    return columns, label, order


def oracle_from_datasets(datasets: Sequence[PartyDataset], permutations):
    columns, label, _ = central_columns(datasets)
    return oracle_shapley_cmi(columns, label, permutations)


@dataclass
class ComparisonTable:
    rows: list[dict]
    tolerance: float = DEFAULT_TOLERANCE
    permutations: list[list[str]] = field(default_factory=list)
    common_id_count: int = 0
    settings: dict = field(default_factory=dict)

    @property
    def max_abs_difference(self) -> float:
        return max((r["abs_difference"] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r["abs_difference"] <= self.tolerance for r in self.rows)

    def totals(self) -> dict:
        return {
            "protocol_shapley_cmi": math.fsum(r["protocol_shapley_cmi"] for r in self.rows),
            "oracle_shapley_cmi": math.fsum(r["oracle_shapley_cmi"] for r in self.rows),
            "normalized_share": math.fsum(r["normalized_share"] for r in self.rows),
            "max_abs_difference": self.max_abs_difference,
        }


def build_comparison(valuations: Sequence[LocalValuation], oracle, tolerance=DEFAULT_TOLERANCE,
                     feature_order: Optional[Sequence[str]] = None) -> ComparisonTable:
    protocol = {}
    columns = {}
    owners = {}
    for v in valuations:
        for e in v.estimates:
            protocol[e.feature_label] = e
            owners[e.feature_label] = v.party_id
        columns.update(v.column_names)
    oracle_values = {e.feature_label: e.value for e in oracle}
    if set(protocol) != set(oracle_values):
        raise InputError("protocol and oracle valued different feature sets")
    order = list(feature_order) if feature_order else sorted(protocol)
    shares = normalize_report([protocol[f] for f in order]).normalized_shares
    rows = []
    for f in order:
        p, o = protocol[f].value, oracle_values[f]
        rows.append({
            "feature": f,
            "column": columns.get(f),
            "party": owners[f],
            "protocol_shapley_cmi": p,
            "oracle_shapley_cmi": o,
            "normalized_share": shares[f],
            "abs_difference": abs(p - o),
        })
    n = valuations[0].common_id_count if valuations else 0
    return ComparisonTable(rows, tolerance, common_id_count=n)


def run_experiment(config: ExperimentConfig, emit: bool = True) -> ComparisonTable:
    spec = BinningSpec(config.bin_count)
    table = ingest_csv(config.dataset, config.id_column, config.label_column, delimiter=config.delimiter)
    table.bin_specs = {c: spec for c in table.features}
    parties = split_dataset(table, config.party_count)
    key = load_key(config.key_file) if config.key_file else secrets.token_bytes(32)

    server = CoordinatorServer(ServerConfig(host=config.host, port=config.port, idle_timeout=3600.0))
    with server:
        client = CoordinatorClient(server.url)
        session_id = client.create_session(
            [(p.party_id, p.is_task_party) for p in parties], config.permutation_count, config.rng_seed
        )
        with ThreadPoolExecutor(len(parties)) as pool:
            futures = [pool.submit(run_party, p, key, server.url, session_id, RetryPolicy(initial_delay=0.05))
                       for p in parties]
            valuations = [f.result() for f in futures]
        permutations = client.permutations(session_id)

    oracle = oracle_from_datasets(parties, permutations)
    feature_order = [f for p in parties for f in p.feature_mapping()]
    result = build_comparison(valuations, oracle, config.tolerance, feature_order)
    result.permutations = permutations
    result.settings = {
        "dataset_rows": len(table.ids),
        "features": len(table.features),
        "parties": config.party_count,
        "bins": config.bin_count,
        "permutations": config.permutation_count,
        "seed": config.rng_seed,
        "tolerance": config.tolerance,
        "log_base": "e",
    }
    if emit:
        emit_report(result, config.out_dir)
    return result


def format_text(table: ComparisonTable) -> str:
    header = f"{'feature':<8}{'column':<30}{'party':<6}{'shapley_cmi':>16}{'oracle':>16}{'share':>10}{'abs_diff':>12}"
    lines = [header, "-" * len(header)]
    for r in table.rows:
        lines.append(
            f"{r['feature']:<8}{(r['column'] or '')[:29]:<30}{r['party']:<6}"
            f"{r['protocol_shapley_cmi']:>16.10f}{r['oracle_shapley_cmi']:>16.10f}"
            f"{r['normalized_share']:>10.4f}{r['abs_difference']:>12.3e}"
        )
    t = table.totals()
    lines.append("-" * len(header))
    lines.append(
        f"{'total':<44}{t['protocol_shapley_cmi']:>16.10f}{t['oracle_shapley_cmi']:>16.10f}"
        f"{t['normalized_share']:>10.4f}{t['max_abs_difference']:>12.3e}"
    )
    lines.append("")
    # method-by-feature layout, normalized shares
    names = [r["feature"] for r in table.rows]
    width = max(9, max(len(n) for n in names) + 2)
    lines.append("normalized shares")
    lines.append(f"{'method':<24}" + "".join(f"{n[:width - 2]:>{width}}" for n in names))
    oracle_report = normalize_report_from_values([r["oracle_shapley_cmi"] for r in table.rows])
    lines.append(f"{'Shapley-CMI':<24}" + "".join(f"{s:>{width}.4f}" for s in oracle_report))
    lines.append(f"{'Shapley-CMI w/ enc.':<24}" + "".join(f"{r['normalized_share']:>{width}.4f}" for r in table.rows))
    lines.append("")
    lines.append("SHAP comparison not reproduced (requires model training).")
    verdict = "PASS" if table.passed else "FAIL"
    lines.append(f"{verdict}: max |protocol - oracle| = {table.max_abs_difference:.3e} "
                 f"(tolerance {table.tolerance:.1e}), common ids = {table.common_id_count}")
    return "\n".join(lines) + "\n"


def normalize_report_from_values(values: Sequence[float]) -> list[float]:
    total = math.fsum(values)
    return [v / total if total else 0.0 for v in values]


def emit_report(table: ComparisonTable, out_dir) -> list[Path]:
    if not table.rows:
        raise InputError("comparison table has no features")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / "report.json"
        text_path = out / "report.txt"
        perm_path = out / "permutations.json"
        payload = {
            "settings": table.settings,
            "common_id_count": table.common_id_count,
            "tolerance": table.tolerance,
            "passed": table.passed,
            "rows": table.rows,
            "totals": table.totals(),
        }
        json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        text_path.write_text(format_text(table), encoding="utf-8")
        dump_permutations(table.permutations, perm_path)
    except OSError as exc:
        raise ConfigurationError(f"cannot write report to {out}: {exc}") from exc
    return [json_path, text_path, perm_path]
