"""Command-line entry point.

Exit codes: 0 pass, 1 tolerance breach, 2 configuration error, 3 protocol failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from vflshap.binning import BinningSpec
from vflshap.cmi import normalize_report
from vflshap.crypto import load_key
from vflshap.errors import (
    ConfigurationError,
    InputError,
    ProtocolCorruptionError,
    ProtocolError,
    TransportError,
)
from vflshap.experiment import DEFAULT_TOLERANCE, ExperimentConfig, format_text, oracle_from_datasets, run_experiment, split_dataset
from vflshap.party import RetryPolicy, ingest_csv, run_party
from vflshap.permutations import dump_permutations, generate_permutations, load_permutations

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_PROTOCOL = 0, 1, 2, 3

log = logging.getLogger("vflshap")


def _cmd_run(args) -> int:
    config = ExperimentConfig(
        dataset=args.dataset,
        id_column=args.id_col,
        label_column=args.label_col,
        out_dir=args.out,
        party_count=args.parties,
        bin_count=args.bins,
        permutation_count=args.permutations,
        rng_seed=args.seed,
        key_file=args.key_file,
        tolerance=args.tolerance,
        port=args.port,
        delimiter=args.delimiter,
    )
    table = run_experiment(config)
    sys.stdout.write(format_text(table))
    return EXIT_OK if table.passed else EXIT_TOLERANCE


def _cmd_oracle(args) -> int:
    table = ingest_csv(args.dataset, args.id_col, args.label_col, delimiter=args.delimiter)
    table.bin_specs = {c: BinningSpec(args.bins) for c in table.features}
    parties = split_dataset(table, args.parties)
    labels = [f for p in parties for f in p.feature_mapping()]
    if args.permutations_file:
        perms = load_permutations(args.permutations_file)
    else:
        perms = generate_permutations(labels, args.permutations, args.seed)
    estimates = oracle_from_datasets(parties, perms)
    report = normalize_report(estimates)
    names = {k: v for p in parties for k, v in p.feature_mapping().items()}
    for e in estimates:
        print(f"{e.feature_label:<8}{names[e.feature_label]:<32}{e.value:>16.10f}"
              f"{report.normalized_shares[e.feature_label]:>10.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "log_base": "e",
            "degenerate_total": report.degenerate_total,
            "features": [
                {"feature": e.feature_label, "column": names[e.feature_label], "shapley_cmi": e.value,
                 "normalized_share": report.normalized_shares[e.feature_label]}
                for e in estimates
            ],
        }
        (out / "oracle.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        dump_permutations(perms, out / "permutations.json")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from vflshap.coordinator.server import CoordinatorServer, ServerConfig

    config = ServerConfig.load(
        args.config, host=args.host, port=args.port, snapshot_dir=args.snapshot_dir,
        idle_timeout=args.idle_timeout,
    )
    server = CoordinatorServer(config)
    log.info("coordinator listening on %s", server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return EXIT_OK


def _cmd_session(args) -> int:
    from vflshap.party import CoordinatorClient

    parties = [(p, p == args.task_party) for p in args.party]
    if args.task_party not in args.party:
        raise ConfigurationError("--task-party must be one of --party")
    perms = load_permutations(args.permutations_file) if args.permutations_file else None
    count = len(perms) if perms else args.permutations
    sid = CoordinatorClient(args.server).create_session(parties, count, args.seed, perms)
    print(sid)
    return EXIT_OK


def _cmd_party(args) -> int:
    key = load_key(args.key_file, args.key_env)
    dataset = ingest_csv(
        args.dataset, args.id_col, args.label_col, party_id=args.party_id, delimiter=args.delimiter,
    )
    dataset.bin_specs = {c: BinningSpec(args.bins) for c in dataset.features}
    valuation = run_party(dataset, key, args.server, args.session,
                          RetryPolicy(poll_budget=args.poll_budget))
    sys.stdout.write(valuation.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{dataset.party_id}_valuation.json").write_text(
            json.dumps(valuation.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / f"{dataset.party_id}_valuation.txt").write_text(valuation.to_text(), encoding="utf-8")
    return EXIT_OK


def _add_data_args(p, label_required=True):
    p.add_argument("--dataset", required=True, help="CSV file with a header row")
    p.add_argument("--id-col", required=True)
    p.add_argument("--label-col", required=label_required)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--bins", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vflshap", description="Shapley-CMI feature valuation over a PSI coordinator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate all parties plus coordinator and compare with the oracle")
    _add_data_args(run)
    run.add_argument("--parties", type=int, default=3)
    run.add_argument("--permutations", type=int, default=20)
    run.add_argument("--seed", type=int, default=42)
    run.add_argument("--key-file")
    run.add_argument("--out", required=True)
    run.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    run.add_argument("--port", type=int, default=0, help="0 picks a free port")
    run.set_defaults(func=_cmd_run)

    oracle = sub.add_parser("oracle", help="centralized Shapley-CMI without the protocol")
    _add_data_args(oracle)
    oracle.add_argument("--parties", type=int, default=3, help="only affects feature pseudonyms")
    oracle.add_argument("--permutations", type=int, default=20)
    oracle.add_argument("--seed", type=int, default=42)
    oracle.add_argument("--permutations-file")
    oracle.add_argument("--out")
    oracle.set_defaults(func=_cmd_oracle)

    serve = sub.add_parser("serve", help="run only the coordinator")
    serve.add_argument("--config", help="JSON server config; VFLSHAP_* variables override it")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--snapshot-dir")
    serve.add_argument("--idle-timeout", type=float)
    serve.set_defaults(func=_cmd_serve)

    session = sub.add_parser("session", help="open a session on a running coordinator")
    session.add_argument("--server", required=True)
    session.add_argument("--party", action="append", required=True)
    session.add_argument("--task-party", required=True)
    session.add_argument("--permutations", type=int, default=20)
    session.add_argument("--seed", type=int, default=42)
    session.add_argument("--permutations-file")
    session.set_defaults(func=_cmd_session)

    party = sub.add_parser("party", help="run one party against a running coordinator")
    _add_data_args(party, label_required=False)
    party.add_argument("--server", required=True)
    party.add_argument("--session", required=True)
    party.add_argument("--party-id", required=True)
    party.add_argument("--key-file")
    party.add_argument("--key-env")
    party.add_argument("--poll-budget", type=float, default=600.0)
    party.add_argument("--out")
    party.set_defaults(func=_cmd_party)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, InputError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, TransportError, ProtocolCorruptionError) as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
