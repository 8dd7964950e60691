"""Command-line surface: ingest, runs, expected, compare, simulate,
momentum, report.

Exit codes: 0 success, 1 input-data errors (unreadable or structurally
invalid trace files), 2 configuration/usage errors (bad flags, bad config
or scenario files, bad entity maps). Per-line trace violations are not
fatal: they land in errors.csv and on stderr as a count.

All randomness flows from --seed; MMEV_LAB_THREADS caps worker threads
without affecting results.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import __version__, amm, report
from .errors import ConfigError, InputDataError
from .expectation import expected_all_entities
from .pbs import config_digest, entity_map_for, load_config, simulate
from .trace import (
    BID_FIELDS,
    OUTCOME_FIELDS,
    DenominatorMode,
    EntityMap,
    ParseIssue,
    emit_bid_records,
    emit_slot_outcomes,
    load_entity_map,
    parse_bid_records,
    parse_slot_outcomes,
)
from .workers import thread_count


def _read_bytes(path: str, *, role: str = "input") -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        err = ConfigError if role == "config" else InputDataError
        raise err(f"cannot read {role} file {path}: {exc}") from None


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _trace_format(path: str) -> str:
    return "jsonl" if Path(path).suffix.lower() in (".jsonl", ".ndjson") else "csv"


def _load_entities(path: str | None) -> EntityMap:
    if path is None:
        return EntityMap({})
    data = _read_bytes(path, role="config")
    try:
        return load_entity_map(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"entity map {path} is not UTF-8: {exc}") from None


def _load_outcomes(path: str):
    data = _read_bytes(path)
    outcomes, issues = parse_slot_outcomes(data, _trace_format(path))
    return outcomes, issues


def _load_bids(path: str):
    data = _read_bytes(path)
    bids, issues = parse_bid_records(data, _trace_format(path))
    return bids, issues


def _report_issues(issues: Sequence[ParseIssue], out_dir: Path, fmt: str, meta: dict) -> None:
    report.write_table(out_dir / ("errors.csv" if fmt == "csv" else "errors.json"),
                       ("line", "reason"),
                       [{"line": i.line, "reason": i.reason} for i in issues],
                       fmt=fmt, meta=meta)
    if issues:
        print(f"{len(issues)} line error(s); see errors.{fmt}", file=sys.stderr)


def _base_meta(args: argparse.Namespace, inputs: dict[str, str]) -> dict:
    meta = {
        "tool": "mmev-lab",
        "version": __version__,
        "command": args.command,
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "workers": thread_count(),
    }
    return meta


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args: argparse.Namespace) -> int:
    data = _read_bytes(args.input)
    fmt_in = _trace_format(args.input)
    kind = _detect_trace_kind(data, fmt_in)
    out = _out_dir(args)
    meta = _base_meta(args, {"input": args.input, "sha256": _sha256(data)})
    trace_ext = "csv" if args.format == "csv" else "jsonl"
    if kind == "bids":
        records, issues = parse_bid_records(data, fmt_in)
        (out / f"bids.{trace_ext}").write_text(emit_bid_records(records, trace_ext))
        name = "bids"
        n = len(records)
    else:
        outcomes, issues = parse_slot_outcomes(data, fmt_in)
        (out / f"outcomes.{trace_ext}").write_text(emit_slot_outcomes(outcomes, trace_ext))
        name = "outcomes"
        n = len(outcomes)
    (out / f"{name}.meta.json").write_text(
        json.dumps({**meta, "records": n, "line_errors": len(issues)},
                   indent=2, sort_keys=True) + "\n")
    _report_issues(issues, out, args.format, meta)
    print(f"ingested {n} {name} record(s), {len(issues)} line error(s)")
    return 0


def _detect_trace_kind(data: bytes, fmt: str) -> str:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputDataError(f"input is not UTF-8: {exc}") from None
    first = next((line for line in text.splitlines() if line.strip()), "")
    if not first:
        raise InputDataError("input is empty")
    if fmt == "csv":
        cells = [c.strip() for c in first.split(",")]
        if cells == list(BID_FIELDS):
            return "bids"
        if cells == list(OUTCOME_FIELDS):
            return "outcomes"
        raise InputDataError(f"unrecognized CSV header: {first!r}")
    try:
        obj = json.loads(first)
    except json.JSONDecodeError:
        raise InputDataError("first JSONL line is not valid JSON") from None
    if isinstance(obj, dict) and "mode" in obj:
        return "outcomes"
    if isinstance(obj, dict) and "builder_pubkey" in obj:
        return "bids"
    raise InputDataError("cannot tell bids from outcomes in JSONL input")


def _bundle_from_args(args: argparse.Namespace, *, with_expected: bool) -> tuple:
    outcomes, issues = _load_outcomes(args.input)
    entity_map = _load_entities(args.entities)
    bids = None
    inputs = {"input": args.input, "sha256": _sha256(_read_bytes(args.input))}
    if getattr(args, "bids", None):
        bids, bid_issues = _load_bids(args.bids)
        issues = list(issues) + [ParseIssue(i.line, f"bids: {i.reason}") for i in bid_issues]
        inputs["bids"] = args.bids
    if args.entities:
        inputs["entities"] = args.entities
    bundle = report.build_report(
        outcomes,
        entity_map,
        args.seed if with_expected else None,
        bids=bids,
        denominator_mode=DenominatorMode(args.denominator),
        k_max=args.kmax,
        trials=getattr(args, "trials", 0) or 10_000,
        workers=thread_count(),
        extra_metadata=_base_meta(args, inputs),
    )
    return bundle, issues


def cmd_runs(args: argparse.Namespace) -> int:
    bundle, issues = _bundle_from_args(args, with_expected=False)
    out = _out_dir(args)
    written = report.write_bundle(bundle, out, fmt=args.format, render_figures=False)
    _report_issues(issues, out, args.format, bundle.metadata)
    print(f"wrote {len(written)} file(s) to {out}")
    return 0


def cmd_expected(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    if args.p:
        if args.input:
            raise ConfigError("give either --p values or --input, not both")
        if not args.slots:
            raise ConfigError("--p needs --slots")
        names = args.names.split(",") if args.names else [
            f"entity{i:02d}" for i in range(1, len(args.p) + 1)
        ]
        if len(names) != len(args.p):
            raise ConfigError(f"{len(args.p)} --p value(s) but {len(names)} name(s)")
        for p in args.p:
            if not 0 <= p <= 1:
                raise ConfigError(f"--p {p} outside [0, 1]")
        shares = dict(zip(names, args.p))
        n_slots = args.slots
        inputs: dict[str, str] = {"p": ",".join(str(p) for p in args.p)}
    elif args.input:
        outcomes, _ = _load_outcomes(args.input)
        entity_map = _load_entities(args.entities)
        from .trace import market_shares

        share_obj = market_shares(outcomes, entity_map, DenominatorMode(args.denominator))
        shares = {e: share_obj.shares[e] for e in share_obj.builder_entities()}
        n_slots = (share_obj.n_slots if DenominatorMode(args.denominator) is DenominatorMode.ALL_SLOTS
                   else share_obj.n_pbs_slots)
        inputs = {"input": args.input, "sha256": _sha256(_read_bytes(args.input))}
    else:
        raise ConfigError("expected needs --p/--slots or --input")
    table = expected_all_entities(shares, n_slots, args.kmax, args.trials, args.seed,
                                  workers=thread_count())
    ext = "csv" if args.format == "csv" else "json"
    written = report.write_expectation_table(table, out / f"expected.{ext}", fmt=args.format,
                                             meta=_base_meta(args, inputs))
    print(f"wrote {written[0]}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    from .expectation import compare_observed_expected

    observed_data = _read_bytes(args.observed)
    expected_data = _read_bytes(args.expected)
    histogram = report.read_histogram_csv(observed_data.decode("utf-8"))
    table = report.read_expectation_csv(expected_data.decode("utf-8"))
    rows = compare_observed_expected(histogram, table)
    out = _out_dir(args)
    meta = _base_meta(args, {
        "observed": args.observed, "observed_sha256": _sha256(observed_data),
        "expected": args.expected, "expected_sha256": _sha256(expected_data),
    })
    ext = "csv" if args.format == "csv" else "json"
    report.write_table(out / f"compare.{ext}", report.COMPARE_FIELDS,
                       report.comparison_rows(rows), fmt=args.format, meta=meta)
    print(f"wrote {out / f'compare.{ext}'}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    data = _read_bytes(args.config, role="config")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}") from None
    fmt = "json" if args.config.endswith(".json") else None
    config = load_config(text, fmt)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    result = simulate(config)
    out = _out_dir(args)
    trace_ext = "csv" if args.format == "csv" else "jsonl"
    (out / f"bids.{trace_ext}").write_text(emit_bid_records(result.bids, trace_ext))
    (out / f"outcomes.{trace_ext}").write_text(emit_slot_outcomes(result.outcomes, trace_ext))
    entity_map = entity_map_for(config)
    lines = [f"{pubkey}={entity}" for pubkey, entity in sorted(entity_map.entries.items())]
    (out / "entities.map").write_text("\n".join(lines) + "\n")
    meta = _base_meta(args, {"config": args.config, "sha256": _sha256(data)})
    meta.update({
        "config_digest": config_digest(config),
        "seed": config.seed,
        "n_slots": config.n_slots,
        "n_bids": len(result.bids),
        "pbs_slots": sum(1 for o in result.outcomes if o.winner_pubkey is not None),
    })
    (out / "sim.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"simulated {config.n_slots} slot(s) -> {out}")
    return 0


def _momentum_value(v):
    return str(v) if isinstance(v, Fraction) else v


def cmd_momentum(args: argparse.Namespace) -> int:
    data = _read_bytes(args.scenario, role="config")
    try:
        scenario = amm.load_scenario(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ConfigError(f"bad scenario {args.scenario}: {exc}") from None
    try:
        result, premium = amm.run_scenario(scenario)
    except ValueError as exc:
        raise ConfigError(f"scenario not executable: {exc}") from None
    out = _out_dir(args)
    meta = _base_meta(args, {"scenario": args.scenario, "sha256": _sha256(data)})
    doc = {
        "profit_x": _momentum_value(result.profit),
        "x_spent": _momentum_value(result.x_spent),
        "y_held_peak": _momentum_value(result.y_held_peak),
        "x_recovered": _momentum_value(result.x_recovered),
        "withheld": list(result.withheld),
        "rejected": list(result.rejected),
        "spot_x_per_y": [_momentum_value(p) for p in result.spot_prices],
        "breakeven_premium_wei": premium,
        "window_k": scenario.window_k,
        "fee_bps": scenario.pool.fee_bps,
    }
    (out / "momentum.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    comp_rows = []
    for slot_index, composition in enumerate(result.slots, start=1):
        for tx in composition:
            comp_rows.append({
                "slot": slot_index, "tx_id": tx.tx_id, "direction": tx.direction.value,
                "amount_in": _momentum_value(tx.amount_in),
                "amount_out": _momentum_value(tx.amount_out),
            })
    ext = "csv" if args.format == "csv" else "json"
    report.write_table(out / f"composition.{ext}",
                       ("slot", "tx_id", "direction", "amount_in", "amount_out"),
                       comp_rows, fmt=args.format, meta=meta)
    print(f"momentum profit {_momentum_value(result.profit)} X -> {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    bundle, issues = _bundle_from_args(args, with_expected=True)
    out = _out_dir(args)
    written = report.write_bundle(bundle, out, fmt=args.format,
                                  render_figures=not args.no_figures)
    _report_issues(issues, out, args.format, bundle.metadata)
    print(f"wrote {len(written)} file(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sub: argparse.ArgumentParser, *, out_dir: bool = True,
                fmt: bool = True) -> None:
    if fmt:
        sub.add_argument("--format", choices=("csv", "json"), default="csv",
                         help="output table format (csv is canonical)")
    if out_dir:
        sub.add_argument("--out-dir", default=".", help="directory for output files")


def _add_trace_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--input", required=True, help="slot outcome trace (.csv or .jsonl)")
    sub.add_argument("--entities", help="pubkey=entity attribution map file")
    sub.add_argument("--bids", help="optional bid trace for baselines/escalation")
    sub.add_argument("--denominator", choices=("all", "pbs"), default="all",
                     help="market-share denominator: all slots or PBS slots only")
    sub.add_argument("--kmax", type=int, default=10, help="largest run length to tabulate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmev-lab",
        description="Multi-block MEV analysis: run statistics, expectations, "
                    "PBS simulation, AMM momentum modeling.",
    )
    parser.add_argument("--version", action="version", version=f"mmev-lab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ingest", help="validate and normalize a trace file")
    p.add_argument("--input", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = subs.add_parser("runs", help="detect runs and emit observed tables")
    _add_trace_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_runs)

    p = subs.add_parser("expected", help="Monte Carlo expected run counts")
    p.add_argument("--p", type=float, action="append",
                   help="win probability for a synthetic entity (repeatable)")
    p.add_argument("--names", help="comma-separated entity names for --p values")
    p.add_argument("--slots", type=int, help="slot count for the null model (with --p)")
    p.add_argument("--input", help="derive shares from this outcome trace instead")
    p.add_argument("--entities", help="entity map for --input")
    p.add_argument("--denominator", choices=("all", "pbs"), default="all")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_expected)

    p = subs.add_parser("compare", help="observed histogram vs expected table")
    p.add_argument("--observed", required=True, help="histogram.csv from `runs`")
    p.add_argument("--expected", required=True, help="expected.csv from `expected`")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("simulate", help="run the PBS auction simulator")
    p.add_argument("--config", required=True, help="simulation config (.json or block text)")
    p.add_argument("--seed", type=int, required=True, help="overrides the config seed")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("momentum", help="execute an AMM momentum scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_momentum)

    p = subs.add_parser("report", help="full pipeline: tables, comparisons, figures")
    _add_trace_args(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
