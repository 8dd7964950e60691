"""Report assembly: observed tables, expectation tables, figure data.

Every table is written as CSV (canonical) or JSON (--format json mirror),
always with a header row and a deterministic <stem>.meta.json sidecar
naming the inputs, seed, and tool version. Data files are byte-identical
across re-runs with identical inputs; nothing here mutates its inputs.

Monetary columns appear in both wei and decimal ETH. Observed run lengths
beyond k_max still show up in the histogram and fig3 series, but get no
comparison rows: the expectation table stops at k_max and rare long runs
are reported as anomalies instead.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .errors import InputDataError
from .expectation import (
    ComparisonRow,
    ExpectationMethod,
    ExpectationRow,
    ExpectationTable,
    compare_observed_expected,
    expected_all_entities,
)
from .runs import (
    DEFAULT_ESCALATION_THRESHOLD,
    QuartileStats,
    Run,
    RunHistogram,
    baselines_by_slot,
    detect_runs,
    escalation_index,
    payment_by_position,
    payment_by_run_length,
    run_histogram,
)
from .trace import (
    BidRecord,
    DenominatorMode,
    EntityMap,
    MarketShare,
    SlotOutcome,
    market_shares,
)
from .units import wei_to_eth


@dataclass(frozen=True)
class EscalationRecord:
    entity: str
    start_slot: int
    length: int
    slope: float
    flagged: bool


@dataclass(frozen=True)
class ReportBundle:
    """Everything one report run produces, before serialization.

    expected/comparisons are None/() for observed-only bundles (the `runs`
    command path, which needs no seed and runs no Monte Carlo).
    """

    metadata: dict
    shares: MarketShare
    runs: tuple[Run, ...]
    histogram: RunHistogram
    expected: ExpectationTable | None
    comparisons: tuple[ComparisonRow, ...]
    fig2_pooled: Mapping[int, QuartileStats]
    fig2_by_entity: Mapping[str, Mapping[int, QuartileStats]]
    fig3: Mapping[int, int]
    fig4_pooled: Mapping[int, QuartileStats]
    fig4_by_entity: Mapping[str, Mapping[int, QuartileStats]]
    anomalies: tuple[Run, ...]
    escalations: tuple[EscalationRecord, ...] = ()


def build_report(
    outcomes: Sequence[SlotOutcome],
    entity_map: EntityMap,
    seed: int | None,
    *,
    bids: Sequence[BidRecord] | None = None,
    denominator_mode: DenominatorMode = DenominatorMode.ALL_SLOTS,
    k_max: int = 10,
    trials: int = 10_000,
    min_position_run_length: int = 2,
    workers: int | None = None,
    extra_metadata: Mapping[str, object] | None = None,
) -> ReportBundle:
    """Run the full observed-vs-expected pipeline over one trace.

    seed None skips the Monte Carlo side entirely (observed-only bundle).
    The null model's slot count matches the denominator: all trace slots
    under ALL_SLOTS, PBS slots only under PBS_SLOTS (in the latter case
    observed runs still break on LOCAL/MISSED slots, which the null model
    cannot see; the metadata records the mode for exactly this reason).
    """
    if not outcomes:
        raise InputDataError("cannot report on an empty trace")
    shares = market_shares(outcomes, entity_map, denominator_mode)
    runs = tuple(detect_runs(outcomes, entity_map))
    histogram = run_histogram(runs)
    n_model = shares.n_slots if denominator_mode is DenominatorMode.ALL_SLOTS else shares.n_pbs_slots
    expected = None
    comparisons: tuple[ComparisonRow, ...] = ()
    if seed is not None:
        expected = expected_all_entities(shares, n_model, k_max, trials, seed, workers=workers)
        comparisons = tuple(compare_observed_expected(histogram, expected))
    anomalies = tuple(r for r in runs if r.length > k_max)

    escalations: list[EscalationRecord] = []
    if bids:
        baselines = baselines_by_slot(bids)
        for r in runs:
            if r.length < 2:
                continue
            try:
                slope = escalation_index(r, baselines)
            except ValueError:
                continue  # run not fully covered by bid data
            escalations.append(EscalationRecord(
                entity=r.entity, start_slot=r.start_slot, length=r.length,
                slope=slope, flagged=slope > DEFAULT_ESCALATION_THRESHOLD,
            ))

    by_entity_runs: dict[str, list[Run]] = {}
    for r in runs:
        by_entity_runs.setdefault(r.entity, []).append(r)

    metadata = {
        "tool": "mmev-lab",
        "version": __version__,
        "dataset_range": [outcomes[0].slot, outcomes[-1].slot],
        "n_slots": shares.n_slots,
        "n_pbs_slots": shares.n_pbs_slots,
        "denominator_mode": denominator_mode.value,
        "null_model_n_slots": n_model,
        "k_max": k_max,
        "trials": trials,
        "seed": seed,
        "n_entities": len(shares.builder_entities()),
        "n_runs": len(runs),
        "anomalous_run_lengths": sorted({r.length for r in anomalies}),
        "escalation_threshold": DEFAULT_ESCALATION_THRESHOLD,
    }
    if extra_metadata:
        metadata.update(dict(extra_metadata))

    return ReportBundle(
        metadata=metadata,
        shares=shares,
        runs=runs,
        histogram=histogram,
        expected=expected,
        comparisons=comparisons,
        fig2_pooled=payment_by_run_length(runs),
        fig2_by_entity={e: payment_by_run_length(rs) for e, rs in sorted(by_entity_runs.items())},
        fig3=dict(sorted(histogram.aggregate.items())),
        fig4_pooled=payment_by_position(runs, min_position_run_length),
        fig4_by_entity={e: payment_by_position(rs, min_position_run_length)
                        for e, rs in sorted(by_entity_runs.items())},
        anomalies=anomalies,
        escalations=tuple(escalations),
    )


# ---------------------------------------------------------------------------
# serialization


def _cell(value: object) -> object:
    if value is None:
        return ""
    return value


def write_table(
    path: Path,
    fieldnames: Sequence[str],
    rows: Sequence[Mapping[str, object]],
    *,
    fmt: str = "csv",
    meta: Mapping[str, object] | None = None,
) -> list[Path]:
    """Write one table plus its metadata sidecar; returns written paths."""
    written = [path]
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
    elif fmt == "json":
        payload = [{k: row.get(k) for k in fieldnames} for row in rows]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    if meta is not None:
        sidecar = path.with_name(path.stem + ".meta.json")
        doc = {"file": path.name, **meta}
        sidecar.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
        written.append(sidecar)
    return written


def _quartile_row(key_name: str, key: object, stats: QuartileStats) -> dict[str, object]:
    return {
        key_name: key,
        "n": stats.n,
        "q25_wei": round(stats.q25 * 1e18),
        "median_wei": round(stats.median * 1e18),
        "q75_wei": round(stats.q75 * 1e18),
        "q25_eth": stats.q25,
        "median_eth": stats.median,
        "q75_eth": stats.q75,
    }


def expectation_rows(table: ExpectationTable) -> list[dict[str, object]]:
    return [
        {
            "entity": r.entity, "k": r.k, "p": r.p, "expected": r.expected,
            "stderr": r.stderr, "trial_sd": r.trial_sd,
            "n_slots": table.n_slots, "trials": table.trials,
        }
        for r in table.rows
    ]


EXPECTED_FIELDS = ("entity", "k", "p", "expected", "stderr", "trial_sd", "n_slots", "trials")
COMPARE_FIELDS = ("entity", "k", "observed", "expected", "ratio", "z")
HISTOGRAM_FIELDS = ("entity", "k", "count")


def write_expectation_table(table: ExpectationTable, path: Path, *, fmt: str = "csv",
                            meta: Mapping[str, object] | None = None) -> list[Path]:
    base_meta = {
        "n_slots": table.n_slots, "k_max": table.k_max, "trials": table.trials,
        "seed": table.seed, "method": table.method.value,
        "tool": "mmev-lab", "version": __version__,
    }
    if meta:
        base_meta.update(meta)
    return write_table(path, EXPECTED_FIELDS, expectation_rows(table), fmt=fmt, meta=base_meta)


def read_expectation_csv(text: str) -> ExpectationTable:
    """Rebuild an ExpectationTable from expected.csv content."""
    rows: list[ExpectationRow] = []
    n_slots = trials = 0
    for rec in csv.DictReader(io.StringIO(text)):
        try:
            trial_sd = float(rec["trial_sd"]) if rec.get("trial_sd") else None
            rows.append(ExpectationRow(
                entity=rec["entity"], p=float(rec["p"]), k=int(rec["k"]),
                expected=float(rec["expected"]), stderr=float(rec["stderr"]),
                trial_sd=trial_sd,
            ))
            n_slots = int(rec["n_slots"])
            trials = int(rec["trials"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputDataError(f"bad expected table row {rec!r}: {exc}") from None
    if not rows:
        raise InputDataError("expected table is empty")
    method = ExpectationMethod.MONTE_CARLO if trials else ExpectationMethod.CLOSED_FORM
    return ExpectationTable(n_slots=n_slots, k_max=max(r.k for r in rows), trials=trials,
                            seed=0, method=method, rows=tuple(rows))


def histogram_rows(histogram: RunHistogram) -> list[dict[str, object]]:
    out = []
    for entity in sorted(histogram.by_entity):
        for k in sorted(histogram.by_entity[entity]):
            out.append({"entity": entity, "k": k, "count": histogram.by_entity[entity][k]})
    return out


def read_histogram_csv(text: str) -> RunHistogram:
    by_entity: dict[str, dict[int, int]] = {}
    aggregate: dict[int, int] = {}
    for rec in csv.DictReader(io.StringIO(text)):
        try:
            entity, k, count = rec["entity"], int(rec["k"]), int(rec["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputDataError(f"bad histogram row {rec!r}: {exc}") from None
        by_entity.setdefault(entity, {})[k] = count
        aggregate[k] = aggregate.get(k, 0) + count
    return RunHistogram(by_entity=by_entity, aggregate=aggregate)


def comparison_rows(comparisons: Sequence[ComparisonRow]) -> list[dict[str, object]]:
    return [
        {"entity": c.entity, "k": c.k, "observed": c.observed,
         "expected": c.expected, "ratio": c.ratio, "z": c.z}
        for c in comparisons
    ]


def write_bundle(bundle: ReportBundle, out_dir: Path, *, fmt: str = "csv",
                 render_figures: bool = True) -> list[Path]:
    """Write every bundle table (plus sidecars and figures) under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = bundle.metadata
    ext = "csv" if fmt == "csv" else "json"
    written: list[Path] = []

    def table(name: str, fields: Sequence[str], rows: Sequence[Mapping[str, object]]) -> None:
        written.extend(write_table(out_dir / f"{name}.{ext}", fields, rows, fmt=fmt, meta=meta))

    share_rows = [
        {"entity": e, "share": float(bundle.shares.shares[e]),
         "share_exact": str(bundle.shares.shares[e])}
        for e in sorted(bundle.shares.shares)
    ]
    table("shares", ("entity", "share", "share_exact"), share_rows)

    table("runs", ("entity", "start_slot", "length", "payments_wei"), [
        {"entity": r.entity, "start_slot": r.start_slot, "length": r.length,
         "payments_wei": ";".join(str(p) for p in r.payments)}
        for r in bundle.runs
    ])
    table("histogram", HISTOGRAM_FIELDS, histogram_rows(bundle.histogram))
    if bundle.expected is not None:
        written.extend(write_expectation_table(bundle.expected, out_dir / f"expected.{ext}",
                                               fmt=fmt, meta=meta))
        table("compare", COMPARE_FIELDS, comparison_rows(bundle.comparisons))

    quartile_fields = ("n", "q25_wei", "median_wei", "q75_wei", "q25_eth", "median_eth", "q75_eth")
    table("fig2", ("k",) + quartile_fields,
          [_quartile_row("k", k, s) for k, s in bundle.fig2_pooled.items()])
    table("fig2_by_entity", ("entity", "k") + quartile_fields,
          [{"entity": e, **_quartile_row("k", k, s)}
           for e, stats in bundle.fig2_by_entity.items() for k, s in stats.items()])
    table("fig3", ("k", "count"), [{"k": k, "count": c} for k, c in bundle.fig3.items()])
    table("fig4", ("position",) + quartile_fields,
          [_quartile_row("position", pos, s) for pos, s in bundle.fig4_pooled.items()])
    table("fig4_by_entity", ("entity", "position") + quartile_fields,
          [{"entity": e, **_quartile_row("position", pos, s)}
           for e, stats in bundle.fig4_by_entity.items() for pos, s in stats.items()])

    table("anomalies", ("entity", "start_slot", "length"), [
        {"entity": r.entity, "start_slot": r.start_slot, "length": r.length}
        for r in bundle.anomalies
    ])
    if bundle.escalations:
        table("escalation", ("entity", "start_slot", "length", "slope", "flagged"), [
            {"entity": e.entity, "start_slot": e.start_slot, "length": e.length,
             "slope": e.slope, "flagged": e.flagged}
            for e in bundle.escalations
        ])

    meta_path = out_dir / "report.meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    written.append(meta_path)

    if render_figures:
        from . import figures

        written.extend(figures.render_report_figures(bundle, out_dir))
    return written
