"""Relay-trace data model: bid records, slot outcomes, entity attribution.

Values are integer wei throughout (1 ETH = 10**18 wei); decimal ETH appears
only in report output. Pubkeys are normalized to 96 lowercase hex chars with
no 0x prefix.

Wire formats
------------
Bids, CSV (header required)::

    slot,builder_pubkey,relay_id,value_wei,received_at_ms

Slot outcomes, CSV (header required)::

    slot,mode,winner_pubkey,payment_wei

JSONL uses one object per line with the same field names; optional fields
may be null or absent. Entity maps are plain text, one ``pubkey=entity``
per line, ``#`` starts a comment line.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import IO, Iterable, Mapping, Sequence

from .errors import ConfigError, InputDataError

PUBKEY_HEX_LEN = 96  # 48-byte BLS pubkey
_PUBKEY_RE = re.compile(r"[0-9a-f]{96}\Z")

BID_FIELDS = ("slot", "builder_pubkey", "relay_id", "value_wei", "received_at_ms")
OUTCOME_FIELDS = ("slot", "mode", "winner_pubkey", "payment_wei")

#: Reserved pseudo-entity pooling LOCAL/MISSED slots under ALL_SLOTS shares.
NON_PBS_ENTITY = "non-PBS"

#: Builder entities named by public attribution sources for the post-merge
#: window. The prose count says eight, but nine names are listed; all nine
#: are kept here.
KNOWN_BUILDER_ENTITIES = (
    "Flashbots",
    "Builder0x69",
    "Bloxroute",
    "Beaverbuild.org",
    "Blocknative",
    "Eth-builder.com",
    "x85linux",
    "Eden",
    "Manifold",
)


class SlotMode(Enum):
    PBS = "PBS"
    LOCAL = "LOCAL"
    MISSED = "MISSED"


class DenominatorMode(Enum):
    """Denominator for market shares: all slots, or PBS slots only."""

    ALL_SLOTS = "all"
    PBS_SLOTS = "pbs"


def normalize_pubkey(raw: str) -> str:
    """Normalize a builder pubkey to 96 lowercase hex chars.

    Raises ValueError for anything that is not 96 hex chars after an
    optional 0x prefix is removed.
    """
    s = raw.strip()
    if s[:2] in ("0x", "0X"):
        s = s[2:]
    s = s.lower()
    if not _PUBKEY_RE.match(s):
        raise ValueError(f"bad hex pubkey: {raw!r}")
    return s


@dataclass(frozen=True)
class BidRecord:
    """One bid submitted by a builder through a relay for a slot."""

    slot: int
    builder_pubkey: str
    relay_id: str
    value: int  # wei
    received_at: int | None = None  # ms since epoch; no operation needs it

    def __post_init__(self) -> None:
        if self.slot < 0:
            raise ValueError("slot must be >= 0")
        if self.value < 0:
            raise ValueError("value must be >= 0")
        object.__setattr__(self, "builder_pubkey", normalize_pubkey(self.builder_pubkey))


@dataclass(frozen=True)
class SlotOutcome:
    """How one slot resolved: a PBS winner with payment, or LOCAL/MISSED."""

    slot: int
    mode: SlotMode
    winner_pubkey: str | None = None
    payment: int | None = None  # wei

    def __post_init__(self) -> None:
        if self.slot < 0:
            raise ValueError("slot must be >= 0")
        if self.mode is SlotMode.PBS:
            if self.winner_pubkey is None:
                raise ValueError("PBS outcome needs a winner")
            if self.payment is None or self.payment < 0:
                raise ValueError("PBS outcome needs a non-negative payment")
            object.__setattr__(self, "winner_pubkey", normalize_pubkey(self.winner_pubkey))
        else:
            if self.winner_pubkey is not None:
                raise ValueError("winner on non-PBS slot")
            if self.payment is not None:
                raise ValueError("payment on non-PBS slot")


@dataclass(frozen=True)
class ParseIssue:
    """A rejected input line: physical line number plus reason."""

    line: int
    reason: str


@dataclass(frozen=True)
class EntityMap:
    """Pubkey -> builder-entity attribution.

    Unknown pubkeys are never pooled: each becomes its own singleton
    entity named ``unknown:<pubkey>``.
    """

    entries: Mapping[str, str]

    def __post_init__(self) -> None:
        normalized: dict[str, str] = {}
        for pubkey, entity in self.entries.items():
            key = normalize_pubkey(pubkey)
            if not entity:
                raise ConfigError(f"empty entity name for pubkey {pubkey}")
            if key in normalized and normalized[key] != entity:
                raise ConfigError(f"pubkey {pubkey} mapped to two entities")
            normalized[key] = entity
        object.__setattr__(self, "entries", normalized)

    def resolve(self, pubkey: str) -> str:
        return resolve_entity(pubkey, self)


def resolve_entity(pubkey: str, entity_map: EntityMap) -> str:
    """Entity name for a pubkey; unmapped keys get a distinct singleton name."""
    key = normalize_pubkey(pubkey)
    mapped = entity_map.entries.get(key)
    return mapped if mapped is not None else f"unknown:{key}"


def load_entity_map(text: str) -> EntityMap:
    """Parse an entity-map file body (``pubkey=entity`` lines, # comments)."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"entity map line {lineno}: expected pubkey=entity")
        pubkey, _, entity = line.partition("=")
        try:
            key = normalize_pubkey(pubkey)
        except ValueError as exc:
            raise ConfigError(f"entity map line {lineno}: {exc}") from exc
        entity = entity.strip()
        if not entity:
            raise ConfigError(f"entity map line {lineno}: empty entity name")
        if key in entries and entries[key] != entity:
            raise ConfigError(f"entity map line {lineno}: pubkey mapped to two entities")
        entries[key] = entity
    return EntityMap(entries)


def dump_entity_map(entity_map: EntityMap) -> str:
    lines = [f"{pubkey}={entity}" for pubkey, entity in sorted(entity_map.entries.items())]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class MarketShare:
    """Per-entity win shares p in [0, 1], kept as exact rationals.

    Under ALL_SLOTS the reserved NON_PBS_ENTITY absorbs LOCAL/MISSED
    slots so shares sum to exactly 1.
    """

    shares: Mapping[str, Fraction]
    denominator_mode: DenominatorMode
    n_slots: int
    n_pbs_slots: int

    def __post_init__(self) -> None:
        for entity, p in self.shares.items():
            if not 0 <= p <= 1:
                raise ValueError(f"share for {entity} outside [0, 1]: {p}")

    def builder_entities(self) -> list[str]:
        """Entity names excluding the reserved non-PBS pool, sorted."""
        return sorted(e for e in self.shares if e != NON_PBS_ENTITY)


# ---------------------------------------------------------------------------
# parsing


def _decode_lines(stream: IO[bytes] | bytes | str) -> list[str]:
    if isinstance(stream, str):
        text = stream
    else:
        data = stream if isinstance(stream, bytes) else stream.read()
        if isinstance(data, str):  # text-mode file object
            text = data
        else:
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise InputDataError(f"stream is not UTF-8: {exc}") from exc
    return text.splitlines()


def _parse_int(raw: str, what: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"bad {what}") from None


def _bid_from_fields(fields: Mapping[str, object]) -> BidRecord:
    slot = fields["slot"]
    value = fields["value_wei"]
    received = fields.get("received_at_ms")
    if isinstance(slot, str):
        slot = _parse_int(slot, "slot")
    if isinstance(value, str):
        value = _parse_int(value, "value")
    if isinstance(received, str):
        received = _parse_int(received, "received_at") if received else None
    if not isinstance(slot, int) or isinstance(slot, bool):
        raise ValueError("bad slot")
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError("bad value")
    if received is not None and (not isinstance(received, int) or isinstance(received, bool)):
        raise ValueError("bad received_at")
    if slot < 0:
        raise ValueError("negative slot")
    if value < 0:
        raise ValueError("negative value")
    pubkey = fields["builder_pubkey"]
    relay = fields["relay_id"]
    if not isinstance(pubkey, str):
        raise ValueError("bad hex pubkey")
    if not isinstance(relay, str) or not relay:
        raise ValueError("empty relay_id")
    try:
        pubkey = normalize_pubkey(pubkey)
    except ValueError:
        raise ValueError("bad hex") from None
    return BidRecord(slot=slot, builder_pubkey=pubkey, relay_id=relay, value=value, received_at=received)


def _iter_csv_rows(
    lines: list[str], expected_fields: Sequence[str]
) -> tuple[list[tuple[int, dict[str, str]]], list[ParseIssue]]:
    """Rows as (physical line number, field dict). The header is line 1."""
    if not lines:
        return [], []
    header = next(csv.reader([lines[0]]))
    if [h.strip() for h in header] != list(expected_fields):
        raise InputDataError(
            f"bad CSV header: expected {','.join(expected_fields)!r}, got {lines[0]!r}"
        )
    rows: list[tuple[int, dict[str, str]]] = []
    issues: list[ParseIssue] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = next(csv.reader([raw]))
        if len(cells) != len(expected_fields):
            issues.append(ParseIssue(lineno, "wrong field count"))
            continue
        rows.append((lineno, dict(zip(expected_fields, cells))))
    return rows, issues


def _iter_jsonl_rows(
    lines: list[str], expected_fields: Sequence[str]
) -> tuple[list[tuple[int, dict[str, object]]], list[ParseIssue]]:
    rows: list[tuple[int, dict[str, object]]] = []
    issues: list[ParseIssue] = []
    required = [f for f in expected_fields if f not in ("received_at_ms", "winner_pubkey", "payment_wei")]
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError:
            issues.append(ParseIssue(lineno, "bad json"))
            continue
        if not isinstance(obj, dict):
            issues.append(ParseIssue(lineno, "bad json"))
            continue
        missing = [f for f in required if f not in obj]
        if missing:
            issues.append(ParseIssue(lineno, f"missing field {missing[0]}"))
            continue
        rows.append((lineno, obj))
    return rows, issues


def _check_format(fmt: str) -> str:
    fmt = fmt.lower()
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown trace format {fmt!r} (use csv or jsonl)")
    return fmt


def parse_bid_records(
    stream: IO[bytes] | bytes | str, fmt: str = "csv"
) -> tuple[list[BidRecord], list[ParseIssue]]:
    """Parse bid records, collecting per-line issues instead of dropping lines.

    Input order is preserved. An unreadable stream or a bad CSV header is
    fatal (InputDataError); everything line-scoped is reported.
    """
    fmt = _check_format(fmt)
    lines = _decode_lines(stream)
    if fmt == "csv":
        rows, issues = _iter_csv_rows(lines, BID_FIELDS)
    else:
        rows, issues = _iter_jsonl_rows(lines, BID_FIELDS)
    records: list[BidRecord] = []
    for lineno, fields in rows:
        try:
            records.append(_bid_from_fields(fields))
        except ValueError as exc:
            issues.append(ParseIssue(lineno, str(exc)))
    issues.sort(key=lambda i: i.line)
    return records, issues


def _outcome_from_fields(fields: Mapping[str, object]) -> SlotOutcome:
    slot = fields["slot"]
    if isinstance(slot, str):
        slot = _parse_int(slot, "slot")
    if not isinstance(slot, int) or isinstance(slot, bool):
        raise ValueError("bad slot")
    if slot < 0:
        raise ValueError("negative slot")

    mode_raw = fields["mode"]
    if not isinstance(mode_raw, str):
        raise ValueError("bad mode")
    try:
        mode = SlotMode(mode_raw.strip().upper())
    except ValueError:
        raise ValueError("bad mode") from None

    winner = fields.get("winner_pubkey")
    payment = fields.get("payment_wei")
    if isinstance(winner, str) and not winner.strip():
        winner = None
    if isinstance(payment, str):
        payment = _parse_int(payment, "payment") if payment.strip() else None
    if payment is not None and (not isinstance(payment, int) or isinstance(payment, bool)):
        raise ValueError("bad payment")

    if mode is SlotMode.PBS:
        if winner is None:
            raise ValueError("missing winner")
        if payment is None:
            raise ValueError("missing payment")
        if payment < 0:
            raise ValueError("negative value")
        try:
            winner = normalize_pubkey(winner)
        except ValueError:
            raise ValueError("bad hex") from None
        return SlotOutcome(slot=slot, mode=mode, winner_pubkey=winner, payment=payment)

    if payment is not None:
        raise ValueError("payment on non-PBS slot")
    if winner is not None:
        raise ValueError("winner on non-PBS slot")
    return SlotOutcome(slot=slot, mode=mode)


def parse_slot_outcomes(
    stream: IO[bytes] | bytes | str, fmt: str = "csv"
) -> tuple[list[SlotOutcome], list[ParseIssue]]:
    """Parse slot outcomes; duplicates and out-of-order slots are per-line errors.

    Accepted outcomes always have strictly increasing slot numbers.
    """
    fmt = _check_format(fmt)
    lines = _decode_lines(stream)
    if fmt == "csv":
        rows, issues = _iter_csv_rows(lines, OUTCOME_FIELDS)
    else:
        rows, issues = _iter_jsonl_rows(lines, OUTCOME_FIELDS)
    outcomes: list[SlotOutcome] = []
    seen: set[int] = set()
    last = -1
    for lineno, fields in rows:
        try:
            outcome = _outcome_from_fields(fields)
        except ValueError as exc:
            issues.append(ParseIssue(lineno, str(exc)))
            continue
        if outcome.slot in seen:
            issues.append(ParseIssue(lineno, "duplicate slot"))
            continue
        if outcome.slot < last:
            issues.append(ParseIssue(lineno, "out-of-order slot"))
            continue
        seen.add(outcome.slot)
        last = outcome.slot
        outcomes.append(outcome)
    issues.sort(key=lambda i: i.line)
    return outcomes, issues


# ---------------------------------------------------------------------------
# emission


def emit_bid_records(records: Iterable[BidRecord], fmt: str = "csv") -> str:
    fmt = _check_format(fmt)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(BID_FIELDS)
        for r in records:
            writer.writerow(
                [r.slot, r.builder_pubkey, r.relay_id, r.value, "" if r.received_at is None else r.received_at]
            )
        return buf.getvalue()
    lines = []
    for r in records:
        obj: dict[str, object] = {
            "slot": r.slot,
            "builder_pubkey": r.builder_pubkey,
            "relay_id": r.relay_id,
            "value_wei": r.value,
        }
        if r.received_at is not None:
            obj["received_at_ms"] = r.received_at
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def emit_slot_outcomes(outcomes: Iterable[SlotOutcome], fmt: str = "csv") -> str:
    fmt = _check_format(fmt)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(OUTCOME_FIELDS)
        for o in outcomes:
            writer.writerow(
                [
                    o.slot,
                    o.mode.value,
                    o.winner_pubkey or "",
                    "" if o.payment is None else o.payment,
                ]
            )
        return buf.getvalue()
    lines = []
    for o in outcomes:
        obj: dict[str, object] = {"slot": o.slot, "mode": o.mode.value}
        if o.winner_pubkey is not None:
            obj["winner_pubkey"] = o.winner_pubkey
        if o.payment is not None:
            obj["payment_wei"] = o.payment
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# attribution


def entity_wins(outcomes: Sequence[SlotOutcome], entity_map: EntityMap) -> dict[str, int]:
    """PBS win counts per entity; every PBS slot lands on exactly one entity."""
    wins: dict[str, int] = {}
    for o in outcomes:
        if o.mode is SlotMode.PBS:
            entity = resolve_entity(o.winner_pubkey, entity_map)  # type: ignore[arg-type]
            wins[entity] = wins.get(entity, 0) + 1
    return wins


def market_shares(
    outcomes: Sequence[SlotOutcome],
    entity_map: EntityMap,
    denominator_mode: DenominatorMode = DenominatorMode.ALL_SLOTS,
) -> MarketShare:
    """Per-entity win shares over all slots or over PBS slots only.

    ALL_SLOTS pools LOCAL/MISSED slots into the reserved NON_PBS_ENTITY so
    the shares sum to exactly 1.
    """
    if not outcomes:
        raise InputDataError("cannot compute market shares from an empty trace")
    wins = entity_wins(outcomes, entity_map)
    n_slots = len(outcomes)
    n_pbs = sum(wins.values())
    if denominator_mode is DenominatorMode.ALL_SLOTS:
        shares = {entity: Fraction(count, n_slots) for entity, count in wins.items()}
        non_pbs = n_slots - n_pbs
        if non_pbs:
            shares[NON_PBS_ENTITY] = Fraction(non_pbs, n_slots)
    else:
        if n_pbs == 0:
            raise InputDataError("no PBS slots in trace; PBS_SLOTS shares undefined")
        shares = {entity: Fraction(count, n_pbs) for entity, count in wins.items()}
    return MarketShare(
        shares=shares, denominator_mode=denominator_mode, n_slots=n_slots, n_pbs_slots=n_pbs
    )
