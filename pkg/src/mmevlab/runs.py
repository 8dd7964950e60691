"""Maximal-run detection and run-level payment statistics.

A run for entity e is a maximal stretch of consecutive slot numbers all won
by e under PBS. Anything else bounds it: a slot won by another entity, a
LOCAL or MISSED slot, a gap in slot numbers, or either end of the trace.
A run "of length k" means exactly k, not at-least k.

Payment statistics (quartiles by run length, by position within a run, and
the per-run escalation slope against a median-bid baseline) all work on the
winning payments carried by the runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .trace import BidRecord, EntityMap, SlotMode, SlotOutcome, resolve_entity
from .units import wei_to_eth

#: Per-position relative-premium slope above which a run counts as escalating.
DEFAULT_ESCALATION_THRESHOLD = 0.01


@dataclass(frozen=True)
class Run:
    """One maximal run: ``length`` consecutive slots won by ``entity``.

    payments[i] is the winning payment (wei) of slot start_slot + i.
    """

    entity: str
    start_slot: int
    length: int
    payments: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("run length must be >= 1")
        if self.payments and len(self.payments) != self.length:
            raise ValueError("payments must have one entry per slot in the run")

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.length - 1

    @property
    def slots(self) -> range:
        return range(self.start_slot, self.start_slot + self.length)


def detect_runs(outcomes: Sequence[SlotOutcome], entity_map: EntityMap) -> list[Run]:
    """Scan a trace once and return all maximal runs, in start-slot order.

    Requires strictly increasing slot numbers (the parser guarantees this
    for accepted outcomes); raises ValueError otherwise.
    """
    runs: list[Run] = []
    cur_entity: str | None = None
    cur_start = 0
    cur_payments: list[int] = []
    prev_slot: int | None = None

    def flush() -> None:
        nonlocal cur_entity
        if cur_entity is not None:
            runs.append(Run(entity=cur_entity, start_slot=cur_start,
                            length=len(cur_payments), payments=tuple(cur_payments)))
        cur_entity = None
        cur_payments.clear()

    for o in outcomes:
        if prev_slot is not None and o.slot <= prev_slot:
            raise ValueError(f"slots not strictly increasing at slot {o.slot}")
        gap = prev_slot is not None and o.slot != prev_slot + 1
        prev_slot = o.slot
        if o.mode is not SlotMode.PBS:
            flush()
            continue
        entity = resolve_entity(o.winner_pubkey, entity_map)  # type: ignore[arg-type]
        if gap or entity != cur_entity:
            flush()
            cur_entity = entity
            cur_start = o.slot
        cur_payments.append(o.payment or 0)
    flush()
    return runs


@dataclass(frozen=True)
class RunHistogram:
    """Counts of maximal runs of exactly length k, per entity and pooled.

    Conservation: for each entity, sum over k of k*count equals the number
    of PBS slots that entity won.
    """

    by_entity: Mapping[str, Mapping[int, int]]
    aggregate: Mapping[int, int] = field(default_factory=dict)

    def count(self, entity: str, k: int) -> int:
        return self.by_entity.get(entity, {}).get(k, 0)

    def slots_won(self, entity: str) -> int:
        return sum(k * c for k, c in self.by_entity.get(entity, {}).items())

    def max_length(self) -> int:
        return max(self.aggregate, default=0)


def run_histogram(runs: Sequence[Run]) -> RunHistogram:
    """Exact-length run counts; lengths are never pooled or clipped."""
    by_entity: dict[str, dict[int, int]] = {}
    aggregate: dict[int, int] = {}
    for r in runs:
        row = by_entity.setdefault(r.entity, {})
        row[r.length] = row.get(r.length, 0) + 1
        aggregate[r.length] = aggregate.get(r.length, 0) + 1
    return RunHistogram(by_entity=by_entity, aggregate=aggregate)


def longest_run_length(runs: Sequence[Run], entity: str | None = None) -> int:
    """Longest run length observed (0 for no runs), optionally per entity."""
    lengths = [r.length for r in runs if entity is None or r.entity == entity]
    return max(lengths, default=0)


# ---------------------------------------------------------------------------
# payment statistics


@dataclass(frozen=True)
class QuartileStats:
    """Quartiles of a payment sample, in decimal ETH."""

    n: int
    q25: float
    median: float
    q75: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one sample")
        if not self.q25 <= self.median <= self.q75:
            raise ValueError("quartiles out of order")


def _quantile(sorted_values: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics (inclusive convention)."""
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    pos = q * (n - 1)
    lo = int(pos)
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac


def quartile_stats(payments_wei: Iterable[int]) -> QuartileStats:
    values = sorted(wei_to_eth(p) for p in payments_wei)
    if not values:
        raise ValueError("need at least one payment")
    return QuartileStats(
        n=len(values),
        q25=_quantile(values, 0.25),
        median=_quantile(values, 0.50),
        q75=_quantile(values, 0.75),
    )


def payment_by_run_length(runs: Sequence[Run]) -> dict[int, QuartileStats]:
    """Quartiles of per-block payments pooled over runs of each exact length.

    Lengths with no payment data are omitted.
    """
    pools: dict[int, list[int]] = {}
    for r in runs:
        if r.payments:
            pools.setdefault(r.length, []).extend(r.payments)
    return {k: quartile_stats(v) for k, v in sorted(pools.items())}


def payment_by_position(runs: Sequence[Run], min_length: int = 2) -> dict[int, QuartileStats]:
    """Quartiles of payments pooled by 1-based position within a run.

    Only runs of length >= min_length contribute.
    """
    if min_length < 1:
        raise ValueError("min_length must be >= 1")
    pools: dict[int, list[int]] = {}
    for r in runs:
        if r.length < min_length or not r.payments:
            continue
        for pos, payment in enumerate(r.payments, start=1):
            pools.setdefault(pos, []).append(payment)
    return {pos: quartile_stats(v) for pos, v in sorted(pools.items())}


# ---------------------------------------------------------------------------
# bid baselines and escalation


def naive_baseline(bids: Sequence[BidRecord]) -> int:
    """Median bid value for one slot, in wei.

    Even count takes the floor-rounded mean of the two middle values. All
    bids must belong to the same slot.
    """
    if not bids:
        raise ValueError("no bids for slot")
    slots = {b.slot for b in bids}
    if len(slots) != 1:
        raise ValueError(f"bids span multiple slots: {sorted(slots)}")
    values = sorted(b.value for b in bids)
    n = len(values)
    mid = n // 2
    if n % 2:
        return values[mid]
    return (values[mid - 1] + values[mid]) // 2


def baselines_by_slot(bids: Sequence[BidRecord]) -> dict[int, int]:
    """Per-slot median bid values over a whole bid trace."""
    by_slot: dict[int, list[int]] = {}
    for b in bids:
        by_slot.setdefault(b.slot, []).append(b.value)
    out: dict[int, int] = {}
    for slot, values in by_slot.items():
        values.sort()
        n = len(values)
        mid = n // 2
        out[slot] = values[mid] if n % 2 else (values[mid - 1] + values[mid]) // 2
    return out


def escalation_index(run: Run, baselines: Mapping[int, int]) -> float:
    """Least-squares slope of relative premium across positions in a run.

    The premium at position i (1-based) is payments[i-1] / baseline for
    that slot; the returned slope is per position, dimensionless, and
    invariant under scaling all payments and baselines together.
    """
    if run.length < 2:
        raise ValueError("escalation needs a run of length >= 2")
    if len(run.payments) != run.length:
        raise ValueError("run carries no payments")
    premiums: list[float] = []
    for slot, payment in zip(run.slots, run.payments):
        base = baselines.get(slot)
        if base is None:
            raise ValueError(f"no baseline for slot {slot}")
        if base <= 0:
            raise ValueError(f"baseline for slot {slot} is not positive")
        premiums.append(payment / base)
    n = run.length
    mean_i = (n + 1) / 2
    mean_r = sum(premiums) / n
    num = sum((i - mean_i) * (r - mean_r) for i, r in enumerate(premiums, start=1))
    den = sum((i - mean_i) ** 2 for i in range(1, n + 1))
    return num / den


def is_escalating(slope: float, threshold: float = DEFAULT_ESCALATION_THRESHOLD) -> bool:
    return slope > threshold
