"""Expected counts of maximal wins-in-a-row runs under a null model.

Null model: each of n_slots slots is won by entity e independently with its
market-share probability p. The expected number of maximal runs of exactly
length k then has a closed form, and a Monte Carlo estimator exists for
cross-checking and for the spread of single-trace counts.

Closed form, for 1 <= k < n:

    E[count of exact-k runs] = p**k * ((n - k - 1) * (1 - p)**2 + 2 * (1 - p))

(the first term covers interior runs, bounded by losses on both sides; the
second the two boundary positions, bounded by one loss); for k == n it is
p**n, and 0 for k > n. Works unchanged for Fraction p, giving exact
rationals.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Mapping

import numpy as np

from .runs import RunHistogram
from .trace import NON_PBS_ENTITY, MarketShare
from .workers import thread_count

#: Expected counts below this are treated as zero when forming ratios.
RATIO_EPSILON = 1e-9

_MC_BATCH_CELLS = 4_000_000  # trials-per-batch cap scales with n to bound memory


def expected_runs_exact(p: float | Fraction, n_slots: int, k: int):
    """Expected number of maximal runs of exactly length k in n_slots trials.

    Returns float for float p and Fraction for Fraction p.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    if k > n_slots:
        return p * 0  # zero of the input type
    if k == n_slots:
        return p**n_slots
    q = 1 - p
    return p**k * ((n_slots - k - 1) * q * q + 2 * q)


class ExpectationMethod(Enum):
    CLOSED_FORM = "closed-form"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class ExpectationRow:
    """Expected exact-k run count for one entity, with MC uncertainty.

    stderr is the standard error of the estimated mean (0 for closed form).
    trial_sd is the standard deviation of a single trace's count, the right
    yardstick for judging one observed trace; None for closed form.
    """

    entity: str
    p: float
    k: int
    expected: float
    stderr: float
    trial_sd: float | None

    def __post_init__(self) -> None:
        if self.expected < 0 or self.stderr < 0:
            raise ValueError("expected and stderr must be >= 0")


@dataclass(frozen=True)
class ExpectationTable:
    n_slots: int
    k_max: int
    trials: int  # 0 for closed form
    seed: int
    method: ExpectationMethod
    rows: tuple[ExpectationRow, ...]

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    def entities(self) -> list[str]:
        seen = dict.fromkeys(r.entity for r in self.rows)
        return list(seen)

    def row(self, entity: str, k: int) -> ExpectationRow:
        for r in self.rows:
            if r.entity == entity and r.k == k:
                return r
        raise KeyError((entity, k))


def _entity_seed_seq(seed: int, entity: str | None) -> np.random.SeedSequence:
    """Independent, entity-order-insensitive stream per (seed, entity)."""
    if entity is None:
        return np.random.SeedSequence(entropy=seed)
    digest = hashlib.sha256(entity.encode("utf-8")).digest()
    words = (
        int.from_bytes(digest[0:4], "big"),
        int.from_bytes(digest[4:8], "big"),
    )
    return np.random.SeedSequence(entropy=seed, spawn_key=words)


def _count_exact_runs_batch(wins: np.ndarray, k_cap: int) -> np.ndarray:
    """Per-trial counts of exact-k runs for k = 1..k_cap.

    wins: bool array (batch, n). Returns int64 (batch, k_cap). Runs longer
    than k_cap are ignored, not pooled into the last bin.
    """
    batch, n = wins.shape
    padded = np.zeros((batch, n + 2), dtype=np.int8)
    padded[:, 1:-1] = wins
    flat = padded.ravel()
    d = np.diff(flat)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    lengths = ends - starts
    rows = starts // (n + 2)
    counts = np.zeros((batch, k_cap + 1), dtype=np.int64)
    keep = lengths <= k_cap
    np.add.at(counts, (rows[keep], lengths[keep]), 1)
    if __debug__:
        # conservation: total run length per trial equals its win count
        won = np.bincount(rows, weights=lengths, minlength=batch)
        assert np.array_equal(won.astype(np.int64), wins.sum(axis=1, dtype=np.int64))
    return counts[:, 1:]


def _mc_moments(p: float, n_slots: int, k_cap: int, trials: int, seed_seq: np.random.SeedSequence,
                workers: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Per-k sum and sum of squares of exact-k counts over all trials.

    Trials are partitioned into fixed-size batches with counter-spaced
    Philox streams, and batch results are reduced in batch order, so the
    worker count never changes the output.
    """
    key = seed_seq.generate_state(2, dtype=np.uint64)
    batch_size = max(1, min(512, _MC_BATCH_CELLS // max(n_slots, 1)))
    n_batches = (trials + batch_size - 1) // batch_size

    def run_batch(b: int) -> tuple[np.ndarray, np.ndarray]:
        size = min(batch_size, trials - b * batch_size)
        bitgen = np.random.Philox(key=key, counter=b << 128)
        u = np.random.Generator(bitgen).random((size, n_slots))
        counts = _count_exact_runs_batch(u < p, k_cap)
        return counts.sum(axis=0), (counts * counts).sum(axis=0)

    if workers is None:
        workers = thread_count()
    if workers > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, range(n_batches)))
    else:
        results = [run_batch(b) for b in range(n_batches)]

    total = np.zeros(k_cap, dtype=np.int64)
    total_sq = np.zeros(k_cap, dtype=np.int64)
    for s, sq in results:  # fixed order, integer sums: exact and stable
        total += s
        total_sq += sq
    return total, total_sq


def expected_runs_mc(
    p: float,
    n_slots: int,
    k_max: int,
    trials: int,
    seed: int,
    *,
    entity: str = "entity",
    workers: int | None = None,
) -> ExpectationTable:
    """Monte Carlo estimate of exact-k run counts for one entity.

    Deterministic given (p, n_slots, k_max, trials, seed, entity name),
    regardless of worker count. The stream is derived from the entity name
    so multi-entity tables decompose into single-entity calls.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    k_cap = min(k_max, n_slots)
    total, total_sq = _mc_moments(p, n_slots, k_cap, trials, _entity_seed_seq(seed, entity), workers)
    mean = total / trials
    var = np.maximum(total_sq / trials - mean * mean, 0.0) * (trials / (trials - 1))
    sd = np.sqrt(var)
    stderr = sd / np.sqrt(trials)
    rows = []
    for k in range(1, k_max + 1):
        i = k - 1
        rows.append(ExpectationRow(
            entity=entity, p=float(p), k=k,
            expected=float(mean[i]) if k <= k_cap else 0.0,
            stderr=float(stderr[i]) if k <= k_cap else 0.0,
            trial_sd=float(sd[i]) if k <= k_cap else 0.0,
        ))
    return ExpectationTable(n_slots=n_slots, k_max=k_max, trials=trials, seed=seed,
                            method=ExpectationMethod.MONTE_CARLO, rows=tuple(rows))


def closed_form_table(
    shares: MarketShare | Mapping[str, float | Fraction], n_slots: int, k_max: int
) -> ExpectationTable:
    """Exact expectation table from the closed form (stderr 0, no trial spread)."""
    probs = _builder_probs(shares)
    rows = []
    for entity in sorted(probs):
        p = probs[entity]
        for k in range(1, k_max + 1):
            rows.append(ExpectationRow(
                entity=entity, p=float(p), k=k,
                expected=float(expected_runs_exact(p, n_slots, k)),
                stderr=0.0, trial_sd=None,
            ))
    return ExpectationTable(n_slots=n_slots, k_max=k_max, trials=0, seed=0,
                            method=ExpectationMethod.CLOSED_FORM, rows=tuple(rows))


def _builder_probs(shares: MarketShare | Mapping[str, float | Fraction]) -> dict[str, float | Fraction]:
    if isinstance(shares, MarketShare):
        return {e: shares.shares[e] for e in shares.builder_entities()}
    return {e: p for e, p in shares.items() if e != NON_PBS_ENTITY}


def expected_all_entities(
    shares: MarketShare | Mapping[str, float | Fraction],
    n_slots: int,
    k_max: int,
    trials: int,
    seed: int,
    *,
    workers: int | None = None,
) -> ExpectationTable:
    """Monte Carlo expectation table with one row set per builder entity.

    Each entity draws from its own name-derived stream, so its rows equal a
    single-entity run with the same seed and do not depend on which other
    entities are present. The reserved non-PBS pool gets no rows.
    """
    probs = _builder_probs(shares)
    rows: list[ExpectationRow] = []
    for entity in sorted(probs):
        table = expected_runs_mc(float(probs[entity]), n_slots, k_max, trials, seed,
                                 entity=entity, workers=workers)
        rows.extend(table.rows)
    return ExpectationTable(n_slots=n_slots, k_max=k_max, trials=trials, seed=seed,
                            method=ExpectationMethod.MONTE_CARLO, rows=tuple(rows))


@dataclass(frozen=True)
class ComparisonRow:
    """Observed vs expected exact-k run count for one entity.

    ratio is None when the expectation is numerically zero; z is None when
    no spread estimate exists (closed-form table or zero sd). Neither is
    ever emitted as an infinity.
    """

    entity: str
    k: int
    observed: int
    expected: float
    ratio: float | None
    z: float | None


def compare_observed_expected(
    histogram: RunHistogram, table: ExpectationTable
) -> list[ComparisonRow]:
    """Line up observed per-entity exact-k counts against an expectation table.

    Rows are emitted for every (table entity, k <= k_max) in (entity, k)
    order; entities absent from the histogram count as observed 0. Observed
    runs longer than k_max are intentionally not represented here.

    z divides by the single-trace spread (trial_sd), since the observed
    histogram is one realization, not an average over trials.
    """
    out: list[ComparisonRow] = []
    for row in sorted(table.rows, key=lambda r: (r.entity, r.k)):
        obs = histogram.count(row.entity, row.k)
        ratio = obs / row.expected if row.expected > RATIO_EPSILON else None
        z: float | None = None
        if row.trial_sd is not None and row.trial_sd > 0:
            z = (obs - row.expected) / row.trial_sd
        out.append(ComparisonRow(entity=row.entity, k=row.k, observed=obs,
                                 expected=row.expected, ratio=ratio, z=z))
    return out
