"""Shared test helpers: synthetic pubkeys, a reference run scanner, and a
randomized trace generator.

The reference scanner is deliberately a different algorithm from the
production one (groupby on slot-minus-rank instead of a stateful sweep) so
the two can serve as independent cross-checks.
"""

from __future__ import annotations

import hashlib
import itertools
import random

from mmevlab.trace import EntityMap, SlotMode, SlotOutcome


def pk(name: str) -> str:
    """Deterministic 96-hex-char pubkey for a test entity name."""
    return hashlib.sha384(name.encode()).hexdigest()


def reference_runs(pairs):
    """Oracle run scanner over (slot, entity-or-None, payment) triples.

    Attributed slots are grouped by (entity, slot - rank): within a maximal
    stretch of consecutive slot numbers won by one entity the key is
    constant, and any boundary (other entity, unattributed slot, slot gap)
    changes it, because an unattributed slot still occupies a slot number.
    Returns (entity, start_slot, payments) triples in trace order.
    """
    won = [(slot, who, pay) for slot, who, pay in pairs if who is not None]
    out = []
    for (who, _), group in itertools.groupby(
            enumerate(won), key=lambda t: (t[1][1], t[1][0] - t[0])):
        rows = [row for _, row in group]
        out.append((who, rows[0][0], tuple(pay for _, _, pay in rows)))
    return out


def enumerate_expected_runs(p, n: int):
    """Exhaustive oracle for expected exact-k run counts, k = 1..n.

    Walks every win/loss sequence of length n, weights it by
    p**wins * (1-p)**losses, and tallies maximal run lengths found by
    direct inspection. Exact when p is a Fraction. O(2^n), fine for n <= 12.
    """
    q = 1 - p
    weight_by_wins = [p**w * q**(n - w) for w in range(n + 1)]
    totals = {k: 0 * p for k in range(1, n + 1)}
    for bits in range(2**n):
        wins = bin(bits).count("1")
        w = weight_by_wins[wins]
        length = 0
        for i in range(n):
            if bits >> i & 1:
                length += 1
            elif length:
                totals[length] += w
                length = 0
        if length:
            totals[length] += w
    return totals


def random_trace(rng: random.Random):
    """Random outcome trace with known ground truth.

    Returns (outcomes, entity_map, pairs) where pairs holds the generator's
    own (slot, entity-or-None, payment) view, independent of any library
    attribution logic. Unmapped winners appear under the documented
    unknown:<pubkey> singleton name.
    """
    entities = [f"builder-{chr(97 + i)}" for i in range(rng.randint(1, 4))]
    entity_map = EntityMap({pk(e): e for e in entities})
    outcomes = []
    pairs = []
    slot = rng.randrange(1000)
    for _ in range(rng.randint(1, 300)):
        slot += 1 if rng.random() < 0.88 else rng.randint(2, 5)
        roll = rng.random()
        if roll < 0.12:
            mode = SlotMode.LOCAL if rng.random() < 0.5 else SlotMode.MISSED
            outcomes.append(SlotOutcome(slot=slot, mode=mode))
            pairs.append((slot, None, None))
            continue
        if roll < 0.18:
            key = pk(f"stray-{rng.randrange(3)}")
            who = f"unknown:{key}"
        else:
            who = rng.choice(entities)
            key = pk(who)
        pay = rng.randrange(10**15, 10**17)
        outcomes.append(SlotOutcome(slot=slot, mode=SlotMode.PBS,
                                    winner_pubkey=key, payment=pay))
        pairs.append((slot, who, pay))
    return outcomes, entity_map, pairs
