"""Bidding strategies: jittered-median NAIVE and window-locking
SEQUENCE_TARGETING.

NAIVE multiplies the public median estimate by exp(sigma * (G + ln w)) with
G a standard Gumbel draw: among simultaneous naive bidders the win
probability is then exactly w_i / sum(w_j), for any sigma > 0, while sigma
alone controls bid spread. SEQUENCE_TARGETING scans the revealed schedule
for the longest stretch of >= k_target consecutive slots whose proposers
would all accept its block, locks onto it, and escalates its bid by
(1 + delta) per position inside the stretch; everywhere else it bids NAIVE.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping

from .auction import eligible
from .config import BuilderSpec, SimConfig, StrategyKind, derive_seed
from .schedule import ProposerSchedule
from .config import ValidatorSpec


@dataclass(frozen=True)
class SlotContext:
    """Everything a strategy may legally observe when bidding for a slot.

    The schedule is accessed through its visibility-enforcing query API at
    current_epoch, so strategies cannot see past the revealed horizon.
    own_wins and own_won_prev summarize the builder's past outcomes.
    """

    slot: int
    current_epoch: int
    schedule: ProposerSchedule
    validators: Mapping[str, ValidatorSpec]
    median_estimate_wei: int
    own_wins: int = 0
    own_won_prev: bool = False


class Strategy:
    """Base: deterministic per-builder stream, bid of None means abstain."""

    def __init__(self, builder: BuilderSpec, seed: int) -> None:
        self.builder = builder
        self.spec = builder.strategy
        self.rng = random.Random(derive_seed(seed, "strategy", builder.builder_id))
        self._log_weight = math.log(self.spec.win_weight)

    def next_bid(self, ctx: SlotContext) -> int | None:
        raise NotImplementedError

    def _naive_bid(self, ctx: SlotContext) -> int:
        u = self.rng.random()
        while u <= 0.0:
            u = self.rng.random()
        gumbel = -math.log(-math.log(u))
        factor = math.exp(self.spec.sigma * (gumbel + self._log_weight))
        return int(ctx.median_estimate_wei * factor)


class NaiveStrategy(Strategy):
    def next_bid(self, ctx: SlotContext) -> int | None:
        return self._naive_bid(ctx)


class SequenceTargetingStrategy(Strategy):
    """Lock the longest upcoming eligible window, escalate inside it.

    The lock is sticky: once a window is chosen it is played to its end
    (position i bids median * (1 + delta)**(i - 1)), then scanning resumes.
    Scans never query beyond the revealed horizon, and a stretch cut off by
    the horizon is taken at its visible length.
    """

    def __init__(self, builder: BuilderSpec, seed: int) -> None:
        super().__init__(builder, seed)
        self._window: tuple[int, int] | None = None  # (start, end) inclusive
        self._eligible_memo: dict[int, bool] = {}

    def _eligible_at(self, ctx: SlotContext, slot: int) -> bool:
        hit = self._eligible_memo.get(slot)
        if hit is None:
            proposer = ctx.validators[ctx.schedule.proposer_at(slot, ctx.current_epoch)]
            hit = eligible(self.builder, proposer)
            self._eligible_memo[slot] = hit
        return hit

    def _scan(self, ctx: SlotContext) -> tuple[int, int] | None:
        horizon = ctx.schedule.horizon_slot(ctx.current_epoch)
        best: tuple[int, int] | None = None
        best_len = 0
        s = ctx.slot
        while s <= horizon:
            if not self._eligible_at(ctx, s):
                s += 1
                continue
            e = s
            while e + 1 <= horizon and self._eligible_at(ctx, e + 1):
                e += 1
            length = e - s + 1
            if length >= self.spec.k_target and length > best_len:
                best = (s, e)
                best_len = length
            s = e + 1
        return best

    def next_bid(self, ctx: SlotContext) -> int | None:
        if self._window is not None and ctx.slot > self._window[1]:
            self._window = None
        if self._window is None:
            self._window = self._scan(ctx)
        if self._window is not None and self._window[0] <= ctx.slot <= self._window[1]:
            position = ctx.slot - self._window[0] + 1
            return int(ctx.median_estimate_wei * (1 + self.spec.delta) ** (position - 1))
        return self._naive_bid(ctx)


def make_strategy(builder: BuilderSpec, config: SimConfig) -> Strategy:
    if builder.strategy.kind is StrategyKind.SEQUENCE_TARGETING:
        return SequenceTargetingStrategy(builder, config.seed)
    return NaiveStrategy(builder, config.seed)
