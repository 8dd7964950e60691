"""Per-slot auction resolution: eligibility filter plus max-bid selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..trace import SlotMode
from .config import BuilderSpec, ValidatorSpec


@dataclass(frozen=True)
class Bid:
    slot: int
    builder_id: str
    relay_id: str
    value: int  # wei

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("bid value must be >= 0")


@dataclass(frozen=True)
class AuctionOutcome:
    """One slot's resolution. mode is PBS or LOCAL; the simulator never
    produces MISSED (that mode exists only for ingested real traces)."""

    slot: int
    mode: SlotMode
    winner: str | None  # builder_id
    payment: int | None  # wei, equals the winning bid
    losing_bids: tuple[Bid, ...]

    def __post_init__(self) -> None:
        if self.mode is SlotMode.PBS and (self.winner is None or self.payment is None):
            raise ValueError("PBS outcome needs winner and payment")
        if self.mode is not SlotMode.PBS and (self.winner is not None or self.payment is not None):
            raise ValueError("non-PBS outcome cannot carry winner or payment")


def eligible(builder: BuilderSpec, proposer: ValidatorSpec) -> bool:
    """All three conditions: proposer runs MEVboost, shares a relay with the
    builder, and (if it restricts builders at all) allowlists this one."""
    if not proposer.mevboost:
        return False
    if not builder.relays & proposer.relay_subscriptions:
        return False
    return proposer.builder_allowlist is None or builder.builder_id in proposer.builder_allowlist


def run_auction(
    slot: int,
    proposer: ValidatorSpec,
    bids: Sequence[Bid],
    builders: Mapping[str, BuilderSpec],
) -> AuctionOutcome:
    """Resolve one slot: highest eligible bid wins; ties go to the
    lexicographically smallest (builder_id, relay_id); no eligible bid or a
    non-MEVboost proposer means a locally built block."""
    for b in bids:
        if b.slot != slot:
            raise ValueError(f"bid for slot {b.slot} passed to auction for slot {slot}")
    eligible_bids = [
        b for b in bids
        if b.builder_id in builders and eligible(builders[b.builder_id], proposer)
    ]
    if not proposer.mevboost or not eligible_bids:
        return AuctionOutcome(slot=slot, mode=SlotMode.LOCAL, winner=None,
                              payment=None, losing_bids=tuple(bids))
    winner = min(eligible_bids, key=lambda b: (-b.value, b.builder_id, b.relay_id))
    losers = tuple(b for b in bids if b is not winner)
    return AuctionOutcome(slot=slot, mode=SlotMode.PBS, winner=winner.builder_id,
                          payment=winner.value, losing_bids=losers)
