"""The slot loop: schedule, strategy bids, auction, trace emission.

Builder ids are projected to synthetic 48-byte pubkeys (sha384 of the id)
so simulator output is format-identical to ingested relay traces, and
entity_map_for() maps those pubkeys back to the builder ids for the
analysis side.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..trace import BidRecord, EntityMap, SlotMode, SlotOutcome
from .auction import AuctionOutcome, Bid, run_auction
from .config import SimConfig
from .schedule import ProposerSchedule, build_schedule
from .strategies import SlotContext, make_strategy


def pubkey_for(builder_id: str) -> str:
    """Deterministic synthetic pubkey (96 hex chars) for a builder id."""
    return hashlib.sha384(builder_id.encode("utf-8")).hexdigest()


def entity_map_for(config: SimConfig) -> EntityMap:
    return EntityMap({pubkey_for(b.builder_id): b.builder_id for b in config.builders})


@dataclass(frozen=True)
class SimulationResult:
    config: SimConfig
    schedule: ProposerSchedule
    bids: tuple[BidRecord, ...]
    outcomes: tuple[SlotOutcome, ...]
    auctions: tuple[AuctionOutcome, ...]

    def entity_map(self) -> EntityMap:
        return entity_map_for(self.config)


def simulate(config: SimConfig) -> SimulationResult:
    """Run the full slot loop; deterministic given the config (incl. seed).

    Per slot: each builder is offered a SlotContext (schedule access is
    visibility-limited to the current epoch + 1), bids once, and the bid is
    fanned out to every relay the builder submits to; the auction then
    resolves against the slot's proposer. The loop is sequential because
    strategies carry state; worker counts never enter here.
    """
    schedule = build_schedule(config)
    validators = config.validators_by_id()
    builders = config.builders_by_id()
    strategies = {b.builder_id: make_strategy(b, config) for b in config.builders}
    pubkeys = {b.builder_id: pubkey_for(b.builder_id) for b in config.builders}
    relays_sorted = {b.builder_id: sorted(b.relays) for b in config.builders}
    own_wins = {b.builder_id: 0 for b in config.builders}
    won_prev = {b.builder_id: False for b in config.builders}

    spe = config.n_slots_per_epoch
    bid_records: list[BidRecord] = []
    outcomes: list[SlotOutcome] = []
    auctions: list[AuctionOutcome] = []

    for slot in range(config.n_slots):
        epoch = slot // spe
        slot_bids: list[Bid] = []
        for b in config.builders:
            ctx = SlotContext(
                slot=slot,
                current_epoch=epoch,
                schedule=schedule,
                validators=validators,
                median_estimate_wei=config.base_bid_wei,
                own_wins=own_wins[b.builder_id],
                own_won_prev=won_prev[b.builder_id],
            )
            value = strategies[b.builder_id].next_bid(ctx)
            if value is None:
                continue
            for relay_id in relays_sorted[b.builder_id]:
                slot_bids.append(Bid(slot=slot, builder_id=b.builder_id,
                                     relay_id=relay_id, value=value))
        proposer = validators[schedule.proposer_at(slot, epoch)]
        outcome = run_auction(slot, proposer, slot_bids, builders)
        auctions.append(outcome)
        for bid in slot_bids:
            bid_records.append(BidRecord(slot=slot, builder_pubkey=pubkeys[bid.builder_id],
                                         relay_id=bid.relay_id, value=bid.value))
        if outcome.mode is SlotMode.PBS:
            outcomes.append(SlotOutcome(slot=slot, mode=SlotMode.PBS,
                                        winner_pubkey=pubkeys[outcome.winner],  # type: ignore[index]
                                        payment=outcome.payment))
        else:
            outcomes.append(SlotOutcome(slot=slot, mode=SlotMode.LOCAL))
        for builder_id in won_prev:
            won_prev[builder_id] = outcome.winner == builder_id
        if outcome.winner is not None:
            own_wins[outcome.winner] += 1

    return SimulationResult(config=config, schedule=schedule, bids=tuple(bid_records),
                            outcomes=tuple(outcomes), auctions=tuple(auctions))
