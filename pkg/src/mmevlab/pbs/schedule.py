"""Proposer schedule: stake-weighted assignment with epoch-ahead visibility.

The whole schedule is drawn up front (it is deterministic in the seed), but
consumers must go through proposer_at(slot, current_epoch), which enforces
the protocol's visibility rule: while epoch N is current, only assignments
up to the end of epoch N+1 are queryable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..errors import ConfigError, MmevLabError
from .config import SimConfig, derive_seed


class HorizonError(MmevLabError):
    """Queried a proposer assignment beyond the revealed horizon."""


@dataclass(frozen=True)
class ProposerSchedule:
    n_slots_per_epoch: int
    assignments: tuple[str, ...]  # validator_id per slot, whole simulated range

    def __post_init__(self) -> None:
        if self.n_slots_per_epoch < 1:
            raise ValueError("n_slots_per_epoch must be >= 1")
        if not self.assignments:
            raise ValueError("empty schedule")

    @property
    def n_slots(self) -> int:
        return len(self.assignments)

    def epoch_of(self, slot: int) -> int:
        return slot // self.n_slots_per_epoch

    def horizon_slot(self, current_epoch: int) -> int:
        """Last slot visible while current_epoch is in progress."""
        return min((current_epoch + 2) * self.n_slots_per_epoch, self.n_slots) - 1

    def proposer_at(self, slot: int, current_epoch: int) -> str:
        if not 0 <= slot < self.n_slots:
            raise ValueError(f"slot {slot} outside simulated range")
        if self.epoch_of(slot) > current_epoch + 1:
            raise HorizonError(
                f"slot {slot} (epoch {self.epoch_of(slot)}) not revealed "
                f"during epoch {current_epoch}"
            )
        return self.assignments[slot]


def build_schedule(config: SimConfig) -> ProposerSchedule:
    """Draw each slot's proposer with probability proportional to stake."""
    ids = [v.validator_id for v in config.validators]
    weights = [v.stake_weight for v in config.validators]
    if sum(weights) <= 0:
        raise ConfigError("zero total stake")
    rng = random.Random(derive_seed(config.seed, "schedule"))
    assignments = tuple(rng.choices(ids, weights=weights, k=config.n_slots))
    return ProposerSchedule(n_slots_per_epoch=config.n_slots_per_epoch, assignments=assignments)
