"""PBS auction simulator: schedules, eligibility, strategies, slot loop."""

from .auction import AuctionOutcome, Bid, eligible, run_auction
from .config import (
    DEFAULT_BASE_BID_WEI,
    DEFAULT_MEVBOOST_RATE,
    BuilderSpec,
    SimConfig,
    StrategyKind,
    StrategySpec,
    ValidatorSpec,
    builder_relay_pairs,
    config_digest,
    derive_seed,
    generate_validators,
    load_config,
)
from .schedule import HorizonError, ProposerSchedule, build_schedule
from .sim import SimulationResult, entity_map_for, pubkey_for, simulate
from .strategies import (
    NaiveStrategy,
    SequenceTargetingStrategy,
    SlotContext,
    Strategy,
    make_strategy,
)

__all__ = [
    "AuctionOutcome",
    "Bid",
    "BuilderSpec",
    "DEFAULT_BASE_BID_WEI",
    "DEFAULT_MEVBOOST_RATE",
    "HorizonError",
    "NaiveStrategy",
    "ProposerSchedule",
    "SequenceTargetingStrategy",
    "SimConfig",
    "SimulationResult",
    "SlotContext",
    "Strategy",
    "StrategyKind",
    "StrategySpec",
    "ValidatorSpec",
    "build_schedule",
    "builder_relay_pairs",
    "config_digest",
    "derive_seed",
    "eligible",
    "entity_map_for",
    "generate_validators",
    "load_config",
    "make_strategy",
    "pubkey_for",
    "run_auction",
    "simulate",
]
