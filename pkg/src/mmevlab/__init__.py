"""Multi-block MEV analysis lab.

Detects maximal consecutive-win runs in relay traces, compares observed
run counts against a Bernoulli market-share null model (closed form and
Monte Carlo), simulates PBS auctions with pluggable bidding strategies,
and executes the buy-inject / sell-withhold AMM momentum play over a
secured window of blocks.
"""

__version__ = "0.1.0"

from .errors import ConfigError, InputDataError, MmevLabError
from .expectation import (
    ComparisonRow,
    ExpectationMethod,
    ExpectationRow,
    ExpectationTable,
    closed_form_table,
    compare_observed_expected,
    expected_all_entities,
    expected_runs_exact,
    expected_runs_mc,
)
from .runs import (
    QuartileStats,
    Run,
    RunHistogram,
    baselines_by_slot,
    detect_runs,
    escalation_index,
    naive_baseline,
    payment_by_position,
    payment_by_run_length,
    run_histogram,
)
from .trace import (
    KNOWN_BUILDER_ENTITIES,
    NON_PBS_ENTITY,
    BidRecord,
    DenominatorMode,
    EntityMap,
    MarketShare,
    ParseIssue,
    SlotMode,
    SlotOutcome,
    emit_bid_records,
    emit_slot_outcomes,
    load_entity_map,
    market_shares,
    normalize_pubkey,
    parse_bid_records,
    parse_slot_outcomes,
    resolve_entity,
)
from .units import WEI_PER_ETH, eth_to_wei, wei_to_eth

__all__ = [
    "BidRecord",
    "ComparisonRow",
    "ConfigError",
    "DenominatorMode",
    "EntityMap",
    "ExpectationMethod",
    "ExpectationRow",
    "ExpectationTable",
    "InputDataError",
    "KNOWN_BUILDER_ENTITIES",
    "MarketShare",
    "MmevLabError",
    "NON_PBS_ENTITY",
    "ParseIssue",
    "QuartileStats",
    "Run",
    "RunHistogram",
    "SlotMode",
    "SlotOutcome",
    "WEI_PER_ETH",
    "__version__",
    "baselines_by_slot",
    "closed_form_table",
    "compare_observed_expected",
    "detect_runs",
    "emit_bid_records",
    "emit_slot_outcomes",
    "escalation_index",
    "eth_to_wei",
    "expected_all_entities",
    "expected_runs_exact",
    "expected_runs_mc",
    "load_entity_map",
    "market_shares",
    "naive_baseline",
    "normalize_pubkey",
    "parse_bid_records",
    "parse_slot_outcomes",
    "payment_by_position",
    "payment_by_run_length",
    "resolve_entity",
    "run_histogram",
    "wei_to_eth",
]
