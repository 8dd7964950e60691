"""Constant-product AMM and the buy-inject / sell-withhold momentum play.

Reserves and trade sizes are integer base units with floor rounding (the
pool keeps the dust), matching on-chain convention. Every entry point also
accepts Fraction reserves/amounts and then computes exactly, with no
rounding anywhere; reference fixtures use that path to isolate floor
effects.

The momentum window covers k consecutive blocks controlled by one builder:
slot 1 opens with the builder's own buy, organic buys within slippage
tolerance are included as they arrive, sells are withheld for the whole
window, and the final slot closes with the builder selling its entire
position back into the pool.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .errors import MmevLabError


class SwapRejected(MmevLabError):
    """Swap output rounded to zero; the pool state is unchanged."""


class TxDirection(Enum):
    BUY = "BUY"  # X in, Y out
    SELL = "SELL"  # Y in, X out


@dataclass(frozen=True)
class AmmPool:
    reserve_x: int | Fraction
    reserve_y: int | Fraction
    fee_bps: int = 30

    def __post_init__(self) -> None:
        if self.reserve_x <= 0 or self.reserve_y <= 0:
            raise ValueError("reserves must be > 0")
        if not 0 <= self.fee_bps < 10_000:
            raise ValueError("fee_bps must be in [0, 10000)")

    @property
    def exact(self) -> bool:
        return isinstance(self.reserve_x, Fraction) or isinstance(self.reserve_y, Fraction)

    def spot_price_x_per_y(self) -> Fraction:
        """Marginal price of Y in X units; rises as X flows in."""
        return Fraction(self.reserve_x) / Fraction(self.reserve_y)

    def _in_out(self, direction: TxDirection):
        if direction is TxDirection.BUY:
            return self.reserve_x, self.reserve_y
        return self.reserve_y, self.reserve_x


def swap_exact_in(
    pool: AmmPool, direction: TxDirection, amount_in: int | Fraction
) -> tuple[int | Fraction, AmmPool]:
    """Constant-product swap with the fee taken from the input side.

    out = out_r * in_eff / (in_r + in_eff) with in_eff = in * (1 - fee),
    floor-rounded on the integer path, exact on the Fraction path. The full
    amount_in (fee included) lands in the pool. A swap whose output rounds
    to zero is rejected and leaves the pool unchanged.
    """
    if amount_in <= 0:
        raise ValueError("amount_in must be > 0")
    in_r, out_r = pool._in_out(direction)
    fee_scaled = 10_000 - pool.fee_bps
    num = out_r * amount_in * fee_scaled
    den = in_r * 10_000 + amount_in * fee_scaled
    exact = pool.exact or isinstance(amount_in, Fraction)
    amount_out = Fraction(num, den) if exact else num // den
    if amount_out <= 0:
        raise SwapRejected(f"{direction.value} of {amount_in} yields no output")
    new_in = in_r + amount_in
    new_out = out_r - amount_out
    if direction is TxDirection.BUY:
        new_pool = AmmPool(reserve_x=new_in, reserve_y=new_out, fee_bps=pool.fee_bps)
    else:
        new_pool = AmmPool(reserve_x=new_out, reserve_y=new_in, fee_bps=pool.fee_bps)
    return amount_out, new_pool


@dataclass(frozen=True)
class MempoolTx:
    """A pending swap with a slippage bound.

    max_price_impact caps the relative deviation of the average execution
    price from the spot price quoted at the admission check.
    arrival_slot_offset is 0-based: offset o becomes available in window
    slot o + 1.
    """

    tx_id: str
    direction: TxDirection
    amount_in: int | Fraction
    max_price_impact: float | Fraction
    arrival_slot_offset: int = 0

    def __post_init__(self) -> None:
        if self.amount_in <= 0:
            raise ValueError("amount_in must be > 0")
        if self.max_price_impact < 0:
            raise ValueError("max_price_impact must be >= 0")
        if self.arrival_slot_offset < 0:
            raise ValueError("arrival_slot_offset must be >= 0")


def price_impact(pool: AmmPool, direction: TxDirection, amount_in: int | Fraction) -> Fraction | None:
    """Relative excess of average execution price over spot, exact.

    Average and spot are both measured as input units per output unit, so
    the impact is >= 0 for any executable trade. None when the swap output
    rounds to zero (infinite effective price).
    """
    in_r, out_r = pool._in_out(direction)
    try:
        amount_out, _ = swap_exact_in(pool, direction, amount_in)
    except SwapRejected:
        return None
    # avg / spot - 1 = (a_in / a_out) / (in_r / out_r) - 1
    return Fraction(amount_in * out_r, amount_out * in_r) - 1


def admits(pool: AmmPool, tx: MempoolTx) -> bool:
    """Slippage check the strategy applies before including an organic tx."""
    impact = price_impact(pool, tx.direction, tx.amount_in)
    if impact is None:
        return False
    return impact <= Fraction(tx.max_price_impact)


BUILDER_BUY_ID = "builder-buy"
BUILDER_SELL_ID = "builder-sell"


@dataclass(frozen=True)
class ExecutedTx:
    tx_id: str
    direction: TxDirection
    amount_in: int | Fraction
    amount_out: int | Fraction


@dataclass(frozen=True)
class MomentumConfig:
    """Knobs for execute_momentum.

    max_injection_impact bounds the price impact of the builder's own
    injection so a "shallow pool" scenario cannot start from an absurd
    state. gas_cost_x (default 0) is subtracted once from profit; there is
    no gas model beyond this hook.
    """

    max_injection_impact: float | Fraction = 0.5
    gas_cost_x: int = 0

    def __post_init__(self) -> None:
        if self.max_injection_impact <= 0:
            raise ValueError("max_injection_impact must be > 0")
        if self.gas_cost_x < 0:
            raise ValueError("gas_cost_x must be >= 0")


@dataclass(frozen=True)
class StrategyResult:
    """Outcome of one momentum window.

    slots[i] is the executed tx list of window slot i + 1, in execution
    order, builder txs included. withheld lists sell tx ids seen in the
    window; rejected lists organic buys that failed the slippage check (or
    rounded to zero) at their arrival slot; they are not retried.
    spot_prices has k + 1 entries: before slot 1, then after each slot.
    """

    profit: int | Fraction
    x_spent: int | Fraction
    y_held_peak: int | Fraction
    x_recovered: int | Fraction
    slots: tuple[tuple[ExecutedTx, ...], ...]
    withheld: tuple[str, ...]
    rejected: tuple[str, ...]
    spot_prices: tuple[Fraction, ...]
    final_pool: AmmPool

    def __post_init__(self) -> None:
        executed = {tx.tx_id for comp in self.slots for tx in comp}
        overlap = executed & set(self.withheld)
        if overlap:
            raise ValueError(f"withheld txs executed: {sorted(overlap)}")

    def executed_ids(self) -> list[str]:
        return [tx.tx_id for comp in self.slots for tx in comp]


def execute_momentum(
    pool: AmmPool,
    window_k: int,
    mempool: Sequence[MempoolTx],
    builder_capital: int | Fraction,
    config: MomentumConfig = MomentumConfig(),
) -> StrategyResult:
    """Play the momentum strategy over a k-slot window.

    Mempool order is arrival order; a tx is considered from the slot its
    offset maps to. Organic buys run through admits() against the live pool
    and execute immediately or are rejected for good. Sells are withheld.
    Txs arriving after the window are ignored entirely. The builder's
    closing sell dumps its whole Y position, so holdings return to zero.
    """
    if window_k < 2:
        raise ValueError("window_k must be >= 2")
    if builder_capital <= 0:
        raise ValueError("builder_capital must be > 0")
    injection_impact = price_impact(pool, TxDirection.BUY, builder_capital)
    if injection_impact is None or injection_impact > Fraction(config.max_injection_impact):
        raise ValueError(
            f"builder capital {builder_capital} exceeds the max injection "
            f"impact bound {config.max_injection_impact}"
        )

    by_slot: dict[int, list[MempoolTx]] = {}
    for tx in mempool:
        slot = tx.arrival_slot_offset + 1
        if slot <= window_k:
            by_slot.setdefault(slot, []).append(tx)

    zero = Fraction(0) if (pool.exact or isinstance(builder_capital, Fraction)) else 0
    y_held = zero
    x_recovered = zero
    withheld: list[str] = []
    rejected: list[str] = []
    slots: list[tuple[ExecutedTx, ...]] = []
    spot_prices = [pool.spot_price_x_per_y()]

    for slot in range(1, window_k + 1):
        composition: list[ExecutedTx] = []
        if slot == 1:
            bought, pool = swap_exact_in(pool, TxDirection.BUY, builder_capital)
            y_held = y_held + bought
            composition.append(ExecutedTx(BUILDER_BUY_ID, TxDirection.BUY,
                                          builder_capital, bought))
        for tx in by_slot.get(slot, ()):
            if tx.direction is TxDirection.SELL:
                withheld.append(tx.tx_id)
                continue
            if not admits(pool, tx):
                rejected.append(tx.tx_id)
                continue
            try:
                out, pool = swap_exact_in(pool, tx.direction, tx.amount_in)
            except SwapRejected:
                rejected.append(tx.tx_id)
                continue
            composition.append(ExecutedTx(tx.tx_id, tx.direction, tx.amount_in, out))
        if slot == window_k and y_held > 0:
            recovered, pool = swap_exact_in(pool, TxDirection.SELL, y_held)
            composition.append(ExecutedTx(BUILDER_SELL_ID, TxDirection.SELL,
                                          y_held, recovered))
            x_recovered = x_recovered + recovered
            y_held = zero
        slots.append(tuple(composition))
        spot_prices.append(pool.spot_price_x_per_y())

    peak = max((tx.amount_out for comp in slots for tx in comp
                if tx.tx_id == BUILDER_BUY_ID), default=zero)
    profit = x_recovered - builder_capital - config.gas_cost_x
    return StrategyResult(
        profit=profit,
        x_spent=builder_capital,
        y_held_peak=peak,
        x_recovered=x_recovered,
        slots=tuple(slots),
        withheld=tuple(withheld),
        rejected=tuple(rejected),
        spot_prices=tuple(spot_prices),
        final_pool=pool,
    )


def breakeven_bid_premium(
    result: StrategyResult,
    baseline_bids_wei: Sequence[int],
    actual_bids_wei: Sequence[int],
    rate_wei_per_x: int,
) -> int:
    """Net value of the window in wei: AMM profit minus excess bid spend.

    The strategy is rational iff the premium is positive. Baselines and
    actual bids cover the same window slots, one value per slot.
    """
    if rate_wei_per_x <= 0:
        raise ValueError("rate_wei_per_x must be > 0")
    if len(baseline_bids_wei) != len(actual_bids_wei):
        raise ValueError("baseline and actual bid lists must have equal length")
    extra = sum(a - b for a, b in zip(actual_bids_wei, baseline_bids_wei))
    premium = result.profit * rate_wei_per_x - extra
    return int(premium)


# ---------------------------------------------------------------------------
# scenario files


@dataclass(frozen=True)
class MomentumScenario:
    pool: AmmPool
    window_k: int
    builder_capital: int | Fraction
    config: MomentumConfig = field(default_factory=MomentumConfig)
    mempool: tuple[MempoolTx, ...] = ()
    baseline_bids_wei: tuple[int, ...] | None = None
    actual_bids_wei: tuple[int, ...] | None = None
    rate_wei_per_x: int | None = None


def generate_mempool(
    window_k: int,
    seed: int,
    *,
    n_tx: int,
    buy_fraction: float = 0.7,
    amount_min: int = 1,
    amount_max: int = 100,
    tolerance_min: float = 0.01,
    tolerance_max: float = 0.5,
) -> tuple[MempoolTx, ...]:
    """Random organic flow: uniform sizes and tolerances, Bernoulli sides,
    arrival offsets uniform over the window."""
    if n_tx < 0:
        raise ValueError("n_tx must be >= 0")
    if amount_min < 1 or amount_max < amount_min:
        raise ValueError("need 1 <= amount_min <= amount_max")
    rng = random.Random(seed)
    out = []
    for i in range(n_tx):
        direction = TxDirection.BUY if rng.random() < buy_fraction else TxDirection.SELL
        out.append(MempoolTx(
            tx_id=f"tx{i:04d}",
            direction=direction,
            amount_in=rng.randint(amount_min, amount_max),
            max_price_impact=rng.uniform(tolerance_min, tolerance_max),
            arrival_slot_offset=rng.randrange(window_k),
        ))
    return tuple(out)


def _to_amount(value: object, exact: bool) -> int | Fraction:
    if isinstance(value, str):
        return Fraction(value) if exact else int(Fraction(value))
    if isinstance(value, (int, float)):
        return Fraction(value).limit_denominator(10**12) if exact else int(value)
    raise ValueError(f"bad amount {value!r}")


def load_scenario(text: str) -> MomentumScenario:
    """Parse a momentum scenario JSON document.

    "precision": "rational" switches reserves and capital to exact
    Fractions (amounts may then be strings like "1000/11"). A
    "mempool_generator" object (seed, n_tx, and the generate_mempool knobs)
    can replace or extend an explicit "mempool" list.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad scenario JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("scenario must be a JSON object")
    try:
        exact = doc.get("precision", "int") == "rational"
        pool_doc = doc["pool"]
        pool = AmmPool(
            reserve_x=_to_amount(pool_doc["reserve_x"], exact),
            reserve_y=_to_amount(pool_doc["reserve_y"], exact),
            fee_bps=int(pool_doc.get("fee_bps", 30)),
        )
        window_k = int(doc["window_k"])
        capital = _to_amount(doc["builder_capital"], exact)
        config = MomentumConfig(
            max_injection_impact=float(doc.get("max_injection_impact", 0.5)),
            gas_cost_x=int(doc.get("gas_cost_x", 0)),
        )
        mempool: list[MempoolTx] = []
        for i, t in enumerate(doc.get("mempool", ())):
            mempool.append(MempoolTx(
                tx_id=str(t.get("tx_id", f"tx{i:04d}")),
                direction=TxDirection(str(t["direction"]).upper()),
                amount_in=_to_amount(t["amount_in"], exact),
                max_price_impact=float(t["max_price_impact"]),
                arrival_slot_offset=int(t.get("arrival_slot_offset", 0)),
            ))
        if "mempool_generator" in doc:
            gen = dict(doc["mempool_generator"])
            mempool.extend(generate_mempool(window_k, int(gen.pop("seed", 0)), **gen))
        baseline = doc.get("baseline_bids_wei")
        actual = doc.get("actual_bids_wei")
        rate = doc.get("rate_wei_per_x")
        return MomentumScenario(
            pool=pool,
            window_k=window_k,
            builder_capital=capital,
            config=config,
            mempool=tuple(mempool),
            baseline_bids_wei=tuple(int(x) for x in baseline) if baseline is not None else None,
            actual_bids_wei=tuple(int(x) for x in actual) if actual is not None else None,
            rate_wei_per_x=int(rate) if rate is not None else None,
        )
    except KeyError as exc:
        raise ValueError(f"scenario missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad scenario value: {exc}") from None


def run_scenario(scenario: MomentumScenario) -> tuple[StrategyResult, int | None]:
    """Execute a scenario; premium is None unless bid context was given."""
    result = execute_momentum(scenario.pool, scenario.window_k, scenario.mempool,
                              scenario.builder_capital, scenario.config)
    premium = None
    if (scenario.baseline_bids_wei is not None and scenario.actual_bids_wei is not None
            and scenario.rate_wei_per_x is not None):
        premium = breakeven_bid_premium(result, scenario.baseline_bids_wei,
                                        scenario.actual_bids_wei, scenario.rate_wei_per_x)
    return result, premium
