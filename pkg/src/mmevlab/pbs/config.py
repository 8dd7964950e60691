"""Simulation configuration: validators, relays, builders, strategies.

Configs come from JSON or from a simple block-structured text format (see
load_config); generators for synthetic validator sets live here too. All
randomness is derived from the config seed through labeled hashes, so
results never depend on construction order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import random

from ..errors import ConfigError

#: Public per-slot median-bid estimate, 0.046 ETH in wei. Strategies treat
#: this as an exogenous constant; deriving it from recent simulated slots
#: would feed the bidders' own noise back into the anchor and drift it.
DEFAULT_BASE_BID_WEI = 46_000_000_000_000_000

#: Default MEVboost adoption rate for generated validator sets (share of
#: blocks via relays over the measurement window; node-level adoption runs
#: closer to 0.9).
DEFAULT_MEVBOOST_RATE = 0.7602


def derive_seed(master: int, *labels: str) -> int:
    """Stable 64-bit sub-seed for a labeled purpose under a master seed."""
    h = hashlib.sha256()
    h.update(str(master).encode())
    for label in labels:
        h.update(b"|")
        h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


class StrategyKind(Enum):
    NAIVE = "naive"
    SEQUENCE_TARGETING = "sequence-targeting"


@dataclass(frozen=True)
class StrategySpec:
    """Bidding behavior knobs for one builder.

    win_weight sets the builder's relative win propensity among jittered
    bidders (realized share is weight / total weight of bidders in the
    slot); sigma scales the multiplicative bid jitter. delta and k_target
    only matter for SEQUENCE_TARGETING: escalate the bid by (1 + delta)
    per position inside a targeted window of at least k_target consecutive
    eligible slots.
    """

    kind: StrategyKind = StrategyKind.NAIVE
    win_weight: float = 1.0
    sigma: float = 0.01
    delta: float = 0.02
    k_target: int = 2

    def __post_init__(self) -> None:
        if self.win_weight <= 0:
            raise ConfigError("win_weight must be > 0")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if self.k_target < 1:
            raise ConfigError("k_target must be >= 1")


@dataclass(frozen=True)
class ValidatorSpec:
    """One validator: stake, pool membership, and relay posture.

    builder_allowlist None means no restriction; an empty set means the
    validator accepts no builder at all.
    """

    validator_id: str
    pool_id: str
    stake_weight: float
    mevboost: bool
    relay_subscriptions: frozenset[str] = frozenset()
    builder_allowlist: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.stake_weight <= 0:
            raise ConfigError(f"validator {self.validator_id}: stake_weight must be > 0")
        object.__setattr__(self, "relay_subscriptions", frozenset(self.relay_subscriptions))
        if self.builder_allowlist is not None:
            object.__setattr__(self, "builder_allowlist", frozenset(self.builder_allowlist))


@dataclass(frozen=True)
class BuilderSpec:
    builder_id: str
    strategy: StrategySpec = field(default_factory=StrategySpec)
    relays: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "relays", frozenset(self.relays))
        if not self.relays:
            raise ConfigError(f"builder {self.builder_id}: must submit to at least one relay")


@dataclass(frozen=True)
class SimConfig:
    epochs: int
    validators: tuple[ValidatorSpec, ...]
    relays: tuple[str, ...]
    builders: tuple[BuilderSpec, ...]
    n_slots_per_epoch: int = 32
    seed: int = 0
    base_bid_wei: int = DEFAULT_BASE_BID_WEI
    mevboost_rate: float = DEFAULT_MEVBOOST_RATE  # used only by config generators

    def __post_init__(self) -> None:
        object.__setattr__(self, "validators", tuple(self.validators))
        object.__setattr__(self, "relays", tuple(self.relays))
        object.__setattr__(self, "builders", tuple(self.builders))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.n_slots_per_epoch < 1:
            raise ConfigError("n_slots_per_epoch must be >= 1")
        if self.base_bid_wei <= 0:
            raise ConfigError("base_bid_wei must be > 0")
        if not self.validators:
            raise ConfigError("need at least one validator")
        if not self.relays:
            raise ConfigError("need at least one relay")
        known_relays = set(self.relays)
        if len(known_relays) != len(self.relays):
            raise ConfigError("duplicate relay_id")
        seen_v: set[str] = set()
        for v in self.validators:
            if v.validator_id in seen_v:
                raise ConfigError(f"duplicate validator_id {v.validator_id}")
            seen_v.add(v.validator_id)
            unknown = v.relay_subscriptions - known_relays
            if unknown:
                raise ConfigError(f"validator {v.validator_id}: unknown relays {sorted(unknown)}")
        seen_b: set[str] = set()
        for b in self.builders:
            if b.builder_id in seen_b:
                raise ConfigError(f"duplicate builder_id {b.builder_id}")
            seen_b.add(b.builder_id)
            unknown = b.relays - known_relays
            if unknown:
                raise ConfigError(f"builder {b.builder_id}: unknown relays {sorted(unknown)}")

    @property
    def n_slots(self) -> int:
        return self.epochs * self.n_slots_per_epoch

    def validators_by_id(self) -> dict[str, ValidatorSpec]:
        return {v.validator_id: v for v in self.validators}

    def builders_by_id(self) -> dict[str, BuilderSpec]:
        return {b.builder_id: b for b in self.builders}


def generate_validators(
    n: int,
    relays: Sequence[str],
    seed: int,
    *,
    mevboost_rate: float = DEFAULT_MEVBOOST_RATE,
    n_pools: int = 1,
    subscription_rate: float = 1.0,
    allowlist_pool: Sequence[str] | None = None,
    allowlist_rate: float = 0.0,
) -> tuple[ValidatorSpec, ...]:
    """Synthesize a validator set with Bernoulli MEVboost adoption.

    Each validator gets unit stake, a uniformly drawn pool, an independent
    subscription coin per relay, and (with allowlist_rate) a random
    non-empty allowlist drawn from allowlist_pool.
    """
    if n < 1:
        raise ConfigError("need n >= 1 validators")
    if not 0 <= mevboost_rate <= 1:
        raise ConfigError("mevboost_rate must be in [0, 1]")
    rng = random.Random(derive_seed(seed, "validators"))
    width = len(str(n - 1))
    out = []
    for i in range(n):
        subs = frozenset(r for r in relays if rng.random() < subscription_rate)
        allowlist: frozenset[str] | None = None
        if allowlist_pool and rng.random() < allowlist_rate:
            size = rng.randint(1, len(allowlist_pool))
            allowlist = frozenset(rng.sample(list(allowlist_pool), size))
        out.append(ValidatorSpec(
            validator_id=f"v{i:0{width}d}",
            pool_id=f"pool-{rng.randrange(n_pools):02d}",
            stake_weight=1.0,
            mevboost=rng.random() < mevboost_rate,
            relay_subscriptions=subs,
            builder_allowlist=allowlist,
        ))
    return tuple(out)


# ---------------------------------------------------------------------------
# config files


def _strategy_from_mapping(m: Mapping[str, object], where: str) -> StrategySpec:
    kind_raw = str(m.get("kind", "naive"))
    try:
        kind = StrategyKind(kind_raw)
    except ValueError:
        raise ConfigError(f"{where}: unknown strategy kind {kind_raw!r}") from None
    kwargs = {}
    for key in ("win_weight", "sigma", "delta"):
        if key in m:
            kwargs[key] = float(m[key])  # type: ignore[arg-type]
    if "k_target" in m:
        kwargs["k_target"] = int(m["k_target"])  # type: ignore[arg-type]
    return StrategySpec(kind=kind, **kwargs)


def _config_from_dict(doc: Mapping[str, object]) -> SimConfig:
    try:
        relays = tuple(str(r) for r in doc.get("relays", ()))
        builders = []
        for b in doc.get("builders", ()):  # type: ignore[union-attr]
            builders.append(BuilderSpec(
                builder_id=str(b["builder_id"]),
                strategy=_strategy_from_mapping(b.get("strategy", {}), f"builder {b['builder_id']}"),
                relays=frozenset(str(r) for r in b.get("relays", relays)),
            ))
        validators: tuple[ValidatorSpec, ...]
        if "validator_generator" in doc:
            gen = doc["validator_generator"]
            validators = generate_validators(
                n=int(gen["n"]),  # type: ignore[index]
                relays=relays,
                seed=int(gen.get("seed", doc.get("seed", 0))),  # type: ignore[union-attr]
                mevboost_rate=float(gen.get("mevboost_rate", doc.get("mevboost_rate", DEFAULT_MEVBOOST_RATE))),  # type: ignore[union-attr]
                n_pools=int(gen.get("n_pools", 1)),  # type: ignore[union-attr]
                subscription_rate=float(gen.get("subscription_rate", 1.0)),  # type: ignore[union-attr]
                allowlist_pool=[b.builder_id for b in builders] if gen.get("allowlist_rate") else None,  # type: ignore[union-attr]
                allowlist_rate=float(gen.get("allowlist_rate", 0.0)),  # type: ignore[union-attr]
            )
        else:
            validators = tuple(
                ValidatorSpec(
                    validator_id=str(v["validator_id"]),
                    pool_id=str(v.get("pool_id", "pool-00")),
                    stake_weight=float(v.get("stake_weight", 1.0)),
                    mevboost=bool(v.get("mevboost", True)),
                    relay_subscriptions=frozenset(str(r) for r in v.get("relay_subscriptions", relays)),
                    builder_allowlist=(
                        frozenset(str(x) for x in v["builder_allowlist"])
                        if v.get("builder_allowlist") is not None else None
                    ),
                )
                for v in doc.get("validators", ())  # type: ignore[union-attr]
            )
        return SimConfig(
            epochs=int(doc["epochs"]),  # type: ignore[arg-type]
            validators=validators,
            relays=relays,
            builders=tuple(builders),
            n_slots_per_epoch=int(doc.get("n_slots_per_epoch", 32)),  # type: ignore[arg-type]
            seed=int(doc.get("seed", 0)),  # type: ignore[arg-type]
            base_bid_wei=int(doc.get("base_bid_wei", DEFAULT_BASE_BID_WEI)),  # type: ignore[arg-type]
            mevboost_rate=float(doc.get("mevboost_rate", DEFAULT_MEVBOOST_RATE)),  # type: ignore[arg-type]
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None


def _parse_block_text(text: str) -> dict[str, object]:
    """Parse the block text format: [sim]/[validator]/[builder] sections of
    key = value lines; [validator] and [builder] may repeat. Values are
    parsed as JSON where possible (numbers, booleans, lists), else strings.
    """
    doc: dict[str, object] = {}
    validators: list[dict[str, object]] = []
    builders: list[dict[str, object]] = []
    current: dict[str, object] | None = doc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section == "sim":
                current = doc
            elif section == "validator":
                validators.append({})
                current = validators[-1]
            elif section == "builder":
                builders.append({})
                current = builders[-1]
            else:
                raise ConfigError(f"config line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            parsed: object = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        assert current is not None
        current[key] = parsed
    if validators:
        doc["validators"] = validators
    if builders:
        doc["builders"] = builders
    # nested strategy keys may be written flat in builder blocks
    for b in builders:
        strategy = {k: b.pop(k) for k in list(b) if k in ("kind", "win_weight", "sigma", "delta", "k_target")}
        if strategy:
            b["strategy"] = strategy
    return doc


def load_config(text: str, fmt: str | None = None) -> SimConfig:
    """Load a SimConfig from JSON or block text.

    fmt None auto-detects: a document starting with '{' is JSON.
    """
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "text"
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("JSON config must be an object")
        return _config_from_dict(doc)
    if fmt == "text":
        return _config_from_dict(_parse_block_text(text))
    raise ConfigError(f"unknown config format {fmt!r}")


def config_digest(config: SimConfig) -> str:
    """Stable hex digest of the full config, for report metadata."""
    def encode(obj: object) -> object:
        if isinstance(obj, frozenset):
            return sorted(obj)
        if isinstance(obj, Enum):
            return obj.value
        if hasattr(obj, "__dataclass_fields__"):
            return {k: encode(getattr(obj, k)) for k in obj.__dataclass_fields__}  # type: ignore[attr-defined]
        if isinstance(obj, (tuple, list)):
            return [encode(x) for x in obj]
        return obj

    blob = json.dumps(encode(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def builder_relay_pairs(config: SimConfig) -> Iterable[tuple[BuilderSpec, str]]:
    for b in config.builders:
        for r in sorted(b.relays):
            yield b, r
