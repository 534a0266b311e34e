"""Shared domain types for the monitoring pipeline.

Everything here is an immutable value type, safe to hand between the
per-chain pipeline threads. Fee amounts are integer wei internally; gwei
is a display/export unit only, so exact arithmetic never touches floats.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

WEI_PER_GWEI = 10**9


class InvalidProfile(ValueError):
    """A NetworkProfile failed validation."""


@dataclass(frozen=True)
class ChainRef:
    """One monitored network: a short name plus its EVM chain id."""

    name: str
    chain_id: int


@dataclass(frozen=True)
class GasQuantity:
    """An amount of gas units."""

    value: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError(f"gas quantity must be non-negative, got {self.value}")


@dataclass(frozen=True)
class FeeQuantity:
    """A per-gas fee in integer wei."""

    value_wei: int

    def __post_init__(self) -> None:
        if self.value_wei < 0:
            raise ValueError(f"fee must be non-negative wei, got {self.value_wei}")

    @property
    def gwei(self) -> float:
        """Display value in gwei; round-trips through from_gwei to within 1 wei."""
        return self.value_wei / WEI_PER_GWEI

    @classmethod
    def from_gwei(cls, gwei: float) -> FeeQuantity:
        return cls(round(gwei * WEI_PER_GWEI))


@dataclass(frozen=True)
class ReportedLimit:
    """Use the block gas limit exactly as the node reports it."""


@dataclass(frozen=True)
class OverrideLimit:
    """Cap the reported gas limit at an operator-configured effective value.

    Meant for chains that advertise inflated limits. The effective limit is
    min(reported, override), so an honestly reported lower limit is never
    inflated upward.
    """

    effective_limit: GasQuantity


LimitPolicy = ReportedLimit | OverrideLimit


class PriorityPolicy(Enum):
    """Whether the priority fee counts toward the effective gas price.

    EXCLUDE models chains that refund the priority fee and charge only the
    base fee.
    """

    INCLUDE = "include"
    EXCLUDE = "exclude"


class Flag(Enum):
    """Policy and anomaly markers attached to normalized block records."""

    LIMIT_OVERRIDDEN = "limit_overridden"
    PRIORITY_EXCLUDED = "priority_excluded"
    BASE_FEE_DEVIATION = "base_fee_deviation"
    USAGE_EXCEEDS_EFFECTIVE_LIMIT = "usage_exceeds_effective_limit"


@dataclass(frozen=True)
class NetworkProfile:
    """Per-chain configuration encoding that chain's reporting semantics."""

    chain: ChainRef
    rpc_url: str
    poll_interval_ms: int = 1000
    limit_policy: LimitPolicy = ReportedLimit()
    priority_policy: PriorityPolicy = PriorityPolicy.INCLUDE
    constant_base_fee_expected: bool = False
    base_fee_tolerance_wei: int = 0


@dataclass(frozen=True)
class ValidatedProfile(NetworkProfile):
    """A NetworkProfile that passed validate_profile.

    Downstream modules accept only this type, so an unvalidated profile
    cannot reach them. Construct via validate_profile.
    """


def validate_profile(profile: NetworkProfile) -> ValidatedProfile:
    """Check every profile invariant and return the profile marked valid.

    Raises InvalidProfile for an empty or non-ASCII chain name, a
    non-positive chain id or poll interval, a zero override limit, a
    negative base-fee tolerance, or a malformed endpoint string.
    """
    chain = profile.chain
    if not chain.name or not re.fullmatch(r"[A-Za-z0-9_\-]+", chain.name):
        raise InvalidProfile(
            f"chain name must be a nonempty ASCII identifier ([A-Za-z0-9_-]), got {chain.name!r}"
        )
    if chain.chain_id <= 0:
        raise InvalidProfile(f"{chain.name}: chain_id must be positive, got {chain.chain_id}")
    if "://" not in profile.rpc_url:
        raise InvalidProfile(f"{chain.name}: malformed endpoint {profile.rpc_url!r}")
    if profile.poll_interval_ms <= 0:
        raise InvalidProfile(
            f"{chain.name}: poll_interval_ms must be positive, got {profile.poll_interval_ms}"
        )
    if isinstance(profile.limit_policy, OverrideLimit):
        if profile.limit_policy.effective_limit.value <= 0:
            raise InvalidProfile(f"{chain.name}: override effective limit must be > 0 gas")
    if profile.base_fee_tolerance_wei < 0:
        raise InvalidProfile(
            f"{chain.name}: base_fee_tolerance_wei must be non-negative, "
            f"got {profile.base_fee_tolerance_wei}"
        )
    return ValidatedProfile(
        chain=profile.chain,
        rpc_url=profile.rpc_url,
        poll_interval_ms=profile.poll_interval_ms,
        limit_policy=profile.limit_policy,
        priority_policy=profile.priority_policy,
        constant_base_fee_expected=profile.constant_base_fee_expected,
        base_fee_tolerance_wei=profile.base_fee_tolerance_wei,
    )


@dataclass(frozen=True)
class RawBlockHeader:
    """A block header as reported by a node's RPC.

    priority_fee_observed is a block-level priority-fee estimate; None when
    the source does not sample one. gas_used <= gas_limit is enforced at
    ingest, not here, so a violating response surfaces as an ingest error
    instead of a constructor crash deep in a pipeline thread.
    """

    chain: ChainRef
    number: int
    timestamp: int
    gas_used: GasQuantity
    gas_limit: GasQuantity
    base_fee_per_gas: FeeQuantity
    priority_fee_observed: FeeQuantity | None = None


@dataclass(frozen=True)
class NormalizedBlockRecord:
    """A header after normalization: comparable effective limit and price."""

    chain: ChainRef
    number: int
    timestamp: int
    gas_used: GasQuantity
    gas_limit: GasQuantity
    base_fee_per_gas: FeeQuantity
    priority_fee_observed: FeeQuantity | None
    effective_gas_limit: GasQuantity
    effective_gas_price: FeeQuantity
    flags: frozenset[Flag]


class MetricKind(Enum):
    GAS_PRICE_GWEI = "gas_price_gwei"
    BLOCK_USAGE_RATIO = "block_usage_ratio"


@dataclass(frozen=True)
class MetricSample:
    """The unit flowing through the metric pipelines: one value per block."""

    chain: ChainRef
    block_number: int
    timestamp: int
    kind: MetricKind
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"metric value must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class SummaryStats:
    """Robust summary of a value window: median, quartiles, IQR, extremes."""

    count: int
    median: float
    q1: float
    q3: float
    iqr: float
    min: float
    max: float

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("SummaryStats needs at least one value")
        if not (self.min <= self.q1 <= self.median <= self.q3 <= self.max):
            raise ValueError(
                f"quartile ordering violated: min={self.min} q1={self.q1} "
                f"median={self.median} q3={self.q3} max={self.max}"
            )
        if self.iqr != self.q3 - self.q1 or self.iqr < 0:
            raise ValueError(f"iqr must equal q3 - q1 >= 0, got {self.iqr}")
