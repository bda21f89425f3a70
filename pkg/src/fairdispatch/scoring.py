"""Per-(vehicle, action) score: value estimate, reward, fairness incentives.

The matcher maximises the sum of these scores, so everything the dispatch
policy cares about is expressed here: the plug-in value function, the
per-request rewards, and the two additive fairness incentives.  Passenger
incentives pay each request the gap between the mean service rate and its
group's rate; driver incentives scale the action reward by the driver's
income gap.  The plus variants clip at zero so well-off groups and drivers
are never penalised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigError, InputError, ParseError
from .fleet import Action, VehicleState
from .metrics import DriverHistory, PassengerHistory
from .network import AreaPartition

VFA_KINDS = ("zero", "delay", "table")

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class ScoreWeights:
    beta: float = 0.0
    delta: float = 0.0
    passenger_plus: bool = False
    driver_plus: bool = False

    def __post_init__(self) -> None:
        if self.beta < 0 or self.delta < 0:
            raise InputError(f"weights must be nonnegative, got beta={self.beta} delta={self.delta}")


@dataclass(frozen=True)
class ValueFunction:
    """Future-value estimator plugged into the score.

    kind "zero" ignores the future (the greedy policy), "delay" charges
    `omega` per second of added travel time, and "table" looks up the
    post-action state by (area, onboard count, time-of-day bucket); unseen
    keys are worth 0.
    """

    kind: str = "zero"
    omega: float = 1e-4
    table: dict[tuple[int, int, int], float] = field(default_factory=dict)
    bucket_seconds: float = 3600.0

    def __post_init__(self) -> None:
        if self.kind not in VFA_KINDS:
            raise ConfigError(f"unknown value function kind {self.kind!r}")
        if not self.bucket_seconds > 0:
            raise ConfigError("bucket_seconds must be positive")


def immediate_reward(
    v: VehicleState, a: Action, pricing: Mapping[int, float] | None = None
) -> float:
    """Sum of the action's request values; each request is worth 1 by default."""
    if pricing is None:
        return float(len(a.requests))
    return float(sum(pricing.get(r.id, 1.0) for r in a.requests))


def value_estimate(
    vfa: ValueFunction,
    v: VehicleState,
    a: Action,
    now: float = 0.0,
    partition: AreaPartition | None = None,
) -> float:
    if vfa.kind == "zero":
        return 0.0
    if vfa.kind == "delay":
        return -vfa.omega * a.added_delay
    if partition is None:
        raise InputError("table value function requires an area partition")
    end_location = a.plan[-1].location if a.plan else v.location
    key = (
        partition.area(end_location),
        len(v.onboard) + len(a.requests),
        int((now % SECONDS_PER_DAY) // vfa.bucket_seconds),
    )
    return vfa.table.get(key, 0.0)


def base_score(
    v: VehicleState,
    a: Action,
    vfa: ValueFunction,
    now: float = 0.0,
    partition: AreaPartition | None = None,
    pricing: Mapping[int, float] | None = None,
) -> float:
    """Value estimate plus immediate reward; the fairness-free objective."""
    return value_estimate(vfa, v, a, now, partition) + immediate_reward(v, a, pricing)


def passenger_incentive(a: Action, hist: PassengerHistory, plus: bool) -> float:
    """Sum over the action's requests of the mean-vs-group service-rate gap."""
    mean = hist.mean_rate()
    total = 0.0
    for r in a.requests:
        gap = mean - hist.rate_or_mean(r.group)
        if plus and gap < 0:
            gap = 0.0
        total += gap
    return total


def driver_incentive(
    v: VehicleState,
    a: Action,
    hist: DriverHistory,
    plus: bool,
    pricing: Mapping[int, float] | None = None,
) -> float:
    """Income gap of the driver times the action reward.

    The per-request clipped sum and the factored form agree because the
    driver's income gap is constant within an action.
    """
    gap = hist.mean_scaled() - hist.scaled_income(v.id)
    if plus and gap < 0:
        gap = 0.0
    return gap * immediate_reward(v, a, pricing)


def total_score(
    v: VehicleState,
    a: Action,
    vfa: ValueFunction,
    hist_p: PassengerHistory,
    hist_d: DriverHistory,
    w: ScoreWeights,
    now: float = 0.0,
    partition: AreaPartition | None = None,
    pricing: Mapping[int, float] | None = None,
) -> float:
    """Base score plus weighted fairness incentives; reduces to the base at 0/0."""
    score = base_score(v, a, vfa, now, partition, pricing)
    if w.beta:
        score += w.beta * passenger_incentive(a, hist_p, w.passenger_plus)
    if w.delta:
        score += w.delta * driver_incentive(v, a, hist_d, w.driver_plus, pricing)
    return score


def load_value_table(path: str | Path) -> dict[tuple[int, int, int], float]:
    """Parse a value-table CSV: `area_id,onboard_count,hour_bucket,value`."""
    table: dict[tuple[int, int, int], float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected 'area,onboard,bucket,value', got {raw!r}")
        try:
            key = (int(parts[0]), int(parts[1]), int(parts[2]))
            table[key] = float(parts[3])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field in {raw!r}") from None
    return table


def load_pricing(path: str | Path) -> dict[int, float]:
    """Parse a pricing CSV: `request_id,value`."""
    pricing: dict[int, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'request_id,value', got {raw!r}")
        try:
            value = float(parts[1])
            pricing[int(parts[0])] = value
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field in {raw!r}") from None
        if value < 0:
            raise ParseError(f"{path}:{lineno}: request values must be nonnegative")
    return pricing
