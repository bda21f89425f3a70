"""Fairness histories and equity measures.

Passenger-side fairness tracks cumulative per-group service rates; driver-side
fairness tracks cumulative incomes scaled by the current maximum income.
Both histories are updated functionally once per assignment window, so the
object held by the scorer during a window is an immutable snapshot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import fsum
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .errors import ContractError, InputError
from .network import GroupId

if TYPE_CHECKING:
    from .demand import Request
    from .matcher import Matching


@dataclass(frozen=True)
class PassengerHistory:
    """Cumulative requested/served counts per origin-destination group."""

    requested: dict[GroupId, int]
    served: dict[GroupId, int]

    def __post_init__(self) -> None:
        for group in self.served:
            if group not in self.requested:
                raise InputError(f"group {tuple(group)} served but never requested")
        for group, n in self.requested.items():
            s = self.served.get(group, 0)
            if n < 0 or s < 0 or s > n:
                raise InputError(f"group {tuple(group)}: served {s} exceeds requested {n}")

    @classmethod
    def empty(cls) -> "PassengerHistory":
        return cls({}, {})

    def observed_groups(self) -> tuple[GroupId, ...]:
        return tuple(sorted(g for g, n in self.requested.items() if n > 0))

    def service_rate(self, group: GroupId) -> float:
        return self.served.get(group, 0) / self.requested[group]

    def mean_rate(self) -> float:
        """Group-uniform mean of observed service rates; 0.0 before any demand."""
        groups = self.observed_groups()
        if not groups:
            return 0.0
        return fsum(self.service_rate(g) for g in groups) / len(groups)

    def rate_or_mean(self, group: GroupId) -> float:
        """Service rate of the group, falling back to the mean for unseen groups."""
        if self.requested.get(group, 0) > 0:
            return self.service_rate(group)
        return self.mean_rate()

    def totals(self) -> tuple[int, int]:
        return sum(self.requested.values()), sum(self.served.values())


@dataclass(frozen=True)
class DriverHistory:
    """Cumulative raw income per driver."""

    incomes: dict[int, float]

    def __post_init__(self) -> None:
        for driver, income in self.incomes.items():
            if income < 0:
                raise InputError(f"driver {driver}: negative income {income}")

    @classmethod
    def zeroed(cls, driver_ids: Sequence[int]) -> "DriverHistory":
        return cls({driver: 0.0 for driver in driver_ids})

    def drivers(self) -> tuple[int, ...]:
        return tuple(sorted(self.incomes))

    def scaled_income(self, driver: int) -> float:
        top = max(self.incomes.values())
        return self.incomes[driver] / top if top > 0 else 0.0

    def scaled_values(self) -> list[float]:
        top = max(self.incomes.values()) if self.incomes else 0.0
        if top <= 0:
            return [0.0 for _ in self.drivers()]
        return [self.incomes[d] / top for d in self.drivers()]

    def mean_scaled(self) -> float:
        values = self.scaled_values()
        return fsum(values) / len(values) if values else 0.0


def update_passenger_history(
    history: PassengerHistory, batch: Sequence["Request"], matching: "Matching"
) -> PassengerHistory:
    """Count every batch request as demand and every matched one as served."""
    batch_ids = {r.id for r in batch}
    served_ids = matching.served_request_ids()
    if not served_ids <= batch_ids:
        raise ContractError(f"matching serves requests outside the batch: {sorted(served_ids - batch_ids)}")
    requested = dict(history.requested)
    served = dict(history.served)
    for request in batch:
        requested[request.group] = requested.get(request.group, 0) + 1
        if request.id in served_ids:
            served[request.group] = served.get(request.group, 0) + 1
    return PassengerHistory(requested, served)


def update_driver_history(
    history: DriverHistory, matching: "Matching", rewards: dict[int, float]
) -> DriverHistory:
    """Accrue each vehicle's action reward to its driver."""
    incomes = dict(history.incomes)
    for driver, reward in rewards.items():
        incomes[driver] = incomes.get(driver, 0.0) + reward
    return DriverHistory(incomes)


def gini(values: Sequence[float]) -> float:
    """Mean absolute pairwise difference over twice the mean, in [0, 1].

    Computed from the sorted values so the summation order (and hence the
    float result) is independent of input permutation.
    """
    if not values:
        raise InputError("gini requires at least one value")
    if any(v < 0 for v in values):
        raise InputError("gini requires nonnegative values")
    xs = sorted(values)
    n = len(xs)
    total = fsum(xs)
    if total == 0:
        return 0.0
    weighted = fsum((2 * i - n + 1) * x for i, x in enumerate(xs))
    return weighted / (n * total)


@dataclass(frozen=True)
class EquityReport:
    f_gini: float
    min_value: float
    variance: float
    overall_service_rate: float | None


def _population_variance(values: Sequence[float]) -> float:
    mean = fsum(values) / len(values)
    return fsum((v - mean) ** 2 for v in values) / len(values)


def equity_report(history: PassengerHistory | DriverHistory) -> EquityReport:
    """Equity summary of a history: 1 - Gini, minimum, population variance.

    Driver reports use max-scaled incomes for Gini and variance but report the
    minimum on raw income; passenger reports add the overall service rate.
    """
    if isinstance(history, PassengerHistory):
        groups = history.observed_groups()
        if not groups:
            raise InputError("no passenger group observed yet")
        values = [history.service_rate(g) for g in groups]
        requested, served = history.totals()
        return EquityReport(
            f_gini=1.0 - gini(values),
            min_value=min(values),
            variance=_population_variance(values),
            overall_service_rate=served / requested,
        )
    if not history.incomes:
        raise InputError("no drivers observed yet")
    scaled = history.scaled_values()
    return EquityReport(
        f_gini=1.0 - gini(scaled),
        min_value=min(history.incomes[d] for d in history.drivers()),
        variance=_population_variance(scaled),
        overall_service_rate=None,
    )


def parity_violations(values: Sequence[float], epsilon: float) -> int:
    """Number of entries whose gap to the mean exceeds the slack epsilon."""
    if not values:
        raise InputError("parity check requires at least one value")
    mean = fsum(values) / len(values)
    return sum(1 for v in values if abs(mean - v) > epsilon)


METRICS_COLUMNS = (
    "window_index",
    "overall_service_rate",
    "passenger_f_gini",
    "passenger_min",
    "passenger_var",
    "driver_f_gini",
    "driver_min_raw",
    "driver_var",
)


@dataclass(frozen=True)
class WindowMetrics:
    window_index: int
    overall_service_rate: float
    passenger_f_gini: float
    passenger_min: float
    passenger_var: float
    driver_f_gini: float
    driver_min_raw: float
    driver_var: float

    def as_row(self) -> list[str]:
        return [
            str(self.window_index),
            repr(self.overall_service_rate),
            repr(self.passenger_f_gini),
            repr(self.passenger_min),
            repr(self.passenger_var),
            repr(self.driver_f_gini),
            repr(self.driver_min_raw),
            repr(self.driver_var),
        ]


def write_metrics_csv(rows: Sequence[WindowMetrics], path: str | Path) -> None:
    """One row per assignment window; floats at full round-trip precision."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(row.as_row())
