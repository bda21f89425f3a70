"""Passenger request streams: CSV replay, synthetic generation, batching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .network import AreaPartition, GroupId, StreetNetwork, group_of


@dataclass(frozen=True)
class Request:
    id: int
    pickup: int
    dropoff: int
    arrival: float
    group: GroupId

    def __post_init__(self) -> None:
        if self.pickup == self.dropoff:
            raise InputError(f"request {self.id}: pickup equals dropoff ({self.pickup})")
        if self.arrival < 0:
            raise InputError(f"request {self.id}: negative arrival {self.arrival}")


@dataclass(frozen=True)
class DemandProfile:
    """Per-group Poisson arrival rates, in expected requests per timestep."""

    rates: dict[GroupId, float]
    horizon: float
    seed: int
    step_seconds: float = 60.0

    def __post_init__(self) -> None:
        if any(rate < 0 for rate in self.rates.values()):
            raise ConfigError("demand rates must be nonnegative")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not self.step_seconds > 0:
            raise ConfigError(f"step must be positive, got {self.step_seconds}")


def load_requests(path: str | Path, partition: AreaPartition) -> list[Request]:
    """Parse a request CSV `pickup,dropoff,arrival[,ignored]` sorted by arrival.

    Ids are assigned in file order before sorting, so replayed traces keep
    stable identities regardless of arrival-time ordering in the file.
    """
    out: list[Request] = []
    next_id = 0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) not in (3, 4):
            raise ParseError(f"{path}:{lineno}: expected 'pickup,dropoff,arrival', got {raw!r}")
        try:
            pickup, dropoff = int(parts[0]), int(parts[1])
            arrival = float(parts[2])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field in {raw!r}") from None
        try:
            request = Request(
                next_id, pickup, dropoff, arrival, group_of(partition, pickup, dropoff)
            )
        except InputError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        out.append(request)
        next_id += 1
    out.sort(key=lambda r: (r.arrival, r.id))
    return out


def _group_location_pools(
    group: GroupId, partition: AreaPartition
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    pickups = partition.locations_in(group.origin_area)
    dropoffs = partition.locations_in(group.dest_area)
    if group.origin_area == group.dest_area and len(pickups) < 2:
        raise ConfigError(f"group {tuple(group)} has no valid pickup/dropoff pair")
    if not pickups or not dropoffs:
        raise ConfigError(f"group {tuple(group)} has no valid pickup/dropoff pair")
    return pickups, dropoffs


def synth_requests(
    profile: DemandProfile, net: StreetNetwork, partition: AreaPartition
) -> list[Request]:
    """Seeded Poisson request stream; identical output for identical profiles."""
    active = [(g, rate) for g, rate in sorted(profile.rates.items()) if rate > 0]
    pools = {g: _group_location_pools(g, partition) for g, _ in active}
    for g in pools:
        for loc in pools[g][0] + pools[g][1]:
            if loc not in net:
                raise ConfigError(f"partition maps location {loc} absent from the network")

    rng = np.random.default_rng(profile.seed)
    step = profile.step_seconds
    drawn: list[tuple[float, int, int]] = []
    n_steps = math.ceil(profile.horizon / step)
    for t in range(n_steps):
        start = t * step
        end = min(start + step, profile.horizon)
        scale = (end - start) / step
        for group, rate in active:
            pickups, dropoffs = pools[group]
            count = rng.poisson(rate * scale)
            for _ in range(count):
                arrival = rng.uniform(start, end)
                pickup = pickups[rng.integers(0, len(pickups))]
                if group.origin_area == group.dest_area:
                    others = [loc for loc in dropoffs if loc != pickup]
                    dropoff = others[rng.integers(0, len(others))]
                else:
                    dropoff = dropoffs[rng.integers(0, len(dropoffs))]
                drawn.append((arrival, pickup, dropoff))

    drawn.sort(key=lambda item: item[0])
    return [
        Request(i, pickup, dropoff, arrival, group_of(partition, pickup, dropoff))
        for i, (arrival, pickup, dropoff) in enumerate(drawn)
    ]


def batch(requests: list[Request], window_start: float, window_len: float) -> list[Request]:
    """Requests with window_start <= arrival < window_start + window_len."""
    if not window_len > 0:
        raise InputError(f"window length must be positive, got {window_len}")
    end = window_start + window_len
    return [r for r in requests if window_start <= r.arrival < end]
