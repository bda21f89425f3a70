"""Discrete-time dispatch loop, weight sweeps, and theorem micro-instances.

Each window batches the requests that arrived during it, enumerates feasible
actions per vehicle, scores them against history snapshots frozen at window
start, solves the assignment, updates both fairness histories once, and
advances every vehicle by the window length.  Requests left unmatched at the
end of their window are dropped.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .demand import Request
from .errors import ConfigError, ContractError, InputError
from .fleet import RideConstraints, VehicleState, advance, feasible_actions
from .matcher import (
    Candidate,
    MatchProblem,
    Matching,
    async_greedy_match,
    problem_to_json,
    solve_ilp,
)
from .metrics import (
    DriverHistory,
    EquityReport,
    PassengerHistory,
    WindowMetrics,
    equity_report,
    update_driver_history,
    update_passenger_history,
)
from .network import AreaPartition, GroupId, StreetNetwork, group_of, grid_partition, make_grid
from .scoring import ScoreWeights, ValueFunction, base_score, immediate_reward, total_score

MATCHER_KINDS = ("ilp", "async_greedy")

DEFAULT_WEIGHT_LADDER = (1.0, 10.0, 1e3, 1e6)


@dataclass(frozen=True)
class SimConfig:
    window_len: float = 60.0
    horizon: float = 86400.0
    max_wait: float = 300.0
    max_detour: float = 300.0
    max_bundle: int = 2
    fleet_size: int = 20
    capacity: int = 2
    vfa: ValueFunction = field(default_factory=ValueFunction)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    matcher: str = "ilp"
    seed: int = 0
    incentives_enabled: bool = True
    pricing: dict[int, float] | None = None

    def __post_init__(self) -> None:
        if self.matcher not in MATCHER_KINDS:
            raise ConfigError(f"unknown matcher {self.matcher!r}")
        for name in ("window_len", "horizon", "max_wait"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_windows * self.window_len != self.horizon:
            raise ConfigError(
                f"window_len {self.window_len} does not divide horizon {self.horizon}"
            )

    @property
    def n_windows(self) -> int:
        return round(self.horizon / self.window_len)

    def constraints(self) -> RideConstraints:
        return RideConstraints(self.max_wait, self.max_detour, self.max_bundle)


@dataclass
class RunResult:
    total_requests: int
    total_served: int
    service_rate: float
    passenger_report: EquityReport
    driver_report: EquityReport
    window_rows: list[WindowMetrics]
    passenger_history: PassengerHistory
    driver_history: DriverHistory
    duration_seconds: float
    matchings: list[dict[int, tuple[int, ...]]] | None = None

    def to_json_dict(self) -> dict:
        return {
            "total_requests": self.total_requests,
            "total_served": self.total_served,
            "service_rate": self.service_rate,
            "windows": len(self.window_rows),
            "passenger": {
                "f_gini": self.passenger_report.f_gini,
                "min": self.passenger_report.min_value,
                "var": self.passenger_report.variance,
            },
            "driver": {
                "f_gini": self.driver_report.f_gini,
                "min_raw": self.driver_report.min_value,
                "var": self.driver_report.variance,
            },
            "duration_seconds": self.duration_seconds,
        }


def _passenger_report_or_vacuous(hist: PassengerHistory) -> EquityReport:
    # No demand yet: equity is vacuously perfect and 0/0 service counts as 1.
    if not hist.observed_groups():
        return EquityReport(1.0, 1.0, 0.0, 1.0)
    return equity_report(hist)


def _driver_report_or_vacuous(hist: DriverHistory) -> EquityReport:
    if not hist.incomes:
        return EquityReport(1.0, 0.0, 0.0, None)
    return equity_report(hist)


def build_window_problem(
    vehicles: list[VehicleState],
    batch: list[Request],
    now: float,
    net: StreetNetwork,
    cfg: SimConfig,
    hist_p: PassengerHistory,
    hist_d: DriverHistory,
    partition: AreaPartition | None,
    weights: ScoreWeights | None = None,
) -> tuple[MatchProblem, dict[int, list]]:
    """Enumerate and score candidate actions for one assignment window."""
    weights = cfg.weights if weights is None else weights
    constraints = cfg.constraints()
    actions_by: dict[int, list] = {}
    candidates: dict[int, list[Candidate]] = {}
    for v in vehicles:
        acts = feasible_actions(v, batch, now, net, constraints)
        rows = []
        for a in acts:
            if cfg.incentives_enabled:
                score = total_score(
                    v, a, cfg.vfa, hist_p, hist_d, weights, now, partition, cfg.pricing
                )
            else:
                score = base_score(v, a, cfg.vfa, now, partition, cfg.pricing)
            rows.append(Candidate(a.request_ids(), score))
        actions_by[v.id] = acts
        candidates[v.id] = rows
    problem = MatchProblem.build(candidates, [r.id for r in batch])
    return problem, actions_by


def _solve(problem: MatchProblem, cfg: SimConfig, window_index: int) -> Matching:
    if cfg.matcher == "ilp":
        return solve_ilp(problem)
    return async_greedy_match(problem, cfg.seed + window_index)


def run_simulation(
    cfg: SimConfig,
    net: StreetNetwork,
    partition: AreaPartition,
    requests: list[Request],
    fleet: list[VehicleState],
    passenger_history: PassengerHistory | None = None,
    driver_history: DriverHistory | None = None,
    record_trace: bool = False,
) -> RunResult:
    """Run the full dispatch loop; bit-reproducible for identical inputs."""
    started = time.perf_counter()
    if any(r.arrival >= cfg.horizon or r.arrival < 0 for r in requests):
        raise ConfigError("all request arrivals must lie within [0, horizon)")
    if any(requests[i].arrival > requests[i + 1].arrival for i in range(len(requests) - 1)):
        raise InputError("requests must be sorted by arrival time")

    vehicles = sorted((v.clone() for v in fleet), key=lambda v: v.id)
    hist_p = passenger_history if passenger_history is not None else PassengerHistory.empty()
    incomes = {v.id: 0.0 for v in vehicles}
    if driver_history is not None:
        incomes.update(driver_history.incomes)
    hist_d = DriverHistory(incomes)
    for v in vehicles:
        v.income = incomes[v.id]

    rows: list[WindowMetrics] = []
    trace: list[dict[int, tuple[int, ...]]] | None = [] if record_trace else None
    total_served = 0
    pointer = 0

    for k in range(cfg.n_windows):
        now = (k + 1) * cfg.window_len
        upper = pointer
        while upper < len(requests) and requests[upper].arrival < now:
            upper += 1
        window_batch = requests[pointer:upper]
        pointer = upper

        problem, actions_by = build_window_problem(
            vehicles, window_batch, now, net, cfg, hist_p, hist_d, partition
        )
        matching = _solve(problem, cfg, k)

        rewards = {
            v.id: immediate_reward(v, actions_by[v.id][matching.chosen[v.id]], cfg.pricing)
            for v in vehicles
        }
        hist_p = update_passenger_history(hist_p, window_batch, matching)
        hist_d = update_driver_history(hist_d, matching, rewards)
        total_served += len(matching.served_request_ids())

        for v in vehicles:
            chosen_action = actions_by[v.id][matching.chosen[v.id]]
            v.income += rewards[v.id]
            advance(v, chosen_action, cfg.window_len, net)

        if trace is not None:
            trace.append(
                {v.id: tuple(sorted(matching.assigned[v.id])) for v in vehicles}
            )

        p_report = _passenger_report_or_vacuous(hist_p)
        d_report = _driver_report_or_vacuous(hist_d)
        rows.append(
            WindowMetrics(
                window_index=k,
                overall_service_rate=p_report.overall_service_rate,
                passenger_f_gini=p_report.f_gini,
                passenger_min=p_report.min_value,
                passenger_var=p_report.variance,
                driver_f_gini=d_report.f_gini,
                driver_min_raw=d_report.min_value,
                driver_var=d_report.variance,
            )
        )

    total_requests = len(requests)
    if total_served > total_requests:
        raise ContractError("served more requests than arrived")
    return RunResult(
        total_requests=total_requests,
        total_served=total_served,
        service_rate=total_served / total_requests if total_requests else 1.0,
        passenger_report=_passenger_report_or_vacuous(hist_p),
        driver_report=_driver_report_or_vacuous(hist_d),
        window_rows=rows,
        passenger_history=hist_p,
        driver_history=hist_d,
        duration_seconds=time.perf_counter() - started,
        matchings=trace,
    )


@dataclass(frozen=True)
class SweepRow:
    beta: float
    delta: float
    passenger_plus: bool
    driver_plus: bool
    result: RunResult


def _sweep_point(payload) -> SweepRow:
    cfg, net, partition, requests, fleet, beta, delta, pp, dp = payload
    point_cfg = replace(cfg, weights=ScoreWeights(beta, delta, pp, dp))
    result = run_simulation(point_cfg, net, partition, requests, fleet)
    return SweepRow(beta, delta, pp, dp, result)


def sweep(
    cfg: SimConfig,
    net: StreetNetwork,
    partition: AreaPartition,
    requests: list[Request],
    fleet: list[VehicleState],
    betas: list[float],
    deltas: list[float],
    variants: list[tuple[bool, bool]],
    jobs: int = 1,
) -> list[SweepRow]:
    """One full run per (beta, delta, variant) over a shared demand realisation."""
    if not betas or not deltas or not variants:
        raise ConfigError("sweep grids must be nonempty")
    grid = [
        (cfg, net, partition, requests, fleet, beta, delta, pp, dp)
        for beta in sorted(betas)
        for delta in sorted(deltas)
        for pp, dp in sorted(variants)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, grid))
    else:
        results = [_sweep_point(point) for point in grid]
    return results


# ---------------------------------------------------------------------------
# Max-min fairness theorem harnesses
# ---------------------------------------------------------------------------
#
# Both micro-instances use single-request actions (capacity 1, bundle 1) and
# a single assignment window.  The builders randomise geometry, histories and
# request values but preserve the structural conditions that make the
# zero-weight matching min-unfair, which the check functions re-verify
# against the actual matching before sweeping the weight ladder.

_THEOREM_GRID_ROWS = 6
_THEOREM_GRID_COLS = 6
_THEOREM_EDGE_COST = 60.0


@dataclass(frozen=True)
class PassengerTheoremInstance:
    seed: int
    net: StreetNetwork
    partition: AreaPartition
    requests: list[Request]
    fleet: list[VehicleState]
    passenger_history: PassengerHistory
    pricing: dict[int, float]
    expected_group: GroupId
    config: SimConfig


@dataclass(frozen=True)
class DriverTheoremInstance:
    seed: int
    net: StreetNetwork
    partition: AreaPartition
    requests: list[Request]
    fleet: list[VehicleState]
    driver_history: DriverHistory
    pricing: dict[int, float]
    expected_driver: int
    config: SimConfig


@dataclass(frozen=True)
class TheoremOutcome:
    seed: int
    unfair_at_zero: bool
    baseline_metric: float
    ladder_metrics: dict[float, float]
    improved: bool
    problem_json: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.unfair_at_zero and self.improved


def _single_window_config(seed: int, pricing: dict[int, float], fleet_size: int) -> SimConfig:
    return SimConfig(
        window_len=60.0,
        horizon=60.0,
        max_wait=300.0,
        max_detour=300.0,
        max_bundle=1,
        fleet_size=fleet_size,
        capacity=1,
        vfa=ValueFunction(kind="zero"),
        weights=ScoreWeights(),
        matcher="ilp",
        seed=seed,
        pricing=pricing,
    )


def build_passenger_min_unfair_instance(seed: int) -> PassengerTheoremInstance:
    """Single-window scenario whose zero-weight matching starves the worst group.

    One vehicle can feasibly serve either a request of the historically worst
    group or a slightly more valuable request of a well-served group; padding
    vehicles are placed out of reach of both pickups.
    """
    rng = random.Random(seed)
    net = make_grid(_THEOREM_GRID_ROWS, _THEOREM_GRID_COLS, _THEOREM_EDGE_COST)
    partition = grid_partition(_THEOREM_GRID_ROWS, _THEOREM_GRID_COLS, _THEOREM_GRID_ROWS, 3)
    groups = [GroupId(o, d) for o in range(2) for d in range(2)]
    bad_group, good_group = rng.sample(groups, 2)
    slack = 300.0 - 60.0  # pickup deadline margin left after the batching window

    for _ in range(200):
        v1_loc = rng.choice(net.locations)
        bad_pool = [
            loc
            for loc in partition.locations_in(bad_group.origin_area)
            if net.travel_time(v1_loc, loc) <= slack
        ]
        good_pool = [
            loc
            for loc in partition.locations_in(good_group.origin_area)
            if net.travel_time(v1_loc, loc) <= slack
        ]
        if not bad_pool or not good_pool:
            continue
        pickup_bad = rng.choice(bad_pool)
        pickup_good = rng.choice(good_pool)
        padding_pool = [
            loc
            for loc in net.locations
            if net.travel_time(loc, pickup_bad) > slack
            and net.travel_time(loc, pickup_good) > slack
        ]
        if padding_pool:
            break
    else:
        raise ContractError(f"could not place a passenger theorem instance for seed {seed}")

    dropoff_bad = rng.choice(
        [loc for loc in partition.locations_in(bad_group.dest_area) if loc != pickup_bad]
    )
    dropoff_good = rng.choice(
        [loc for loc in partition.locations_in(good_group.dest_area) if loc != pickup_good]
    )
    requests = [
        Request(0, pickup_bad, dropoff_bad, rng.uniform(0.0, 40.0), bad_group),
        Request(1, pickup_good, dropoff_good, rng.uniform(0.0, 40.0), good_group),
    ]

    n_pad = rng.randint(1, 3)
    fleet = [VehicleState(0, v1_loc, capacity=1)]
    for i in range(n_pad):
        fleet.append(VehicleState(i + 1, rng.choice(padding_pool), capacity=1))

    requested_bad = rng.randint(8, 20)
    served_bad = max(0, round(requested_bad * rng.uniform(0.05, 0.25)))
    requested_good = rng.randint(8, 20)
    served_good = round(requested_good * rng.uniform(0.7, 0.95))
    requested = {bad_group: requested_bad, good_group: requested_good}
    served = {bad_group: served_bad, good_group: served_good}
    other_groups = [g for g in groups if g not in (bad_group, good_group)]
    if rng.random() < 0.5 and other_groups:
        extra = rng.choice(other_groups)
        requested[extra] = rng.randint(8, 20)
        served[extra] = round(requested[extra] * rng.uniform(0.5, 0.7))
    history = PassengerHistory(requested, served)
    others_min = min(
        history.service_rate(g) for g in history.observed_groups() if g != bad_group
    )
    if others_min <= history.service_rate(bad_group):
        # Rounding collapsed the gap between the worst group and the rest.
        served[bad_group] = 0
        history = PassengerHistory(requested, served)

    pricing = {1: rng.uniform(1.05, 1.5)}
    return PassengerTheoremInstance(
        seed=seed,
        net=net,
        partition=partition,
        requests=sorted(requests, key=lambda r: (r.arrival, r.id)),
        fleet=fleet,
        passenger_history=history,
        pricing=pricing,
        expected_group=bad_group,
        config=_single_window_config(seed, pricing, len(fleet)),
    )


def build_driver_min_unfair_instance(seed: int) -> DriverTheoremInstance:
    """Single-window scenario where a poor driver loses its best request.

    The below-average-income driver j can serve both requests, the rich
    driver k only the valuable one; the zero-weight optimum hands the
    valuable request to k and the cheap one to j.
    """
    rng = random.Random(seed)
    net = make_grid(_THEOREM_GRID_ROWS, _THEOREM_GRID_COLS, _THEOREM_EDGE_COST)
    partition = grid_partition(_THEOREM_GRID_ROWS, _THEOREM_GRID_COLS, _THEOREM_GRID_ROWS, 3)
    slack = 300.0 - 60.0

    for _ in range(500):
        pickup_hi = rng.choice(net.locations)
        pickup_lo = rng.choice([loc for loc in net.locations if loc != pickup_hi])
        j_pool = [
            loc
            for loc in net.locations
            if net.travel_time(loc, pickup_hi) <= slack
            and net.travel_time(loc, pickup_lo) <= slack
        ]
        k_pool = [
            loc
            for loc in net.locations
            if net.travel_time(loc, pickup_hi) <= slack
            and net.travel_time(loc, pickup_lo) > slack
        ]
        pad_pool = [
            loc
            for loc in net.locations
            if net.travel_time(loc, pickup_hi) > slack
            and net.travel_time(loc, pickup_lo) > slack
        ]
        if j_pool and k_pool:
            break
    else:
        raise ContractError(f"could not place a driver theorem instance for seed {seed}")

    dropoff_hi = rng.choice([loc for loc in net.locations if loc != pickup_hi])
    dropoff_lo = rng.choice([loc for loc in net.locations if loc != pickup_lo])
    requests = [
        Request(0, pickup_hi, dropoff_hi, rng.uniform(0.0, 40.0), group_of(partition, pickup_hi, dropoff_hi)),
        Request(1, pickup_lo, dropoff_lo, rng.uniform(0.0, 40.0), group_of(partition, pickup_lo, dropoff_lo)),
    ]
    pricing = {0: rng.uniform(1.6, 2.4)}

    fleet = [
        VehicleState(0, rng.choice(j_pool), capacity=1),
        VehicleState(1, rng.choice(k_pool), capacity=1),
    ]
    incomes = {0: rng.uniform(1.0, 4.0), 1: rng.uniform(8.0, 12.0)}
    n_pad = rng.randint(0, 2) if pad_pool else 0
    for i in range(n_pad):
        vid = 2 + i
        fleet.append(VehicleState(vid, rng.choice(pad_pool), capacity=1))
        incomes[vid] = rng.uniform(2.0, 7.0)

    return DriverTheoremInstance(
        seed=seed,
        net=net,
        partition=partition,
        requests=sorted(requests, key=lambda r: (r.arrival, r.id)),
        fleet=fleet,
        driver_history=DriverHistory(incomes),
        pricing=pricing,
        expected_driver=0,
        config=_single_window_config(seed, pricing, len(fleet)),
    )


def _one_window_matching(
    inst: PassengerTheoremInstance | DriverTheoremInstance,
    weights: ScoreWeights,
    hist_p: PassengerHistory,
    hist_d: DriverHistory,
) -> tuple[MatchProblem, dict[int, list], Matching]:
    vehicles = sorted((v.clone() for v in inst.fleet), key=lambda v: v.id)
    problem, actions_by = build_window_problem(
        vehicles,
        inst.requests,
        inst.config.window_len,
        inst.net,
        inst.config,
        hist_p,
        hist_d,
        inst.partition,
        weights=weights,
    )
    return problem, actions_by, solve_ilp(problem)


def check_passenger_theorem(
    inst: PassengerTheoremInstance,
    ladder: tuple[float, ...] = DEFAULT_WEIGHT_LADDER,
    plus: bool = False,
) -> TheoremOutcome:
    """Verify min-unfairness at weight 0, then look for a weight that helps."""
    hist_d = DriverHistory.zeroed([v.id for v in inst.fleet])
    problem0, _, matching0 = _one_window_matching(inst, ScoreWeights(), inst.passenger_history, hist_d)
    dump = problem_to_json(problem0)

    g_min = inst.expected_group
    hist = inst.passenger_history
    rates = {g: hist.service_rate(g) for g in hist.observed_groups()}
    if min(rates, key=lambda g: (rates[g], g)) != g_min:
        return TheoremOutcome(inst.seed, False, 0.0, {}, False, dump, "expected group is not the minimum")

    worst_requests = {r.id for r in inst.requests if r.group == g_min}
    served0 = matching0.served_request_ids()
    unserved_worst = worst_requests - served0
    witness = False
    for v in inst.fleet:
        feasible_ids = {
            rid for c in problem0.candidates[v.id] for rid in c.requests
        }
        assigned = matching0.assigned[v.id]
        if (
            unserved_worst & feasible_ids
            and assigned
            and not assigned & worst_requests
        ):
            witness = True
            break
    if not (unserved_worst and witness):
        return TheoremOutcome(
            inst.seed, False, 0.0, {}, False, dump, "zero-weight matching is not passenger-min-unfair"
        )

    after0 = update_passenger_history(hist, inst.requests, matching0)
    baseline = after0.service_rate(g_min)
    ladder_metrics: dict[float, float] = {}
    for beta in ladder:
        weights = ScoreWeights(beta=beta, passenger_plus=plus)
        _, _, matching = _one_window_matching(inst, weights, hist, hist_d)
        after = update_passenger_history(hist, inst.requests, matching)
        ladder_metrics[beta] = after.service_rate(g_min)
    improved = any(value > baseline for value in ladder_metrics.values())
    return TheoremOutcome(inst.seed, True, baseline, ladder_metrics, improved, dump)


def check_driver_theorem(
    inst: DriverTheoremInstance,
    ladder: tuple[float, ...] = DEFAULT_WEIGHT_LADDER,
    plus: bool = True,
) -> TheoremOutcome:
    """Verify driver-min-unfairness at weight 0, then sweep the ladder."""
    hist_p = PassengerHistory.empty()
    hist_d = inst.driver_history
    problem0, actions_by, matching0 = _one_window_matching(inst, ScoreWeights(), hist_p, hist_d)
    dump = problem_to_json(problem0)

    j = inst.expected_driver
    mean = hist_d.mean_scaled()
    if not hist_d.scaled_income(j) < mean:
        return TheoremOutcome(inst.seed, False, 0.0, {}, False, dump, "expected driver is not below average")

    def reward_of(rid: int) -> float:
        return inst.pricing.get(rid, 1.0)

    feasible_ids = {
        v.id: {rid for c in problem0.candidates[v.id] for rid in c.requests}
        for v in inst.fleet
    }
    j_feasible = sorted(feasible_ids[j])
    if not j_feasible:
        return TheoremOutcome(inst.seed, False, 0.0, {}, False, dump, "driver j has no feasible request")
    best_reward = max(reward_of(rid) for rid in j_feasible)
    top = [rid for rid in j_feasible if reward_of(rid) == best_reward]
    if len(top) != 1:
        return TheoremOutcome(inst.seed, False, 0.0, {}, False, dump, "driver j's preferred request is ambiguous")
    r_star = top[0]

    assigned_j = matching0.assigned[j]
    if not assigned_j or assigned_j == frozenset((r_star,)):
        return TheoremOutcome(
            inst.seed, False, 0.0, {}, False, dump, "zero-weight matching is not driver-min-unfair"
        )
    for v in inst.fleet:
        if v.id == j:
            continue
        if hist_d.scaled_income(v.id) < mean and r_star in feasible_ids[v.id]:
            return TheoremOutcome(
                inst.seed, False, 0.0, {}, False, dump, "another worse-off driver can serve the preferred request"
            )

    def updated_scaled(matching: Matching) -> float:
        rewards = {
            v.id: sum(reward_of(rid) for rid in sorted(matching.assigned[v.id]))
            for v in inst.fleet
        }
        return update_driver_history(hist_d, matching, rewards).scaled_income(j)

    baseline = updated_scaled(matching0)
    ladder_metrics: dict[float, float] = {}
    for delta in ladder:
        weights = ScoreWeights(delta=delta, driver_plus=plus)
        _, _, matching = _one_window_matching(inst, weights, hist_p, hist_d)
        ladder_metrics[delta] = updated_scaled(matching)
    improved = any(value > baseline for value in ladder_metrics.values())
    return TheoremOutcome(inst.seed, True, baseline, ladder_metrics, improved, dump)
