"""Per-window assignment: exact solver, brute-force oracle, greedy baseline.

The assignment problem picks exactly one candidate action per vehicle so
that no request is served twice, maximising the summed scores.  The exact
solver decomposes the problem into components of vehicles linked by shared
requests and runs two depth-first passes per component: a value pass over
vehicles in descending best-score order to establish the optimum, then a
reconstruction pass in ascending vehicle order that returns the
lexicographically smallest optimal assignment (by candidate index).

Totals and the per-vehicle bound accumulate one score per vehicle in
ascending id order; floating-point addition is monotone, so that bound can
never undercut the total of any assignment beneath it and pruning against
it is exact even under ties.  A complementary per-request surplus bound
covers windows where many vehicles contend for few requests; it is
admissible up to rounding and backed by an exact fallback.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from math import inf
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ContractError, InputError, InstanceTooLargeError


@dataclass(frozen=True)
class Candidate:
    """One scorable action of one vehicle, reduced to its request-id set."""

    requests: frozenset[int]
    score: float


@dataclass(frozen=True)
class MatchProblem:
    vehicle_ids: tuple[int, ...]
    candidates: dict[int, tuple[Candidate, ...]]
    batch_ids: frozenset[int]

    @classmethod
    def build(
        cls,
        candidates: Mapping[int, Sequence[Candidate]],
        batch_ids: Iterable[int],
    ) -> "MatchProblem":
        vehicle_ids = tuple(sorted(candidates))
        frozen = {v: tuple(candidates[v]) for v in vehicle_ids}
        return cls(vehicle_ids, frozen, frozenset(batch_ids))

    def validate(self) -> None:
        for v in self.vehicle_ids:
            cands = self.candidates[v]
            if not any(not c.requests for c in cands):
                raise InputError(f"vehicle {v} has no null candidate")
            for c in cands:
                stray = c.requests - self.batch_ids
                if stray:
                    raise InputError(f"vehicle {v} references requests outside the batch: {sorted(stray)}")


@dataclass(frozen=True)
class Matching:
    """One chosen candidate index per vehicle; requests pairwise disjoint."""

    chosen: dict[int, int]
    assigned: dict[int, frozenset[int]]
    total_score: float

    def served_request_ids(self) -> frozenset[int]:
        out: set[int] = set()
        for ids in self.assigned.values():
            out |= ids
        return frozenset(out)


def _masks(p: MatchProblem) -> dict[int, list[tuple[int, float]]]:
    bit = {rid: i for i, rid in enumerate(sorted(p.batch_ids))}
    out: dict[int, list[tuple[int, float]]] = {}
    for v in p.vehicle_ids:
        rows = []
        for c in p.candidates[v]:
            mask = 0
            for rid in c.requests:
                mask |= 1 << bit[rid]
            rows.append((mask, c.score))
        out[v] = rows
    return out


def _canonical_total(p: MatchProblem, chosen: Mapping[int, int]) -> float:
    total = 0.0
    for v in p.vehicle_ids:
        total += p.candidates[v][chosen[v]].score
    return total


def _finish(p: MatchProblem, chosen: dict[int, int]) -> Matching:
    assigned = {v: p.candidates[v][i].requests for v, i in chosen.items()}
    matching = Matching(dict(sorted(chosen.items())), assigned, _canonical_total(p, chosen))
    _check_matching(p, matching)
    return matching


def _check_matching(p: MatchProblem, m: Matching) -> None:
    if set(m.chosen) != set(p.vehicle_ids):
        raise ContractError("matching must assign exactly one action per vehicle")
    seen: set[int] = set()
    for v in p.vehicle_ids:
        ids = m.assigned[v]
        if ids & seen:
            raise ContractError(f"request served twice: {sorted(ids & seen)}")
        seen |= ids


def _components(p: MatchProblem, masks: dict[int, list[tuple[int, float]]]) -> list[list[int]]:
    """Vehicles grouped by transitively shared requests; independent subproblems."""
    parent: dict[int, int] = {v: v for v in p.vehicle_ids}

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    owner_of_bit: dict[int, int] = {}
    for v in p.vehicle_ids:
        combined = 0
        for mask, _ in masks[v]:
            combined |= mask
        while combined:
            bit = combined & -combined
            combined ^= bit
            if bit in owner_of_bit:
                parent[find(v)] = find(owner_of_bit[bit])
            else:
                owner_of_bit[bit] = v
    groups: dict[int, list[int]] = {}
    for v in p.vehicle_ids:
        groups.setdefault(find(v), []).append(v)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def _first_compatible(desc_rows: list[tuple[int, float]], used: int) -> float:
    for mask, score in desc_rows:
        if not mask & used:
            return score
    raise ContractError("no compatible candidate; the null action should always fit")


def _null_score(rows: list[tuple[int, float]]) -> float:
    return max(score for mask, score in rows if not mask)


def _request_surplus(
    vehicles: list[int], masks: dict[int, list[tuple[int, float]]]
) -> dict[int, float]:
    """Per-request-bit cap on the score gained over serving nothing.

    A candidate's surplus over its vehicle's null action is split evenly over
    its requests; the per-bit maximum of those shares bounds how much any
    assignment can earn from that request.  Complements the per-vehicle bound,
    which degenerates when many vehicles contend for few requests.
    """
    attr: dict[int, float] = {}
    for v in vehicles:
        null = _null_score(masks[v])
        for mask, score in masks[v]:
            if not mask:
                continue
            share = (score - null) / mask.bit_count()
            if share <= 0:
                continue
            bits = mask
            while bits:
                bit = bits & -bits
                bits ^= bit
                if share > attr.get(bit, 0.0):
                    attr[bit] = share
    return attr


_DYADIC_SCALE = float(2**20)


def _sums_are_exact(vehicles: list[int], masks: dict[int, list[tuple[int, float]]]) -> bool:
    """True when every score is a bounded dyadic and bundle sizes are powers of two.

    Under those conditions every subset sum and surplus share the solver forms
    fits exactly in a float64, so the surplus bound may prune on equality
    (which is what collapses plateaus of tied assignments).  Otherwise the
    surplus prune must leave a rounding margin.
    """
    for v in vehicles:
        for mask, score in masks[v]:
            if abs(score) > _DYADIC_SCALE:
                return False
            scaled = score * _DYADIC_SCALE
            if scaled != int(scaled):
                return False
            count = mask.bit_count()
            if count & (count - 1):
                return False
    return True


def _best_value(
    vehicles: list[int],
    masks: dict[int, list[tuple[int, float]]],
    desc: dict[int, list[tuple[int, float]]],
    use_surplus_bound: bool = True,
) -> float:
    """Optimal component score via depth-first search in descending-score order."""
    order = sorted(vehicles, key=lambda v: (-desc[v][0][1], v))
    position = {v: i for i, v in enumerate(vehicles)}
    term = [0.0] * len(vehicles)
    decided: dict[int, float] = {}
    best = -inf

    attr = _request_surplus(vehicles, masks) if use_surplus_bound else {}
    suffix_nulls = [0.0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        suffix_nulls[i] = suffix_nulls[i + 1] + _null_score(masks[order[i]])
    total_surplus = 0.0
    for bit in sorted(attr):
        total_surplus += attr[bit]
    # With inexact sums the surplus bound may round below a subtree's true
    # optimum, so it only prunes with this much headroom.
    if use_surplus_bound and _sums_are_exact(vehicles, masks):
        slack = 0.0
    else:
        slack = 1e-9 * (1.0 + abs(suffix_nulls[0]) + total_surplus)

    def vehicle_bound(used: int) -> float:
        for v in vehicles:
            if v in decided:
                term[position[v]] = decided[v]
            else:
                term[position[v]] = _first_compatible(desc[v], used)
        total = 0.0
        for value in term:
            total += value
        return total

    def dive(idx: int, used: int, partial: float, free_surplus: float) -> None:
        nonlocal best
        if idx == len(order):
            total = 0.0
            for v in vehicles:
                total += decided[v]
            if total > best:
                best = total
            return
        if use_surplus_bound and partial + suffix_nulls[idx] + free_surplus <= best - slack:
            return
        if vehicle_bound(used) <= best:
            return
        v = order[idx]
        for mask, score in desc[v]:
            if mask & used:
                continue
            claimed_surplus = 0.0
            bits = mask
            while bits:
                bit = bits & -bits
                bits ^= bit
                claimed_surplus += attr.get(bit, 0.0)
            decided[v] = score
            dive(idx + 1, used | mask, partial + score, free_surplus - claimed_surplus)
            del decided[v]

    dive(0, 0, 0.0, total_surplus)
    return best


def _lex_reconstruct(
    vehicles: list[int],
    masks: dict[int, list[tuple[int, float]]],
    desc: dict[int, list[tuple[int, float]]],
    target: float,
    use_surplus_bound: bool = True,
) -> dict[int, int] | None:
    """First assignment in lexicographic index order achieving the optimum.

    Acceptance is the exact float equality `partial == target`, so the
    tie-breaking rule is unaffected by pruning; the surplus prune carries a
    safety margin because that bound is exactly tight along optimal branches
    and must not lose them to rounding.
    """
    chosen: dict[int, int] = {}

    attr = _request_surplus(vehicles, masks) if use_surplus_bound else {}
    if use_surplus_bound and _sums_are_exact(vehicles, masks):
        margin = 0.0
    else:
        margin = 1e-6 * (1.0 + abs(target))
    suffix_nulls = [0.0] * (len(vehicles) + 1)
    for i in range(len(vehicles) - 1, -1, -1):
        suffix_nulls[i] = suffix_nulls[i + 1] + _null_score(masks[vehicles[i]])

    def vehicle_bound(idx: int, partial: float, used: int) -> float:
        total = partial
        for v in vehicles[idx:]:
            total += _first_compatible(desc[v], used)
        return total

    def dive(idx: int, partial: float, used: int, free_surplus: float) -> bool:
        if idx == len(vehicles):
            return partial == target
        v = vehicles[idx]
        for i, (mask, score) in enumerate(masks[v]):
            if mask & used:
                continue
            claimed_surplus = 0.0
            bits = mask
            while bits:
                bit = bits & -bits
                bits ^= bit
                claimed_surplus += attr.get(bit, 0.0)
            next_partial = partial + score
            if (
                use_surplus_bound
                and next_partial + suffix_nulls[idx + 1] + free_surplus - claimed_surplus
                < target - margin
            ):
                continue
            if vehicle_bound(idx + 1, next_partial, used | mask) < target:
                continue
            chosen[v] = i
            if dive(idx + 1, next_partial, used | mask, free_surplus - claimed_surplus):
                return True
        chosen.pop(v, None)
        return False

    total_surplus = 0.0
    for bit in sorted(attr):
        total_surplus += attr[bit]
    if dive(0, 0.0, 0, total_surplus):
        return chosen
    return None


def solve_ilp(p: MatchProblem) -> Matching:
    """Provably optimal matching with deterministic tie-breaking.

    Among score-optimal assignments, returns the one whose candidate indices
    are lexicographically smallest over vehicles in ascending id order.
    Vehicles that share no requests form independent components and are
    solved separately.
    """
    p.validate()
    masks = _masks(p)
    desc = {
        v: sorted(masks[v], key=lambda row: -row[1]) for v in p.vehicle_ids
    }
    chosen: dict[int, int] = {}
    for component in _components(p, masks):
        target = _best_value(component, masks, desc)
        found = _lex_reconstruct(component, masks, desc, target)
        if found is None:
            # The surplus bound is admissible up to float rounding; fall back
            # to the exact per-vehicle bound if it over-pruned.
            target = _best_value(component, masks, desc, use_surplus_bound=False)
            found = _lex_reconstruct(component, masks, desc, target, use_surplus_bound=False)
            if found is None:
                raise ContractError("optimal assignment vanished during reconstruction")
        chosen.update(found)
    return _finish(p, chosen)


BRUTE_FORCE_BUDGET = 10**7


def brute_force_match(p: MatchProblem) -> Matching:
    """Exhaustive oracle over all feasible joint assignments.

    Applies the same tie-breaking rule as solve_ilp; refuses instances whose
    candidate-list product exceeds the enumeration budget.
    """
    p.validate()
    size = 1
    for v in p.vehicle_ids:
        size *= len(p.candidates[v])
        if size > BRUTE_FORCE_BUDGET:
            raise InstanceTooLargeError(
                f"assignment space exceeds {BRUTE_FORCE_BUDGET} joint actions"
            )
    masks = _masks(p)
    vehicles = p.vehicle_ids
    best = -inf
    best_chosen: dict[int, int] | None = None
    chosen: dict[int, int] = {}

    def enumerate_from(idx: int, partial: float, used: int) -> None:
        nonlocal best, best_chosen
        if idx == len(vehicles):
            if partial > best:
                best = partial
                best_chosen = dict(chosen)
            return
        v = vehicles[idx]
        for i, (mask, score) in enumerate(masks[v]):
            if mask & used:
                continue
            chosen[v] = i
            enumerate_from(idx + 1, partial + score, used | mask)
        del chosen[v]

    enumerate_from(0, 0.0, 0)
    assert best_chosen is not None  # the all-null assignment is always feasible
    return _finish(p, best_chosen)


def async_greedy_match(p: MatchProblem, seed: int) -> Matching:
    """Decentralised baseline: vehicles pick greedily in seed-shuffled order."""
    p.validate()
    masks = _masks(p)
    order = list(p.vehicle_ids)
    random.Random(seed).shuffle(order)
    used = 0
    chosen: dict[int, int] = {}
    for v in order:
        best_i = None
        best_score = -inf
        for i, (mask, score) in enumerate(masks[v]):
            if mask & used:
                continue
            if score > best_score:
                best_score = score
                best_i = i
        assert best_i is not None
        chosen[v] = best_i
        used |= masks[v][best_i][0]
    return _finish(p, chosen)


def problem_to_json(p: MatchProblem) -> str:
    """Serialise a problem for offline inspection and replay."""
    doc = {
        "requests": sorted(p.batch_ids),
        "vehicles": [
            {
                "id": v,
                "actions": [
                    {"requests": sorted(c.requests), "score": c.score}
                    for c in p.candidates[v]
                ],
            }
            for v in p.vehicle_ids
        ],
    }
    return json.dumps(doc, indent=2)


def problem_from_json(text: str | Path) -> MatchProblem:
    """Inverse of problem_to_json; accepts a JSON string or a file path."""
    if isinstance(text, Path):
        text = text.read_text()
    doc = json.loads(text)
    candidates = {
        int(entry["id"]): [
            Candidate(frozenset(int(r) for r in action["requests"]), float(action["score"]))
            for action in entry["actions"]
        ]
        for entry in doc["vehicles"]
    }
    return MatchProblem.build(candidates, (int(r) for r in doc["requests"]))
