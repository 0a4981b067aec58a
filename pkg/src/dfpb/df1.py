"""Coverage, DF1 completion, the welfare-floor pipeline and budget scaling.

All coverage arithmetic is exact: residual requirements are Fractions.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from dfpb.errors import CapabilityError, InfeasibleError, ValidationError
from dfpb.model import (
    District,
    FairShareProfile,
    FractionalOutcome,
    Instance,
    Outcome,
    as_fraction,
    is_df1,
)
from dfpb.shares import compute_fair_shares, max_feasible_welfare, min_cost_cover

EXACT_MAX_PROJECTS = 24
SUBROUTINES = ("exact", "greedy", "lazy_greedy")


@dataclass(frozen=True)
class CoverageReport:
    resid: tuple[Fraction, ...]
    cover: tuple[Fraction, ...]
    witnesses: tuple[FractionalOutcome, ...]
    total: Fraction


class CoverageModel:
    """Residual requirements and coverage for one (instance, fair shares) pair.

    The fractional-knapsack order of each district (zero-cost projects first,
    then utility per cost descending, ties by id) is computed once.
    """

    def __init__(self, instance: Instance, shares: FairShareProfile):
        if len(shares.values) != instance.k:
            raise ValidationError("fair-share profile does not match instance")
        self.instance = instance
        self.shares = shares
        costs = instance.costs
        # free projects: zero cost, positive welfare; resid ignores them, so
        # cover(W) = b implies DF only when W contains all of them
        self.free = frozenset(j for j in range(instance.m) if costs[j] == 0 and instance.project_welfare[j] > 0)
        self.orders = []
        for d in instance.districts:
            cand = [j for j in range(instance.m) if d.utilities[j] > 0]
            cand.sort(key=lambda j: (costs[j] != 0, -Fraction(d.utilities[j], costs[j] or 1), j))
            self.orders.append(tuple(cand))

    def _walk(self, i: int, members: frozenset[int]):
        """Yield (project, fraction numerator, denominator) of the residual witness."""
        u = self.instance.districts[i].utilities
        gap = self.shares.values[i] - sum(u[j] for j in members)
        for j in self.orders[i]:
            if gap <= 0:
                return
            if j in members:
                continue
            if u[j] >= gap:
                yield j, gap, u[j]
                return
            yield j, 1, 1
            gap -= u[j]

    def resid(self, i: int, members: frozenset[int]) -> Fraction:
        costs = self.instance.costs
        whole, part = 0, Fraction(0)
        for j, num, den in self._walk(i, members):
            if num == den:
                whole += costs[j]
            else:
                part = Fraction(costs[j] * num, den)
        return whole + part

    def residual(self, i: int, w: Outcome) -> tuple[Fraction, FractionalOutcome]:
        self.instance.district(i)
        members = self.instance.check_outcome(w).members
        fr = [Fraction(0)] * self.instance.m
        for j, num, den in self._walk(i, members):
            fr[j] = Fraction(num, den)
        witness = FractionalOutcome(tuple(fr))
        return self.resid(i, members), witness

    def cover_i(self, i: int, members: frozenset[int]) -> Fraction:
        return self.instance.districts[i].budget_share - self.resid(i, members)

    def cover(self, members: frozenset[int] | Outcome) -> Fraction:
        if isinstance(members, Outcome):
            members = members.members
        return sum((self.cover_i(i, members) for i in range(self.instance.k)), Fraction(0))

    def report(self, w: Outcome) -> CoverageReport:
        pairs = [self.residual(i, w) for i in range(self.instance.k)]
        resid = tuple(r for r, _ in pairs)
        cover = tuple(d.budget_share - r for d, r in zip(self.instance.districts, resid))
        return CoverageReport(resid, cover, tuple(p for _, p in pairs), sum(cover, Fraction(0)))


def residual(instance: Instance, shares: FairShareProfile, district_id: int, w: Outcome):
    """Minimum fractional spend outside ``w`` that lifts the district to its fair share."""
    return CoverageModel(instance, shares).residual(district_id, w)


def coverage(instance: Instance, shares: FairShareProfile, w: Outcome) -> CoverageReport:
    return CoverageModel(instance, shares).report(instance.check_outcome(w))


def _density_key(gain: Fraction, c: int, j: int):
    # zero-cost projects first, then gain per cost descending, then smallest id
    return (c != 0, -(gain / c) if c else -gain, j)


def df1_complete(
    instance: Instance, shares: FairShareProfile, w: Outcome, model: CoverageModel | None = None
) -> Outcome:
    """Extend ``w`` to a DF1 outcome, adding at most ``b - cover(w)`` in cost.

    Each step takes the failing district with the largest residual requirement
    and buys a project that its residual witness uses in full; such a project
    exists whenever the district fails DF1, and buying it lowers that residual by
    exactly its cost.
    """
    model = model or CoverageModel(instance, shares)
    members = set(instance.check_outcome(w).members)
    costs = instance.costs
    while not is_df1(instance, shares, Outcome(members)):
        frozen = frozenset(members)
        failing = [i for i in range(instance.k) if not _df1_ok(instance, shares, i, frozen)]
        i = max(failing, key=lambda i: (model.resid(i, frozen), -i))
        full = [j for j, num, den in model._walk(i, frozen) if num == den]
        assert full, "a DF1-failing district always has a fully used project in its witness"
        base = model.cover(frozen)
        j = min(full, key=lambda j: _density_key(model.cover(frozen | {j}) - base, costs[j], j))
        members.add(j)
    return Outcome(frozenset(members))


def _df1_ok(instance: Instance, shares: FairShareProfile, i: int, members: frozenset[int]) -> bool:
    u = instance.districts[i].utilities
    best = max((u[j] for j in range(instance.m) if j not in members), default=0)
    return sum(u[j] for j in members) + best >= shares.values[i]


@dataclass(frozen=True)
class Df1pQuery:
    welfare_floor: int
    budget_cap: int
    subroutine: str = "exact"

    def __post_init__(self):
        if self.subroutine not in SUBROUTINES:
            raise ValidationError(f"subroutine must be one of {SUBROUTINES}, got {self.subroutine!r}")
        if self.subroutine == "lazy_greedy":
            object.__setattr__(self, "subroutine", "greedy")
        if self.welfare_floor < 0:
            raise ValidationError(f"welfare floor must be >= 0, got {self.welfare_floor}")


@dataclass(frozen=True)
class CoverageRun:
    outcome: Outcome
    cover: Fraction
    welfare: int


def _outcome_from_mask(mask: int) -> Outcome:
    return Outcome(frozenset(j for j in range(mask.bit_length()) if mask >> j & 1))


def _mask(members) -> int:
    return sum(1 << j for j in members)


def _best(runs: Sequence[CoverageRun]) -> CoverageRun:
    return min(runs, key=lambda r: (-r.cover, -r.welfare, _mask(r.outcome.members)))


class ExactCoverageMaximizer:
    """Enumerates every outcome within the cost cap once; each welfare floor is then a scan."""

    def __init__(self, instance: Instance, shares: FairShareProfile, cap: int | None = None,
                 model: CoverageModel | None = None):
        m = instance.m
        if m > EXACT_MAX_PROJECTS:
            raise CapabilityError(f"exact coverage maximization is limited to {EXACT_MAX_PROJECTS} projects")
        self.instance = instance
        self.model = model or CoverageModel(instance, shares)
        cap = instance.cost_cap if cap is None else cap
        masks = np.arange(1 << m, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1).astype(np.int64)
        spent = bits @ np.array(instance.costs, dtype=np.int64)
        free = _mask(self.model.free)
        # adding free projects never hurts, so only supersets of them are optimal candidates
        keep = (spent <= cap) & ((masks & free) == free)
        masks = masks[keep]
        welfare = (bits[keep] @ np.array(instance.project_welfare, dtype=np.int64)).tolist()
        rows = []
        for mask, sw in zip(masks.tolist(), welfare):
            members = frozenset(j for j in range(m) if mask >> j & 1)
            rows.append((self.model.cover(members), sw, mask))
        rows.sort(key=lambda r: (-r[0], -r[1], r[2]))
        self.rows = rows
        self.max_welfare = max(r[1] for r in rows)

    def solve(self, welfare_floor: int) -> CoverageRun:
        for cover, sw, mask in self.rows:
            if sw >= welfare_floor:
                return CoverageRun(_outcome_from_mask(mask), cover, sw)
        raise InfeasibleError(
            f"no budget-feasible outcome reaches welfare {welfare_floor} (max {self.max_welfare})"
        )

    def best_cover(self, welfare_floor: int) -> Fraction | None:
        try:
            return self.solve(welfare_floor).cover
        except InfeasibleError:
            return None


class LazyGreedyCoverage:
    """Heuristic maximizer: lazy greedy on cover gain per cost from every seed of size <= 2.

    Greedy runs do not depend on the welfare floor and are cached.  For a given
    floor each greedy set is topped up by welfare per cost until it reaches the
    floor; the cheapest outcome meeting the floor, extended greedily, is always
    a candidate too, so a solution is returned whenever the floor is attainable.
    No approximation ratio is claimed.
    """

    def __init__(self, instance: Instance, shares: FairShareProfile, cap: int | None = None,
                 model: CoverageModel | None = None, seed_size: int = 2):
        self.instance = instance
        self.model = model or CoverageModel(instance, shares)
        self.cap = instance.cost_cap if cap is None else cap
        self.max_welfare = max_feasible_welfare(instance, self.cap)[0]
        costs = instance.costs
        seeds = [frozenset()]
        useful = [j for j in range(instance.m) if instance.project_welfare[j] > 0 and costs[j] > 0]
        if seed_size >= 1:
            seeds += [frozenset({j}) for j in useful if costs[j] <= self.cap]
        if seed_size >= 2:
            seeds += [
                frozenset(pair) for pair in itertools.combinations(useful, 2) if costs[pair[0]] + costs[pair[1]] <= self.cap
            ]
        self.greedy_sets = sorted({self.extend(s) for s in seeds}, key=_mask)

    def extend(self, start: frozenset[int], rng: random.Random | None = None, sample: int | None = None):
        """Lazy greedy from ``start``; with ``rng`` each step picks the best of a random sample."""
        costs = self.instance.costs
        members = set(start) | self.model.free
        spent = sum(costs[j] for j in members)
        cover = self.model.cover(frozenset(members))
        useful = [j for j in range(self.instance.m) if self.instance.project_welfare[j] > 0]
        if rng is not None:
            while True:
                pool = [j for j in useful if j not in members and spent + costs[j] <= self.cap]
                if not pool:
                    break
                pick = rng.sample(pool, min(len(pool), sample or len(pool)))
                gains = {j: self.model.cover(frozenset(members | {j})) - cover for j in pick}
                j = min(pick, key=lambda j: _density_key(gains[j], costs[j], j))
                if gains[j] <= 0:
                    # the sample may have missed every useful project; look at the whole pool once
                    gains = {j: self.model.cover(frozenset(members | {j})) - cover for j in pool}
                    j = min(pool, key=lambda j: _density_key(gains[j], costs[j], j))
                    if gains[j] <= 0:
                        break
                members.add(j)
                spent += costs[j]
                cover += gains[j]
            return frozenset(members)

        heap = []
        for j in useful:
            if j not in members and spent + costs[j] <= self.cap:
                gain = self.model.cover(frozenset(members | {j})) - cover
                heapq.heappush(heap, (_density_key(gain, costs[j], j), gain, j))
        while heap:
            _, _, j = heapq.heappop(heap)
            if spent + costs[j] > self.cap:
                continue
            gain = self.model.cover(frozenset(members | {j})) - cover
            key = _density_key(gain, costs[j], j)
            # submodularity: stale keys are upper bounds, so a fresh key still on top wins
            if heap and key > heap[0][0]:
                heapq.heappush(heap, (key, gain, j))
                continue
            if gain <= 0:
                break
            members.add(j)
            spent += costs[j]
            cover += gain
        return frozenset(members)

    def top_up(self, members: frozenset[int], welfare_floor: int) -> frozenset[int] | None:
        inst = self.instance
        costs, sw = inst.costs, inst.project_welfare
        current = set(members)
        spent = sum(costs[j] for j in current)
        have = sum(sw[j] for j in current)
        order = sorted(
            (j for j in range(inst.m) if j not in current and sw[j] > 0),
            key=lambda j: _density_key(Fraction(sw[j]), costs[j], j),
        )
        for j in order:
            if have >= welfare_floor:
                break
            if spent + costs[j] <= self.cap:
                current.add(j)
                spent += costs[j]
                have += sw[j]
        return frozenset(current) if have >= welfare_floor else None

    def candidates(self, welfare_floor: int, base_sets) -> list[CoverageRun]:
        if welfare_floor > self.max_welfare:
            raise InfeasibleError(
                f"no budget-feasible outcome reaches welfare {welfare_floor} (max {self.max_welfare})"
            )
        inst = self.instance
        cheapest = min_cost_cover(inst.project_welfare, inst.costs, welfare_floor, self.cap)
        sets = [self.extend(cheapest.members)]
        for g in base_sets:
            topped = self.top_up(g, welfare_floor)
            if topped is not None:
                sets.append(topped)
        sw = inst.project_welfare
        return [CoverageRun(Outcome(s), self.model.cover(s), sum(sw[j] for j in s)) for s in sets]

    def solve(self, welfare_floor: int) -> CoverageRun:
        return _best(self.candidates(welfare_floor, self.greedy_sets))


class RandomizedCoverage(LazyGreedyCoverage):
    """Stochastic greedy: each step evaluates a random half of the affordable projects."""

    def __init__(self, instance: Instance, shares: FairShareProfile, rng: random.Random,
                 cap: int | None = None, model: CoverageModel | None = None):
        super().__init__(instance, shares, cap, model, seed_size=0)
        sample = max(1, math.ceil(instance.m / 2))
        self.run_set = self.extend(frozenset(), rng=rng, sample=sample)

    def solve(self, welfare_floor: int) -> CoverageRun:
        return _best(self.candidates(welfare_floor, [self.run_set]))


def maximize_coverage(instance: Instance, shares: FairShareProfile, q: Df1pQuery) -> Outcome:
    """Max cover(W) subject to sw(W) >= welfare_floor and c(W) <= budget_cap."""
    if q.welfare_floor > sum(instance.project_welfare):
        raise InfeasibleError(f"welfare floor {q.welfare_floor} exceeds sw(P) = {sum(instance.project_welfare)}")
    if q.subroutine == "exact":
        solver = ExactCoverageMaximizer(instance, shares, q.budget_cap)
    else:
        solver = LazyGreedyCoverage(instance, shares, q.budget_cap)
    return solver.solve(q.welfare_floor).outcome


@dataclass(frozen=True)
class AmplifiedRun:
    best_index: int
    best: CoverageRun
    n: int
    eps0: float
    tail_bound: float


def hoeffding_bound(eps0: float, n: int) -> float:
    """exp(-2 eps0^2 (1 - 1/e)^2 n)."""
    return math.exp(-2 * eps0**2 * (1 - 1 / math.e) ** 2 * n)


def amplify_runs(runs: Sequence[CoverageRun], eps0: float = 0.1) -> AmplifiedRun:
    """Keep the best-coverage run (earliest on ties) and report the Hoeffding tail bound."""
    if not runs:
        raise ValidationError("amplify_runs needs at least one run")
    best_index = max(range(len(runs)), key=lambda t: (runs[t].cover, -t))
    return AmplifiedRun(best_index, runs[best_index], len(runs), eps0, hoeffding_bound(eps0, len(runs)))


class AmplifiedCoverage:
    """Best of ``n`` independent randomized runs, each seeded from ``seed``."""

    def __init__(self, instance: Instance, shares: FairShareProfile, n: int, seed: int,
                 eps0: float = 0.1, cap: int | None = None):
        if n < 1:
            raise ValidationError(f"amplify needs n >= 1, got {n}")
        model = CoverageModel(instance, shares)
        self.eps0 = eps0
        self.solvers = [
            RandomizedCoverage(instance, shares, random.Random(f"{seed}:{t}"), cap, model) for t in range(n)
        ]
        self.last: AmplifiedRun | None = None

    def solve(self, welfare_floor: int) -> CoverageRun:
        self.last = amplify_runs([s.solve(welfare_floor) for s in self.solvers], self.eps0)
        return self.last.best


@dataclass(frozen=True)
class Df1Result:
    outcome: Outcome
    welfare_floor: int
    base: Outcome
    base_cover: Fraction
    threshold: Fraction

    def __iter__(self):
        # unpacks as (outcome, achieved welfare floor)
        return iter((self.outcome, self.welfare_floor))


def solve_df1_pipeline(
    instance: Instance,
    shares: FairShareProfile,
    overspend_allowance=0,
    subroutine="exact",
) -> Df1Result:
    """Scan welfare floors, keep coverage >= b - allowance*b, complete the best-welfare one.

    ``subroutine`` is "exact", "greedy", or any object with ``solve(floor) ->
    CoverageRun``.  The exact subroutine's optimum is nonincreasing in the floor,
    so it uses binary search; every other subroutine scans floors downward from
    sw(P).
    """
    allowance = as_fraction(overspend_allowance, "overspend_allowance")
    if allowance < 0:
        raise ValidationError(f"overspend allowance must be >= 0, got {allowance}")
    if subroutine == "lazy_greedy":
        subroutine = "greedy"
    if isinstance(subroutine, str) and subroutine not in SUBROUTINES:
        raise ValidationError(f"subroutine must be one of {SUBROUTINES}, got {subroutine!r}")
    model = CoverageModel(instance, shares)
    b = Fraction(instance.budget)
    threshold = b - allowance * b
    top = sum(instance.project_welfare)

    if subroutine == "exact":
        solver = ExactCoverageMaximizer(instance, shares, model=model)
        lo, hi = 0, min(top, solver.max_welfare)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            best = solver.best_cover(mid)
            if best is not None and best >= threshold:
                lo = mid
            else:
                hi = mid - 1
        floor, run = lo, solver.solve(lo)
    else:
        solver = LazyGreedyCoverage(instance, shares, model=model) if subroutine == "greedy" else subroutine
        kept, fallback = None, None
        for B in range(top, -1, -1):
            try:
                run = solver.solve(B)
            except InfeasibleError:
                continue
            if fallback is None or run.cover > fallback[1].cover:
                fallback = (B, run)
            if run.cover >= threshold and (kept is None or run.welfare > kept[1].welfare):
                kept = (B, run)
        floor, run = kept or fallback

    completed = df1_complete(instance, shares, run.outcome, model)
    return Df1Result(completed, floor, run.outcome, run.cover, threshold)


@dataclass(frozen=True)
class ScaledInstance:
    beta: Fraction
    instance: Instance  # shares beta*b_i, budget beta*b (possibly non-integer)
    shares: FairShareProfile
    original: Instance

    @property
    def budget(self) -> Fraction:
        return Fraction(self.instance.budget)


def scale_instance(instance: Instance, beta) -> ScaledInstance:
    beta = as_fraction(beta, "beta")
    if not 0 < beta <= 1:
        raise ValidationError(f"beta must lie in (0, 1], got {beta}")
    districts = tuple(
        District(d.id, d.budget_share * beta, d.utilities, d.label) for d in instance.districts
    )
    scaled = Instance(instance.projects, districts, Fraction(instance.budget) * beta)
    return ScaledInstance(beta, scaled, compute_fair_shares(scaled), instance)


def solve_within_budget(instance: Instance, beta, subroutine="exact", allowance=None) -> Df1Result:
    """Run the pipeline on the scaled instance so the completed outcome fits the original budget.

    The default allowance is 0 for the exact subroutine (it reaches full
    coverage, so no completion is needed) and ``1/beta - 1`` otherwise, which
    bounds the completed cost by ``beta*b*(1 + allowance) = b``.
    """
    scaled = scale_instance(instance, beta)
    if allowance is None:
        allowance = 0 if subroutine == "exact" else 1 / scaled.beta - 1
    return solve_df1_pipeline(scaled.instance, scaled.shares, allowance, subroutine)
