"""Fair shares (0/1 knapsack per district) and the knapsack with one covering row.

Tie-breaking convention used throughout the package: among optimal outcomes the
one with the smallest bitmask ``sum(2**j for j in W)`` is returned.  This is what
prefix dynamic programming yields when backtracking from the last project and
preferring to skip a project whenever skipping still attains the optimum; in
particular, projects that add nothing are never included.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from dfpb.errors import InfeasibleError, ValidationError
from dfpb.model import FairShareProfile, Instance, Outcome, as_fraction


class _Frontier:
    """Pareto frontiers of (cost, value) over every prefix of the project list."""

    def __init__(self, values: Sequence[int], costs: Sequence[int], cap: int):
        self.values = values
        self.costs = costs
        self.cap = cap
        layers = [([0], [0])]
        for v, c in zip(values, costs):
            pc, pv = layers[-1]
            points = list(zip(pc, pv))
            if c <= cap and v > 0:
                points += [(x + c, y + v) for x, y in zip(pc, pv) if x + c <= cap]
            # sort by cost ascending, value descending; keep strictly improving values
            points.sort(key=lambda t: (t[0], -t[1]))
            nc, nv = [], []
            for x, y in points:
                if not nv or y > nv[-1]:
                    nc.append(x)
                    nv.append(y)
            layers.append((nc, nv))
        self.layers = layers

    def best(self, j: int, budget: int) -> int:
        """Max value using projects ``0..j-1`` with cost <= budget."""
        pc, pv = self.layers[j]
        idx = bisect_right(pc, budget) - 1
        return pv[idx] if idx >= 0 else -1

    def min_cost(self, target: int) -> int | None:
        pc, pv = self.layers[-1]
        for x, y in zip(pc, pv):
            if y >= target:
                return x
        return None

    def backtrack(self, budget: int, target: int) -> Outcome:
        members = []
        for j in range(len(self.values), 0, -1):
            if self.best(j - 1, budget) >= target:
                continue
            members.append(j - 1)
            budget -= self.costs[j - 1]
            target -= self.values[j - 1]
        assert budget >= 0 and target <= 0
        return Outcome(frozenset(members))


def knapsack(values: Sequence[int], costs: Sequence[int], cap: int) -> tuple[int, Outcome]:
    """Exact 0/1 knapsack: max value with cost <= cap (smallest-bitmask optimum)."""
    if cap < 0:
        raise InfeasibleError(f"negative capacity {cap}")
    fr = _Frontier(values, costs, cap)
    best = fr.best(len(values), cap)
    return best, fr.backtrack(cap, best)


def min_cost_cover(values: Sequence[int], costs: Sequence[int], target: int, cap: int) -> Outcome:
    """Cheapest outcome of value >= target and cost <= cap."""
    fr = _Frontier(values, costs, cap)
    c = fr.min_cost(target)
    if c is None:
        raise InfeasibleError(f"no outcome of cost <= {cap} reaches value {target}")
    return fr.backtrack(c, target)


def compute_fair_share(instance: Instance, district_id: int) -> tuple[int, Outcome]:
    """Deserved utility f_i and a witness W_i with cost <= b_i."""
    d = instance.district(district_id)
    cap = math.floor(d.budget_share)
    return knapsack(d.utilities, instance.costs, cap)


def compute_fair_shares(instance: Instance) -> FairShareProfile:
    pairs = [compute_fair_share(instance, i) for i in range(instance.k)]
    return FairShareProfile(tuple(f for f, _ in pairs), tuple(w for _, w in pairs))


def max_feasible_welfare(instance: Instance, cap: int | None = None) -> tuple[int, Outcome]:
    """Unconstrained (fairness-free) welfare maximum under the budget."""
    return knapsack(instance.project_welfare, instance.costs, instance.cost_cap if cap is None else cap)


@dataclass(frozen=True)
class CoverKnapsackQuery:
    """Maximize total welfare s.t. cost <= cost_cap and sum of cover weights >= threshold."""

    cost_cap: int
    cover_weights: tuple[Fraction, ...]
    cover_threshold: Fraction

    def __post_init__(self):
        weights = tuple(as_fraction(w, f"cover_weights[{j}]") for j, w in enumerate(self.cover_weights))
        if any(w < 0 for w in weights):
            raise ValidationError("cover weights must be nonnegative")
        thr = as_fraction(self.cover_threshold, "cover_threshold")
        if thr < 0:
            raise ValidationError(f"cover threshold must be >= 0, got {thr}")
        object.__setattr__(self, "cover_weights", weights)
        object.__setattr__(self, "cover_threshold", thr)


def solve_cover_knapsack(instance: Instance, q: CoverKnapsackQuery) -> Outcome:
    """Welfare-maximal outcome meeting the knapsack row and the covering row.

    The table ``T[j][c][s]`` holds the largest cover weight reachable with the
    first ``j`` projects at cost <= c and total welfare exactly ``s``.  Cover
    weights are scaled to integers by their common denominator, so every
    comparison is exact.
    """
    m = instance.m
    if len(q.cover_weights) != m:
        raise ValidationError(f"cover_weights has length {len(q.cover_weights)}, expected {m}")
    if q.cover_threshold > sum(q.cover_weights):
        raise InfeasibleError(
            f"cover threshold {q.cover_threshold} exceeds total cover weight {sum(q.cover_weights)}"
        )
    denom = math.lcm(q.cover_threshold.denominator, *(w.denominator for w in q.cover_weights))
    weights = [int(w * denom) for w in q.cover_weights]
    need = int(q.cover_threshold * denom)
    costs = instance.costs
    vals = instance.project_welfare
    cap = max(-1, min(q.cost_cap, sum(costs)))
    if cap < 0:
        raise InfeasibleError(f"negative cost cap {q.cost_cap}")
    top = sum(vals)

    NONE = -1
    layer = [[0] + [NONE] * top for _ in range(cap + 1)]
    layers = [layer]
    for j in range(m):
        cj, vj, wj = costs[j], vals[j], weights[j]
        new = [row[:] for row in layer]
        if cj <= cap:
            for c in range(cj, cap + 1):
                src = layer[c - cj]
                dst = new[c]
                for s in range(vj, top + 1):
                    x = src[s - vj]
                    if x != NONE and x + wj > dst[s]:
                        dst[s] = x + wj
        layers.append(new)
        layer = new

    final = layer[cap]
    best_s = next((s for s in range(top, -1, -1) if final[s] >= need), None)
    if best_s is None:
        raise InfeasibleError("no outcome satisfies both the budget and the covering constraint")

    members = []
    c, s, rem = cap, best_s, need
    for j in range(m, 0, -1):
        if layers[j - 1][c][s] >= max(rem, 0):
            continue
        members.append(j - 1)
        c -= costs[j - 1]
        s -= vals[j - 1]
        rem -= weights[j - 1]
    assert s == 0 and c >= 0
    return Outcome(frozenset(members))
