"""Exact district-fair welfare maximization.

``solve_exact_dp`` runs the multi-district recurrence over (demanded welfare per
district, project prefix, remaining budget).  ``oracle_solve`` is the independent
ground truth: exhaustive enumeration, vectorized with numpy.
"""

from __future__ import annotations

import itertools
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from dfpb.errors import CapabilityError, InfeasibleError
from dfpb.model import FairShareProfile, Instance, Outcome

DEFAULT_MAX_DISTRICTS = 3
ORACLE_MAX_COMBINATIONS = 2**24
_NEG = -1


def solve_exact_dp(
    instance: Instance,
    shares: FairShareProfile,
    max_districts: int = DEFAULT_MAX_DISTRICTS,
    memoize: bool = True,
) -> Outcome:
    """Welfare-optimal budget-feasible DF outcome in m^O(k) time.

    ``V(d, j, c)`` is the best total welfare of a subset of the first ``j``
    projects with cost <= c that gives every district i at least ``d[i]``; it is
    -1 when no such subset exists.  This is the boolean table R with the total
    welfare folded in as its value: R(d, s, j, c) holds iff V(d, j, c) >= s.
    Demands are clamped at 0, so axis i never exceeds f_i.
    """
    k = instance.k
    if k > max_districts:
        raise CapabilityError(
            f"exact DP is limited to {max_districts} districts (instance has {k}); "
            "use the lottery (solve-lottery) or DF1 (solve-df1) engines instead"
        )
    costs = instance.costs
    sw = instance.project_welfare
    cols = [tuple(d.utilities[j] for d in instance.districts) for j in range(instance.m)]

    def value(demand: tuple[int, ...], j: int, budget: int) -> int:
        if j == 0:
            return 0 if not any(demand) else _NEG
        best = V(demand, j - 1, budget)
        cj = costs[j - 1]
        if cj <= budget:
            rest = tuple(max(0, d - u) for d, u in zip(demand, cols[j - 1]))
            sub = V(rest, j - 1, budget - cj)
            if sub != _NEG and sub + sw[j - 1] > best:
                best = sub + sw[j - 1]
        return best

    V = lru_cache(maxsize=None)(value) if memoize else value

    limit = sys.getrecursionlimit()
    if instance.m + 100 > limit:
        sys.setrecursionlimit(instance.m + 100)
    try:
        demand = tuple(shares.values)
        budget = instance.cost_cap
        opt = V(demand, instance.m, budget)
        if opt == _NEG:
            raise InfeasibleError("no budget-feasible district-fair outcome exists")
        members = []
        target = opt
        for j in range(instance.m, 0, -1):
            if V(demand, j - 1, budget) >= target:
                continue
            members.append(j - 1)
            budget -= costs[j - 1]
            target -= sw[j - 1]
            demand = tuple(max(0, d - u) for d, u in zip(demand, cols[j - 1]))
        assert target == 0 and not any(demand)
        return Outcome(frozenset(members))
    finally:
        sys.setrecursionlimit(limit)


@dataclass(frozen=True)
class OracleResult:
    opt_welfare: int
    witness: Outcome
    all_df_outcomes_count: int


@dataclass(frozen=True)
class _Classes:
    """Projects grouped by identical (cost, utility column)."""

    members: tuple[tuple[int, ...], ...]
    costs: np.ndarray  # (C,)
    utils: np.ndarray  # (C, k)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(ms) for ms in self.members)


def _project_classes(instance: Instance) -> _Classes:
    groups: dict[tuple, list[int]] = {}
    for j in range(instance.m):
        key = (instance.costs[j],) + tuple(d.utilities[j] for d in instance.districts)
        groups.setdefault(key, []).append(j)
    keys = sorted(groups, key=lambda key: groups[key][0])
    members = tuple(tuple(groups[key]) for key in keys)
    costs = np.array([key[0] for key in keys], dtype=np.int64)
    utils = np.array([key[1:] for key in keys], dtype=np.int64).reshape(len(keys), instance.k)
    return _Classes(members, costs, utils)


def _enumerate(instance: Instance, shares: FairShareProfile, accept, threads: int = 1):
    """Exhaustive scan over every outcome, up to swapping identical projects.

    Identical projects (same cost and same utility for every district) are
    interchangeable, so outcomes are enumerated as per-class counts.  Returns the
    best welfare among accepted outcomes, the smallest-bitmask outcome achieving
    it, and the number of accepted outcomes.  ``accept(counts, welfare_matrix)``
    returns a boolean mask.
    """
    cls = _project_classes(instance)
    sizes = cls.sizes
    n_combos = math.prod(s + 1 for s in sizes)
    if n_combos > ORACLE_MAX_COMBINATIONS:
        raise CapabilityError(
            f"oracle would enumerate {n_combos} outcomes (limit {ORACLE_MAX_COMBINATIONS}); "
            "instance too large for brute force"
        )
    budget = instance.cost_cap
    radices = np.array([s + 1 for s in sizes], dtype=np.int64)
    chunk = 1 << 15

    def scan(lo: int, hi: int):
        idx = np.arange(lo, hi, dtype=np.int64)
        counts = np.empty((hi - lo, len(sizes)), dtype=np.int64)
        for c in range(len(sizes) - 1, -1, -1):
            counts[:, c] = idx % radices[c]
            idx //= radices[c]
        spent = counts @ cls.costs
        per_district = counts @ cls.utils
        ok = (spent <= budget) & accept(counts, per_district)
        if not ok.any():
            return -1, [], 0
        total = per_district.sum(axis=1)
        if all(s == 1 for s in sizes):
            n_ok = int(ok.sum())
        else:
            n_ok = sum(math.prod(math.comb(s, int(x)) for s, x in zip(sizes, row)) for row in counts[ok])
        best = int(total[ok].max())
        rows = counts[ok & (total == best)]
        return best, [tuple(int(x) for x in r) for r in rows], n_ok

    ranges = [(lo, min(lo + chunk, n_combos)) for lo in range(0, n_combos, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: scan(*r), ranges))
    else:
        parts = [scan(*r) for r in ranges]

    best = max(p[0] for p in parts)
    if best < 0:
        return None
    count = sum(p[2] for p in parts)

    def to_outcome(row) -> Outcome:
        return Outcome(frozenset(itertools.chain.from_iterable(ms[:x] for ms, x in zip(cls.members, row))))

    candidates = [to_outcome(r) for p in parts if p[0] == best for r in p[1]]
    witness = min(candidates, key=lambda o: sum(1 << j for j in o.members))
    return best, witness, count


def oracle_solve(instance: Instance, shares: FairShareProfile, threads: int = 1) -> OracleResult:
    """Brute-force OPT over all budget-feasible district-fair outcomes."""
    f = np.array(shares.values, dtype=np.int64)
    res = _enumerate(instance, shares, lambda counts, per: (per >= f).all(axis=1), threads)
    if res is None:
        raise InfeasibleError("no budget-feasible district-fair outcome exists")
    return OracleResult(*res)


def oracle_df1_frontier(instance: Instance, shares: FairShareProfile, threads: int = 1) -> OracleResult:
    """Brute-force max welfare over budget-feasible DF1 outcomes."""
    f = np.array(shares.values, dtype=np.int64)
    cls = _project_classes(instance)
    sizes = np.array(cls.sizes, dtype=np.int64)

    def accept(counts, per):
        # a class still offers a project iff not all of its copies are funded
        open_ = counts < sizes  # (N, C)
        best_left = (open_[:, :, None] * cls.utils[None, :, :]).max(axis=1)  # (N, k)
        return (per + best_left >= f).all(axis=1)

    res = _enumerate(instance, shares, accept, threads)
    if res is None:
        raise InfeasibleError("no budget-feasible DF1 outcome exists")
    return OracleResult(*res)
