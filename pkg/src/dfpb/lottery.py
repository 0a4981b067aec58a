"""Multiplicative-weights lottery over welfare-optimal outcomes.

Each iteration blends all districts into one convex combination, solves the
single-covering-row knapsack for the blend, and down-weights districts that did
better than their fair share.  The lottery is uniform over the iterates.

Losses are normalized to [-1, 1] by ``sw_max`` and the learning rate is
``epsilon / (2 * sw_max)``; with ``T = ceil(4 ln k * sw_max**2 / epsilon**2)``
this is the textbook Hedge regret bound expressed in welfare units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from dfpb.errors import ValidationError
from dfpb.model import FairShareProfile, Instance, Lottery, Outcome, as_fraction, check_lottery
from dfpb.shares import CoverKnapsackQuery, max_feasible_welfare, solve_cover_knapsack

SW_MAX_MODES = ("all_projects", "feasible_knapsack")
FRONTIER_MAX_PROJECTS = 20


@dataclass(frozen=True)
class MwConfig:
    epsilon: Fraction
    t_override: int | None = None
    sw_max_mode: str = "all_projects"
    # "auto" uses the profile frontier when m is small enough, else the DP
    inner: str = "auto"

    def __post_init__(self):
        eps = as_fraction(self.epsilon, "epsilon")
        if eps <= 0:
            raise ValidationError(f"epsilon must be positive, got {eps}")
        object.__setattr__(self, "epsilon", eps)
        if self.t_override is not None and (not isinstance(self.t_override, int) or self.t_override < 1):
            raise ValidationError(f"iterations must be a positive integer, got {self.t_override!r}")
        if self.sw_max_mode not in SW_MAX_MODES:
            raise ValidationError(f"sw_max_mode must be one of {SW_MAX_MODES}, got {self.sw_max_mode!r}")
        if self.inner not in ("auto", "frontier", "dp"):
            raise ValidationError(f"inner solver must be auto, frontier or dp, got {self.inner!r}")


@dataclass(frozen=True)
class MwIteration:
    weights: tuple[float, ...]
    proportions: tuple[Fraction, ...]
    blended_demand: Fraction
    blended_welfare: Fraction
    outcome: Outcome
    mistakes: tuple[int, ...]


@dataclass
class MwTrace:
    epsilon: Fraction
    sw_max: int
    iterations_planned: int
    learning_rate: float
    iterations: list[MwIteration] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iterations)


def compute_sw_max(instance: Instance, mode: str = "all_projects") -> int:
    if mode == "all_projects":
        return sum(instance.project_welfare)
    if mode == "feasible_knapsack":
        return max_feasible_welfare(instance)[0]
    raise ValidationError(f"unknown sw_max mode {mode!r}")


def iteration_count(k: int, epsilon, sw_max: int) -> int:
    """ceil(4 ln k * sw_max^2 / epsilon^2), at least 1."""
    eps = float(as_fraction(epsilon, "epsilon"))
    return max(1, math.ceil(4 * math.log(k) * sw_max**2 / eps**2))


def blend_district(instance: Instance, shares: FairShareProfile, proportions: Sequence) -> CoverKnapsackQuery:
    """Cover-knapsack query for the convex combination of districts."""
    p = [as_fraction(x, f"proportions[{i}]") for i, x in enumerate(proportions)]
    if len(p) != instance.k:
        raise ValidationError(f"expected {instance.k} proportions, got {len(p)}")
    if any(x < 0 for x in p) or sum(p) != 1:
        raise ValidationError("proportions must be nonnegative and sum to 1")
    weights = tuple(
        sum((pi * d.utilities[j] for pi, d in zip(p, instance.districts)), Fraction(0)) for j in range(instance.m)
    )
    threshold = sum((pi * f for pi, f in zip(p, shares.values)), Fraction(0))
    return CoverKnapsackQuery(instance.cost_cap, weights, threshold)


def _exact_proportions(pf: np.ndarray) -> tuple[list[int], int]:
    """Integers a_i and A with a_i / A the exact rational value of the float weights, renormalized."""
    ratios = [float(x).as_integer_ratio() for x in pf]
    den = max(d for _, d in ratios)
    nums = [n * (den // d) for n, d in ratios]
    return nums, sum(nums)


class ProfileFrontier:
    """All budget-feasible utility profiles, for answering blended queries fast.

    Every budget-feasible outcome is enumerated once; outcomes with the same
    per-district utility vector are merged, keeping the smallest bitmask.  A
    blended query is then a scan in (total welfare desc, bitmask asc) order for
    the first profile with ``sum_i p_i (u_i - f_i) >= 0``, which is exactly the
    answer ``solve_cover_knapsack`` gives for ``blend_district``.
    """

    def __init__(self, instance: Instance, shares: FairShareProfile):
        m, k = instance.m, instance.k
        if m > FRONTIER_MAX_PROJECTS:
            raise ValidationError(f"profile frontier limited to {FRONTIER_MAX_PROJECTS} projects")
        masks = np.arange(1 << m, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1).astype(np.int64)
        spent = bits @ np.array(instance.costs, dtype=np.int64)
        keep = spent <= instance.cost_cap
        masks, bits = masks[keep], bits[keep]
        util = np.array([d.utilities for d in instance.districts], dtype=np.int64).reshape(k, m)
        prof = bits @ util.T  # (N, k)
        # masks ascend, so return_index picks the smallest mask of each profile
        uniq, first = np.unique(prof, axis=0, return_index=True)
        uniq = uniq.reshape(-1, k)
        rep = masks[first]
        total = uniq.sum(axis=1)
        order = np.lexsort((rep, -total))
        self.deficits = uniq[order] - np.array(shares.values, dtype=np.int64)[None, :]
        self.masks = rep[order]
        self.scale = 1.0 + float(np.abs(self.deficits).max(initial=0))

    def solve(self, nums: Sequence[int], den: int, pf: np.ndarray) -> Outcome:
        vals = self.deficits @ pf
        tol = 1e-9 * self.scale
        for idx in np.flatnonzero(vals >= -tol):
            if vals[idx] > tol or sum(a * int(d) for a, d in zip(nums, self.deficits[idx])) >= 0:
                mask = int(self.masks[idx])
                return Outcome(frozenset(j for j in range(mask.bit_length()) if mask >> j & 1))
        raise AssertionError("blended query infeasible; the union of fair-share witnesses should satisfy it")


def run_mw_lottery(instance: Instance, shares: FairShareProfile, cfg: MwConfig) -> tuple[Lottery, MwTrace]:
    k = instance.k
    sw_max = compute_sw_max(instance, cfg.sw_max_mode)
    T = cfg.t_override if cfg.t_override is not None else iteration_count(k, cfg.epsilon, sw_max)
    eta = min(0.5, float(cfg.epsilon) / (2 * sw_max)) if sw_max > 0 else 0.0
    trace = MwTrace(cfg.epsilon, sw_max, T, eta)

    use_frontier = cfg.inner == "frontier" or (cfg.inner == "auto" and instance.m <= FRONTIER_MAX_PROJECTS)
    frontier = ProfileFrontier(instance, shares) if use_frontier else None

    util = [d.utilities for d in instance.districts]
    f = shares.values
    log_w = np.zeros(k)
    outcomes = []
    for _ in range(T):
        w = np.exp(log_w - log_w.max())
        pf = w / w.sum()
        nums, den = _exact_proportions(pf)
        if frontier is not None:
            W = frontier.solve(nums, den, pf)
        else:
            p = [Fraction(a, den) for a in nums]
            W = solve_cover_knapsack(instance, blend_district(instance, shares, p))
        got = [sum(u[j] for j in W.members) for u in util]
        mistakes = tuple(g - fi for g, fi in zip(got, f))
        trace.iterations.append(
            MwIteration(
                weights=tuple(float(x) for x in w),
                proportions=tuple(Fraction(a, den) for a in nums),
                blended_demand=Fraction(sum(a * fi for a, fi in zip(nums, f)), den),
                blended_welfare=Fraction(sum(a * g for a, g in zip(nums, got)), den),
                outcome=W,
                mistakes=mistakes,
            )
        )
        outcomes.append(W)
        if sw_max > 0:
            log_w -= eta * np.array(mistakes, dtype=float) / sw_max
    lottery = check_lottery(instance, Lottery.uniform(outcomes))
    return lottery, trace


@dataclass(frozen=True)
class RegretReport:
    average_blended_mistake: Fraction
    average_mistakes: tuple[Fraction, ...]
    slack: tuple[float, ...]
    holds: bool
    lhs_nonnegative: bool


def mw_regret_check(trace: MwTrace, tol: float = 1e-9) -> RegretReport:
    """Check (1/T) sum_t <p_t, m_t> <= eps + (1/T) sum_t m_i,t for every district."""
    T = len(trace.iterations)
    if T == 0:
        raise ValidationError("empty trace")
    k = len(trace.iterations[0].mistakes)
    lhs = sum(
        (sum((p * mi for p, mi in zip(it.proportions, it.mistakes)), Fraction(0)) for it in trace.iterations),
        Fraction(0),
    ) / T
    avg = tuple(Fraction(sum(it.mistakes[i] for it in trace.iterations), T) for i in range(k))
    slack = tuple(float(trace.epsilon + a - lhs) for a in avg)
    return RegretReport(lhs, avg, slack, all(s >= -tol for s in slack), lhs >= 0)
