import math
import random
from fractions import Fraction

import pytest

from _gen import brute_residual, random_instance, random_outcome, subsets
from dfpb.df1 import (
    AmplifiedCoverage,
    CoverageModel,
    CoverageRun,
    Df1pQuery,
    ExactCoverageMaximizer,
    LazyGreedyCoverage,
    amplify_runs,
    coverage,
    df1_complete,
    hoeffding_bound,
    maximize_coverage,
    residual,
    scale_instance,
    solve_df1_pipeline,
    solve_within_budget,
)
from dfpb.errors import CapabilityError, InfeasibleError, ValidationError
from dfpb.exact import oracle_solve
from dfpb.model import (
    FairShareProfile,
    Instance,
    Outcome,
    cost,
    is_df1,
    is_district_fair,
    total_welfare,
)
from dfpb.shares import compute_fair_shares


def profile(*values):
    return FairShareProfile(tuple(values), (Outcome(),) * len(values))


def test_residual_zero_when_satisfied():
    inst = Instance.build([1, 2], [[3, 1]], [2])
    r, p = residual(inst, profile(3), 0, Outcome.of(0))
    assert r == 0 and p.fractions == (0, 0)


def test_residual_fractional_project():
    # gap 3, the only remaining project has utility 4 and cost 2
    inst = Instance.build([2], [[4]], [2])
    r, p = residual(inst, profile(3), 0, Outcome())
    assert p.fractions == (Fraction(3, 4),)
    assert r == Fraction(3, 2)


def test_residual_zero_cost_project():
    inst = Instance.build([0, 5], [[2, 2]], [1])
    r, p = residual(inst, profile(2), 0, Outcome())
    assert r == 0 and p.fractions == (1, 0)


def test_residual_matches_lp_enumeration():
    rng = random.Random(71)
    for _ in range(200):
        inst = random_instance(rng, m=(1, 8))
        prof = compute_fair_shares(inst)
        w = random_outcome(rng, inst.m)
        for i in range(inst.k):
            r, p = residual(inst, prof, i, w)
            assert r == brute_residual(inst, prof.values[i], i, w.members)
            assert len(p.non_integral()) <= 1
            assert all(p.fractions[j] == 0 for j in w)
            assert sum(c * y for c, y in zip(inst.costs, p.fractions)) == r


def test_coverage_of_witness_union_is_budget():
    rng = random.Random(73)
    for _ in range(50):
        inst = random_instance(rng)
        prof = compute_fair_shares(inst)
        union = Outcome(frozenset().union(*(w.members for w in prof.witnesses)))
        rep = coverage(inst, prof, union)
        assert rep.total == inst.budget and all(r == 0 for r in rep.resid)


def test_coverage_empty_outcome_full_requirement():
    inst = Instance.build([2], [[5]], [2])
    rep = coverage(inst, compute_fair_shares(inst), Outcome())
    assert rep.cover == (0,) and rep.resid == (2,)


def test_coverage_report_invariants():
    rng = random.Random(79)
    for _ in range(100):
        inst = random_instance(rng)
        prof = compute_fair_shares(inst)
        w = random_outcome(rng, inst.m)
        rep = coverage(inst, prof, w)
        for d, r, c in zip(inst.districts, rep.resid, rep.cover):
            assert c == d.budget_share - r
            assert 0 <= c <= d.budget_share
        assert rep.total == sum(rep.cover) <= inst.budget
        if is_district_fair(inst, prof, w):
            assert rep.total == inst.budget
        # the converse needs every free project (cost 0, positive welfare) funded
        closed = w.union(CoverageModel(inst, prof).free)
        assert (coverage(inst, prof, closed).total == inst.budget) == is_district_fair(inst, prof, closed)


def test_full_cover_without_free_project_is_not_df():
    # district 0 has share 0 but a free project worth 2 to it
    inst = Instance.build([0, 1], [[2, 0], [0, 1]], [0, 1])
    prof = compute_fair_shares(inst)
    assert prof.values == (2, 1)
    w = Outcome.of(1)
    assert coverage(inst, prof, w).total == inst.budget
    assert not is_district_fair(inst, prof, w)
    assert is_district_fair(inst, prof, w.union({0}))


def test_cover_monotone_submodular():
    rng = random.Random(83)
    done = 0
    while done < 200:
        inst = random_instance(rng, m=(2, 9))
        prof = compute_fair_shares(inst)
        model = CoverageModel(inst, prof)
        big = random_outcome(rng, inst.m).members
        small = frozenset(j for j in big if rng.random() < 0.5)
        outside = [j for j in range(inst.m) if j not in big]
        if not outside:
            continue
        x = rng.choice(outside)
        assert model.cover(small) <= model.cover(big)
        assert model.cover(small | {x}) - model.cover(small) >= model.cover(big | {x}) - model.cover(big)
        done += 1


def test_complete_leaves_df1_unchanged():
    inst = Instance.build([1, 1], [[3, 2]], [2])
    prof = compute_fair_shares(inst)
    assert df1_complete(inst, prof, Outcome.of(0)) == Outcome.of(0)


def test_complete_single_district_trace():
    # f = 4, projects (u, cost) a=(3,1), b=(2,1), b_i = b = 2, start from nothing
    inst = Instance.build([1, 1], [[3, 2]], [2])
    prof = profile(4)
    w = df1_complete(inst, prof, Outcome())
    assert w == Outcome.of(0)
    assert is_df1(inst, prof, w)
    r = inst.budget - CoverageModel(inst, prof).cover(Outcome())
    assert r == Fraction(3, 2) and cost(inst, w) <= r


def test_complete_cost_bound_random():
    rng = random.Random(89)
    for _ in range(300):
        inst = random_instance(rng)
        prof = compute_fair_shares(inst)
        model = CoverageModel(inst, prof)
        w = random_outcome(rng, inst.m)
        done = df1_complete(inst, prof, w, model)
        assert w.members <= done.members
        assert is_df1(inst, prof, done)
        assert cost(inst, done) - cost(inst, w) <= inst.budget - model.cover(w)


def test_maximize_coverage_examples():
    rng = random.Random(97)
    for _ in range(40):
        inst = random_instance(rng, m=(1, 9))
        prof = compute_fair_shares(inst)
        model = CoverageModel(inst, prof)
        w0 = maximize_coverage(inst, prof, Df1pQuery(0, inst.cost_cap))
        assert model.cover(w0) == inst.budget and cost(inst, w0) <= inst.budget
        opt = oracle_solve(inst, prof).opt_welfare
        w = maximize_coverage(inst, prof, Df1pQuery(opt, inst.cost_cap))
        assert model.cover(w) == inst.budget and total_welfare(inst, w) >= opt
        with pytest.raises(InfeasibleError):
            maximize_coverage(inst, prof, Df1pQuery(sum(inst.project_welfare) + 1, inst.cost_cap))
        with pytest.raises(InfeasibleError):
            maximize_coverage(inst, prof, Df1pQuery(sum(inst.project_welfare) + 1, inst.cost_cap, "lazy_greedy"))


def test_exact_maximizer_is_true_argmax():
    rng = random.Random(101)
    for _ in range(30):
        inst = random_instance(rng, m=(1, 8))
        prof = compute_fair_shares(inst)
        model = CoverageModel(inst, prof)
        B = rng.randint(0, sum(inst.project_welfare))
        feasible = [
            s
            for s in subsets(inst.m)
            if sum(inst.costs[j] for j in s) <= inst.budget and sum(inst.project_welfare[j] for j in s) >= B
        ]
        q = Df1pQuery(B, inst.cost_cap)
        if not feasible:
            with pytest.raises(InfeasibleError):
                maximize_coverage(inst, prof, q)
            continue
        best = max(model.cover(s) for s in feasible)
        assert model.cover(maximize_coverage(inst, prof, q)) == best


def test_greedy_maximizer_respects_constraints():
    rng = random.Random(103)
    for _ in range(40):
        inst = random_instance(rng, m=(1, 10))
        prof = compute_fair_shares(inst)
        exact = ExactCoverageMaximizer(inst, prof)
        greedy = LazyGreedyCoverage(inst, prof)
        for B in range(0, exact.max_welfare + 1, max(1, exact.max_welfare // 4)):
            run = greedy.solve(B)
            assert cost(inst, run.outcome) <= inst.budget
            assert run.welfare >= B
            assert run.cover <= exact.solve(B).cover


def test_query_validation():
    with pytest.raises(ValidationError):
        Df1pQuery(-1, 3)
    with pytest.raises(ValidationError):
        Df1pQuery(0, 3, "simplex")
    assert Df1pQuery(0, 3, "lazy_greedy").subroutine == "greedy"


def test_exact_maximizer_size_limit():
    inst = Instance.build([1] * 25, [[1] * 25], [25])
    with pytest.raises(CapabilityError):
        ExactCoverageMaximizer(inst, compute_fair_shares(inst))


def test_pipeline_exact_equals_oracle():
    rng = random.Random(107)
    for _ in range(60):
        inst = random_instance(rng, m=(1, 9))
        prof = compute_fair_shares(inst)
        res = oracle_solve(inst, prof)
        out = solve_df1_pipeline(inst, prof, 0, "exact")
        assert out.outcome == res.witness
        assert out.welfare_floor == res.opt_welfare
        w, floor = out
        assert is_district_fair(inst, prof, w) and cost(inst, w) <= inst.budget


def test_pipeline_greedy_bound():
    rng = random.Random(109)
    allowance = Fraction(647, 1000)
    for _ in range(40):
        inst = random_instance(rng, m=(1, 9))
        prof = compute_fair_shares(inst)
        out = solve_df1_pipeline(inst, prof, allowance, "greedy")
        assert is_df1(inst, prof, out.outcome)
        assert out.base_cover >= out.threshold == inst.budget * (1 - allowance)
        assert cost(inst, out.outcome) <= inst.budget + (inst.budget - out.base_cover)
        assert cost(inst, out.outcome) <= (1 + allowance) * inst.budget


def test_pipeline_rejects_negative_allowance():
    inst = Instance.build([1], [[1]], [1])
    with pytest.raises(ValidationError):
        solve_df1_pipeline(inst, compute_fair_shares(inst), -1)


def test_scale_beta_one_is_identity():
    rng = random.Random(113)
    for _ in range(20):
        inst = random_instance(rng, m=(1, 8))
        prof = compute_fair_shares(inst)
        scaled = scale_instance(inst, 1)
        assert scaled.shares == prof
        assert solve_within_budget(inst, 1).outcome == solve_df1_pipeline(inst, prof).outcome


def test_scaled_shares_shrink():
    rng = random.Random(127)
    for _ in range(60):
        inst = random_instance(rng, m=(1, 8))
        prof = compute_fair_shares(inst)
        beta = Fraction(rng.randint(1, 10), 10)
        scaled = scale_instance(inst, beta)
        assert scaled.budget == beta * inst.budget
        assert all(a <= b for a, b in zip(scaled.shares.values, prof.values))


def test_scaled_exact_pipeline_fits_budget():
    rng = random.Random(131)
    beta = Fraction(1000, 1647)
    for _ in range(40):
        inst = random_instance(rng, m=(1, 9))
        scaled = scale_instance(inst, beta)
        out = solve_within_budget(inst, beta, "exact")
        assert is_district_fair(scaled.instance, scaled.shares, out.outcome)
        assert cost(inst, out.outcome) <= inst.budget
        greedy = solve_within_budget(inst, beta, "greedy")
        assert is_df1(scaled.instance, scaled.shares, greedy.outcome)
        assert cost(inst, greedy.outcome) <= inst.budget


def test_scale_rejects_bad_beta():
    inst = Instance.build([1], [[1]], [1])
    for beta in (0, Fraction(3, 2), -1):
        with pytest.raises(ValidationError):
            scale_instance(inst, beta)


def _run(cover):
    return CoverageRun(Outcome(), Fraction(cover), 0)


def test_hoeffding_single_run():
    eps0 = 0.1
    res = amplify_runs([_run(3)], eps0)
    assert res.best_index == 0
    assert res.tail_bound == pytest.approx(math.exp(-2 * eps0**2 * (1 - 1 / math.e) ** 2), rel=1e-14)
    assert hoeffding_bound(eps0, 1) == res.tail_bound


def test_amplify_ties_and_prefix_monotone():
    assert amplify_runs([_run(2), _run(2), _run(2)]).best_index == 0
    runs = [_run(c) for c in (1, 4, 2, 4, 5, 3)]
    best = [amplify_runs(runs[:n]).best.cover for n in range(1, len(runs) + 1)]
    assert best == sorted(best)
    with pytest.raises(ValidationError):
        amplify_runs([])


def test_amplified_pipeline_is_seeded():
    rng = random.Random(137)
    inst = random_instance(rng, m=(8, 8), k=(3, 3))
    prof = compute_fair_shares(inst)
    a = solve_df1_pipeline(inst, prof, Fraction(1, 2), AmplifiedCoverage(inst, prof, 4, seed=9))
    b = solve_df1_pipeline(inst, prof, Fraction(1, 2), AmplifiedCoverage(inst, prof, 4, seed=9))
    assert a == b
    assert is_df1(inst, prof, a.outcome)
