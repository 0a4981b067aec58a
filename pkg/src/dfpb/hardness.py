"""Adversarial instance generators and the fractional relaxation.

* ``reduce_x3c``: exact 3-cover to district-fair welfare maximization.
* ``gap_instance``: circular-preference family whose relaxation beats every
  integral district-fair outcome by a factor that grows with ``B``.
* ``export_dflp`` / ``check_fractional_feasible``: the relaxation as LP text and
  an exact membership test.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from dfpb.errors import ValidationError
from dfpb.model import (
    FairShareProfile,
    FractionalOutcome,
    Instance,
    as_fraction,
)


@dataclass(frozen=True)
class X3cInput:
    n: int  # universe is 0..3n-1
    sets: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        sets = []
        for idx, s in enumerate(self.sets):
            s = tuple(s)
            if len(s) != 3 or len(set(s)) != 3:
                raise ValidationError(f"sets[{idx}] must have exactly 3 distinct elements, got {list(s)}")
            if any(not isinstance(e, int) or not 0 <= e < 3 * self.n for e in s):
                raise ValidationError(f"sets[{idx}] has an element outside the universe 0..{3 * self.n - 1}")
            sets.append(tuple(sorted(s)))
        # an element in no set would get fair share 0, and the target would no longer force a cover
        missing = sorted(set(range(3 * self.n)).difference(*sets))
        if missing:
            raise ValidationError(f"elements {missing} appear in no set")
        object.__setattr__(self, "sets", tuple(sets))

    @property
    def m(self) -> int:
        return len(self.sets)


def has_exact_cover(x: X3cInput) -> bool:
    universe = set(range(3 * x.n))
    return any(
        set().union(*(x.sets[j] for j in pick)) == universe for pick in itertools.combinations(range(x.m), x.n)
    )


def reduce_x3c(x: X3cInput) -> tuple[Instance, int]:
    """Instance and welfare target; a district-fair outcome reaches the target iff an exact cover exists.

    Districts: one per element, then ``M = 3mn + 1`` dummies.  Projects: one per
    set, then ``2n + M`` dummies approved by every dummy district.  Unit costs,
    one voter per district, budget ``3n + M``.
    """
    n, m = x.n, x.m
    M = 3 * m * n + 1
    n_dummy = 2 * n + M
    utilities = []
    for e in range(3 * n):
        utilities.append([int(e in s) for s in x.sets] + [0] * n_dummy)
    for _ in range(M):
        utilities.append([0] * m + [1] * n_dummy)
    k = 3 * n + M
    inst = Instance.build(
        costs=[1] * (m + n_dummy),
        utilities=utilities,
        shares=[1] * k,
        project_labels=[f"S{j}" for j in range(m)] + [f"dummy{j}" for j in range(n_dummy)],
        district_labels=[f"e{e}" for e in range(3 * n)] + [f"dummy{i}" for i in range(M)],
    )
    return inst, 3 * n + n_dummy * M


@dataclass(frozen=True)
class GapParams:
    k: int
    epsilon: Fraction
    B: int

    def __post_init__(self):
        eps = as_fraction(self.epsilon, "epsilon")
        if not isinstance(self.k, int) or self.k < 3:
            raise ValidationError(f"k must be an integer >= 3, got {self.k!r}")
        if not 0 < eps < 1:
            raise ValidationError(f"epsilon must lie in (0, 1), got {eps}")
        if not isinstance(self.B, int) or self.B < 1:
            raise ValidationError(f"B must be a positive integer, got {self.B!r}")
        object.__setattr__(self, "epsilon", eps)


@dataclass(frozen=True)
class GapInstance:
    instance: Instance
    witness: FractionalOutcome
    # utilities are multiplied by this to make 1 + epsilon integral
    scale: int

    def __iter__(self):
        return iter((self.instance, self.witness))

    @property
    def integral_welfare(self) -> int:
        """Welfare of the only district-fair outcome, the k-1 non-dummy projects."""
        return sum(self.instance.project_welfare[: self.instance.k - 1])


def gap_instance(p: GapParams) -> GapInstance:
    """k-1 districts with circular preferences plus one dummy district with zero budget.

    District ``i < k-1`` values its own project ``i`` at ``q + r`` and its
    successor ``(i + 1) mod (k-1)`` at ``q``, where ``epsilon = r/q``.  Dummy
    projects ``k-1 .. 2k-3`` are worth ``B*q`` to the dummy district only.
    """
    k, eps = p.k, p.epsilon
    q, r = eps.denominator, eps.numerator
    n = k - 1
    utilities = []
    for i in range(n):
        row = [0] * (2 * n)
        row[i] = q + r
        row[(i + 1) % n] = q
        utilities.append(row)
    utilities.append([0] * n + [p.B * q] * n)
    inst = Instance.build(
        costs=[1] * (2 * n),
        utilities=utilities,
        shares=[1] * n + [0],
        project_labels=[f"x{j}" for j in range(n)] + [f"dummy{j}" for j in range(n)],
        district_labels=[f"d{i}" for i in range(n)] + ["dummy"],
    )
    half = (1 + eps) / 2
    witness = FractionalOutcome(tuple([half] * n + [1 - half] * n))
    return GapInstance(inst, witness, q)


def _num(x) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return repr(float(x))


def _row(coefs: Sequence) -> str:
    terms = [f"{_num(c)} y{j}" for j, c in enumerate(coefs) if c != 0]
    if not terms:
        return "0 y0"
    return " + ".join(terms)


def dflp_text(instance: Instance, shares: FairShareProfile) -> str:
    """The relaxation in CPLEX LP format; rows and columns in index order."""
    lines = [
        "\\ district-fair welfare relaxation",
        "Maximize",
        f" obj: {_row(instance.project_welfare)}",
        "Subject To",
        f" budget: {_row(instance.costs)} <= {_num(instance.budget)}",
    ]
    for d, f in zip(instance.districts, shares.values):
        lines.append(f" fair_d{d.id}: {_row(d.utilities)} >= {f}")
    lines.append("Bounds")
    lines += [f" 0 <= y{j} <= 1" for j in range(instance.m)]
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_dflp(instance: Instance, shares: FairShareProfile, path) -> None:
    Path(path).write_text(dflp_text(instance, shares), encoding="utf-8")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[str, ...]
    value: Fraction

    def __bool__(self) -> bool:
        return self.feasible


def check_fractional_feasible(instance: Instance, shares: FairShareProfile, p) -> FeasibilityReport:
    """Exact membership test; violated rows are named budget, fair_d{i} or bound_y{j}.

    ``p`` may be a FractionalOutcome or any sequence of rationals, so
    out-of-box points can be reported rather than rejected on construction.
    """
    y = [as_fraction(v, f"y[{j}]") for j, v in enumerate(getattr(p, "fractions", p))]
    if len(y) != instance.m:
        raise ValidationError(f"fractional outcome has length {len(y)}, expected {instance.m}")
    violations = []
    if sum(c * v for c, v in zip(instance.costs, y)) > instance.budget:
        violations.append("budget")
    for d, f in zip(instance.districts, shares.values):
        if sum(u * v for u, v in zip(d.utilities, y)) < f:
            violations.append(f"fair_d{d.id}")
    violations += [f"bound_y{j}" for j, v in enumerate(y) if not 0 <= v <= 1]
    value = sum((w * v for w, v in zip(instance.project_welfare, y)), Fraction(0))
    return FeasibilityReport(not violations, tuple(violations), value)
