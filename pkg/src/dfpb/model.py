"""Domain types and the elementary welfare / cost / fairness predicates.

Money and utilities are exact integers. District budget shares, fractional
outcomes and lottery probabilities are :class:`fractions.Fraction`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Iterator, Sequence

from dfpb.errors import DomainError, ValidationError

# Stand-in for the "costs and welfare are poly(k, m)" assumption.
WELFARE_CAP = 10**9
COST_CAP = 10**9


def as_fraction(value, what: str = "value") -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to a Fraction.

    Floats are rejected: they would silently import binary rounding error.
    """
    if isinstance(value, bool):
        raise ValidationError(f"{what}: expected a rational, got bool")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"{what}: cannot parse {value!r} as a rational") from None
    raise ValidationError(f"{what}: expected int, Fraction or 'p/q' string, got {type(value).__name__}")


def _check_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{what}: expected an integer, got {value!r}")
    if value < 0:
        raise ValidationError(f"{what}: must be >= 0, got {value}")
    return value


@dataclass(frozen=True)
class Project:
    id: int
    cost: int
    label: str | None = None

    def __post_init__(self):
        _check_int(self.cost, f"project {self.id} cost")

    @property
    def name(self) -> str:
        return self.label if self.label is not None else f"x{self.id}"


@dataclass(frozen=True)
class District:
    id: int
    budget_share: Fraction
    utilities: tuple[int, ...]
    label: str | None = None

    def __post_init__(self):
        share = as_fraction(self.budget_share, f"district {self.id} budget_share")
        if share < 0:
            raise ValidationError(f"district {self.id} budget_share: must be >= 0, got {share}")
        object.__setattr__(self, "budget_share", share)
        utils = tuple(self.utilities)
        for j, u in enumerate(utils):
            _check_int(u, f"district {self.id} utility[{j}]")
        object.__setattr__(self, "utilities", utils)

    @property
    def name(self) -> str:
        return self.label if self.label is not None else f"d{self.id}"


@dataclass(frozen=True)
class Outcome:
    """An integral outcome: a set of funded project ids."""

    members: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))

    @classmethod
    def of(cls, *ids: int) -> Outcome:
        return cls(frozenset(ids))

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.members))

    def __contains__(self, j) -> bool:
        return j in self.members

    def __len__(self) -> int:
        return len(self.members)

    def sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    def union(self, other: Iterable[int]) -> Outcome:
        return Outcome(self.members | frozenset(other))

    def with_project(self, j: int) -> Outcome:
        return Outcome(self.members | {j})

    def __repr__(self) -> str:
        return f"Outcome({set(self.sorted()) or '{}'})"


@dataclass(frozen=True)
class FractionalOutcome:
    fractions: tuple[Fraction, ...]

    def __post_init__(self):
        fr = tuple(as_fraction(p, f"fraction[{j}]") for j, p in enumerate(self.fractions))
        for j, p in enumerate(fr):
            if not 0 <= p <= 1:
                raise ValidationError(f"fraction[{j}] = {p} outside [0, 1]")
        object.__setattr__(self, "fractions", fr)

    @classmethod
    def zeros(cls, m: int) -> FractionalOutcome:
        return cls((Fraction(0),) * m)

    def support(self) -> tuple[int, ...]:
        return tuple(j for j, p in enumerate(self.fractions) if p)

    def non_integral(self) -> tuple[int, ...]:
        return tuple(j for j, p in enumerate(self.fractions) if p.denominator != 1)


@dataclass(frozen=True)
class Lottery:
    """A finite distribution over outcomes with exact probabilities."""

    entries: tuple[tuple[Outcome, Fraction], ...]

    def __post_init__(self):
        entries = tuple((o, as_fraction(p, "probability")) for o, p in self.entries)
        if not entries:
            raise ValidationError("lottery has no entries")
        for o, p in entries:
            if p <= 0:
                raise ValidationError(f"lottery probability must be > 0, got {p} for {o}")
        total = sum((p for _, p in entries), Fraction(0))
        if total != 1:
            raise ValidationError(f"lottery probabilities sum to {total}, not 1")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def uniform(cls, outcomes: Sequence[Outcome]) -> Lottery:
        """Uniform over a sequence; repeated outcomes are merged."""
        if not outcomes:
            raise ValidationError("cannot build a lottery from zero outcomes")
        counts: dict[Outcome, int] = {}
        for o in outcomes:
            counts[o] = counts.get(o, 0) + 1
        n = len(outcomes)
        ordered = sorted(counts, key=lambda o: o.sorted())
        return cls(tuple((o, Fraction(counts[o], n)) for o in ordered))

    def support(self) -> tuple[Outcome, ...]:
        return tuple(o for o, _ in self.entries)


@dataclass(frozen=True)
class FairShareProfile:
    """Per-district deserved utility ``values[i]`` and a witness bundle."""

    values: tuple[int, ...]
    witnesses: tuple[Outcome, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Instance:
    projects: tuple[Project, ...]
    districts: tuple[District, ...]
    budget: int | Fraction
    # derived, kept for speed
    costs: tuple[int, ...] = field(init=False, repr=False, compare=False)
    project_welfare: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        projects = tuple(self.projects)
        districts = tuple(self.districts)
        object.__setattr__(self, "projects", projects)
        object.__setattr__(self, "districts", districts)
        m = len(projects)
        for j, p in enumerate(projects):
            if p.id != j:
                raise ValidationError(f"project ids must be 0..m-1 in order; position {j} has id {p.id}")
        for i, d in enumerate(districts):
            if d.id != i:
                raise ValidationError(f"district ids must be 0..k-1 in order; position {i} has id {d.id}")
            if len(d.utilities) != m:
                raise ValidationError(
                    f"district {d.name}: utilities has length {len(d.utilities)}, expected {m}"
                )
        budget = self.budget
        if isinstance(budget, bool) or not isinstance(budget, (int, Fraction)):
            raise ValidationError(f"budget must be an integer, got {budget!r}")
        if budget <= 0:
            raise ValidationError(f"budget must be positive, got {budget}")
        if isinstance(budget, Fraction) and budget.denominator == 1:
            budget = int(budget)
            object.__setattr__(self, "budget", budget)
        total = sum((d.budget_share for d in districts), Fraction(0))
        if total != budget:
            raise ValidationError(f"shares sum {total} ≠ budget {budget}")
        costs = tuple(p.cost for p in projects)
        welfare = tuple(sum(d.utilities[j] for d in districts) for j in range(m))
        if sum(costs) > COST_CAP:
            raise ValidationError(f"total project cost {sum(costs)} exceeds cap {COST_CAP}")
        if sum(welfare) > WELFARE_CAP:
            raise ValidationError(f"total welfare {sum(welfare)} exceeds cap {WELFARE_CAP}")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "project_welfare", welfare)

    @classmethod
    def build(
        cls,
        costs: Sequence[int],
        utilities: Sequence[Sequence[int]],
        shares: Sequence,
        budget: int | None = None,
        project_labels: Sequence[str] | None = None,
        district_labels: Sequence[str] | None = None,
    ) -> Instance:
        """Convenience constructor from plain lists; ``budget`` defaults to the share sum."""
        projects = tuple(
            Project(j, c, project_labels[j] if project_labels else None) for j, c in enumerate(costs)
        )
        districts = tuple(
            District(i, as_fraction(s, f"share[{i}]"), tuple(u), district_labels[i] if district_labels else None)
            for i, (s, u) in enumerate(zip(shares, utilities, strict=True))
        )
        if budget is None:
            budget = sum((d.budget_share for d in districts), Fraction(0))
        return cls(projects, districts, budget)

    @property
    def m(self) -> int:
        return len(self.projects)

    @property
    def k(self) -> int:
        return len(self.districts)

    @property
    def cost_cap(self) -> int:
        """Largest integer spend allowed by the (possibly rational) budget."""
        return int(self.budget) if isinstance(self.budget, int) else self.budget.numerator // self.budget.denominator

    def utilities(self, i: int) -> tuple[int, ...]:
        return self.district(i).utilities

    def district(self, i: int) -> District:
        if not isinstance(i, int) or not 0 <= i < self.k:
            raise DomainError(f"unknown district id {i!r} (k = {self.k})")
        return self.districts[i]

    def all_projects(self) -> Outcome:
        return Outcome(frozenset(range(self.m)))

    def check_outcome(self, w: Outcome) -> Outcome:
        bad = [j for j in w.members if not isinstance(j, int) or not 0 <= j < self.m]
        if bad:
            raise ValidationError(f"outcome refers to unknown projects {sorted(bad)} (m = {self.m})")
        return w

    def check_fractional(self, p: FractionalOutcome) -> FractionalOutcome:
        if len(p.fractions) != self.m:
            raise ValidationError(f"fractional outcome has length {len(p.fractions)}, expected {self.m}")
        return p


def welfare(instance: Instance, district_id: int, w: Outcome) -> int:
    u = instance.district(district_id).utilities
    return sum(u[j] for j in instance.check_outcome(w).members)


def total_welfare(instance: Instance, w: Outcome) -> int:
    sw = instance.project_welfare
    return sum(sw[j] for j in instance.check_outcome(w).members)


def cost(instance: Instance, w: Outcome) -> int:
    c = instance.costs
    return sum(c[j] for j in instance.check_outcome(w).members)


def fractional_welfare(instance: Instance, district_id: int, p: FractionalOutcome) -> Fraction:
    u = instance.district(district_id).utilities
    return sum((u[j] * x for j, x in enumerate(instance.check_fractional(p).fractions)), Fraction(0))


def fractional_total_welfare(instance: Instance, p: FractionalOutcome) -> Fraction:
    sw = instance.project_welfare
    return sum((sw[j] * x for j, x in enumerate(instance.check_fractional(p).fractions)), Fraction(0))


def fractional_cost(instance: Instance, p: FractionalOutcome) -> Fraction:
    c = instance.costs
    return sum((c[j] * x for j, x in enumerate(instance.check_fractional(p).fractions)), Fraction(0))


def is_budget_feasible(instance: Instance, w: Outcome) -> bool:
    return cost(instance, w) <= instance.budget


def _check_shares(instance: Instance, shares: FairShareProfile) -> None:
    if len(shares.values) != instance.k:
        raise ValidationError(f"fair-share profile has {len(shares.values)} districts, instance has {instance.k}")


def is_district_fair(instance: Instance, shares: FairShareProfile, w: Outcome) -> bool:
    _check_shares(instance, shares)
    return all(welfare(instance, i, w) >= f for i, f in enumerate(shares.values))


def is_df1(instance: Instance, shares: FairShareProfile, w: Outcome) -> bool:
    """Fair up to one project; the best unfunded project is worth 0 if none remain."""
    _check_shares(instance, shares)
    instance.check_outcome(w)
    outside = [j for j in range(instance.m) if j not in w.members]
    for i, f in enumerate(shares.values):
        u = instance.districts[i].utilities
        best = max((u[j] for j in outside), default=0)
        if welfare(instance, i, w) + best < f:
            return False
    return True


def expected_welfare(instance: Instance, district_id: int, lottery: Lottery) -> Fraction:
    return sum((p * welfare(instance, district_id, o) for o, p in lottery.entries), Fraction(0))


def check_lottery(instance: Instance, lottery: Lottery) -> Lottery:
    """Raise unless every support outcome is valid and budget-feasible."""
    for o, _ in lottery.entries:
        if not is_budget_feasible(instance, o):
            raise ValidationError(f"lottery outcome {o} costs {cost(instance, o)} > budget {instance.budget}")
    return lottery
