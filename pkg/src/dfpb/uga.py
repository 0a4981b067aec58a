"""Greedy for unanimous districts with unit costs.

Each round buys the project with the largest conditional coverage, breaking
ties by total welfare and then by smallest id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dfpb.df1 import CoverageModel
from dfpb.errors import ApplicabilityError
from dfpb.model import FairShareProfile, Instance, Outcome


@dataclass(frozen=True)
class UnanimityCertificate:
    # voter count per district, read off as its unique positive utility (0 if it approves nothing)
    voters: tuple[int, ...]
    unanimous: tuple[bool, ...]
    unit_costs: bool

    @property
    def holds(self) -> bool:
        return self.unit_costs and all(self.unanimous)

    def diagnostic(self) -> str:
        problems = []
        if not self.unit_costs:
            problems.append("not every project has cost 1")
        bad = [i for i, ok in enumerate(self.unanimous) if not ok]
        if bad:
            problems.append(f"districts {bad} have more than one positive utility value")
        return "; ".join(problems) or "unanimous with unit costs"


def certify(instance: Instance) -> UnanimityCertificate:
    voters, flags = [], []
    for d in instance.districts:
        positive = {u for u in d.utilities if u > 0}
        voters.append(max(positive, default=0))
        flags.append(len(positive) <= 1)
    return UnanimityCertificate(tuple(voters), tuple(flags), all(c == 1 for c in instance.costs))


def _require(instance: Instance) -> UnanimityCertificate:
    cert = certify(instance)
    if not cert.holds:
        raise ApplicabilityError(f"greedy requires unanimous districts and unit costs: {cert.diagnostic()}")
    return cert


def _conditional(model: CoverageModel, j: int, members: frozenset[int]) -> int:
    if j in members:
        return 0
    gain = model.cover(members | {j}) - model.cover(members)
    assert gain.denominator == 1 and gain >= 0, f"non-integral conditional cover {gain}"
    return int(gain)


def conditional_cover(instance: Instance, shares: FairShareProfile, project: int, w: Outcome) -> int:
    """cover(W + x) - cover(W); an integer under unanimity and unit costs."""
    _require(instance)
    instance.check_outcome(Outcome.of(project))
    return _conditional(CoverageModel(instance, shares), project, instance.check_outcome(w).members)


@dataclass(frozen=True)
class UgaPick:
    project: int
    cover: int
    welfare: int

    @property
    def phase(self) -> str:
        return ">=2" if self.cover >= 2 else str(self.cover)


@dataclass
class UgaTrace:
    picks: list[UgaPick] = field(default_factory=list)

    def by_phase(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {">=2": [], "1": [], "0": []}
        for p in self.picks:
            out[p.phase].append(p.project)
        return out


def solve_uga(instance: Instance, shares: FairShareProfile, trace: UgaTrace | None = None) -> Outcome:
    _require(instance)
    model = CoverageModel(instance, shares)
    sw = instance.project_welfare
    members: frozenset[int] = frozenset()
    for _ in range(min(instance.cost_cap, instance.m)):
        left = [j for j in range(instance.m) if j not in members]
        gains = {j: _conditional(model, j, members) for j in left}
        j = min(left, key=lambda j: (-gains[j], -sw[j], j))
        if trace is not None:
            trace.picks.append(UgaPick(j, gains[j], sw[j]))
        members = members | {j}
    return Outcome(members)
