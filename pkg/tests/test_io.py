import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _gen import random_instance
from dfpb import io
from dfpb.errors import ValidationError
from dfpb.model import Lottery, Outcome


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def doc(**over):
    data = {
        "schema_version": 1,
        "budget": 1,
        "projects": [{"label": "p", "cost": 1}],
        "districts": [{"label": "d", "budget_share": 1, "utilities": [1]}],
    }
    data.update(over)
    return data


def test_minimal_instance(tmp_path):
    inst = io.load_instance(write_json(tmp_path / "i.json", doc()))
    assert (inst.m, inst.k, inst.budget) == (1, 1, 1)


def test_rational_shares(tmp_path):
    districts = [
        {"label": "a", "budget_share": "1/3", "utilities": [1]},
        {"label": "b", "budget_share": "2/3", "utilities": [0]},
    ]
    inst = io.load_instance(write_json(tmp_path / "i.json", doc(districts=districts)))
    assert [d.budget_share for d in inst.districts] == [Fraction(1, 3), Fraction(2, 3)]


def test_share_sum_mismatch(tmp_path):
    districts = [
        {"label": "a", "budget_share": 1, "utilities": [1]},
        {"label": "b", "budget_share": 1, "utilities": [0]},
    ]
    with pytest.raises(ValidationError, match="shares sum 2 ≠ budget 3"):
        io.load_instance(write_json(tmp_path / "i.json", doc(budget=3, districts=districts)))


def test_schema_errors_name_the_field(tmp_path):
    bad = doc(projects=[{"label": "p", "cost": -1}])
    with pytest.raises(ValidationError, match=r"projects\[0\]\.cost"):
        io.load_instance(write_json(tmp_path / "i.json", bad))
    bad = doc(districts=[{"label": "d", "budget_share": "x/2", "utilities": [1]}])
    with pytest.raises(ValidationError, match=r"districts\[0\]\.budget_share"):
        io.load_instance(write_json(tmp_path / "j.json", bad))
    with pytest.raises(ValidationError, match=r"districts\[0\]\.utilities"):
        io.load_instance(write_json(tmp_path / "k.json", doc(districts=[{"label": "d", "budget_share": 1}])))
    (tmp_path / "broken.json").write_text('{"schema_version": 1,\n "budget": }')
    with pytest.raises(ValidationError, match="line 2"):
        io.load_instance(tmp_path / "broken.json")


def test_utilities_length_and_duplicates(tmp_path):
    with pytest.raises(ValidationError, match="expected 1"):
        io.load_instance(write_json(tmp_path / "a.json", doc(districts=[{"label": "d", "budget_share": 1, "utilities": [1, 2]}])))
    projects = [{"label": "p", "cost": 1}, {"label": "p", "cost": 0}]
    districts = [{"label": "d", "budget_share": 1, "utilities": [1, 1]}]
    with pytest.raises(ValidationError, match="duplicate"):
        io.load_instance(write_json(tmp_path / "b.json", doc(projects=projects, districts=districts)))


def ballot_doc(tmp_path, rows):
    (tmp_path / "ballots.csv").write_text("voter_id,district_id,approvals\n" + "".join(r + "\n" for r in rows))
    projects = [{"label": "x0", "cost": 1}, {"label": "x1", "cost": 1}]
    districts = [{"label": "north", "budget_share": 1}, {"label": "south", "budget_share": 1}]
    return write_json(tmp_path / "i.json", doc(budget=2, projects=projects, districts=districts, ballots="ballots.csv"))


def test_ballots(tmp_path):
    path = ballot_doc(tmp_path, ["v1,north,x1", "v2,north,x1;x0", "v3,north,x1", "v4,south,"])
    inst = io.load_instance(path)
    assert inst.districts[0].utilities == (1, 3)
    assert inst.districts[1].utilities == (0, 0)


def test_no_ballots_gives_zero_utilities(tmp_path):
    inst = io.load_instance(ballot_doc(tmp_path, []))
    assert all(u == 0 for d in inst.districts for u in d.utilities)


def test_ballot_errors(tmp_path):
    with pytest.raises(ValidationError, match="duplicate voter_id"):
        io.load_instance(ballot_doc(tmp_path, ["v1,north,x1", "v1,south,x0"]))
    with pytest.raises(ValidationError, match="unknown district"):
        io.load_instance(ballot_doc(tmp_path, ["v1,east,x1"]))
    with pytest.raises(ValidationError, match="unknown project"):
        io.load_instance(ballot_doc(tmp_path, ["v1,north,x9"]))
    (tmp_path / "bad.csv").write_text("voter,district\n")
    with pytest.raises(ValidationError, match="header"):
        io.load_ballots(tmp_path / "bad.csv")


def test_ballots_and_utilities_conflict(tmp_path):
    (tmp_path / "ballots.csv").write_text("voter_id,district_id,approvals\n")
    with pytest.raises(ValidationError, match="not both"):
        io.load_instance(write_json(tmp_path / "i.json", doc(ballots="ballots.csv")))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_aggregation_is_order_invariant(seed):
    rng = random.Random(seed)
    projects = [f"p{j}" for j in range(4)]
    districts = ["a", "b", "c"]
    ballots = [
        io.BallotRecord(f"v{n}", rng.choice(districts), frozenset(p for p in projects if rng.random() < 0.4))
        for n in range(rng.randint(0, 15))
    ]
    shuffled = ballots[:]
    rng.shuffle(shuffled)
    assert io.aggregate_ballots(projects, districts, ballots) == io.aggregate_ballots(projects, districts, shuffled)


def test_outcome_and_lottery_files(tmp_path):
    io.write_outcome(tmp_path / "o.json", Outcome.of(2, 0))
    assert json.loads((tmp_path / "o.json").read_text())["members"] == [0, 2]
    w, meta = io.load_outcome(tmp_path / "o.json")
    assert w == Outcome.of(0, 2)
    io.write_lottery(tmp_path / "l.json", Lottery(((Outcome.of(1), Fraction(1)),)))
    data = json.loads((tmp_path / "l.json").read_text())
    assert data["entries"] == [{"members": [1], "probability": "1/1"}]


def test_round_trips_are_byte_identical(tmp_path):
    rng = random.Random(163)
    for n in range(40):
        inst = random_instance(rng)
        a, b = tmp_path / f"a{n}.json", tmp_path / f"b{n}.json"
        io.write_instance(a, inst)
        loaded = io.load_instance(a)
        # unlabeled items pick up their default names on the first write
        assert [p.name for p in loaded.projects] == [p.name for p in inst.projects]
        assert loaded.costs == inst.costs and loaded.districts[0].utilities == inst.districts[0].utilities
        io.write_instance(b, loaded)
        assert a.read_bytes() == b.read_bytes()
        assert io.load_instance(b) == loaded
    lot = Lottery.uniform([Outcome.of(0), Outcome.of(1, 2), Outcome.of(0)])
    io.write_lottery(tmp_path / "l1.json", lot, epsilon="1/2")
    loaded, meta = io.load_lottery(tmp_path / "l1.json")
    assert loaded == lot and meta["epsilon"] == "1/2"
    io.write_lottery(tmp_path / "l2.json", loaded, epsilon="1/2")
    assert (tmp_path / "l1.json").read_bytes() == (tmp_path / "l2.json").read_bytes()
    io.write_outcome(tmp_path / "o1.json", Outcome.of(3, 1), engine="x")
    w, meta = io.load_outcome(tmp_path / "o1.json")
    io.write_outcome(tmp_path / "o2.json", w, engine=meta["engine"])
    assert (tmp_path / "o1.json").read_bytes() == (tmp_path / "o2.json").read_bytes()
