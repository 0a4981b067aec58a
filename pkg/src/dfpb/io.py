"""Instance files (JSON, schema v1), approval ballots (CSV), and canonical output files.

Every writer produces ``json.dumps(..., sort_keys=True, indent=2)`` plus a
newline, so writing a loaded file reproduces it byte for byte.  Rationals are
written as ``"num/den"`` strings.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema

from dfpb.errors import ValidationError
from dfpb.model import Instance, Lottery, Outcome, as_fraction

SCHEMA_VERSION = 1
BALLOT_HEADER = ("voter_id", "district_id", "approvals")

_RATIONAL = {
    "oneOf": [
        {"type": "integer", "minimum": 0},
        {"type": "string", "pattern": r"^\s*\d+\s*(/\s*[1-9]\d*\s*)?$"},
    ]
}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "budget", "projects", "districts"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "budget": _RATIONAL,
        "ballots": {"type": "string"},
        "projects": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "cost"],
                "additionalProperties": False,
                "properties": {"label": {"type": "string"}, "cost": {"type": "integer", "minimum": 0}},
            },
        },
        "districts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "budget_share"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string"},
                    "budget_share": _RATIONAL,
                    "utilities": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
            },
        },
    },
}


def _path(parts: Iterable) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _rational_text(x) -> str | int:
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _dump(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None


@dataclass(frozen=True)
class BallotRecord:
    voter_id: str
    district_id: str
    approvals: frozenset[str]


def load_ballots(path) -> list[BallotRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != BALLOT_HEADER:
            raise ValidationError(f"{path}: line 1: header must be {','.join(BALLOT_HEADER)}")
        records = []
        for row in reader:
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}: line {reader.line_num}: expected 3 fields, got {len(row)}")
            voter, district, approvals = (cell.strip() for cell in row)
            labels = frozenset(a.strip() for a in approvals.split(";") if a.strip())
            records.append(BallotRecord(voter, district, labels))
    return records


def aggregate_ballots(
    projects: Sequence[str], districts: Sequence[str], ballots: Iterable[BallotRecord]
) -> list[list[int]]:
    """utilities[i][j] = number of voters of district i approving project j."""
    p_idx = {label: j for j, label in enumerate(projects)}
    d_idx = {label: i for i, label in enumerate(districts)}
    utilities = [[0] * len(projects) for _ in districts]
    seen = set()
    for n, rec in enumerate(ballots):
        if rec.voter_id in seen:
            raise ValidationError(f"ballot {n}: duplicate voter_id {rec.voter_id!r}")
        seen.add(rec.voter_id)
        if rec.district_id not in d_idx:
            raise ValidationError(f"ballot {n}: unknown district {rec.district_id!r}")
        row = utilities[d_idx[rec.district_id]]
        for label in rec.approvals:
            if label not in p_idx:
                raise ValidationError(f"ballot {n}: unknown project {label!r}")
            row[p_idx[label]] += 1
    return utilities


def parse_instance(data, base_dir: Path | None = None) -> Instance:
    """Validate a decoded instance document and build the Instance."""
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ValidationError(f"{_path(e.absolute_path)}: {e.message}")
    projects = data["projects"]
    districts = data["districts"]
    has_utils = ["utilities" in d for d in districts]
    if "ballots" in data:
        if any(has_utils):
            raise ValidationError("districts: give either explicit utilities or a ballots file, not both")
        ballot_path = Path(data["ballots"])
        if base_dir is not None and not ballot_path.is_absolute():
            ballot_path = base_dir / ballot_path
        utilities = aggregate_ballots(
            [p["label"] for p in projects], [d["label"] for d in districts], load_ballots(ballot_path)
        )
    else:
        if not all(has_utils):
            i = has_utils.index(False)
            raise ValidationError(f"districts[{i}].utilities: required when no ballots file is given")
        utilities = [d["utilities"] for d in districts]
        for i, row in enumerate(utilities):
            if len(row) != len(projects):
                raise ValidationError(
                    f"districts[{i}].utilities: has {len(row)} entries, expected {len(projects)}"
                )
    for field_name, items in (("projects", projects), ("districts", districts)):
        labels = [x["label"] for x in items]
        dup = sorted({x for x in labels if labels.count(x) > 1})
        if dup:
            raise ValidationError(f"{field_name}: duplicate labels {dup}")
    budget = as_fraction(data["budget"], "budget")
    return Instance.build(
        costs=[p["cost"] for p in projects],
        utilities=utilities,
        shares=[as_fraction(d["budget_share"], f"districts[{i}].budget_share") for i, d in enumerate(districts)],
        budget=budget.numerator if budget.denominator == 1 else budget,
        project_labels=[p["label"] for p in projects],
        district_labels=[d["label"] for d in districts],
    )


def load_instance(path) -> Instance:
    path = Path(path)
    data = _read_json(path)
    try:
        return parse_instance(data, path.parent)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from None


def instance_to_dict(instance: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "budget": _rational_text(instance.budget),
        "projects": [{"label": p.name, "cost": p.cost} for p in instance.projects],
        "districts": [
            {
                "label": d.name,
                "budget_share": _rational_text(d.budget_share),
                "utilities": list(d.utilities),
            }
            for d in instance.districts
        ],
    }


def write_instance(path, instance: Instance) -> None:
    Path(path).write_text(_dump(instance_to_dict(instance)), encoding="utf-8")


# outcome / lottery / report files


def outcome_to_dict(instance: Instance | None, w: Outcome, **meta) -> dict:
    data = {"kind": "outcome", "members": w.sorted()}
    if instance is not None:
        data["member_labels"] = [instance.projects[j].name for j in w.sorted()]
    data.update(meta)
    return data


def write_outcome(path, w: Outcome, instance: Instance | None = None, **meta) -> None:
    Path(path).write_text(_dump(outcome_to_dict(instance, w, **meta)), encoding="utf-8")


def load_outcome(path) -> tuple[Outcome, dict]:
    data = _read_json(path)
    if data.get("kind") != "outcome" or not isinstance(data.get("members"), list):
        raise ValidationError(f"{path}: not an outcome file")
    if not all(isinstance(j, int) and j >= 0 for j in data["members"]):
        raise ValidationError(f"{path}: members must be nonnegative integers")
    return Outcome(frozenset(data["members"])), data


def lottery_to_dict(lottery: Lottery, **meta) -> dict:
    data = {
        "kind": "lottery",
        "entries": [
            {"members": o.sorted(), "probability": f"{p.numerator}/{p.denominator}"} for o, p in lottery.entries
        ],
    }
    data.update(meta)
    return data


def write_lottery(path, lottery: Lottery, **meta) -> None:
    Path(path).write_text(_dump(lottery_to_dict(lottery, **meta)), encoding="utf-8")


def load_lottery(path) -> tuple[Lottery, dict]:
    data = _read_json(path)
    if data.get("kind") != "lottery" or not isinstance(data.get("entries"), list):
        raise ValidationError(f"{path}: not a lottery file")
    entries = []
    for n, e in enumerate(data["entries"]):
        try:
            entries.append((Outcome(frozenset(e["members"])), as_fraction(e["probability"], "probability")))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: entries[{n}]: malformed entry ({exc})") from None
    return Lottery(tuple(entries)), data


def write_report(path, report: dict) -> None:
    Path(path).write_text(_dump(report), encoding="utf-8")


def load_report(path) -> dict:
    return _read_json(path)


def dumps(data) -> str:
    return _dump(data)
