"""``dfpb`` command line.

Exit codes: 0 success, 1 validation/domain error or a bad command line (one
line ``dfpb-error[kind]: message`` on stderr), 2 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from dfpb import io
from dfpb.df1 import AmplifiedCoverage, CoverageModel, scale_instance, solve_df1_pipeline
from dfpb.errors import DfpbError, ValidationError
from dfpb.exact import DEFAULT_MAX_DISTRICTS, oracle_solve, solve_exact_dp
from dfpb.hardness import GapParams, X3cInput, export_dflp, gap_instance, reduce_x3c
from dfpb.lottery import MwConfig, mw_regret_check, run_mw_lottery
from dfpb.model import (
    FairShareProfile,
    Instance,
    Lottery,
    Outcome,
    as_fraction,
    cost,
    expected_welfare,
    is_df1,
    is_district_fair,
    total_welfare,
    welfare,
)
from dfpb.shares import compute_fair_shares
from dfpb.uga import solve_uga


class UsageError(DfpbError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _frac_text(x) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass
class RunReport:
    engine: str
    instance: Instance
    shares: FairShareProfile
    outcome: Outcome | None = None
    lottery: Lottery | None = None
    config: dict = field(default_factory=dict)
    wall_time: float | None = None

    def district_rows(self) -> list[dict]:
        rows = []
        for d, f in zip(self.instance.districts, self.shares.values):
            if self.outcome is not None:
                got = Fraction(welfare(self.instance, d.id, self.outcome))
            else:
                got = expected_welfare(self.instance, d.id, self.lottery)
            rows.append(
                {
                    "district": d.name,
                    "budget_share": _frac_text(d.budget_share),
                    "fair_share": f,
                    "welfare": _frac_text(got),
                    "deficit": _frac_text(max(Fraction(0), f - got)),
                }
            )
        return rows

    def totals(self) -> dict:
        inst = self.instance
        if self.outcome is not None:
            return {
                "cost": cost(inst, self.outcome),
                "welfare": total_welfare(inst, self.outcome),
                "cover": _frac_text(CoverageModel(inst, self.shares).cover(self.outcome)),
            }
        exp_cost = sum((p * cost(inst, o) for o, p in self.lottery.entries), Fraction(0))
        exp_sw = sum((p * total_welfare(inst, o) for o, p in self.lottery.entries), Fraction(0))
        return {
            "expected_cost": _frac_text(exp_cost),
            "max_cost": max(cost(inst, o) for o in self.lottery.support()),
            "expected_welfare": _frac_text(exp_sw),
            "min_welfare": min(total_welfare(inst, o) for o in self.lottery.support()),
        }

    def to_dict(self) -> dict:
        data = {
            "engine": self.engine,
            "budget": _frac_text(self.instance.budget),
            "districts": self.district_rows(),
            "totals": self.totals(),
            "config": self.config,
        }
        if self.outcome is not None:
            data["outcome"] = io.outcome_to_dict(self.instance, self.outcome)
        if self.lottery is not None:
            data["lottery"] = io.lottery_to_dict(self.lottery)
        if self.wall_time is not None:
            data["wall_time_s"] = round(self.wall_time, 6)
        return data

    def render(self) -> str:
        inst = self.instance
        lines = [f"engine: {self.engine}"]
        if self.outcome is not None:
            names = ", ".join(inst.projects[j].name for j in self.outcome)
            lines.append(f"outcome: {{{names}}}")
        else:
            lines.append(f"lottery: {len(self.lottery.entries)} outcomes")
            for o, p in self.lottery.entries:
                names = ", ".join(inst.projects[j].name for j in o)
                lines.append(f"  {_frac_text(p):>12}  {{{names}}}")
        for key, val in self.totals().items():
            lines.append(f"{key}: {val}")
        rows = self.district_rows()
        cols = ["district", "budget_share", "fair_share", "welfare", "deficit"]
        widths = [max(len(c), *(len(str(r[c])) for r in rows)) for c in cols]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for r in rows:
            lines.append("  ".join(str(r[c]).ljust(w) for c, w in zip(cols, widths)))
        if self.wall_time is not None:
            lines.append(f"wall time: {self.wall_time:.3f}s")
        return "\n".join(lines)


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("DFPB_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"DFPB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"thread count must be >= 1, got {n}")
    return n


def _emit(args, report: RunReport, started: float) -> None:
    if args.timing:
        report.wall_time = time.perf_counter() - started
    print(report.render())
    if args.json:
        io.write_report(args.json, report.to_dict())


# subcommands


def cmd_validate(args) -> int:
    inst = io.load_instance(args.instance)
    print(
        f"ok: m={inst.m} k={inst.k} budget={_frac_text(inst.budget)} "
        f"c(P)={sum(inst.costs)} sw(P)={sum(inst.project_welfare)}"
    )
    return 0


def cmd_shares(args) -> int:
    inst = io.load_instance(args.instance)
    shares = compute_fair_shares(inst)
    rows = []
    for d, f, w in zip(inst.districts, shares.values, shares.witnesses):
        names = [inst.projects[j].name for j in w]
        rows.append({"district": d.name, "budget_share": _frac_text(d.budget_share), "fair_share": f, "witness": names})
        print(f"{d.name}: b={_frac_text(d.budget_share)} f={f} witness={{{', '.join(names)}}}")
    if args.json:
        io.write_report(args.json, {"engine": "shares", "districts": rows})
    return 0


def _write_outcome(args, inst: Instance, w: Outcome, **meta) -> None:
    if args.out:
        io.write_outcome(args.out, w, inst, **meta)


def cmd_solve_exact(args) -> int:
    started = time.perf_counter()
    inst = io.load_instance(args.instance)
    shares = compute_fair_shares(inst)
    if args.oracle:
        w = oracle_solve(inst, shares, threads=_threads(args)).witness
        engine = "oracle"
    else:
        w = solve_exact_dp(inst, shares, max_districts=args.max_districts)
        engine = "exact-dp"
    _write_outcome(args, inst, w, engine=engine, contract="df")
    _emit(args, RunReport(engine, inst, shares, outcome=w, config={"contract": "df"}), started)
    return 0


_SWMAX = {"all": "all_projects", "feasible": "feasible_knapsack"}


def _trace_dict(trace) -> dict:
    regret = mw_regret_check(trace)
    return {
        "kind": "mw_trace",
        "epsilon": _frac_text(trace.epsilon),
        "sw_max": trace.sw_max,
        "learning_rate": trace.learning_rate,
        "regret_holds": regret.holds,
        "iterations": [
            {
                "weights": list(it.weights),
                "proportions": [_frac_text(p) for p in it.proportions],
                "blended_demand": _frac_text(it.blended_demand),
                "blended_welfare": _frac_text(it.blended_welfare),
                "outcome": it.outcome.sorted(),
                "mistakes": list(it.mistakes),
            }
            for it in trace.iterations
        ],
    }


def cmd_solve_lottery(args) -> int:
    started = time.perf_counter()
    inst = io.load_instance(args.instance)
    shares = compute_fair_shares(inst)
    cfg = MwConfig(as_fraction(args.epsilon, "--epsilon"), args.iterations, _SWMAX[args.swmax])
    lottery, trace = run_mw_lottery(inst, shares, cfg)
    if args.trace:
        io.write_report(args.trace, _trace_dict(trace))
    config = {
        "contract": "eps-df",
        "epsilon": _frac_text(cfg.epsilon),
        "iterations": len(trace),
        "sw_max": trace.sw_max,
        "sw_max_mode": cfg.sw_max_mode,
    }
    if args.out:
        io.write_lottery(args.out, lottery, engine="lottery", contract="eps-df", epsilon=config["epsilon"])
    _emit(args, RunReport("lottery", inst, shares, lottery=lottery, config=config), started)
    return 0


def cmd_solve_df1(args) -> int:
    started = time.perf_counter()
    inst = io.load_instance(args.instance)
    beta = as_fraction(args.beta, "--beta")
    scaled = scale_instance(inst, beta)
    if args.allowance is not None:
        allowance = as_fraction(args.allowance, "--allowance")
    else:
        allowance = 0 if args.mode == "exact" else 1 / beta - 1
    if args.amplify is not None:
        if args.mode != "greedy":
            raise ValidationError("--amplify requires --mode greedy")
        subroutine = AmplifiedCoverage(scaled.instance, scaled.shares, args.amplify, args.seed)
    else:
        subroutine = args.mode
    result = solve_df1_pipeline(scaled.instance, scaled.shares, allowance, subroutine)
    b = Fraction(scaled.instance.budget)
    cost_bound = b + (b - result.base_cover)
    config = {
        "contract": "df1",
        "mode": args.mode,
        "allowance": _frac_text(allowance),
        "beta": _frac_text(beta),
        "welfare_floor": result.welfare_floor,
        "base_cover": _frac_text(result.base_cover),
        "cost_bound": _frac_text(cost_bound),
    }
    if args.amplify is not None:
        config.update(amplify=args.amplify, seed=args.seed, tail_bound=subroutine.last.tail_bound)
    _write_outcome(
        args, inst, result.outcome, engine="df1", contract="df1", beta=config["beta"], cost_bound=config["cost_bound"]
    )
    _emit(args, RunReport("df1", scaled.instance, scaled.shares, outcome=result.outcome, config=config), started)
    return 0


def cmd_solve_uga(args) -> int:
    started = time.perf_counter()
    inst = io.load_instance(args.instance)
    shares = compute_fair_shares(inst)
    w = solve_uga(inst, shares)
    _write_outcome(args, inst, w, engine="uga", contract="df")
    _emit(args, RunReport("uga", inst, shares, outcome=w, config={"contract": "df"}), started)
    return 0


def cmd_gen_x3c(args) -> int:
    data = io.load_report(args.spec)
    try:
        x = X3cInput(data["n"], tuple(tuple(s) for s in data["sets"]))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"{args.spec}: expected {{'n': int, 'sets': [[a, b, c], ...]}} ({e})") from None
    inst, target = reduce_x3c(x)
    io.write_instance(args.out, inst)
    print(f"wrote {args.out}: m={inst.m} k={inst.k} budget={inst.budget} target={target}")
    return 0


def cmd_gen_gap(args) -> int:
    g = gap_instance(GapParams(args.k, as_fraction(args.eps, "--eps"), args.B))
    io.write_instance(args.out, g.instance)
    if args.witness:
        io.write_report(
            args.witness,
            {"kind": "fractional", "scale": g.scale, "fractions": [_frac_text(y) for y in g.witness.fractions]},
        )
    print(
        f"wrote {args.out}: m={g.instance.m} k={g.instance.k} budget={g.instance.budget} "
        f"scale={g.scale} integral_welfare={g.integral_welfare}"
    )
    return 0


def cmd_export_lp(args) -> int:
    inst = io.load_instance(args.instance)
    export_dflp(inst, compute_fair_shares(inst), args.out)
    print(f"wrote {args.out}: {inst.m} variables, {inst.k + 1} rows")
    return 0


def _contract_failures(inst: Instance, shares: FairShareProfile, meta: dict, w=None, lottery=None) -> list[str]:
    contract = meta.get("contract", "feasible")
    bad = []
    if w is not None:
        inst.check_outcome(w)
        if contract == "df1":
            bound = as_fraction(meta.get("cost_bound", inst.budget), "cost_bound")
            if cost(inst, w) > bound:
                bad.append(f"cost {cost(inst, w)} exceeds bound {_frac_text(bound)}")
            if not is_df1(inst, shares, w):
                bad.append("outcome is not DF1")
        else:
            if cost(inst, w) > inst.budget:
                bad.append(f"cost {cost(inst, w)} exceeds budget {_frac_text(inst.budget)}")
            if contract == "df" and not is_district_fair(inst, shares, w):
                bad.append("outcome is not district-fair")
    else:
        eps = as_fraction(meta.get("epsilon", 0), "epsilon")
        for o in lottery.support():
            inst.check_outcome(o)
            if cost(inst, o) > inst.budget:
                bad.append(f"support outcome {o.sorted()} exceeds the budget")
        if contract == "eps-df":
            for d, f in zip(inst.districts, shares.values):
                if expected_welfare(inst, d.id, lottery) < f - eps:
                    bad.append(f"district {d.name}: expected welfare below f_i - epsilon")
    return bad


def cmd_report(args) -> int:
    started = time.perf_counter()
    inst = io.load_instance(args.instance)
    if args.outcome:
        w, meta = io.load_outcome(args.outcome)
        lottery = None
    else:
        lottery, meta = io.load_lottery(args.lottery)
        w = None
    if "beta" in meta:
        scaled = scale_instance(inst, as_fraction(meta["beta"], "beta"))
        judged, shares = scaled.instance, scaled.shares
    else:
        judged, shares = inst, compute_fair_shares(inst)
    failures = _contract_failures(judged, shares, meta, w, lottery)
    config = {"contract": meta.get("contract", "feasible"), "source_engine": meta.get("engine", "unknown")}
    config["valid"] = not failures
    _emit(args, RunReport("report", judged, shares, outcome=w, lottery=lottery, config=config), started)
    if failures:
        raise ValidationError("contract violated: " + "; ".join(failures))
    print(f"contract {config['contract']}: ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfpb", description="District-fair participatory budgeting solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, instance=True, report=False):
        p = sub.add_parser(name, help=help_text)
        if instance:
            p.add_argument("instance", help="instance file (JSON, schema v1)")
        if report:
            p.add_argument("--json", metavar="OUT", help="also write the run report as JSON")
            p.add_argument("--timing", action="store_true", help="include wall time in the report")
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "check an instance file")
    p = add("shares", cmd_shares, "print fair shares")
    p.add_argument("--json", metavar="OUT")

    p = add("solve-exact", cmd_solve_exact, "welfare-optimal district-fair outcome", report=True)
    p.add_argument("--max-districts", type=int, default=DEFAULT_MAX_DISTRICTS)
    p.add_argument("--oracle", action="store_true", help="use brute-force enumeration instead of the DP")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="write the outcome file")

    p = add("solve-lottery", cmd_solve_lottery, "epsilon-fair lottery by multiplicative weights", report=True)
    p.add_argument("--epsilon", required=True, help="rational, e.g. 1 or 1/2")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--swmax", choices=tuple(_SWMAX), default="all", help="sw_max bound: all projects or budget-feasible")
    p.add_argument("--trace", help="write the per-iteration trace as JSON")
    p.add_argument("--out", help="write the lottery file")

    p = add("solve-df1", cmd_solve_df1, "DF1 outcome via coverage maximization", report=True)
    p.add_argument("--mode", choices=("exact", "greedy"), default="exact")
    p.add_argument("--allowance", default=None, help="overspend allowance (rational)")
    p.add_argument("--beta", default="1", help="scale district shares by this rational in (0, 1]")
    p.add_argument("--amplify", type=int, default=None, metavar="N", help="best of N randomized greedy runs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the outcome file")

    p = add("solve-uga", cmd_solve_uga, "greedy for unanimous districts with unit costs", report=True)
    p.add_argument("--out", help="write the outcome file")

    p = add("gen-x3c", cmd_gen_x3c, "reduce an exact-3-cover input to an instance", instance=False)
    p.add_argument("--spec", required=True, help="JSON file {n, sets}")
    p.add_argument("--out", required=True)

    p = add("gen-gap", cmd_gen_gap, "integrality-gap instance", instance=False)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--witness", help="also write the fractional witness")

    p = add("export-lp", cmd_export_lp, "write the LP relaxation in CPLEX LP format")
    p.add_argument("--out", required=True)

    p = add("report", cmd_report, "re-validate an outcome or lottery file", report=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--outcome")
    group.add_argument("--lottery")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except DfpbError as e:
        msg = " ".join(str(e).split())
        print(f"dfpb-error[{e.kind}]: {msg}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"dfpb-error[io]: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
