"""
Command-line front end.

    python main.py validate instance.json
    python main.py solve --method ir-fosd instance.json --json
    python main.py bayes-solve --rho 0.05 --oracle ir bayes.json
    python main.py gen random --n 2 --ell 3 --m 3 --fosd -o instance.json
    python main.py bench ir --count 200 --jobs 4 -o ir.csv

Exit codes: 0 success, 1 usage, 2 validation or cap exceeded, 3 solver refusal, 4 numerical failure.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from algorithms.bayes import BayesOptions, bayes_solve
from algorithms.bayes_lp import (BayesContext, check_dsic, menu_from_solution, menu_to_json, regularize,
                                 solve_lp3_direct)
from algorithms.ellipsoid import Cut, ellipsoid_feasibility, halfspace_oracle
from algorithms.fosd import check_fosd, fosd_bruteforce
from algorithms.generators import (GenParams, gen_bayesian, gen_independent_set, gen_label_cover, gen_random,
                                   parse_edge_list, parse_label_cover)
from algorithms.matroid import brute_force_optimal, build_partition_problem
from algorithms.payments import payment_bound, payment_table, table_from_dict, table_to_dict
from algorithms.simplex import LinearProgram, solve_lp
from algorithms.submod import DrOptions, solve_dr
from algorithms.supermod import check_ordered_supermodular, solve_ir_fosd, verify_ir_fosd
from contract.bayesian import BayesianInstance
from contract.errors import CapExceededError, NumericalError, SolverRefusal, ValidationError
from contract.loader.loader import JSONSource
from contract.loader.loader_factory import load_any, load_bayesian, load_instance
from contract.loader.writer import dump_instance, instance_digest
from contract.rewards import PROPERTIES, check_property
from contract.utils import EvalOptions, child_seed, principal_utility

logger = logging.getLogger("main")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_REFUSAL, EXIT_NUMERICAL = 0, 1, 2, 3, 4
VALUE_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    digest: str | None = None
    method: str | None = None
    value: float | None = None
    artifact: str | None = None
    wall_time: float | None = None
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    result: dict = field(default_factory=dict)


def _emit(report: RunReport, args) -> None:
    if args.json:
        print(json.dumps(asdict(report), sort_keys=True, indent=1, default=float))
        return
    print(f"{report.command}: {report.method or ''}".rstrip(": "))
    if report.value is not None:
        print(f"  value      {report.value:.9g}")
    for name, verdict in report.checks.items():
        print(f"  {name:<10} {verdict}")
    for name, value in report.result.items():
        if not isinstance(value, (dict, list)):
            print(f"  {name:<10} {value}")
    if report.artifact:
        print(f"  artifact   {report.artifact}")


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def cached_payment_table(inst) -> dict:
    """
    payment_table(inst), memoized as JSON under $PMA_CACHE_DIR keyed by the instance digest.
    """
    directory = os.environ.get("PMA_CACHE_DIR")
    if not directory:
        return payment_table(inst)
    path = os.path.join(directory, f"{instance_digest(inst)}.json")
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            logger.info(f"[cache] payment table from {path}")
            return table_from_dict(json.load(f))
    table = payment_table(inst)
    os.makedirs(directory, exist_ok=True)
    _write(path, json.dumps(table_to_dict(table), sort_keys=True))
    return table


def cmd_validate(args) -> int:
    inst = load_any(JSONSource(args.file))
    kind = "pma-bayes-1" if isinstance(inst, BayesianInstance) else "pma-1"
    report = RunReport("validate", digest=instance_digest(inst),
                       result={"format": kind, "n": inst.n, "m": inst.m, "q": inst.q, "valid": True})
    _emit(report, args)
    return EXIT_OK


def _check_one(inst, args) -> str:
    if args.property == "fosd":
        return check_fosd(inst).message
    if args.property == "ordered_supermodular":
        pp = build_partition_problem(inst, cached_payment_table(inst))
        return check_ordered_supermodular(pp, args.mode, args.trials, args.seed).message
    return check_property(inst.reward, inst, args.property, args.mode, args.trials, args.seed).message


def cmd_check(args) -> int:
    inst = load_any(JSONSource(args.file))
    checks = {}
    if isinstance(inst, BayesianInstance):
        for theta in inst.support:
            checks[f"types {list(theta)}"] = _check_one(inst.type_instance(theta), args)
    else:
        checks[args.property] = _check_one(inst, args)
    _emit(RunReport("check", digest=instance_digest(inst), method=args.property, seed=args.seed,
                    checks=checks), args)
    return EXIT_OK


def _solve_instance(inst, args) -> tuple:
    table = cached_payment_table(inst)
    eval_options = EvalOptions(seed=args.seed)
    if args.method == "brute":
        sol = brute_force_optimal(build_partition_problem(inst, table, eval_options))
    elif args.method == "ir-fosd":
        if not args.trust_tags:
            verify_ir_fosd(inst, args.seed)
        sol = solve_ir_fosd(build_partition_problem(inst, table, eval_options), seed=args.seed)
    else:
        sol = solve_dr(inst, DrOptions(eps=args.eps, seed=args.seed, trust_tags=args.trust_tags), table=table)
    value = principal_utility(inst, sol.contract)
    if abs(value - sol.value) > VALUE_TOL:
        logger.warning(f"[solve] reported value {sol.value:.9g} differs from re-evaluation {value:.9g}")
    artifact = {"contract": sol.contract.to_dict(), "value": value}
    result = {"profile": list(sol.profile)}
    if args.min_payments:
        result["min_payments"] = table_to_dict(table)
    return value, artifact, result


def _solve_bayesian(bi, args) -> tuple:
    ctx = BayesContext(bi, EvalOptions(seed=args.seed))
    sol = solve_lp3_direct(ctx)
    tau = payment_bound(bi, ctx.table)
    regular = regularize(ctx, sol, VALUE_TOL / (bi.n * tau + 1))
    menu = menu_from_solution(ctx, regular)
    report = check_dsic(bi, menu)
    result = {"lp_value": sol.value, "menu_value": menu.value, "dsic": report.message}
    if args.min_payments:
        result["min_payments"] = table_to_dict(ctx.table)
    return sol.value, menu_to_json(menu, report), result


def cmd_solve(args) -> int:
    start = time.perf_counter()
    if args.method == "lp3":
        inst = load_bayesian(JSONSource(args.file))
        value, artifact, result = _solve_bayesian(inst, args)
    else:
        inst = load_instance(JSONSource(args.file))
        value, artifact, result = _solve_instance(inst, args)
    report = RunReport("solve", instance_digest(inst), args.method, value, args.out, seed=args.seed,
                       tolerances={"value": VALUE_TOL, "eps": args.eps}, result=result)
    if args.out:
        _write(args.out, json.dumps(artifact, sort_keys=True, indent=1))
    if args.timing:
        report.wall_time = time.perf_counter() - start
    _emit(report, args)
    return EXIT_OK


ORACLES = {"ir": "ir_fosd", "dr": "dr_approx", "exact": "exact"}


def cmd_bayes_solve(args) -> int:
    start = time.perf_counter()
    bi = load_bayesian(JSONSource(args.file))
    options = BayesOptions(rho=args.rho, oracle_kind=ORACLES[args.oracle], seed=args.seed,
                           dual_method=args.dual.replace("-", "_"), trust_tags=args.trust_tags,
                           eval_options=EvalOptions(seed=args.seed))
    result = bayes_solve(bi, options)
    artifact = menu_to_json(result.menu, result.dsic)
    if args.out:
        _write(args.out, json.dumps(artifact, sort_keys=True, indent=1))
    report = RunReport("bayes-solve", instance_digest(bi), options.oracle_kind, result.value, args.out,
                       seed=args.seed, tolerances={"rho": args.rho, "dsic": result.dsic.tol},
                       checks={"dsic": result.dsic.message}, result={**result.diagnostics, "menu": artifact})
    if args.timing:
        report.wall_time = time.perf_counter() - start
    _emit(report, args)
    return EXIT_OK


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def cmd_gen(args) -> int:
    if args.kind in ("random", "bayes"):
        params = GenParams(args.n, args.ell, args.m, args.q, args.family, None, args.fosd, args.omega_null,
                           args.seed)
        if args.kind == "random":
            inst = gen_random(params)
        else:
            inst = gen_bayesian(params, args.types, args.support)
    elif args.kind == "label-cover":
        if not args.graph:
            raise UsageError("gen label-cover needs --graph")
        inst = gen_label_cover(parse_label_cover(_read_text(args.graph)), args.smoothing)
    else:
        if not args.graph:
            raise UsageError("gen indep-set needs --graph")
        inst = gen_independent_set(parse_edge_list(_read_text(args.graph)))
    text = dump_instance(inst)
    if args.out:
        _write(args.out, text)
        _emit(RunReport("gen", instance_digest(inst), args.kind, artifact=args.out, seed=args.seed), args)
    else:
        print(text)
    return EXIT_OK


def _read_lp(path: str) -> LinearProgram:
    data = json.loads(_read_text(path))
    try:
        return LinearProgram(data["c"], data["A"], data["relations"], data["b"],
                             data.get("lower"), _bounds(data.get("upper")), data.get("sense", "min"))
    except KeyError as e:
        raise ValidationError([f"LP file misses field {e}"]) from e


def _bounds(values):
    if values is None:
        return None
    return [math.inf if v is None else v for v in values]


def cmd_oracle(args) -> int:
    if args.kind == "lp":
        lp = _read_lp(args.file)
        res = solve_lp(lp, backend=args.backend)
        result = {"status": res.status.value, "iterations": res.iterations}
        if res.optimal:
            result.update({"x": res.x.tolist(), "duals": res.duals.tolist()})
        elif res.certificate is not None:
            result["certificate"] = res.certificate.tolist()
        elif res.ray is not None:
            result["ray"] = res.ray.tolist()
        _emit(RunReport("oracle", method=f"lp/{args.backend}", value=res.value, result=result), args)
        return EXIT_OK
    data = json.loads(_read_text(args.file))
    cuts = [Cut(np.array(row, dtype=float), float(rhs)) for row, rhs in zip(data["normals"], data["rhs"])]
    dim = len(cuts[0].normal) if cuts else int(data.get("dim", 1))
    res = ellipsoid_feasibility(dim, float(data.get("radius", 1.0)), halfspace_oracle(cuts),
                                tol=float(data.get("tol", 1e-6)))
    result = {"feasible": res.feasible, "iterations": res.iterations,
              "point": None if res.point is None else res.point.tolist()}
    _emit(RunReport("oracle", method="ellipsoid", result=result), args)
    return EXIT_OK


def bench_case(family: str, index: int, seed: int) -> list[dict]:
    """
    One benchmark instance: rows (family, index, seed, method, value, bound, margin).
    """
    case_seed = child_seed(seed, index)
    sizes = np.random.Generator(np.random.Philox(case_seed)).integers(1, 4, size=3)
    n, ell, m = (int(x) for x in sizes)
    rows = []

    def row(method, value, bound):
        rows.append({"family": family, "index": index, "seed": case_seed, "method": method,
                     "value": value, "bound": bound, "margin": value - bound})

    if family == "ir":
        inst = gen_random(GenParams(n, ell, max(m, 2), 1, "exp_sum", fosd=True, seed=case_seed))
        pp = build_partition_problem(inst)
        row("ir-fosd", solve_ir_fosd(pp).value, brute_force_optimal(pp).value)
    elif family == "dr":
        inst = gen_random(GenParams(n, ell, max(m, 2), 1, "budget_additive", omega_null=True, seed=case_seed))
        pp = build_partition_problem(inst)
        best = brute_force_optimal(pp)
        reward = pp.reward(best.profile)
        payment = reward - best.value
        found = solve_dr(inst, DrOptions(eps=0.01, seed=case_seed, trust_tags=True))
        row("dr-approx", found.value, (1 - 1 / math.e) * reward - payment - 0.01)
    elif family == "fosd":
        inst = gen_random(GenParams(n, ell, 2 + m + index % 4, 2, "linear", fosd=index % 2 == 0, seed=case_seed))
        fast, slow = check_fosd(inst), fosd_bruteforce(inst)
        row("fosd", float(fast.ok), float(slow.ok))
    elif family == "bayes":
        params = GenParams(min(n, 2), ell, 2, 1, "exp_sum", fosd=True, seed=case_seed)
        bi = gen_bayesian(params, num_types=2)
        lp_value = solve_lp3_direct(bi).value
        result = bayes_solve(bi, BayesOptions(rho=0.05, seed=case_seed, trust_tags=True))
        row("bayes", result.value, lp_value - 0.05)
        row("dsic", float(result.dsic.ok), 1.0)
    else:
        raise ValueError(f"Unknown bench family: {family}")
    return rows


def cmd_bench(args) -> int:
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            batches = list(pool.map(bench_case, [args.family] * args.count, range(args.count),
                                    [args.seed] * args.count))
    else:
        batches = [bench_case(args.family, k, args.seed) for k in range(args.count)]
    rows = [r for batch in batches for r in batch]
    fields = ["family", "index", "seed", "method", "value", "bound", "margin"]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    failures = sum(1 for r in rows if r["margin"] < -VALUE_TOL)
    logger.info(f"[bench] {args.family}: {len(rows)} rows, {failures} below bound")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="main.py", description="Contract design for hidden-action principal-multi-agent problems")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="load and validate an instance")
    p.add_argument("file")
    common(p, seed=False)
    p.set_defaults(run=cmd_validate)

    p = sub.add_parser("check", help="check a structural property")
    p.add_argument("file")
    p.add_argument("--property", choices=[*PROPERTIES, "fosd", "ordered_supermodular"], default="fosd")
    p.add_argument("--mode", choices=["exhaustive", "sampled"], default="sampled")
    p.add_argument("--trials", type=int, default=1000)
    common(p)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("solve", help="optimal or approximate contract")
    p.add_argument("file")
    p.add_argument("--method", choices=["brute", "ir-fosd", "dr-approx", "lp3"], required=True)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--trust-tags", action="store_true", help="skip the sampled reward-property checks")
    p.add_argument("--min-payments", action="store_true", help="include the minimum-payment table")
    p.add_argument("--out", help="write the contract or menu artifact here")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")
    common(p)
    p.set_defaults(run=cmd_solve)

    p = sub.add_parser("bayes-solve", help="menu of randomized contracts for a Bayesian instance")
    p.add_argument("file")
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--oracle", choices=sorted(ORACLES), default="ir")
    p.add_argument("--dual", choices=["cutting-plane", "ellipsoid"], default="cutting-plane")
    p.add_argument("--trust-tags", action="store_true")
    p.add_argument("--out")
    p.add_argument("--timing", action="store_true")
    common(p)
    p.set_defaults(run=cmd_bayes_solve)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("kind", choices=["random", "bayes", "label-cover", "indep-set"])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--family", choices=["linear", "budget_additive", "coverage_max", "exp_sum"], default="linear")
    p.add_argument("--fosd", action="store_true")
    p.add_argument("--omega-null", action="store_true")
    p.add_argument("--types", type=int, default=2)
    p.add_argument("--support", type=int)
    p.add_argument("--graph", help="edge-list or label-cover text file")
    p.add_argument("--smoothing", type=float, default=20.0)
    p.add_argument("-o", "--out")
    common(p)
    p.set_defaults(run=cmd_gen)

    p = sub.add_parser("oracle", help="run the LP solver or the ellipsoid method on a JSON file")
    p.add_argument("kind", choices=["lp", "ellipsoid"])
    p.add_argument("file")
    p.add_argument("--backend", choices=["simplex", "highs"], default="simplex")
    common(p, seed=False)
    p.set_defaults(run=cmd_oracle)

    p = sub.add_parser("bench", help="acceptance-style comparisons as CSV")
    p.add_argument("family", choices=["ir", "dr", "fosd", "bayes"])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(run=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.run(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, CapExceededError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverRefusal as e:
        print(f"solver refused: {e}", file=sys.stderr)
        if e.witness is not None:
            print(f"witness: {getattr(e.witness, 'message', e.witness)}", file=sys.stderr)
        return EXIT_REFUSAL
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
