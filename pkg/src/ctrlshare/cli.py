"""Command-line interface.

Exit codes: 0 success, 1 a verification check failed, 2 bad input file
or a solver gave up, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dp import CoordinatorPolicy, solve_average_reward, solve_discounted, solve_finite_horizon
from .exceptions import CombinatorialBlowup, CtrlShareError, ModelFormatError, ModelValidationError, NonConvergence
from .mab import MabParams, MabSolution, alpha_root, closed_form, mab_relative_vi, tau, verify_fixed_point
from .model import load_model
from .sim import simulate_policy
from .suites import SUITES, run_suite

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError()


def _dump(doc, out=None):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _probability(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not a probability")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctrlshare", description="Coordinator solvers for coupled subsystems with control sharing.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a model file")
    s.add_argument("--model", required=True)
    crit = s.add_mutually_exclusive_group(required=True)
    crit.add_argument("--horizon", type=int)
    crit.add_argument("--discount", type=float)
    crit.add_argument("--average", action="store_true")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-points", type=int, default=100_000)
    s.add_argument("--snap", action="store_true",
                   help="map successors outside a truncated belief set to the nearest stored point")
    s.add_argument("--out")

    m = sub.add_parser("mab", help="two-user multiaccess channel")
    m.add_argument("--p", type=_probability, required=True)
    m.add_argument("--p2", type=_probability)
    m.add_argument("--mode", choices=("closed-form", "rvi", "both"), default="both")
    m.add_argument("--nmax", type=int)
    m.add_argument("--tol", type=float, default=1e-9)
    m.add_argument("--out")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=SUITES, required=True)
    v.add_argument("--seeds", type=int, default=20)
    v.add_argument("--out")

    sm = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    src = sm.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--mab-p", type=_probability)
    sm.add_argument("--mab-p2", type=_probability)
    sm.add_argument("--policy", required=True, help="policy JSON file, or closed-form / rvi for the channel")
    sm.add_argument("--steps", type=int, required=True)
    sm.add_argument("--seed", type=int, required=True)
    sm.add_argument("--batches", type=int, default=100)
    sm.add_argument("--out")

    r = sub.add_parser("roots", help="threshold roots")
    which = r.add_mutually_exclusive_group(required=True)
    which.add_argument("--alpha", type=int, metavar="N")
    which.add_argument("--tau", action="store_true")
    return parser


def _cmd_solve(args):
    model = load_model(args.model)
    if args.horizon is not None:
        policy, value = solve_finite_horizon(model, args.horizon, max_points=args.max_points)
        doc = {"criterion": "finite", "horizon": args.horizon, "value": value}
    elif args.discount is not None:
        vf, policy = solve_discounted(model, args.discount, tol=args.tol or 1e-8, max_points=args.max_points,
                                      snap=args.snap)
        doc = {"criterion": "discounted", "discount": args.discount, "values": vf.to_json()}
    else:
        gain, vf, policy = solve_average_reward(model, tol=args.tol or 1e-9, max_points=args.max_points,
                                              snap=args.snap)
        doc = {"criterion": "average", "gain": gain, "values": vf.to_json()}
    doc["objective_sense"] = model.objective_sense
    doc["policy"] = policy.to_json()
    _dump(doc, args.out)
    return EXIT_OK


def _mab_doc(sol, symmetric):
    doc = sol.to_json()
    if symmetric:
        rep = verify_fixed_point(sol.params.p1, sol)
        doc["residuals"] = {row["index"]: row["residual"] for row in rep["rows"]}
        doc["max_residual"] = rep["max_residual"]
    return doc


def _cmd_mab(args):
    p2 = args.p if args.p2 is None else args.p2
    params = MabParams(args.p, p2)
    symmetric = params.is_symmetric
    if args.mode != "rvi" and not symmetric:
        raise UsageError("the closed form needs symmetric arrivals; use --mode rvi")
    if args.mode != "rvi" and args.p == 0:
        raise UsageError("the closed form needs p > 0")
    if args.mode == "closed-form":
        doc = _mab_doc(closed_form(args.p, args.nmax), True)
    elif args.mode == "rvi":
        doc = _mab_doc(mab_relative_vi(params, args.nmax, args.tol), symmetric)
    else:
        cf = closed_form(args.p, args.nmax)
        rvi = mab_relative_vi(params, args.nmax, args.tol)
        gap = abs(cf.gain - rvi.gain)
        doc = {"closed_form": _mab_doc(cf, True), "rvi": _mab_doc(rvi, True), "gain_discrepancy": gap}
        sys.stderr.write(f"gain discrepancy: {gap:.3e}\n")
    _dump(doc, args.out)
    return EXIT_OK


def _cmd_verify(args):
    results = run_suite(args.suite, args.seeds)
    for r in results:
        print(r.line())
    if args.out:
        _dump({"suite": args.suite, "seeds": args.seeds, "checks": [r.to_json() for r in results]}, args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _load_policy(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc.strerror}") from exc
    if isinstance(doc, dict) and "policy" in doc and isinstance(doc["policy"], dict) and "stages" in doc["policy"]:
        doc = doc["policy"]
    try:
        if "provenance" in doc:
            return MabSolution.from_json(doc)
        if "stages" in doc:
            return CoordinatorPolicy.from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed policy: {exc}") from exc
    raise ModelFormatError(f"{path}: neither a coordinator policy nor a channel solution")


def _cmd_simulate(args):
    if args.mab_p is not None:
        params = MabParams(args.mab_p, args.mab_p if args.mab_p2 is None else args.mab_p2)
        if args.policy == "closed-form":
            if not params.is_symmetric:
                raise UsageError("the closed form needs symmetric arrivals")
            policy = closed_form(params.p1)
        elif args.policy == "rvi":
            policy = mab_relative_vi(params)
        else:
            policy = _load_policy(args.policy)
        model = None
    else:
        model = load_model(args.model)
        policy = _load_policy(args.policy)
    rep = simulate_policy(model, policy, args.steps, args.seed, batches=args.batches)
    _dump(rep.to_json(), args.out)
    return EXIT_OK


def _cmd_roots(args):
    if args.tau:
        print(f"{tau():.12f}")
    else:
        if args.alpha < 0:
            raise UsageError("--alpha needs a non-negative index")
        print(f"{alpha_root(args.alpha):.12f}")
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "mab": _cmd_mab, "verify": _cmd_verify, "simulate": _cmd_simulate,
            "roots": _cmd_roots}


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        if str(exc):
            sys.stderr.write(f"ctrlshare: {exc}\n")
        return EXIT_USAGE
    except (ModelFormatError, ModelValidationError) as exc:
        sys.stderr.write(f"ctrlshare: {exc}\n")
        return EXIT_INPUT
    except (CombinatorialBlowup, NonConvergence) as exc:
        sys.stderr.write(f"ctrlshare: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT
    except CtrlShareError as exc:
        sys.stderr.write(f"ctrlshare: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


def main():
    sys.exit(run_cli())
