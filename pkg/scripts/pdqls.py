#!/usr/bin/env python3
"""
PDQLS command line - build, verify and benchmark positive-definite
linear-system solvers.

Every command prints its result as JSON, records a quick-status file in
state/last_run.json and exits 0 on success, 2 on invalid input, 3 when a
numerical check fails and 64 on a usage error.

Usage:
    python3 scripts/pdqls.py approx --ell 6 --kappa 15 --grid 2000 --out curve.csv
    python3 scripts/pdqls.py window --eps 0.01 --delta 0.125
    python3 scripts/pdqls.py encode --kind gram --instance inst.json
    python3 scripts/pdqls.py instance --family random_pd --param N=64 --param kappa=32 --out inst.json
    python3 scripts/pdqls.py solve --instance inst.json --mode amplify
    python3 scripts/pdqls.py vtaa --instance inst.json --eps 0.1
    python3 scripts/pdqls.py sumqls --instance fk.json --eps 0.01
    python3 scripts/pdqls.py sweep --family random_pd --kind degree --kappa 4,8,16,32 --fit degree~kappa
"""

import argparse
import json
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

# Ensure project root is on sys.path so modules/core imports work
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from core import config  # noqa: E402
from core.codec import dump, dumps  # noqa: E402
from core.errors import PdqlsError, ValidationError  # noqa: E402

USAGE_EXIT = 64


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that exits 64 on usage errors."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------
# argument helpers
# ----------------------------------------------------------------------
def float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_params(pairs: Sequence[str]) -> Dict[str, Any]:
    """key=value pairs; values are parsed as JSON when possible."""
    out: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValidationError(f"expected key=value, got {pair!r}")
        try:
            out[key] = json.loads(value)
        except ValueError:
            out[key] = value
    return out


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------
def cmd_approx(args: argparse.Namespace) -> Dict[str, Any]:
    from core.polyapprox import approx_error_sup, build_inverse_approximant, curve_samples
    from modules.bench import CURVE_SCHEMA, emit_csv

    p = build_inverse_approximant(args.ell, args.kappa)
    result = {**p.to_json()["meta"], "sup_error": approx_error_sup(p)}
    if args.out:
        emit_csv(curve_samples(p, args.grid), CURVE_SCHEMA, args.out)
        result["curve"] = args.out
    if args.json_out:
        dump(p, args.json_out)
    return result


def cmd_window(args: argparse.Namespace) -> Dict[str, Any]:
    from core.polyapprox import build_window

    w = build_window(args.eps, args.delta)
    doc = w.to_json()
    if args.out:
        dump(doc, args.out)
    return {**doc["meta"], "bands": w.bands}


def cmd_encode(args: argparse.Namespace) -> Dict[str, Any]:
    from modules.blockenc import SparseMatrixOracle, gram_encoding, lcu_encoding
    from modules.instances import load_instance

    inst = load_instance(args.instance)
    if args.kind == "gram":
        enc = gram_encoding(SparseMatrixOracle.from_dense(inst.matrix))
    else:
        if inst.spec is None:
            raise ValidationError("the lcu encoding needs an instance with a Hamiltonian spec")
        enc = lcu_encoding(inst.spec)
    checks = enc.verify()
    return {**enc.summary(), **checks}


def cmd_instance(args: argparse.Namespace) -> Dict[str, Any]:
    from modules.instances import generate_instance

    seed = config.resolve_seed(args.seed)
    inst = generate_instance(args.family, seed, parse_params(args.param))
    if args.out:
        dump(inst, args.out)
    return {"family": inst.family, "seed": seed, "dim": inst.dim, "kappa": inst.kappa, "out": args.out}


def cmd_solve(args: argparse.Namespace) -> Dict[str, Any]:
    from modules.instances import load_instance
    from modules.solver import solve_postselect

    inst = load_instance(args.instance)
    _, report = solve_postselect(
        inst.solver_operator(), inst.b, eta=args.eta, eps=args.eps, mode=args.mode,
        encoder=args.encoder, seed=inst.seed,
    )
    result = report.to_json()
    if args.out:
        dump(result, args.out)
    return result


def cmd_vtaa(args: argparse.Namespace) -> Dict[str, Any]:
    from modules.instances import load_instance
    from modules.vtaa import build_schedule, gamma_factor, simulate_vst, vtaa_cost_report

    inst = load_instance(args.instance)
    op = inst.solver_operator()
    kappa = max(op.kappa_bound, 2.0)
    schedule = build_schedule(kappa, args.eta, args.eps)
    amplify = "auto" if args.amplify == "auto" else int_list(args.amplify)
    _, report = simulate_vst(op, inst.b, schedule, amplify)
    inverse_norm = float(np.linalg.norm(op.solve(inst.b.amplitudes)))
    cost = vtaa_cost_report(schedule, report, inverse_norm=inverse_norm, strict=args.strict)
    result = {
        "schedule": schedule.to_json(),
        "report": report.to_json(),
        "cost": cost,
        "gamma_factor": gamma_factor(op, inst.b, kappa),
    }
    if args.out:
        dump(result, args.out)
    return result


def cmd_sumqls(args: argparse.Namespace) -> Dict[str, Any]:
    from core.codec import load
    from modules.blockenc import SumHamiltonianSpec
    from modules.instances import load_instance
    from modules.sumqls import sumqls_solve

    if args.instance:
        inst = load_instance(args.instance)
        if inst.spec is None:
            raise ValidationError("the sumqls pipeline needs an instance with a Hamiltonian spec")
        spec, b = inst.spec, inst.b
    else:
        if not (args.spec and args.rhs):
            raise ValidationError("give --instance, or both --spec and --rhs")
        spec = SumHamiltonianSpec.from_json(load(args.spec))
        b = load(args.rhs)
    _, report = sumqls_solve(spec, b, args.eps, workers=args.workers)
    result = report.to_json()
    if args.out:
        dump(result, args.out)
    return result


def cmd_sweep(args: argparse.Namespace) -> Dict[str, Any]:
    from modules.bench import SweepConfig, fit_rows, run_sweep

    if args.config:
        cfg = SweepConfig.load(args.config)
        if args.out:
            cfg.output = args.out
            cfg.validate()
    else:
        cfg = SweepConfig(
            kind=args.kind,
            kappas=args.kappa or [],
            ns=args.n or DEFAULT_N.get(args.kind, []),
            eps=args.eps or [0.01],
            etas=args.eta or [1.0],
            deltas=args.delta or [],
            js=args.J or [3],
            ss=args.s or [2],
            seeds=args.seeds or [config.resolve_seed()],
            mode=args.mode,
            output=args.out,
            workers=args.workers,
        )
    rows, schema = run_sweep(cfg, quiet=args.quiet)
    result: Dict[str, Any] = {"kind": cfg.kind, "rows": len(rows), "columns": list(schema), "out": cfg.output}
    if args.fit:
        result["fit"] = fit_rows(rows, args.fit)
    return result


COMMANDS = {
    "approx": cmd_approx,
    "window": cmd_window,
    "encode": cmd_encode,
    "instance": cmd_instance,
    "solve": cmd_solve,
    "vtaa": cmd_vtaa,
    "sumqls": cmd_sumqls,
    "sweep": cmd_sweep,
}


def build_parser() -> UsageParser:
    parser = UsageParser(prog="pdqls", description="Positive-definite quantum linear system toolkit")
    parser.add_argument("--quiet", action="store_true", help="Do not print the JSON result")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    p = sub.add_parser("approx", help="Build and evaluate an inverse approximant")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--grid", type=int, default=2000)
    p.add_argument("--out", help="Curve CSV (x, P, inverse)")
    p.add_argument("--json-out", dest="json_out", help="Polynomial JSON")

    p = sub.add_parser("window", help="Build a windowing polynomial")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--out", help="Polynomial JSON")

    p = sub.add_parser("encode", help="Build and verify a block-encoding")
    p.add_argument("--kind", choices=("gram", "lcu"), required=True)
    p.add_argument("--instance", required=True)

    p = sub.add_parser("instance", help="Generate an instance file")
    p.add_argument("--family", required=True)
    p.add_argument("--seed", type=int, default=None, help="Default: PDQLS_SEED")
    p.add_argument("--param", action="append", default=[], help="key=value, repeatable")
    p.add_argument("--out")

    p = sub.add_parser("solve", help="Post-selection / amplification solve")
    p.add_argument("--instance", required=True)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--mode", choices=("postselect", "amplify"), default="postselect")
    p.add_argument("--encoder", choices=("dilation", "gram"), default="dilation")
    p.add_argument("--out")

    p = sub.add_parser("vtaa", help="Variable-time amplified solve")
    p.add_argument("--instance", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--amplify", default="auto", help='"auto" or comma-separated k_j')
    p.add_argument("--strict", action="store_true", help="Fail when the cost bound is exceeded")
    p.add_argument("--out")

    p = sub.add_parser("sumqls", help="Sum-of-Hamiltonians preconditioned solve")
    p.add_argument("--instance")
    p.add_argument("--spec")
    p.add_argument("--rhs", help="Sparse b JSON")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="Grid sweep to CSV")
    p.add_argument("--config", help="SweepConfig JSON")
    p.add_argument("--family", default="random_pd", choices=("random_pd", "random_sum", "grover"))
    p.add_argument("--kind", default=None, choices=("degree", "window", "solve", "vtaa", "sumqls", "grover"))
    p.add_argument("--kappa", type=float_list)
    p.add_argument("--n", type=int_list)
    p.add_argument("--eps", type=float_list)
    p.add_argument("--eta", type=float_list)
    p.add_argument("--delta", type=float_list)
    p.add_argument("--J", type=int_list)
    p.add_argument("--s", type=int_list)
    p.add_argument("--seeds", type=int_list)
    p.add_argument("--mode", choices=("postselect", "amplify"), default="amplify")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fit", help='Log-log fit "y~x", e.g. degree~kappa')
    p.add_argument("--out")
    return parser


DEFAULT_N = {"solve": [16], "vtaa": [16], "sumqls": [4]}
FAMILY_KINDS = {"random_pd": "solve", "random_sum": "sumqls", "grover": "grover"}


def write_last_run(summary: Dict[str, Any]) -> None:
    try:
        path = config.LAST_RUN_FILE
        os.makedirs(os.path.dirname(str(path)), exist_ok=True)
        dump(summary, path)
    except OSError as e:
        print(f"⚠️ Failed to write {config.LAST_RUN_FILE}: {e}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and args.kind is None:
        args.kind = FAMILY_KINDS[args.family]

    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    try:
        result = COMMANDS[args.command](args)
        code = 0
    except PdqlsError as exc:
        result = exc.to_dict()
        code = exc.exit_code
        print(f"❌ {args.command}: {exc}", file=sys.stderr)
    except Exception as exc:
        # unexpected failures still leave a status file behind
        result = {"status": "error", "reason": str(exc)}
        code = 1
        print(f"❌ {args.command} crashed: {exc}", file=sys.stderr)

    write_last_run({"timestamp": timestamp, "command": args.command, "argv": argv, "exit_code": code, "result": result})
    if not args.quiet:
        print(dumps(result))
    return code


run_command = main


if __name__ == "__main__":
    sys.exit(main())
