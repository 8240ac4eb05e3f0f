"""Command line entry point.

Exit codes: 0 success, 1 invalid input or missing file, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness
from .decoupling import design_tf_diagonal, design_tf_identity, fw_identity_pair, fw_pole_assignment_pair
from .decoupling import small_gain_certificate
from .errors import DimensionMismatch, RefGovError, ScenarioError
from .mas import DEFAULT_EPSILON, DEFAULT_T_MAX, build_mas, save_mas
from .polytope import Box
from .sysmod import (
    LinearSystem,
    RationalMatrix,
    condition_number,
    dc_gain,
    hinf_norm,
    l1_impulse_norm,
    load_system,
    realize,
    singular_values,
)


class InputError(Exception):
    """Bad command line input (exit code 1)."""


def _load_system(path):
    try:
        return load_system(path)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_box(text, p):
    src = Path(text)
    try:
        d = json.loads(src.read_text()) if src.is_file() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"constraints: invalid JSON: {exc}") from None
    if not isinstance(d, dict) or "lower" not in d or "upper" not in d:
        raise InputError("constraints: expected an object with 'lower' and 'upper'")
    lo = np.array([-np.inf if v is None else v for v in d["lower"]], dtype=float)
    hi = np.array([np.inf if v is None else v for v in d["upper"]], dtype=float)
    if lo.size != p or hi.size != p:
        raise InputError(f"constraints: expected {p} entries per side")
    return Box(lo, hi)


def _fmt(a):
    return np.array2string(np.asarray(a, float), precision=6, suppress_small=True, separator=", ")


def _analyze(sys_, method, M, out):
    """Collect the analysis numbers; prints and returns them."""
    rep = {}
    if isinstance(sys_, RationalMatrix):
        S = realize(sys_)
        rep["dc_gain"] = dc_gain(S).tolist()
        if sys_.rows == sys_.cols:
            dec = design_tf_diagonal(sys_) if method == "diagonal" else design_tf_identity(sys_)
            Fs = realize(dec.F)
            F0 = dc_gain(Fs)
            sv = singular_values(F0)
            rep.update({
                "method": method,
                "beta1": dec.beta1,
                "beta2": dec.beta2,
                "F0": F0.tolist(),
                "sigma_max_F0": float(sv[0]),
                "sigma_min_F0": float(sv[-1]),
                "gamma": condition_number(F0),
                "hinf_F": hinf_norm(Fs),
                "l1_F": l1_impulse_norm(Fs),
            })
    else:
        S = sys_
        G0 = dc_gain(S)
        rep["dc_gain"] = G0.tolist()
        sv = singular_values(G0)
        rep.update({"sigma_max_G0": float(sv[0]), "sigma_min_G0": float(sv[-1]),
                    "gamma": condition_number(G0)})
        if S.m == S.p and not np.any(S.D):
            try:
                dec = fw_identity_pair(S) if M is None else fw_pole_assignment_pair(S, M)
                rep["decoupling"] = dec.method
                rep["Gamma"] = dec.Gamma.tolist()
                rep["Phi"] = dec.Phi.tolist()
                rep["certificate"] = small_gain_certificate(S, dec)
            except RefGovError as exc:
                rep["certificate_error"] = str(exc)
    if S.is_stable():
        rep["hinf"] = hinf_norm(S)
        rep["l1"] = l1_impulse_norm(S)
    print(f"dc gain: {_fmt(rep['dc_gain'])}", file=out)
    for key in ("sigma_max_F0", "sigma_min_F0", "sigma_max_G0", "sigma_min_G0", "gamma",
                "hinf_F", "l1_F", "hinf", "l1", "certificate"):
        if key in rep:
            print(f"{key}: {rep[key]:.6f}", file=out)
    if "certificate_error" in rep:
        print(f"certificate: {rep['certificate_error']}", file=out)
    return rep


def cmd_analyze(args, out):
    sys_ = _load_system(args.system)
    M = None
    if args.pole is not None:
        M = [np.diag(np.asarray(d, float)) for d in json.loads(args.pole)]
    rep = _analyze(sys_, args.method, M, out)
    if args.json:
        Path(args.json).write_text(json.dumps(rep, indent=2))
    return 0


def cmd_simulate(args, out):
    s = harness.load_scenario(args.scenario)
    tr = harness.run_scenario(s, seed=args.seed)
    path = Path(args.out) if args.out else harness.output_dir() / f"{s.id}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    harness.export_trace(tr, path)
    print(json.dumps({"id": s.id, "rows": len(tr), "out": str(path), **tr.summary}), file=out)
    return 0


def cmd_mas_build(args, out):
    sys_ = _load_system(args.system)
    S = sys_ if isinstance(sys_, LinearSystem) else realize(sys_)
    Y = _load_box(args.constraints, S.p)
    mas = build_mas(S, Y, args.epsilon, args.t_max)
    path = Path(args.out) if args.out else harness.output_dir() / "mas.txt"
    save_mas(mas, path)
    print(json.dumps({"t_star": mas.t_star, "rows": mas.poly.nrows, "out": str(path)}), file=out)
    return 0


def cmd_bench(args, out):
    s = harness.load_scenario(args.scenario)
    solvers = harness.SOLVERS if args.solver == "all" else (args.solver,)
    res = harness.compare_solvers(s, solvers, args.steps, args.repetitions)
    for name in solvers:
        r = res[name]
        print(f"{name}: mean {r['mean']:.3e} s  max {r['max']:.3e} s  ({r['steps']} steps x {r['repetitions']})",
              file=out)
    return 0


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="refgov", description="Decoupled reference governor tools")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="run a scenario file and write its trace")
    p.add_argument("scenario")
    p.add_argument("--out", help="CSV path (default: $REFGOV_OUTPUT_DIR/<id>.csv)")
    p.add_argument("--seed", type=int, default=None, help="override the disturbance seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mas", help="admissible set tools")
    msub = p.add_subparsers(dest="mas_cmd", required=True)
    b = msub.add_parser("build", help="build the admissible set of a system")
    b.add_argument("system")
    b.add_argument("--constraints", required=True,
                   help='JSON object or file: {"lower": [...], "upper": [...]}, null = unbounded')
    b.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    b.add_argument("--t-max", type=int, default=DEFAULT_T_MAX)
    b.add_argument("--out")
    b.set_defaults(func=cmd_mas_build)

    p = sub.add_parser("bench", help="time the governor step")
    p.add_argument("scenario")
    p.add_argument("--solver", choices=harness.SOLVERS + ("all",), default="all")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--repetitions", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="gains and norms of a system file")
    p.add_argument("system")
    p.add_argument("--method", choices=("diagonal", "identity"), default="diagonal")
    p.add_argument("--pole", help="JSON list of M_k diagonals for pole-assignment decoupling")
    p.add_argument("--json", help="also write the numbers to this file")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _show_warning
            return args.func(args, out)
    except (InputError, ScenarioError, DimensionMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RefGovError, ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
