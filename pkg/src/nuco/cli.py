"""Command-line front end.

Exit codes: 0 clean, 1 usage or input error, 2 a hypothesis of an estimate is not
met, 3 a verification failed (or a numerical solve broke down).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from typing import Sequence

from . import __version__
from .criteria import PD_TOL, lti_obs_rank, ltv_L_rank, observable_at
from .dual import check_duality_equivalence, check_gramian_identity, dualize
from .errors import (DegenerateGrid, DimensionMismatch, EvalError, ExprSyntaxError, HypothesisUnmet, InfeasibleFit,
                     IntegrationFailure, NonFiniteDerivative, NucoError, VerificationFailure)
from .feedback import (FeedbackGains, InputFeedbackGains, fit_feedback_gains, fit_input_gains,
                       mat_mul, verify_closed_growth, verify_input_feedback, verify_output_feedback)
from .flow import IntegratorConfig, transition, transition_dual
from .gramian import gramian
from .nucert import (GrowthEnvelope, certify_nucc, certify_nuco, check_kalman_property,
                     check_two_imply_third, envelope_grid, fit_growth_envelope)
from .report import SCHEMA, config_hash, dumps
from .scenarios import (DEFAULT_SIGMA_GRID, DEFAULT_T_GRID, EXIT_HYPOTHESIS, EXIT_OK, EXIT_USAGE,
                        EXIT_VERIFICATION, RUNS, library, run_scenario)
from .tvmat import TimeGrid, load_matrix, load_system


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _grid(text: str) -> TimeGrid:
    try:
        return TimeGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--rel-tol", type=float, default=1e-9, help="integrator relative tolerance")
    p.add_argument("--abs-tol", type=float, default=1e-11, help="integrator absolute tolerance")
    p.add_argument("--method", choices=("rk45", "rk4"), default="rk45")
    p.add_argument("--seed", type=int, default=0, help="seed for the random test directions")
    p.add_argument("--timing", action="store_true", help="include wall time (reports stop being byte-stable)")


def _grids(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-grid", type=_grid, default=DEFAULT_T_GRID, metavar="A:B:N")
    p.add_argument("--sigma-grid", type=_grid, default=DEFAULT_SIGMA_GRID, metavar="A:B:N")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nuco", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transition", help="transition matrix Phi(t, tau)")
    p.add_argument("--system", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--dual", action="store_true", help="transition matrix of x' = -A^T x instead")
    _common(p)

    p = sub.add_parser("gramian", help="one Gramian M, W or K")
    p.add_argument("--system", required=True)
    p.add_argument("--kind", choices=("M", "W", "K"), required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    _common(p)

    p = sub.add_parser("criteria", help="Kalman rank, L(t) rank or Gramian observability test")
    p.add_argument("--system", required=True)
    p.add_argument("--test", choices=("auto", "lti", "ltv", "gramian"), default="auto")
    p.add_argument("--t-a", type=float, default=0.0, help="evaluation time for the L(t) test")
    p.add_argument("--q", type=int, default=None, help="number of derivative blocks (default n-1)")
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, default=1.0)
    _common(p)

    p = sub.add_parser("certify", help="grid certificate of NUCO, NUCC or UCO")
    p.add_argument("--system", required=True)
    p.add_argument("--mode", choices=("nuco", "nucc", "uco", "envelope", "two-third"), default="nuco")
    p.add_argument("--emit-csv", metavar="PATH", help="write the (t, sigma, lambda_min, lambda_max) table")
    _grids(p)
    _common(p)

    p = sub.add_parser("dual", help="dual system and duality checks")
    p.add_argument("--system", required=True)
    p.add_argument("--check", choices=("both", "identity", "equivalence", "none"), default="both")
    _grids(p)
    _common(p)

    p = sub.add_parser("feedback", help="closed-loop growth and Gramian estimates under feedback")
    p.add_argument("--system", required=True)
    p.add_argument("--gain", required=True, help="JSON file holding F (output mode) or L (input mode)")
    p.add_argument("--mode", choices=("output", "input"), default="output")
    p.add_argument("--constants", default="",
                   help="override fitted constants, e.g. K0=1,a=0.1,eps=0,script_K=1,delta=0.1,script_C=1,gamma=0.3")
    _grids(p)
    _common(p)

    p = sub.add_parser("scenario", help="built-in example systems")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--list", action="store_true")
    g.add_argument("--name")
    g.add_argument("--all", action="store_true")
    p.add_argument("--run", action="append", choices=RUNS, help="run only these checks (repeatable)")
    _common(p)
    return ap


def _cfg(args) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol, method=args.method)


def _constants(text: str) -> dict[str, float]:
    out = {}
    for part in filter(None, (x.strip() for x in text.split(","))):
        key, sep, val = part.partition("=")
        if not sep:
            raise UsageError(f"--constants entries look like name=value, got {part!r}")
        out[key.strip()] = float(val)
    return out


# --------------------------------------------------------------------------
# Subcommands; each returns (result, exit code)


def cmd_transition(args, cfg):
    sysm = load_system(args.system)
    f = transition_dual if args.dual else transition
    phi = f(sysm.A, args.t, args.tau, cfg)
    return {"t": args.t, "tau": args.tau, "dual": args.dual, "matrix": phi}, EXIT_OK


def cmd_gramian(args, cfg):
    sysm = load_system(args.system)
    X = sysm.C if args.kind == "M" else sysm.B
    if X is None:
        raise DimensionMismatch(f"Gramian {args.kind} needs {'C' if args.kind == 'M' else 'B'} in the system file")
    return gramian(sysm.A, X, args.t, args.sigma, args.kind, cfg).to_json(), EXIT_OK


def cmd_criteria(args, cfg):
    sysm = load_system(args.system)
    if sysm.C is None:
        raise DimensionMismatch("observability tests need C in the system file")
    test = args.test
    if test == "auto":
        test = "lti" if sysm.A.is_constant() and sysm.C.is_constant() else "ltv"
    if test == "lti":
        if not (sysm.A.is_constant() and sysm.C.is_constant()):
            raise UsageError("the Kalman rank test needs constant A and C")
        rep = lti_obs_rank(sysm.A(0.0), sysm.C(0.0)).to_json()
    elif test == "ltv":
        rep = ltv_L_rank(sysm.A, sysm.C, args.q, args.t_a, args.fd_step).to_json()
    else:
        rep = observable_at(sysm.A, sysm.C, args.t0, args.tf, cfg, PD_TOL).to_json()
    rep["test"] = test
    return rep, EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def cmd_certify(args, cfg):
    sysm = load_system(args.system)
    mode = args.mode
    if mode in ("nuco", "uco"):
        if sysm.C is None:
            raise DimensionMismatch("observability certificates need C in the system file")
        cert = certify_nuco(sysm.A, sysm.C, args.t_grid, args.sigma_grid, cfg)
        if args.emit_csv:
            _write_csv(args.emit_csv, ["t", "sigma", "lambda_min", "lambda_max"], cert.csv_rows())
        ok = cert.certified and (cert.uco if mode == "uco" else True)
        return cert.to_json(), EXIT_OK if ok else EXIT_VERIFICATION
    if mode in ("nucc", "two-third") and sysm.B is None:
        raise DimensionMismatch("controllability checks need B in the system file")
    if mode == "nucc":
        cert = certify_nucc(sysm.A, sysm.B, args.t_grid, args.sigma_grid, cfg)
        if args.emit_csv:
            _write_csv(args.emit_csv, ["t", "sigma", "lambda_min_W", "lambda_max_W", "lambda_min_K", "lambda_max_K"],
                       cert.csv_rows())
        return cert.to_json(), EXIT_OK if cert.certified else EXIT_VERIFICATION
    eg = envelope_grid(args.t_grid, args.sigma_grid)
    if mode == "envelope":
        env = fit_growth_envelope(sysm.A, eg, eg, cfg)
        return {"growth": env.to_json(), "kalman": check_kalman_property(env).to_json()}, EXIT_OK
    rep = check_two_imply_third(sysm.A, sysm.B, args.t_grid, args.sigma_grid, cfg, env_grid=eg)
    return rep, EXIT_VERIFICATION if rep["findings"] else EXIT_OK


def cmd_dual(args, cfg):
    sysm = load_system(args.system)
    if sysm.C is None:
        raise DimensionMismatch("the dual system needs C in the system file")
    d = dualize(sysm.A, sysm.C)
    out = {"dual_system": d.to_config()}
    code = EXIT_OK
    if args.check in ("both", "identity"):
        out["identity"] = check_gramian_identity(sysm.A, sysm.C, args.t_grid, args.sigma_grid, cfg)
        code = max(code, EXIT_OK if out["identity"]["passed"] else EXIT_VERIFICATION)
    if args.check in ("both", "equivalence"):
        out["equivalence"] = check_duality_equivalence(sysm.A, sysm.C, args.t_grid, args.sigma_grid, cfg)
        code = max(code, EXIT_OK if out["equivalence"]["passed"] else EXIT_VERIFICATION)
    return out, code


_ENV_KEYS = ("K0", "a", "eps")


def _envelope(A, grid, cfg, c: dict) -> GrowthEnvelope:
    """Fitted growth envelope of ``A`` with any of K0, a, eps replaced from ``--constants``."""
    if all(k in c for k in _ENV_KEYS):
        return GrowthEnvelope(*(c[k] for k in _ENV_KEYS), max_log_residual=float("nan"))
    env = fit_growth_envelope(A, grid, grid, cfg)
    return replace(env, **{k: c[k] for k in _ENV_KEYS if k in c})


def cmd_feedback(args, cfg):
    sysm = load_system(args.system)
    c = _constants(args.constants)
    eg = envelope_grid(args.t_grid, args.sigma_grid)
    if sysm.B is None:
        raise DimensionMismatch("feedback needs B in the system file")
    if args.mode == "input":
        _, L = load_matrix(args.gain, ("L", "F", "K"))
        env = _envelope(sysm.A, eg, cfg, c)
        gains = None
        keys = ("script_L", "ell", "script_B", "beta")
        if any(k in c for k in keys):
            g = fit_input_gains(L, sysm.B, eg, env)
            gains = InputFeedbackGains(L, *(c.get(k, getattr(g, k)) for k in keys))
        rep = verify_input_feedback(sysm.A, sysm.B, L, args.t_grid, args.sigma_grid, cfg, args.seed,
                                    env_grid=eg, env=env, gains=gains)
        ok = rep["agree"] and rep["dual_check"]["contained"]
        return rep, EXIT_OK if ok else EXIT_VERIFICATION

    if sysm.C is None:
        raise DimensionMismatch("output feedback needs C in the system file")
    _, F = load_matrix(args.gain, ("F", "K", "L"))
    K = mat_mul(sysm.B, F)
    env = _envelope(sysm.A, eg, cfg, c)
    gains = fit_feedback_gains(K, sysm.C, eg, env)
    keys = ("script_K", "delta", "script_C", "gamma")
    if any(k in c for k in keys):
        gains = FeedbackGains(K, *(c.get(k, getattr(gains, k)) for k in keys), fitted_on=None)
    growth = verify_closed_growth(sysm.A, K, sysm.C, gains, env, args.t_grid, cfg)
    check = verify_output_feedback(sysm.A, K, sysm.C, args.t_grid, args.sigma_grid, cfg, args.seed,
                                   env=env, gains=gains, env_grid=eg)
    out = check.to_json()
    out["growth"] = growth
    ok = check.contained and check.equivalent and growth["passed"]
    return out, EXIT_OK if ok else EXIT_VERIFICATION


def cmd_scenario(args, cfg):
    lib = library()
    if args.list:
        return {"scenarios": [sc.to_json() for sc in lib.values()]}, EXIT_OK
    runs = tuple(args.run) if args.run else None
    if args.name:
        if args.name not in lib:
            raise UsageError(f"unknown scenario {args.name!r}; try --list")
        return run_scenario(lib[args.name], runs, args.seed)
    reports, code = {}, EXIT_OK
    for name, sc in lib.items():
        reports[name], c = run_scenario(sc, runs, args.seed)
        code = max(code, c)
    summary = {name: r["passed"] for name, r in reports.items()}
    return {"summary": summary, "reports": reports}, code


COMMANDS = {
    "transition": cmd_transition,
    "gramian": cmd_gramian,
    "criteria": cmd_criteria,
    "certify": cmd_certify,
    "dual": cmd_dual,
    "feedback": cmd_feedback,
    "scenario": cmd_scenario,
}

_INPUT_ERRORS = (OSError, ValueError, KeyError, ExprSyntaxError, DimensionMismatch, EvalError, DegenerateGrid)
_NUMERIC_ERRORS = (IntegrationFailure, InfeasibleFit, NonFiniteDerivative)


def _echo(args) -> dict:
    return {k: str(v) if isinstance(v, TimeGrid) else v for k, v in sorted(vars(args).items())
            if k not in ("out", "timing")}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    """Parse ``argv``, execute the subcommand and write the JSON report; returns the exit code."""
    stdout = stdout or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"nuco: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    start = time.perf_counter()
    report = {"schema": SCHEMA, "version": __version__, "command": args.command, "args": _echo(args)}
    try:
        cfg = _cfg(args)
        hashed = [_echo(args)]
        for key in ("system", "gain"):
            path = getattr(args, key, None)
            if path:
                with open(path, encoding="utf-8") as fh:
                    hashed.append(fh.read())
        report["config_hash"] = config_hash(*hashed)
        result, code = COMMANDS[args.command](args, cfg)
        report["result"] = result
    except UsageError as exc:
        print(f"nuco: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisUnmet as exc:
        report["error"] = {"type": "HypothesisUnmet", "condition": exc.condition, "message": str(exc)}
        code = EXIT_HYPOTHESIS
    except (VerificationFailure, *_NUMERIC_ERRORS) as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_VERIFICATION
    except _INPUT_ERRORS as exc:
        print(f"nuco: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NucoError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_VERIFICATION
    report["exit_code"] = code
    if args.timing:
        report["wall_time_s"] = time.perf_counter() - start
    text = dumps(report)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"nuco: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        stdout.write(text)
    if "error" in report:
        print(f"nuco: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())
