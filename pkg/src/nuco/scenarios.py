"""Built-in example systems and the runner that checks them against expected outcomes.

Every scenario carries an ``expected`` block: a list of checks on paths
into the run report, each tagged with the ``basis`` of the expected value
(``closed-form`` for hand-integrated oracles, ``by-inspection`` for trivial
structure, ``explicit-estimate`` for two-sided estimates written in terms of fitted
growth and gain constants).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .criteria import lti_obs_rank, ltv_L_rank, observable_at
from .dual import check_duality_equivalence, check_gramian_identity
from .errors import HypothesisUnmet, NotControllableOnGrid, NotObservableOnGrid, NucoError, VerificationFailure
from .feedback import (fit_feedback_gains, mat_mul, verify_closed_growth, verify_input_feedback,
                       verify_preservation)
from .flow import DEFAULT_CONFIG, IntegratorConfig
from .nucert import (BOUND_SLACK, CERTIFIED, check_kalman_property, check_two_imply_third, certify_nucc,
                     certify_nuco, envelope_grid, fit_growth_envelope, verify_nucc_certificate,
                     verify_nuco_certificate)
from .tvmat import System, TimeGrid, TvMatrix, to_text

DEFAULT_T_GRID = TimeGrid(0.0, 20.0, 21)
DEFAULT_SIGMA_GRID = TimeGrid(0.25, 8.0, 16)
RATE_FIT_SLACK = 0.05
UCO_SLACK = 1e-3

CLOSED_FORM = "closed-form"
BY_INSPECTION = "by-inspection"
EXPLICIT = "explicit-estimate"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_HYPOTHESIS = 2
EXIT_VERIFICATION = 3

RUNS = ("criteria", "certify", "dual", "envelope", "two_imply_third", "growth", "feedback")


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    system: System
    runs: tuple[str, ...]
    expected: tuple[dict, ...] = ()
    gain: TvMatrix | None = None
    gain_mode: str | None = None
    t_grid: TimeGrid = DEFAULT_T_GRID
    sigma_grid: TimeGrid = DEFAULT_SIGMA_GRID
    cfg: IntegratorConfig = DEFAULT_CONFIG
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "system": self.system.to_config(),
            "runs": list(self.runs),
            "t_grid": str(self.t_grid),
            "sigma_grid": str(self.sigma_grid),
            "integrator": {"rel_tol": self.cfg.rel_tol, "abs_tol": self.cfg.abs_tol, "method": self.cfg.method},
            "params": self.params,
            "expected": list(self.expected),
        }
        if self.gain is not None:
            out["gain"] = {"mode": self.gain_mode, "matrix": self.gain.to_rows()}
        return out


def expect(path: str, op: str, value, basis: str, tol: float | None = None) -> dict:
    e = {"path": path, "op": op, "value": value, "basis": basis}
    if tol is not None:
        e["tol"] = tol
    return e


def _m(rows) -> TvMatrix:
    return TvMatrix.from_rows(rows)


def _table(f: Callable[[np.ndarray], np.ndarray], grid: TimeGrid) -> list[float]:
    return [float(v) for v in f(grid.points)]


# --------------------------------------------------------------------------
# Library


def _certified_flat_rates(prefix: str, names=("nu0", "nu1")) -> list[dict]:
    return [expect(f"{prefix}.{k}", "<=", UCO_SLACK, CLOSED_FORM) for k in names]


def scenario_squeeze(c0: float = 1.0, c1: float = 1.0, gamma0: float = 0.2, gamma1: float = 0.2,
                     plant: str = "const", a_coef: float = -0.5, n: int = 1, name: str = "squeeze") -> Scenario:
    """Output map squeezed between ``c0 e^{-gamma0 t}`` and ``c1 e^{gamma1 t}`` on a bounded-growth plant.

    ``plant`` is ``"flat"`` (``A = 0``), ``"const"`` (``A = a_coef I``) or
    ``"sinlog"`` (``A = (sin(ln(t+1)) + cos(ln(t+1))) I``).  ``C`` is
    diagonal with ``c0 e^{-gamma0 t}`` first and ``c1 e^{gamma1 t}`` in the
    remaining slots, so ``c0 e^{-gamma0 t} |x| <= |C x| <= c1 e^{gamma1 t} |x|``.

    The certificate run compares the Gramian eigenvalues with
    ``theta0(s) e^{-2 (eps + gamma0) t}`` and ``theta1(s) e^{2 (eps + gamma1) t}``,
    ``theta0(s) = c0^2 (1 - e^{-2 (a + gamma0) s}) / (2 K0^2 (a + gamma0))``,
    ``theta1(s) = K0^2 c1^2 (e^{2 (a + eps + gamma1) s} - 1) / (2 (a + eps + gamma1))``,
    using the plant's fitted growth constants ``(K0, a, eps)``.
    """
    if not (0 < c0 <= c1):
        raise ValueError(f"need 0 < c0 <= c1, got c0={c0}, c1={c1}")
    if gamma0 < 0 or gamma1 < 0:
        raise ValueError("gamma0 and gamma1 must be non-negative")
    if n < 1:
        raise ValueError("n must be positive")
    diag = {"flat": "0", "const": to_text(_m([[a_coef]]).entries[0]),
            "sinlog": "sin(ln(t+1))+cos(ln(t+1))"}
    if plant not in diag:
        raise ValueError(f"plant must be one of {sorted(diag)}")
    A = [[diag[plant] if i == j else "0" for j in range(n)] for i in range(n)]
    low = f"{_num(c0)}*exp(-{_num(gamma0)}*t)"
    high = f"{_num(c1)}*exp({_num(gamma1)}*t)"
    C = [[(low if i == 0 else high) if i == j else "0" for j in range(n)] for i in range(n)]
    params = {"explicit_bounds": True, "c0": c0, "c1": c1, "gamma0": gamma0, "gamma1": gamma1,
              "plant": plant, "a_coef": a_coef if plant == "const" else None, "n": n,
              "theta0": "c0^2*(1-exp(-2*(a+gamma0)*sigma))/(2*K0^2*(a+gamma0))",
              "theta1": "K0^2*c1^2*(exp(2*(a+eps+gamma1)*sigma)-1)/(2*(a+eps+gamma1))",
              "lower_exponent": "-2*(eps+gamma0)*t",
              "upper_exponent": "2*(eps+gamma1)*t"}
    expected = (
        expect("certify.nuco.verdict", "==", CERTIFIED, EXPLICIT),
        expect("certify.explicit_bounds.violations", "==", 0, EXPLICIT),
        expect("certify.explicit_bounds.rates_within_slack", "==", True, EXPLICIT),
    )
    # the default grids end at t=20: rates above ~0.5 would push the Gramian below the positivity floor
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-16)
    return Scenario(name, f"output map between c0 e^(-g0 t) and c1 e^(g1 t) on the {plant} plant",
                    System(_m(A), C=_m(C), name=name), ("certify", "dual"), expected, cfg=cfg, params=params)


def _num(v: float) -> str:
    return to_text(_m([[abs(v)]]).entries[0])


def _scalar_library() -> list[Scenario]:
    sig = DEFAULT_SIGMA_GRID
    half = lambda s: (1 - np.exp(-2 * s)) / 2
    grow = lambda s: (np.exp(2 * s) - 1) / 2
    out = [
        Scenario("flat", "A = 0, B = C = 1: every Gramian equals sigma",
                 System(_m([[0]]), _m([[1]]), _m([[1]]), "flat"),
                 ("certify", "dual", "envelope", "two_imply_third"),
                 (expect("certify.nuco.verdict", "==", CERTIFIED, BY_INSPECTION),
                  expect("certify.nuco.uco", "==", True, BY_INSPECTION),
                  *_certified_flat_rates("certify.nuco"),
                  expect("certify.nuco.theta0", "close", _table(lambda s: s, sig), BY_INSPECTION, 1e-6),
                  expect("certify.nuco.theta1", "close", _table(lambda s: s, sig), BY_INSPECTION, 1e-6),
                  *_certified_flat_rates("certify.nucc", ("mu0", "mu1", "mu0_tilde", "mu1_tilde")),
                  expect("envelope.growth.K0", "close", 1.0, BY_INSPECTION, 1e-9),
                  expect("envelope.growth.eps", "==", 0.0, BY_INSPECTION),
                  expect("dual.identity.passed", "==", True, BY_INSPECTION),
                  expect("dual.equivalence.equivalent", "==", True, BY_INSPECTION),
                  expect("two_imply_third.findings", "==", [], BY_INSPECTION))),
        Scenario("stable", "A = -1, B = C = 1: uniform, Gramians (1 - e^(-2 sigma))/2",
                 System(_m([[-1]]), _m([[1]]), _m([[1]]), "stable"),
                 ("certify", "dual", "envelope", "two_imply_third"),
                 (expect("certify.nuco.verdict", "==", CERTIFIED, CLOSED_FORM),
                  expect("certify.nuco.uco", "==", True, CLOSED_FORM),
                  *_certified_flat_rates("certify.nuco"),
                  expect("certify.nuco.theta0", "close", _table(half, sig), CLOSED_FORM, 1e-6),
                  expect("envelope.growth.eps", "==", 0.0, CLOSED_FORM),
                  expect("envelope.growth.a", "close", 1.0, CLOSED_FORM, 1e-6),
                  expect("dual.equivalence.equivalent", "==", True, CLOSED_FORM),
                  expect("two_imply_third.n_holding", "==", 3, CLOSED_FORM),
                  expect("two_imply_third.findings", "==", [], CLOSED_FORM))),
        Scenario("unstable", "A = 1, B = C = 1: W = (1 - e^(-2 sigma))/2, K = (e^(2 sigma) - 1)/2",
                 System(_m([[1]]), _m([[1]]), _m([[1]]), "unstable"),
                 ("certify", "dual", "two_imply_third"),
                 (expect("certify.nucc.verdict", "==", CERTIFIED, CLOSED_FORM),
                  *_certified_flat_rates("certify.nucc", ("mu0", "mu1", "mu0_tilde", "mu1_tilde")),
                  expect("certify.nucc.alpha0", "close", _table(half, sig), CLOSED_FORM, 1e-6),
                  expect("certify.nucc.beta1", "close", _table(grow, sig), CLOSED_FORM, 1e-6),
                  expect("dual.equivalence.equivalent", "==", True, CLOSED_FORM),
                  expect("two_imply_third.n_holding", "==", 3, CLOSED_FORM),
                  expect("two_imply_third.findings", "==", [], CLOSED_FORM))),
        Scenario("sinlog", "A = sin(ln(t+1)) + cos(ln(t+1)), B = C = 1: growth needs eps > 0 under a budget",
                 System(_m([["sin(ln(t+1))+cos(ln(t+1))"]]), _m([[1]]), _m([[1]]), "sinlog"),
                 ("envelope", "certify", "two_imply_third"),
                 (expect("envelope.budget.eps", ">", 0.0, CLOSED_FORM),
                  expect("envelope.budget_eps_zero", "==", "InfeasibleFit", CLOSED_FORM),
                  expect("certify.nuco.verdict", "==", CERTIFIED, CLOSED_FORM),
                  expect("two_imply_third.findings", "==", [], CLOSED_FORM)),
                 params={"envelope_grid": "0:40:41", "budget": {"a_max": 1.35, "K0_max": 1.0}}),
    ]
    return out


def _matrix_library() -> list[Scenario]:
    return [
        Scenario("double_integrator", "A = [[0,1],[0,0]], position output, force input",
                 System(_m([[0, 1], [0, 0]]), _m([[0], [1]]), _m([[1, 0]]), "double_integrator"),
                 ("criteria", "certify", "dual", "two_imply_third"),
                 (expect("criteria.rank", "==", 2, CLOSED_FORM),
                  expect("criteria.observable", "==", True, CLOSED_FORM),
                  expect("certify.nuco.verdict", "==", CERTIFIED, CLOSED_FORM),
                  expect("certify.nucc.verdict", "==", CERTIFIED, CLOSED_FORM),
                  expect("dual.identity.passed", "==", True, CLOSED_FORM),
                  expect("two_imply_third.findings", "==", [], CLOSED_FORM))),
        Scenario("nonnormal", "non-normal 2x2 plant with a periodic coupling term",
                 System(_m([[-1, "2+sin(t)"], [0, -2]]), _m([[0], [1]]), _m([[1, 0]]), "nonnormal"),
                 ("criteria", "certify", "dual", "two_imply_third"),
                 (expect("criteria.observable", "==", True, CLOSED_FORM),
                  expect("certify.nuco.verdict", "==", CERTIFIED, CLOSED_FORM),
                  expect("dual.identity.passed", "==", True, CLOSED_FORM),
                  expect("dual.equivalence.equivalent", "==", True, CLOSED_FORM),
                  expect("two_imply_third.findings", "==", [], CLOSED_FORM))),
        Scenario("blind", "A = 0 with zero input and output maps: nothing is observable or controllable",
                 System(_m([[0]]), _m([[0]]), _m([[0]]), "blind"),
                 ("certify", "dual", "two_imply_third"),
                 (expect("certify.nuco.verdict", "==", "NotObservableOnGrid", BY_INSPECTION),
                  expect("certify.nucc.verdict", "==", "NotControllableOnGrid", BY_INSPECTION),
                  expect("dual.equivalence.equivalent", "==", True, BY_INSPECTION),
                  expect("two_imply_third.n_holding", "==", 1, BY_INSPECTION),
                  expect("two_imply_third.implications", "==", [], BY_INSPECTION))),
    ]


def _feedback_library() -> list[Scenario]:
    def out_fb(name, desc, A, B, F, C, case, runs=("feedback",), t_grid=DEFAULT_T_GRID, extra=()):
        checks = (expect("feedback.contained", "==", True, EXPLICIT),
                  expect("feedback.equivalent", "==", True, EXPLICIT),
                  expect("feedback.closed_verdict", "==", CERTIFIED, EXPLICIT),
                  *((expect("feedback.case", "==", case, CLOSED_FORM),) if case else ()), *extra)
        return Scenario(name, desc, System(_m(A), _m(B), _m(C), name), runs, checks, _m(F), "output", t_grid)

    def in_fb(name, desc, A, B, L):
        checks = (expect("feedback.agree", "==", True, EXPLICIT),
                  expect("feedback.direct_verdict", "==", CERTIFIED, EXPLICIT),
                  expect("feedback.dual_check.contained", "==", True, EXPLICIT))
        return Scenario(name, desc, System(_m(A), B=_m(B), name=name), ("feedback",), checks, _m(L), "input")

    return [
        out_fb("fb_growth", "A = 0, B = 1, F = e^(0.1 t), C = e^(-t): closed loop -e^(-0.9 t)",
               [[0]], [[1]], [["exp(0.1*t)"]], [["exp(-t)"]], None, ("growth", "feedback"), TimeGrid(0.0, 8.0, 9),
               (expect("growth.passed", "==", True, EXPLICIT),)),
        out_fb("fb_phi_greater", "A = 0, B = 1, F = e^(0.1 t), C = e^(-0.3 t): phi = 12.5",
               [[0]], [[1]], [["exp(0.1*t)"]], [["exp(-0.3*t)"]], "PhiGreater"),
        out_fb("fb_phi_less", "A = 0, B = 1, F = 0.05 e^(0.1 t), C = e^(-0.3 t): phi = 0.625",
               [[0]], [[1]], [["0.05*exp(0.1*t)"]], [["exp(-0.3*t)"]], "PhiLess"),
        out_fb("fb_zero", "zero feedback: the closed loop is the plant",
               [[0]], [[1]], [[0]], [["exp(-0.3*t)"]], "PhiLess"),
        out_fb("fb_rot2", "damped rotation, first-state output, feedback into the second state: phi = 20",
               [[-0.1, 0.1], [-0.1, -0.1]], [[0], [1]], [["exp(0.15*t)"]], [["exp(-0.4*t)", 0]], "PhiGreater"),
        in_fb("in_gain", "A = 0, B = e^(-0.3 t), L = e^(0.1 t)", [[0]], [["exp(-0.3*t)"]], [["exp(0.1*t)"]]),
        in_fb("in_small_gain", "A = 0, B = e^(-0.3 t), L = 0.05 e^(0.1 t)",
              [[0]], [["exp(-0.3*t)"]], [["0.05*exp(0.1*t)"]]),
        in_fb("in_zero", "zero input feedback", [[0]], [["exp(-0.3*t)"]], [[0]]),
        in_fb("in_rot2", "damped rotation with input on the first state, L = [0, e^(0.15 t)]",
              [[-0.1, -0.1], [0.1, -0.1]], [["exp(-0.4*t)"], [0]], [[0, "exp(0.15*t)"]]),
    ]


def library() -> dict[str, Scenario]:
    items = _scalar_library() + _matrix_library() + [
        scenario_squeeze(),
        scenario_squeeze(gamma0=0.0, gamma1=0.0, plant="flat", name="squeeze_flat"),
        scenario_squeeze(plant="flat", n=2, name="squeeze_diag"),
    ] + _feedback_library()
    return {s.name: s for s in items}


# --------------------------------------------------------------------------
# Runner


def _run_criteria(sc: Scenario, ctx: dict) -> dict:
    A, C = sc.system.A, sc.system.C
    if C is None:
        return {"skipped": "no output map"}
    if A.is_constant() and C.is_constant():
        rep = lti_obs_rank(A(0.0), C(0.0)).to_json()
    else:
        rep = ltv_L_rank(A, C, t_a=float(sc.t_grid.t_start)).to_json()
    witness = observable_at(A, C, sc.t_grid.t_start, sc.t_grid.t_start + sc.sigma_grid.t_end, sc.cfg)
    rep["gramian_test"] = witness.to_json()
    return rep


def explicit_bounds(sc: Scenario, cert, env) -> dict:
    """Compare a certificate's eigenvalue tables with the explicit two-sided estimates."""
    p = sc.params
    K0, a, eps = env.K0, env.a, env.eps
    c0, c1, g0, g1 = p["c0"], p["c1"], p["gamma0"], p["gamma1"]
    s = sc.sigma_grid.points[None, :]
    t = sc.t_grid.points[:, None]
    theta0 = c0 ** 2 * (1 - np.exp(-2 * (a + g0) * s)) / (2 * K0 ** 2 * (a + g0))
    theta1 = K0 ** 2 * c1 ** 2 * (np.exp(2 * (a + eps + g1) * s) - 1) / (2 * (a + eps + g1))
    lower = theta0 * np.exp(-2 * (eps + g0) * t)
    upper = theta1 * np.exp(2 * (eps + g1) * t)
    lmin, lmax = cert.lambda_min, cert.lambda_max
    bad = []
    for i, j in zip(*np.nonzero(lower > lmin * (1 + BOUND_SLACK))):
        bad.append({"t": float(t[i, 0]), "sigma": float(s[0, j]), "side": "lower"})
    for i, j in zip(*np.nonzero(lmax > upper * (1 + BOUND_SLACK))):
        bad.append({"t": float(t[i, 0]), "sigma": float(s[0, j]), "side": "upper"})
    rates_ok = cert.nu0 <= eps + g0 + RATE_FIT_SLACK and cert.nu1 <= eps + g1 + RATE_FIT_SLACK
    return {
        "envelope": env.to_json(),
        "theta0": theta0[0].tolist(),
        "theta1": theta1[0].tolist(),
        "lower_rate": -2 * (eps + g0),
        "upper_rate": 2 * (eps + g1),
        "max_lower_ratio": float(np.max(lower / lmin)),
        "max_upper_ratio": float(np.max(lmax / upper)),
        "violations": len(bad),
        "violation_points": bad,
        "slack": BOUND_SLACK,
        "nu0_limit": eps + g0 + RATE_FIT_SLACK,
        "nu1_limit": eps + g1 + RATE_FIT_SLACK,
        "rates_within_slack": bool(rates_ok),
    }


def _run_certify(sc: Scenario, ctx: dict) -> dict:
    A, B, C = sc.system.A, sc.system.B, sc.system.C
    out: dict = {}
    if C is not None:
        try:
            cert = certify_nuco(A, C, sc.t_grid, sc.sigma_grid, sc.cfg)
            out["nuco"] = cert.to_json()
            out["nuco"]["recheck_violations"] = len(verify_nuco_certificate(cert, A, C, sc.cfg))
            if sc.params.get("explicit_bounds"):
                out["explicit_bounds"] = explicit_bounds(sc, cert, _plant_envelope(sc, ctx))
        except NotObservableOnGrid as exc:
            out["nuco"] = {"verdict": "NotObservableOnGrid", "detail": str(exc)}
    if B is not None:
        try:
            cc = certify_nucc(A, B, sc.t_grid, sc.sigma_grid, sc.cfg)
            out["nucc"] = cc.to_json()
            out["nucc"]["recheck_violations"] = len(verify_nucc_certificate(cc, A, B, sc.cfg))
        except NotControllableOnGrid as exc:
            out["nucc"] = {"verdict": "NotControllableOnGrid", "detail": str(exc)}
    return out


def _run_dual(sc: Scenario, ctx: dict) -> dict:
    A, C = sc.system.A, sc.system.C
    if C is None:
        return {"skipped": "no output map"}
    return {"identity": check_gramian_identity(A, C, sc.t_grid, sc.sigma_grid, sc.cfg),
            "equivalence": check_duality_equivalence(A, C, sc.t_grid, sc.sigma_grid, sc.cfg, env=_plant_envelope(sc, ctx))}


def _plant_envelope(sc: Scenario, ctx: dict):
    """Growth envelope of ``A`` on the grid covering every certificate window, fitted once per run."""
    if "envelope" not in ctx:
        eg = envelope_grid(sc.t_grid, sc.sigma_grid)
        ctx["envelope"] = fit_growth_envelope(sc.system.A, eg, eg, sc.cfg)
    return ctx["envelope"]


def _run_envelope(sc: Scenario, ctx: dict) -> dict:
    if "envelope_grid" in sc.params:
        grid = TimeGrid.parse(sc.params["envelope_grid"])
        env = fit_growth_envelope(sc.system.A, grid, grid, sc.cfg)
    else:
        grid = envelope_grid(sc.t_grid, sc.sigma_grid)
        env = _plant_envelope(sc, ctx)
    out = {"growth": env.to_json(), "tight": env.is_tight(), "covers": env.covers(),
           "kalman": check_kalman_property(env).to_json()}
    budget = sc.params.get("budget")
    if budget:
        out["budget"] = fit_growth_envelope(sc.system.A, grid, grid, sc.cfg, **budget).to_json()
        try:
            fit_growth_envelope(sc.system.A, grid, grid, sc.cfg, eps_max=0.0, **budget)
            out["budget_eps_zero"] = "feasible"
        except NucoError as exc:
            out["budget_eps_zero"] = type(exc).__name__
    return out


def _run_two_third(sc: Scenario, ctx: dict) -> dict:
    if sc.system.B is None:
        return {"skipped": "no input map"}
    try:
        env = _plant_envelope(sc, ctx)
    except NucoError:
        env = None
    return check_two_imply_third(sc.system.A, sc.system.B, sc.t_grid, sc.sigma_grid, sc.cfg, env=env)


def _run_growth(sc: Scenario, ctx: dict) -> dict:
    A, B, C = sc.system.A, sc.system.B, sc.system.C
    K = mat_mul(B, sc.gain)
    eg = envelope_grid(sc.t_grid, sc.sigma_grid)
    env = fit_growth_envelope(A, eg, eg, sc.cfg)
    gains = fit_feedback_gains(K, C, eg, env)
    return verify_closed_growth(A, K, C, gains, env, sc.t_grid, sc.cfg)


def _run_feedback(sc: Scenario, ctx: dict) -> dict:
    A, B, C = sc.system.A, sc.system.B, sc.system.C
    seed = ctx.get("seed", 0)
    if sc.gain_mode == "input":
        return verify_input_feedback(A, B, sc.gain, sc.t_grid, sc.sigma_grid, sc.cfg, seed)
    check = verify_preservation(A, B, sc.gain, C, sc.t_grid, sc.sigma_grid, sc.cfg, seed)
    return check.to_json()


_RUNNERS: dict[str, Callable[[Scenario, dict], dict]] = {
    "criteria": _run_criteria,
    "certify": _run_certify,
    "dual": _run_dual,
    "envelope": _run_envelope,
    "two_imply_third": _run_two_third,
    "growth": _run_growth,
    "feedback": _run_feedback,
}


def _lookup(report: dict, path: str):
    cur = report
    for part in path.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        elif isinstance(cur, list) and part.isdigit() and int(part) < len(cur):
            cur = cur[int(part)]
        else:
            raise KeyError(path)
    return cur


def evaluate_expectation(e: dict, report: dict) -> dict:
    try:
        got = _lookup(report, e["path"])
    except KeyError:
        return {**e, "status": "not_run"}
    op, want = e["op"], e["value"]
    if op == "==":
        ok = got == want
    elif op == "<=":
        ok = got <= want
    elif op == ">":
        ok = got > want
    elif op == "close":
        g, w = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
        tol = e.get("tol", 1e-9)
        ok = g.shape == w.shape and bool(np.all(np.abs(g - w) <= tol * np.maximum(1.0, np.abs(w))))
    else:
        raise ValueError(f"unknown comparison {op!r}")
    return {**e, "got": got, "status": "pass" if ok else "fail"}


def run_scenario(sc: Scenario, runs: tuple[str, ...] | None = None, seed: int = 0) -> tuple[dict, int]:
    """Execute the scenario's runs and evaluate its expectations.

    Returns the report and an exit code: 0 when every evaluated expectation
    passes, 2 when a hypothesis failed, 3 on a failed expectation or an
    unexpected verification failure.
    """
    runs = sc.runs if runs is None else runs
    report: dict = {}
    code = EXIT_OK
    ctx = {"seed": seed}
    for r in runs:
        if r not in _RUNNERS:
            raise ValueError(f"unknown run {r!r}; choose from {', '.join(RUNS)}")
        try:
            report[r] = _RUNNERS[r](sc, ctx)
        except HypothesisUnmet as exc:
            report[r] = {"error": "HypothesisUnmet", "condition": exc.condition, "detail": str(exc)}
            code = max(code, EXIT_HYPOTHESIS)
        except VerificationFailure as exc:
            report[r] = {"error": type(exc).__name__, "detail": str(exc)}
            code = max(code, EXIT_VERIFICATION)
    checks = [evaluate_expectation(e, report) for e in sc.expected]
    if any(c["status"] == "fail" for c in checks):
        code = max(code, EXIT_VERIFICATION)
    return {"scenario": sc.to_json(), "runs": report, "expectations": checks,
            "passed": code == EXIT_OK}, code
