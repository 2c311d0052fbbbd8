"""Output and input feedback: closed loops and preservation of the Gramian bounds.

With output feedback ``u = -F y`` the closed-loop plant is ``A - K C`` with
``K = B F``.  Given a growth envelope ``(K0, a, eps)`` for ``A`` and the
exponential envelopes ``||K(z)|| <= KK exp(delta z)``,
``||C(z)|| <= CC exp(-gamma z)``, this module evaluates

* the Gronwall bound on the closed-loop transition matrix,
  ``K0 exp(K0 KK CC / (gamma - eps - delta)) exp(a (t2 - t1) + eps t1)``;
* the two-sided estimates of ``Lambda = v^T M_closed(t, t+sigma) v`` in
  terms of the plant's observability certificate, with

  ``phi = K0 KK CC / (4 (-a + eps + delta) (gamma - eps - delta))`` and
  ``psi(sigma) = theta1(sigma) K0 exp(K0 KK CC / (gamma - eps - delta)) KK CC
  / (4 (-a + eps + delta) (gamma - eps - delta))``.

Input feedback ``A - B L`` is handled through the dual system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, HypothesisUnmet, NotControllableOnGrid, NotObservableOnGrid
from .flow import DEFAULT_CONFIG, IntegratorConfig, Transition
from .nucert import (CERTIFIED, COVERAGE_SLACK, GRID_NOTE, PD_TOL, GrowthEnvelope, NucoCertificate,
                     certify_nucc, certify_nuco, envelope_grid, fit_exponential_bound, fit_growth_envelope,
                     gramian_grid)
from .tvmat import ZERO, BinOp, Expr, TimeGrid, TvMatrix, is_zero_literal, negate

GAIN_FLOOR = 1e-12
BOUND_SLACK = 1e-8
N_RANDOM_DIRECTIONS = 8
PHI_GUARD = 0.05

PHI_EQUALS_ONE = "PhiEqualsOne"
PHI_GREATER = "PhiGreater"
PHI_LESS = "PhiLess"

COND_GAMMA = "gamma-(eps+delta)>0"
COND_DELTA = "-a+eps+delta>0"
COND_BETA = "beta-(eps+ell)>0"


# --------------------------------------------------------------------------
# Expression-level matrix algebra


def _add(x: Expr | None, y: Expr) -> Expr:
    return y if x is None else BinOp("+", x, y)


def mat_mul(X: TvMatrix, Y: TvMatrix) -> TvMatrix:
    """Product of two expression matrices; products with a literal zero are dropped."""
    if X.cols != Y.rows:
        raise DimensionMismatch(f"cannot multiply {X.rows}x{X.cols} by {Y.rows}x{Y.cols}")
    out = []
    for i in range(X.rows):
        for j in range(Y.cols):
            acc = None
            for k in range(X.cols):
                x, y = X.entry(i, k), Y.entry(k, j)
                if is_zero_literal(x) or is_zero_literal(y):
                    continue
                acc = _add(acc, BinOp("*", x, y))
            out.append(ZERO if acc is None else acc)
    return TvMatrix(X.rows, Y.cols, tuple(out))


def close_loop(A: TvMatrix, K: TvMatrix, C: TvMatrix) -> TvMatrix:
    """``A - K C`` built on the expression trees."""
    n = A.rows
    if A.cols != n:
        raise DimensionMismatch(f"A must be square, got {A.rows}x{A.cols}")
    if K.rows != n or C.cols != n or K.cols != C.rows:
        raise DimensionMismatch(f"need K n x m and C m x n with n={n}, got K {K.rows}x{K.cols}, C {C.rows}x{C.cols}")
    KC = mat_mul(K, C)
    out = []
    for a, kc in zip(A.entries, KC.entries):
        if is_zero_literal(kc):
            out.append(a)
        elif is_zero_literal(a):
            out.append(negate(kc))
        else:
            out.append(BinOp("-", a, kc))
    return TvMatrix(n, n, tuple(out))


# --------------------------------------------------------------------------
# Gain envelopes


def _norms(M: TvMatrix, zs: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(M(z), ord=2) for z in zs])


@dataclass
class FeedbackGains:
    """Envelopes ``||K(z)|| <= script_K e^{delta z}`` and ``||C(z)|| <= script_C e^{-gamma z}``."""

    K: TvMatrix
    script_K: float
    delta: float
    script_C: float
    gamma: float
    fitted_on: TimeGrid | None = None
    verified: bool = True
    zero_gain: bool = False
    gap_gamma: float = field(default=float("nan"))
    gap_delta: float = field(default=float("nan"))

    def conditions(self, env: GrowthEnvelope) -> dict:
        self.gap_gamma = self.gamma - (env.eps + self.delta)
        self.gap_delta = -env.a + env.eps + self.delta
        return {COND_GAMMA: self.gap_gamma, COND_DELTA: self.gap_delta}

    def to_json(self) -> dict:
        return {
            "script_K": self.script_K,
            "delta": self.delta,
            "script_C": self.script_C,
            "gamma": self.gamma,
            "fitted_on": str(self.fitted_on) if self.fitted_on is not None else None,
            "verified": self.verified,
            "zero_gain": self.zero_gain,
            COND_GAMMA: self.gap_gamma,
            COND_DELTA: self.gap_delta,
        }


def _covers(norms, coef, rate, zs) -> bool:
    return bool(np.all(norms <= coef * np.exp(rate * zs) * (1 + COVERAGE_SLACK)))


def fit_feedback_gains(K: TvMatrix, C: TvMatrix, grid: TimeGrid, env: GrowthEnvelope) -> FeedbackGains:
    """Fit the gain and output envelopes on ``grid``.

    An identically zero gain satisfies its envelope for every ``delta``, so
    ``script_K`` is floored and ``delta`` is placed mid-way in the interval
    ``(a - eps, gamma - eps)`` allowed by the hypotheses, when it is non-empty.
    """
    zs = grid.points
    kn, cn = _norms(K, zs), _norms(C, zs)
    kk, delta = fit_exponential_bound(zs, kn, GAIN_FLOOR)
    cc, rate = fit_exponential_bound(zs, cn, GAIN_FLOOR)
    gamma = -rate
    zero = not np.any(kn > 0)
    if zero:
        lo, hi = env.a - env.eps, gamma - env.eps
        delta = 0.5 * (lo + hi) if hi > lo else max(lo, 0.0)
    verified = _covers(kn, kk, delta, zs) and _covers(cn, cc, rate, zs)
    gains = FeedbackGains(K, kk, delta, cc, gamma, grid, verified, zero)
    gains.conditions(env)
    return gains


def require(conditions: dict) -> None:
    for name, gap in conditions.items():
        if not gap > 0:
            raise HypothesisUnmet(name, f"fitted value {gap + 0.0:.6g}")


def gronwall_factor(env: GrowthEnvelope, gains: FeedbackGains) -> float:
    return math.exp(env.K0 * gains.script_K * gains.script_C / gains.gap_gamma)


def closed_growth_bound(env: GrowthEnvelope, gains: FeedbackGains, t2, t1):
    """``K0 exp(K0 KK CC / (gamma - eps - delta)) exp(a (t2 - t1) + eps t1)`` for ``t2 >= t1``."""
    t2, t1 = np.asarray(t2, dtype=float), np.asarray(t1, dtype=float)
    return env.K0 * gronwall_factor(env, gains) * np.exp(env.a * (t2 - t1) + env.eps * t1)


def verify_closed_growth(A: TvMatrix, K: TvMatrix, C: TvMatrix, gains: FeedbackGains, env: GrowthEnvelope,
                         t_grid: TimeGrid, cfg: IntegratorConfig = DEFAULT_CONFIG) -> dict:
    """Check the closed-loop growth bound on every grid pair ``t2 >= t1``.

    Raises
    ------
    HypothesisUnmet
        ``gamma - (eps + delta) <= 0``.
    """
    conds = gains.conditions(env)
    require({COND_GAMMA: conds[COND_GAMMA]})
    tr = Transition(close_loop(A, K, C), cfg)
    ts = t_grid.points
    rows = []
    for i, t1 in enumerate(ts):
        later = ts[i:]
        norms = np.linalg.norm(tr.many(later, t1), ord=2, axis=(1, 2))
        rows.extend(zip(later, np.full(len(later), t1), norms))
    s = np.array(rows)
    ratio = s[:, 2] / closed_growth_bound(env, gains, s[:, 0], s[:, 1])
    k = int(np.argmax(ratio))
    bad = [(float(a), float(b)) for a, b, r in zip(s[:, 0], s[:, 1], ratio) if r > 1.0 + COVERAGE_SLACK]
    return {
        "check": "closed_loop_growth",
        "pairs": len(s),
        "gronwall_factor": gronwall_factor(env, gains),
        "max_ratio": float(ratio[k]),
        "at": {"t2": float(s[k, 0]), "t1": float(s[k, 1])},
        "violations": bad,
        "passed": not bad,
        "envelope": env.to_json(),
        "gains": gains.to_json(),
        "note": GRID_NOTE,
    }


# --------------------------------------------------------------------------
# Two-sided estimates for the closed-loop Gramian


def unit_directions(n: int, seed: int, n_random: int = N_RANDOM_DIRECTIONS) -> np.ndarray:
    """Columns: the canonical basis followed by ``n_random`` seeded random unit vectors."""
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((n, n_random))
    r /= np.linalg.norm(r, axis=0)
    return np.hstack((np.eye(n), r))


def phi_case(phi: float) -> str:
    if phi == 1.0:
        return PHI_EQUALS_ONE
    return PHI_GREATER if phi > 1.0 else PHI_LESS


@dataclass
class FeedbackCheck:
    phi: float
    psi: list[float]
    case: str
    lambda_lower: np.ndarray = field(repr=False)
    lambda_upper: np.ndarray = field(repr=False)
    lambda_observed: np.ndarray = field(repr=False)
    violations: list = field(default_factory=list)
    mask: np.ndarray | None = field(default=None, repr=False)
    env: GrowthEnvelope | None = None
    gains: FeedbackGains | None = None
    plant: NucoCertificate | None = None
    plant_verdict: str = ""
    closed_verdict: str = ""
    closed_loop: TvMatrix | None = None
    t_grid: TimeGrid | None = None
    sigma_grid: TimeGrid | None = None
    reverse: dict | None = None

    @property
    def contained(self) -> bool:
        return not self.violations

    @property
    def equivalent(self) -> bool:
        return (self.plant_verdict == CERTIFIED) == (self.closed_verdict == CERTIFIED)

    @property
    def phi_stable(self) -> bool:
        return self.phi == 1.0 or abs(self.phi - 1.0) >= PHI_GUARD

    def ratios(self) -> tuple[float, float]:
        """Largest ``lower / Lambda`` and ``Lambda / upper`` over the checked points."""
        lo = self.lambda_observed.min(axis=2)
        hi = self.lambda_observed.max(axis=2)
        m = self.mask
        return float(np.max((self.lambda_lower / lo)[m])), float(np.max((hi / self.lambda_upper)[m]))

    def to_json(self) -> dict:
        lo_ratio, hi_ratio = self.ratios()
        out = {
            "phi": self.phi,
            "case": self.case,
            "phi_stable": self.phi_stable,
            "psi": self.psi,
            "envelope": self.env.to_json() if self.env else None,
            "gains": self.gains.to_json() if self.gains else None,
            "closed_loop": self.closed_loop.to_rows() if self.closed_loop else None,
            "plant_verdict": self.plant_verdict,
            "closed_verdict": self.closed_verdict,
            "equivalent": self.equivalent,
            "t": self.t_grid.points.tolist(),
            "sigma": self.sigma_grid.points.tolist(),
            "lambda_lower": self.lambda_lower.tolist(),
            "lambda_upper": self.lambda_upper.tolist(),
            "lambda_observed_min": self.lambda_observed.min(axis=2).tolist(),
            "lambda_observed_max": self.lambda_observed.max(axis=2).tolist(),
            "max_lower_ratio": lo_ratio,
            "max_upper_ratio": hi_ratio,
            "violations": self.violations,
            "contained": self.contained,
            "note": GRID_NOTE,
        }
        if self.reverse is not None:
            out["reverse"] = self.reverse
        return out


def lambda_bounds(cert: NucoCertificate, phi: float, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper estimates of ``Lambda`` on the certificate grid, shape ``(len(t), len(sigma))``."""
    ts = cert.t_grid.points[:, None]
    th0 = np.asarray(cert.theta0)[None, :]
    th1 = np.asarray(cert.theta1)[None, :]
    denom = np.maximum(th1, (phi - 1.0) * th0) if phi > 1.0 else th1
    lower = th0 ** 2 / (4 * denom) * np.exp(-(4 * cert.nu0 + 2 * cert.nu1) * ts)
    upper = 4 * (th1 + psi[None, :]) * np.exp(2 * cert.nu1 * ts)
    return lower, upper


def verify_output_feedback(A: TvMatrix, K: TvMatrix, C: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                           cfg: IntegratorConfig = DEFAULT_CONFIG, seed: int = 0,
                           n_random: int = N_RANDOM_DIRECTIONS, env: GrowthEnvelope | None = None,
                           gains: FeedbackGains | None = None, env_grid: TimeGrid | None = None,
                           pd_tol: float = PD_TOL) -> FeedbackCheck:
    """Check the closed-loop Gramian estimates for ``A - K C`` against the plant's certificate.

    Raises
    ------
    HypothesisUnmet
        A growth or gain hypothesis fails for the fitted constants.
    NotObservableOnGrid
        The plant itself has no positive definite window at some grid time.
    """
    env_grid = env_grid or envelope_grid(t_grid, sigma_grid)
    if env is None:
        env = fit_growth_envelope(A, env_grid, env_grid, cfg)
    if gains is None:
        gains = fit_feedback_gains(K, C, env_grid, env)
    require(gains.conditions(env))

    plant = certify_nuco(A, C, t_grid, sigma_grid, cfg, pd_tol)
    closed = close_loop(A, K, C)
    M = gramian_grid(closed, C, t_grid, sigma_grid, "M", cfg)
    V = unit_directions(A.rows, seed, n_random)
    observed = np.array([[np.einsum("ik,ij,jk->k", V, g.matrix, V) for g in row] for row in M])
    try:
        closed_verdict = certify_nuco(closed, C, t_grid, sigma_grid, cfg, pd_tol, results=M).verdict
    except NotObservableOnGrid:
        closed_verdict = "NotObservableOnGrid"

    kc = env.K0 * gains.script_K * gains.script_C
    phi = kc / (4 * gains.gap_delta * gains.gap_gamma)
    psi = np.asarray(plant.theta1) * env.K0 * gronwall_factor(env, gains) * gains.script_K * gains.script_C \
        / (4 * gains.gap_delta * gains.gap_gamma)
    lower, upper = lambda_bounds(plant, phi, psi)

    sig = sigma_grid.points
    mask = sig[None, :] >= np.asarray(plant.sigma0)[:, None]
    slack = BOUND_SLACK * (1.0 + upper)
    lo_obs, hi_obs = observed.min(axis=2), observed.max(axis=2)
    violations = []
    for i, t in enumerate(t_grid.points):
        for j, s in enumerate(sig):
            if not mask[i, j]:
                continue
            if lo_obs[i, j] < lower[i, j] - slack[i, j]:
                violations.append({"t": float(t), "sigma": float(s), "side": "lower",
                                   "observed": float(lo_obs[i, j]), "bound": float(lower[i, j])})
            if hi_obs[i, j] > upper[i, j] + slack[i, j]:
                violations.append({"t": float(t), "sigma": float(s), "side": "upper",
                                   "observed": float(hi_obs[i, j]), "bound": float(upper[i, j])})
    return FeedbackCheck(phi, psi.tolist(), phi_case(phi), lower, upper, observed, violations, mask,
                         env, gains, plant, plant.verdict, closed_verdict, closed, t_grid, sigma_grid)


def verify_preservation(A: TvMatrix, B: TvMatrix, F: TvMatrix, C: TvMatrix, t_grid: TimeGrid,
                        sigma_grid: TimeGrid, cfg: IntegratorConfig = DEFAULT_CONFIG, seed: int = 0,
                        reverse: bool = True, **kw) -> FeedbackCheck:
    """Output feedback ``u = -F y``: forms ``K = B F`` and runs :func:`verify_output_feedback`.

    With ``reverse`` the roles are swapped as well, treating ``A - K C`` as
    the plant and ``-K`` as the gain, whose closed loop is ``A`` again.  The
    reverse run is recorded under ``check.reverse``; when its own hypotheses
    fail it is reported as skipped.
    """
    K = mat_mul(B, F)
    check = verify_output_feedback(A, K, C, t_grid, sigma_grid, cfg, seed, **kw)
    if reverse:
        try:
            back = verify_output_feedback(check.closed_loop, K.negate(), C, t_grid, sigma_grid, cfg, seed,
                                          n_random=kw.get("n_random", N_RANDOM_DIRECTIONS),
                                          env_grid=kw.get("env_grid"), pd_tol=kw.get("pd_tol", PD_TOL))
            lo_r, hi_r = back.ratios()
            check.reverse = {"plant_verdict": back.plant_verdict, "closed_verdict": back.closed_verdict,
                             "equivalent": back.equivalent, "phi": back.phi, "case": back.case,
                             "contained": back.contained, "n_violations": len(back.violations),
                             "max_lower_ratio": lo_r, "max_upper_ratio": hi_r,
                             "envelope": back.env.to_json()}
        except HypothesisUnmet as exc:
            check.reverse = {"skipped": str(exc), "equivalent": check.equivalent}
        except NotObservableOnGrid as exc:
            check.reverse = {"skipped": str(exc), "equivalent": check.equivalent}
    return check


# --------------------------------------------------------------------------
# Input feedback via the dual system


@dataclass
class InputFeedbackGains:
    """``||L^T(z)|| <= script_L e^{ell z}`` and ``||B^T(z)|| <= script_B e^{-beta z}``."""

    L: TvMatrix
    script_L: float
    ell: float
    script_B: float
    beta: float
    verified: bool = True
    zero_gain: bool = False
    gap_beta: float = float("nan")

    def to_json(self) -> dict:
        return {"script_L": self.script_L, "ell": self.ell, "script_B": self.script_B, "beta": self.beta,
                "verified": self.verified, "zero_gain": self.zero_gain, COND_BETA: self.gap_beta}


def fit_input_gains(L: TvMatrix, B: TvMatrix, grid: TimeGrid, env: GrowthEnvelope) -> InputFeedbackGains:
    """Fit the ``L^T`` and ``B^T`` envelopes; a zero ``L`` gets ``ell`` mid-way in ``(a, beta - eps)``."""
    zs = grid.points
    ln, bn = _norms(L.transpose(), zs), _norms(B.transpose(), zs)
    sl, ell = fit_exponential_bound(zs, ln, GAIN_FLOOR)
    sb, rate = fit_exponential_bound(zs, bn, GAIN_FLOOR)
    beta = -rate
    zero = not np.any(ln > 0)
    if zero:
        lo, hi = env.a, beta - env.eps
        ell = 0.5 * (lo + hi) if hi > lo else max(lo, 0.0)
    verified = _covers(ln, sl, ell, zs) and _covers(bn, sb, rate, zs)
    g = InputFeedbackGains(L, sl, ell, sb, beta, verified, zero)
    g.gap_beta = beta - (env.eps + ell)
    return g


def verify_input_feedback(A: TvMatrix, B: TvMatrix, L: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                          cfg: IntegratorConfig = DEFAULT_CONFIG, seed: int = 0,
                          env_grid: TimeGrid | None = None, pd_tol: float = PD_TOL,
                          env: GrowthEnvelope | None = None, gains: InputFeedbackGains | None = None) -> dict:
    """Controllability under input feedback ``A - B L``, checked two ways.

    Dual path: the dual plant ``-A^T`` with output ``B^T`` and output gain
    ``-L^T`` closes to ``-A^T + L^T B^T``, the dual of ``A - B L``; its
    observability verdict transfers back by duality.  The dual plant uses the
    envelope ``(K0, a + eps, eps)`` derived from the primal one.  Direct path:
    certify controllability of ``(A - B L, B)``.  The two verdicts must agree.

    Raises
    ------
    HypothesisUnmet
        ``beta - (eps + ell) <= 0``, or a hypothesis of the dual output-feedback check.
    """
    n = A.rows
    if B.rows != n or L.cols != n or L.rows != B.cols:
        raise DimensionMismatch(f"need B n x p and L p x n with n={n}, got B {B.rows}x{B.cols}, L {L.rows}x{L.cols}")
    env_grid = env_grid or envelope_grid(t_grid, sigma_grid)
    if env is None:
        env = fit_growth_envelope(A, env_grid, env_grid, cfg)
    ig = gains if gains is not None else fit_input_gains(L, B, env_grid, env)
    ig.gap_beta = ig.beta - (env.eps + ig.ell)
    require({COND_BETA: ig.gap_beta})

    dual_env = GrowthEnvelope(env.K0, env.a + env.eps, env.eps, float("nan"))
    A_d, C_d, K_d = A.transpose().negate(), B.transpose(), L.transpose().negate()
    gains_d = FeedbackGains(K_d, ig.script_L, ig.ell, ig.script_B, ig.beta, env_grid, ig.verified, ig.zero_gain)
    try:
        check = verify_output_feedback(A_d, K_d, C_d, t_grid, sigma_grid, cfg, seed, env=dual_env,
                                       gains=gains_d, env_grid=env_grid, pd_tol=pd_tol)
    except HypothesisUnmet as exc:
        raise HypothesisUnmet(exc.condition + " (dual system)", exc.detail) from None

    closed = close_loop(A, B, L)  # A - B L
    try:
        direct = certify_nucc(closed, B, t_grid, sigma_grid, cfg, pd_tol).verdict
    except NotControllableOnGrid:
        direct = "NotControllableOnGrid"
    try:
        plant = certify_nucc(A, B, t_grid, sigma_grid, cfg, pd_tol).verdict
    except NotControllableOnGrid:
        plant = "NotControllableOnGrid"
    dual_path = check.closed_verdict
    return {
        "check": "input_feedback",
        "envelope": env.to_json(),
        "dual_envelope": {"K0": dual_env.K0, "a": dual_env.a, "eps": dual_env.eps},
        "gains": ig.to_json(),
        "closed_loop": closed.to_rows(),
        "plant_verdict": plant,
        "dual_path_verdict": dual_path,
        "direct_verdict": direct,
        "agree": (dual_path == CERTIFIED) == (direct == CERTIFIED),
        "dual_check": check.to_json(),
    }

