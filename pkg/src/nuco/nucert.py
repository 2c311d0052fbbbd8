"""Grid certificates for nonuniform growth, observability and controllability.

Every verdict here is relative to the sampled grid: a ``CertifiedOnGrid``
certificate says the defining inequalities hold at the sampled ``(t, sigma)``
points with the reported constants, nothing more.

Envelope constants are fitted in log space by linear programming over the
sampled inequalities.  Gramian rates are fitted by least squares on
``log lambda`` against ``t`` (one common slope, one intercept per window
length), then the per-window tables are lowered until every sample is
covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .errors import (DegenerateGrid, InfeasibleFit, NotControllableOnGrid, NotObservableOnGrid,
                     VerificationFailure)
from .flow import DEFAULT_CONFIG, IntegratorConfig, Transition
from .gramian import GramianResult, gramian_series
from .tvmat import TimeGrid, TvMatrix

A_MIN = 1e-6
COVERAGE_SLACK = 1e-9
BOUND_SLACK = 1e-8
PD_TOL = 1e-10
UCO_RATE_TOL = 1e-3
GRID_NOTE = "verdicts hold on the sampled grid only; no claim is made between or beyond grid points"

CERTIFIED = "CertifiedOnGrid"
FAILED_LOWER = "FailedLower"
FAILED_UPPER = "FailedUpper"
DEGENERATE = "Degenerate"


# --------------------------------------------------------------------------
# Transition-norm envelopes


def sample_transition_norms(A: TvMatrix, t_grid, tau_grid, cfg: IntegratorConfig = DEFAULT_CONFIG,
                            adjoint: bool = False) -> np.ndarray:
    """Rows ``(t, tau, ||Phi(t, tau)||_2)`` for every grid pair."""
    tr = Transition(A, cfg, adjoint=adjoint)
    ts = np.asarray(list(t_grid), dtype=float)
    rows = []
    for tau in tau_grid:
        phis = tr.many(ts, tau)
        norms = np.linalg.norm(phis, ord=2, axis=(1, 2))
        rows.extend(zip(ts, np.full(len(ts), tau), norms))
    return np.array(rows, dtype=float)


@dataclass
class GrowthEnvelope:
    """``||Phi(t, tau)|| <= K0 * exp(eps * tau) * exp(a * |t - tau|)`` on the sampled pairs."""

    K0: float
    a: float
    eps: float
    max_log_residual: float
    t_grid: TimeGrid | None = None
    tau_grid: TimeGrid | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def bound(self, t, tau):
        t, tau = np.asarray(t, dtype=float), np.asarray(tau, dtype=float)
        return self.K0 * np.exp(self.eps * tau + self.a * np.abs(t - tau))

    def ratios(self, samples: np.ndarray | None = None) -> np.ndarray:
        s = self.samples if samples is None else samples
        return s[:, 2] / self.bound(s[:, 0], s[:, 1])

    def covers(self, samples: np.ndarray | None = None, slack: float = COVERAGE_SLACK) -> bool:
        return bool(np.all(self.ratios(samples) <= 1.0 + slack))

    def is_tight(self, within: float = 0.05) -> bool:
        """At least one sample lies within ``within`` (relative) of the bound."""
        return bool(np.max(self.ratios()) >= 1.0 - within)

    def to_json(self) -> dict:
        return {
            "K0": self.K0,
            "a": self.a,
            "eps": self.eps,
            "max_log_residual": self.max_log_residual,
            "t_grid": str(self.t_grid) if self.t_grid is not None else None,
            "tau_grid": str(self.tau_grid) if self.tau_grid is not None else None,
            "max_ratio": float(np.max(self.ratios())) if self.samples is not None else None,
        }


def _solve_lp(c, A_ub, b_ub, bounds, what: str):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise InfeasibleFit(f"{what}: {res.message}")
    return res.x


def fit_envelope_to_samples(samples: np.ndarray, a_min: float = A_MIN, a_max: float | None = None,
                            K0_max: float | None = None, eps_max: float | None = None) -> GrowthEnvelope:
    """Fit ``(K0, a, eps)`` to sampled transition norms.

    Two linear programs in ``(log K0, a, eps)`` over the sampled coverage
    inequalities ``log||Phi|| <= log K0 + a |t - tau| + eps tau``.  The first
    finds the smallest nonuniformity ``eps`` for which the envelope can cover
    every sample.  The second holds ``eps`` there and minimises the mean log
    gap between envelope and samples, which trades ``K0`` against ``a``
    without letting the decaying direction of ``Phi`` dominate the fit the
    way a max-gap objective does.  ``log K0`` is then raised by any residual
    solver infeasibility so coverage holds exactly.  Optional budgets cap
    ``a``, ``K0`` and ``eps``; ``max_log_residual`` is the largest log gap.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 3 or len(samples) < 2:
        raise DegenerateGrid("need at least two (t, tau, norm) samples")
    if not np.all(np.isfinite(samples)) or np.any(samples[:, 2] <= 0):
        raise InfeasibleFit("transition norms must be finite and positive")
    tau = samples[:, 1]
    d = np.abs(samples[:, 0] - tau)
    y = np.log(samples[:, 2])
    if np.all(d == d[0]) and np.all(tau == tau[0]):
        raise DegenerateGrid("all samples share the same tau and |t - tau|")

    cover = np.column_stack((-np.ones_like(y), -d, -tau))  # y <= logK0 + a d + eps tau
    log_k0_hi = None if K0_max is None else math.log(K0_max)
    bounds = [(None, log_k0_hi), (a_min, a_max), (0.0, eps_max)]

    x = _solve_lp([0, 0, 1], cover, -y, bounds, "envelope eps stage")
    bounds[2] = (0.0, float(x[2]) * (1 + 1e-9) + 1e-12)
    x = _solve_lp([1, d.mean(), tau.mean()], cover, -y, bounds, "envelope gap stage")
    log_k0, a, eps = float(x[0]), max(float(x[1]), a_min), max(float(x[2]), 0.0)
    if eps < 1e-10:
        eps = 0.0  # LP slack, not a rate; the coverage correction below absorbs it
    excess = float(np.max(y - (log_k0 + a * d + eps * tau)))
    if excess > 0:
        log_k0 += excess
    gaps = log_k0 + a * d + eps * tau - y
    return GrowthEnvelope(math.exp(log_k0), a, eps, float(np.max(gaps)), samples=samples)


def fit_growth_envelope(A: TvMatrix, t_grid: TimeGrid, tau_grid: TimeGrid | None = None,
                        cfg: IntegratorConfig = DEFAULT_CONFIG, a_min: float = A_MIN, a_max: float | None = None,
                        K0_max: float | None = None, eps_max: float | None = None) -> GrowthEnvelope:
    """Nonuniform bounded-growth constants of ``A`` fitted on ``t_grid x tau_grid``."""
    tau_grid = t_grid if tau_grid is None else tau_grid
    samples = sample_transition_norms(A, t_grid, tau_grid, cfg)
    env = fit_envelope_to_samples(samples, a_min, a_max, K0_max, eps_max)
    env.t_grid, env.tau_grid = t_grid, tau_grid
    return env


@dataclass
class KalmanEnvelope:
    """``||Phi(t, tau)|| <= exp(nu * tau) * alpha(|t - tau|)`` with ``alpha`` tabulated on buckets.

    Bucket ``k`` covers distances in ``((k-1) w, k w]`` and stores the value
    of ``alpha`` at its upper edge.
    """

    nu: float
    bucket_width: float
    alpha_table: list[float]
    covered: bool = True

    def alpha(self, d: float) -> float:
        k = max(0, math.ceil(d / self.bucket_width - 1e-9))
        if k >= len(self.alpha_table):
            raise ValueError(f"distance {d} is outside the tabulated range")
        return self.alpha_table[k]

    def bound(self, t: float, tau: float) -> float:
        return math.exp(self.nu * tau) * self.alpha(abs(t - tau))

    def to_json(self) -> dict:
        return {
            "nu": self.nu,
            "bucket_width": self.bucket_width,
            "alpha_table": [[k * self.bucket_width, v] for k, v in enumerate(self.alpha_table)],
            "covered": self.covered,
        }


def check_kalman_property(env: GrowthEnvelope, bucket_width: float | None = None,
                          max_distance: float | None = None) -> KalmanEnvelope:
    """Recast a growth envelope as a nonuniform Kalman bound and re-check coverage.

    ``nu = eps`` and ``alpha(d) = K0 exp(a d)`` evaluated at bucket upper edges.
    """
    if bucket_width is None:
        steps = [g.step for g in (env.t_grid, env.tau_grid) if g is not None]
        bucket_width = min(steps) if steps else 1.0
    if max_distance is None:
        if env.samples is not None:
            max_distance = float(np.max(np.abs(env.samples[:, 0] - env.samples[:, 1])))
        else:
            max_distance = bucket_width
    n_buckets = math.ceil(max_distance / bucket_width - 1e-9) + 1
    table = [env.K0 * math.exp(env.a * k * bucket_width) for k in range(n_buckets)]
    ke = KalmanEnvelope(env.eps, bucket_width, table)
    if env.samples is not None:
        s = env.samples
        bounds = np.array([ke.bound(t, tau) for t, tau in s[:, :2]])
        ke.covered = bool(np.all(s[:, 2] <= bounds * (1 + COVERAGE_SLACK)))
    return ke


def fit_exponential_bound(z, norms, floor: float = 1e-12) -> tuple[float, float]:
    """Chebyshev fit of ``norms[k] <= coef * exp(rate * z[k])``; returns ``(coef, rate)``.

    An identically zero sequence gives ``(floor, 0)``.
    """
    z = np.asarray(z, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if not np.all(np.isfinite(norms)):
        raise InfeasibleFit("non-finite norms")
    keep = norms > 0
    if not np.any(keep):
        return floor, 0.0
    z, y = z[keep], np.log(norms[keep])
    if len(z) == 1:
        return float(norms[keep][0]), 0.0
    ones = np.ones_like(y)
    A_ub = np.vstack((np.column_stack((-ones, -z, 0 * ones)), np.column_stack((ones, z, -ones))))
    x = _solve_lp([0, 0, 1], A_ub, np.concatenate((-y, y)), [(None, None), (None, None), (0, None)],
                  "exponential bound")
    c, r = float(x[0]), float(x[1])
    c += max(0.0, float(np.max(y - c - r * z)))
    return max(math.exp(c), floor), r


# --------------------------------------------------------------------------
# Two-sided Gramian bounds


@dataclass
class TwoSidedFit:
    rate_lower: float
    rate_upper: float
    theta_lower: list[float]
    theta_upper: list[float]
    residual_lower: float
    residual_upper: float
    violations_lower: int
    violations_upper: int


def sigma0_search(pd_row: np.ndarray) -> int | None:
    """Index of the smallest grid window with a positive definite Gramian.

    Doubles the probe index from the smallest window, then bisects; relies on
    Gramians being monotone in the window length.
    """
    if pd_row[0]:
        return 0
    n = len(pd_row)
    lo, hi = 0, 1
    while hi < n and not pd_row[hi]:
        lo, hi = hi, min(2 * hi + 1, n)
        if hi == n:
            break
    if hi >= n:
        if not pd_row[n - 1]:
            return None
        hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pd_row[mid]:
            hi = mid
        else:
            lo = mid
    return hi


def _common_slope(ts: np.ndarray, logs: np.ndarray, mask: np.ndarray) -> float:
    num = den = 0.0
    for j in range(logs.shape[1]):
        col = mask[:, j]
        if col.sum() < 2:
            continue
        tt, yy = ts[col], logs[col, j]
        tc = tt - tt.mean()
        num += float(tc @ (yy - yy.mean()))
        den += float(tc @ tc)
    return num / den if den > 0 else 0.0


def fit_two_sided(ts: np.ndarray, lmin: np.ndarray, lmax: np.ndarray, mask: np.ndarray) -> TwoSidedFit:
    """Fit ``theta_lo(s) exp(-2 r_lo t) <= lmin`` and ``lmax <= theta_hi(s) exp(2 r_hi t)``.

    ``mask[i, j]`` marks the samples that must satisfy the bounds
    (``sigma_j >= sigma0(t_i)``).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        log_lo = np.log(np.where(mask, lmin, np.nan))
        log_hi = np.log(np.where(mask, lmax, np.nan))
    r_lo = max(0.0, -_common_slope(ts, log_lo, mask) / 2)
    r_hi = max(0.0, _common_slope(ts, log_hi, mask) / 2)
    scaled_lo = np.where(mask, lmin * np.exp(2 * r_lo * ts)[:, None], np.inf)
    scaled_hi = np.where(mask, lmax * np.exp(-2 * r_hi * ts)[:, None], -np.inf)
    raw_lo = scaled_lo.min(axis=0)
    # non-decreasing in sigma: running minimum from the right
    theta_lo = np.minimum.accumulate(raw_lo[::-1])[::-1]
    theta_hi = scaled_hi.max(axis=0)
    for j in range(len(theta_hi) - 2, -1, -1):
        if not np.isfinite(theta_hi[j]):
            theta_hi[j] = theta_hi[j + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        res_lo = np.nanmax(np.where(mask, np.log(scaled_lo / theta_lo[None, :]), np.nan))
        res_hi = np.nanmax(np.where(mask, np.log(theta_hi[None, :] / scaled_hi), np.nan))
    lower = theta_lo[None, :] * np.exp(-2 * r_lo * ts)[:, None]
    upper = theta_hi[None, :] * np.exp(2 * r_hi * ts)[:, None]
    v_lo = int(np.sum(mask & (lower > lmin * (1 + BOUND_SLACK))))
    v_hi = int(np.sum(mask & (lmax > upper * (1 + BOUND_SLACK))))
    return TwoSidedFit(r_lo, r_hi, theta_lo.tolist(), theta_hi.tolist(), float(res_lo), float(res_hi), v_lo, v_hi)


def _pd_mask(lmin: np.ndarray, lmax: np.ndarray, pd_tol: float) -> np.ndarray:
    return lmin > pd_tol * (1.0 + lmax)


def _sigma0_indices(pd: np.ndarray) -> list[int | None]:
    return [sigma0_search(row) for row in pd]


def _qualifying(idx: list[int | None], n_sigma: int) -> np.ndarray:
    mask = np.zeros((len(idx), n_sigma), dtype=bool)
    for i, k in enumerate(idx):
        if k is not None:
            mask[i, k:] = True
    return mask


def _lambda_tables(results: list[list[GramianResult]]) -> tuple[np.ndarray, np.ndarray]:
    lmin = np.array([[g.lambda_min for g in row] for row in results])
    lmax = np.array([[g.lambda_max for g in row] for row in results])
    return lmin, lmax


def _verdict(fit: TwoSidedFit, pd: np.ndarray, mask: np.ndarray) -> str:
    theta_lo = np.asarray(fit.theta_lower)
    if not np.all(np.isfinite(theta_lo)) or not np.all(np.isfinite(fit.theta_upper)):
        return DEGENERATE
    if np.any(mask & ~pd) or fit.violations_lower or np.any(theta_lo <= 0) or np.any(np.diff(theta_lo) < 0):
        return FAILED_LOWER
    if fit.violations_upper or np.any(np.asarray(fit.theta_upper) <= 0):
        return FAILED_UPPER
    return CERTIFIED


# --------------------------------------------------------------------------
# Observability


@dataclass
class NucoCertificate:
    nu0: float
    nu1: float
    theta0: list[float]
    theta1: list[float]
    sigma0: list[float]
    t_grid: TimeGrid
    sigma_grid: TimeGrid
    fit_residuals: dict
    verdict: str
    uco: bool
    lambda_min: np.ndarray = field(repr=False)
    lambda_max: np.ndarray = field(repr=False)

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def theta0_at(self, sigma: float) -> float:
        return self.theta0[_sigma_index(self.sigma_grid, sigma)]

    def theta1_at(self, sigma: float) -> float:
        return self.theta1[_sigma_index(self.sigma_grid, sigma)]

    def to_json(self) -> dict:
        return {
            "type": "NUCO",
            "verdict": self.verdict,
            "uco": self.uco,
            "nu0": self.nu0,
            "nu1": self.nu1,
            "t_grid": str(self.t_grid),
            "sigma_grid": str(self.sigma_grid),
            "sigma": self.sigma_grid.points.tolist(),
            "theta0": self.theta0,
            "theta1": self.theta1,
            "t": self.t_grid.points.tolist(),
            "sigma0": self.sigma0,
            "fit_residuals": self.fit_residuals,
            "note": GRID_NOTE,
        }

    def csv_rows(self):
        for i, t in enumerate(self.t_grid):
            for j, s in enumerate(self.sigma_grid):
                yield t, s, float(self.lambda_min[i, j]), float(self.lambda_max[i, j])


def _sigma_index(grid: TimeGrid, sigma: float) -> int:
    pts = grid.points
    j = int(np.argmin(np.abs(pts - sigma)))
    if abs(pts[j] - sigma) > 1e-9 * max(1.0, abs(sigma)):
        raise KeyError(f"sigma={sigma} is not a grid point")
    return j


def gramian_grid(A: TvMatrix, X: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid, kind: str,
                 cfg: IntegratorConfig = DEFAULT_CONFIG) -> list[list[GramianResult]]:
    sig = sigma_grid.points
    if sig[0] <= 0:
        raise DegenerateGrid("window lengths must be positive")
    return [gramian_series(A, X, t, sig, kind, cfg, estimate_error=False) for t in t_grid]


def certify_nuco(A: TvMatrix, C: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                 cfg: IntegratorConfig = DEFAULT_CONFIG, pd_tol: float = PD_TOL,
                 results: list[list[GramianResult]] | None = None) -> NucoCertificate:
    """Certify nonuniform complete observability of ``(A, C)`` on the grid.

    Raises
    ------
    NotObservableOnGrid
        Some grid ``t`` has no window with a positive definite Gramian.
    """
    if results is None:
        results = gramian_grid(A, C, t_grid, sigma_grid, "M", cfg)
    lmin, lmax = _lambda_tables(results)
    ts = t_grid.points
    if not (np.all(np.isfinite(lmin)) and np.all(np.isfinite(lmax))):
        raise VerificationFailure("non-finite Gramian eigenvalues")
    pd = _pd_mask(lmin, lmax, pd_tol)
    idx = _sigma0_indices(pd)
    for i, k in enumerate(idx):
        if k is None:
            exc = NotObservableOnGrid(float(ts[i]), f"max lambda_min={float(np.max(lmin[i])):.3e}")
            exc.lambda_min, exc.lambda_max = lmin, lmax
            raise exc
    mask = _qualifying(idx, len(sigma_grid))
    fit = fit_two_sided(ts, lmin, lmax, mask)
    verdict = _verdict(fit, pd, mask)
    sig = sigma_grid.points
    sigma0 = [float(sig[k]) for k in idx]
    uco = (verdict == CERTIFIED and fit.rate_lower <= UCO_RATE_TOL and fit.rate_upper <= UCO_RATE_TOL
           and len(set(sigma0)) == 1)
    return NucoCertificate(fit.rate_lower, fit.rate_upper, fit.theta_lower, fit.theta_upper, sigma0,
                           t_grid, sigma_grid,
                           {"lower_max_log_gap": fit.residual_lower, "upper_max_log_gap": fit.residual_upper,
                            "violations_lower": fit.violations_lower, "violations_upper": fit.violations_upper},
                           verdict, uco, lmin, lmax)


def verify_nuco_certificate(cert: NucoCertificate, A: TvMatrix, C: TvMatrix,
                            cfg: IntegratorConfig = DEFAULT_CONFIG) -> list[tuple[float, float, str]]:
    """Recompute every Gramian from scratch and list ``(t, sigma, side)`` violations."""
    fresh = gramian_grid(A, C, cert.t_grid, cert.sigma_grid, "M", cfg)
    lmin, lmax = _lambda_tables(fresh)
    return _bound_violations(cert.t_grid.points, cert.sigma_grid.points, cert.sigma0, lmin, lmax,
                             cert.theta0, cert.nu0, cert.theta1, cert.nu1)


def _bound_violations(ts, sig, sigma0, lmin, lmax, theta_lo, r_lo, theta_hi, r_hi):
    out = []
    for i, t in enumerate(ts):
        for j, s in enumerate(sig):
            if s < sigma0[i]:
                continue
            lo = theta_lo[j] * math.exp(-2 * r_lo * t)
            hi = theta_hi[j] * math.exp(2 * r_hi * t)
            if lo > lmin[i, j] * (1 + BOUND_SLACK):
                out.append((float(t), float(s), "lower"))
            if lmax[i, j] > hi * (1 + BOUND_SLACK):
                out.append((float(t), float(s), "upper"))
    return out


# --------------------------------------------------------------------------
# Controllability


@dataclass
class NuccCertificate:
    mu0: float
    mu1: float
    mu0_tilde: float
    mu1_tilde: float
    alpha0: list[float]
    alpha1: list[float]
    beta0: list[float]
    beta1: list[float]
    sigma0: list[float]
    t_grid: TimeGrid
    sigma_grid: TimeGrid
    fit_residuals: dict
    verdict: str
    verdict_W: str
    verdict_K: str
    lambda_W: tuple = field(repr=False, default=())
    lambda_K: tuple = field(repr=False, default=())

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self) -> dict:
        return {
            "type": "NUCC",
            "verdict": self.verdict,
            "verdict_W": self.verdict_W,
            "verdict_K": self.verdict_K,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "mu0_tilde": self.mu0_tilde,
            "mu1_tilde": self.mu1_tilde,
            "t_grid": str(self.t_grid),
            "sigma_grid": str(self.sigma_grid),
            "sigma": self.sigma_grid.points.tolist(),
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "t": self.t_grid.points.tolist(),
            "sigma0": self.sigma0,
            "fit_residuals": self.fit_residuals,
            "note": GRID_NOTE,
        }

    def csv_rows(self):
        lw, uw = self.lambda_W
        lk, uk = self.lambda_K
        for i, t in enumerate(self.t_grid):
            for j, s in enumerate(self.sigma_grid):
                yield t, s, float(lw[i, j]), float(uw[i, j]), float(lk[i, j]), float(uk[i, j])


def controllability_grids(A: TvMatrix, B: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                          cfg: IntegratorConfig = DEFAULT_CONFIG):
    W = gramian_grid(A, B, t_grid, sigma_grid, "W", cfg)
    K = gramian_grid(A, B, t_grid, sigma_grid, "K", cfg)
    return W, K


def certify_nucc(A: TvMatrix, B: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                 cfg: IntegratorConfig = DEFAULT_CONFIG, pd_tol: float = PD_TOL) -> NuccCertificate:
    """Certify nonuniform complete controllability of ``(A, B)`` on the grid.

    Both ``W`` and ``K`` get two-sided bounds; ``sigma0(t)`` is the smallest
    grid window where both are positive definite.

    Raises
    ------
    NotControllableOnGrid
        Some grid ``t`` has no window where both Gramians are positive definite.
    """
    W, K = controllability_grids(A, B, t_grid, sigma_grid, cfg)
    lw, uw = _lambda_tables(W)
    lk, uk = _lambda_tables(K)
    ts = t_grid.points
    if not all(np.all(np.isfinite(x)) for x in (lw, uw, lk, uk)):
        raise VerificationFailure("non-finite Gramian eigenvalues")
    pd = _pd_mask(lw, uw, pd_tol) & _pd_mask(lk, uk, pd_tol)
    idx = _sigma0_indices(pd)
    for i, k in enumerate(idx):
        if k is None:
            raise NotControllableOnGrid(float(ts[i]), f"max lambda_min(W)={float(np.max(lw[i])):.3e}")
    mask = _qualifying(idx, len(sigma_grid))
    fw = fit_two_sided(ts, lw, uw, mask)
    fk = fit_two_sided(ts, lk, uk, mask)
    vw, vk = _verdict(fw, pd, mask), _verdict(fk, pd, mask)
    verdict = vw if vw != CERTIFIED else vk
    sig = sigma_grid.points
    return NuccCertificate(
        fw.rate_lower, fw.rate_upper, fk.rate_lower, fk.rate_upper,
        fw.theta_lower, fw.theta_upper, fk.theta_lower, fk.theta_upper,
        [float(sig[k]) for k in idx], t_grid, sigma_grid,
        {"W_lower_max_log_gap": fw.residual_lower, "W_upper_max_log_gap": fw.residual_upper,
         "K_lower_max_log_gap": fk.residual_lower, "K_upper_max_log_gap": fk.residual_upper},
        verdict, vw, vk, (lw, uw), (lk, uk))


def verify_nucc_certificate(cert: NuccCertificate, A: TvMatrix, B: TvMatrix,
                            cfg: IntegratorConfig = DEFAULT_CONFIG) -> list[tuple[float, float, str]]:
    W, K = controllability_grids(A, B, cert.t_grid, cert.sigma_grid, cfg)
    ts, sig = cert.t_grid.points, cert.sigma_grid.points
    lw, uw = _lambda_tables(W)
    lk, uk = _lambda_tables(K)
    out = [(t, s, "W-" + side) for t, s, side in
           _bound_violations(ts, sig, cert.sigma0, lw, uw, cert.alpha0, cert.mu0, cert.alpha1, cert.mu1)]
    out += [(t, s, "K-" + side) for t, s, side in
            _bound_violations(ts, sig, cert.sigma0, lk, uk, cert.beta0, cert.mu0_tilde, cert.beta1, cert.mu1_tilde)]
    return out


# --------------------------------------------------------------------------
# Any two of (W bounds, K bounds, Kalman property) imply the third


def envelope_grid(t_grid: TimeGrid, sigma_grid: TimeGrid, spacing: float = 0.5) -> TimeGrid:
    """A grid covering every window ``[t, t + sigma]`` of the certificate grids."""
    end = t_grid.t_end + sigma_grid.t_end
    n = max(3, int(math.ceil((end - t_grid.t_start) / spacing)) + 1)
    return TimeGrid(t_grid.t_start, end, n)


def _gramian_property(results, t_grid, pd_tol) -> tuple[bool, str]:
    lmin, lmax = _lambda_tables(results)
    if not (np.all(np.isfinite(lmin)) and np.all(np.isfinite(lmax))):
        return False, "non-finite eigenvalues"
    pd = _pd_mask(lmin, lmax, pd_tol)
    idx = _sigma0_indices(pd)
    missing = [float(t) for t, k in zip(t_grid.points, idx) if k is None]
    if missing:
        return False, f"no positive definite window at t={missing[0]}"
    mask = _qualifying(idx, lmin.shape[1])
    verdict = _verdict(fit_two_sided(t_grid.points, lmin, lmax, mask), pd, mask)
    return verdict == CERTIFIED, verdict


def check_two_imply_third(A: TvMatrix, B: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                          cfg: IntegratorConfig = DEFAULT_CONFIG, pd_tol: float = PD_TOL,
                          env_grid: TimeGrid | None = None, env: GrowthEnvelope | None = None) -> dict:
    """Evaluate the W-bound, K-bound and Kalman properties and test each implication.

    A finding is recorded whenever two properties hold on the grid and the
    third does not.
    """
    W, K = controllability_grids(A, B, t_grid, sigma_grid, cfg)
    holds: dict[str, bool] = {}
    detail: dict[str, str] = {}
    holds["W_bounds"], detail["W_bounds"] = _gramian_property(W, t_grid, pd_tol)
    holds["K_bounds"], detail["K_bounds"] = _gramian_property(K, t_grid, pd_tol)
    env_grid = env_grid or envelope_grid(t_grid, sigma_grid)
    try:
        if env is None:
            env = fit_growth_envelope(A, env_grid, env_grid, cfg)
        ke = check_kalman_property(env)
        holds["kalman"], detail["kalman"] = ke.covered, f"nu={ke.nu:.6g}"
    except (InfeasibleFit, DegenerateGrid) as exc:
        holds["kalman"], detail["kalman"] = False, str(exc)
    names = list(holds)
    implications = []
    findings = []
    for p, q in combinations(names, 2):
        if holds[p] and holds[q]:
            third = next(x for x in names if x not in (p, q))
            implications.append({"given": [p, q], "third": third, "holds": holds[third]})
            if not holds[third]:
                findings.append(f"{p} and {q} hold but {third} does not")
    return {
        "properties": holds,
        "detail": detail,
        "n_holding": sum(holds.values()),
        "implications": implications,
        "findings": findings,
        "note": GRID_NOTE if implications else "fewer than two properties hold; no implication tested",
    }
