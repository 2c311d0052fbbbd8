"""The dual system ``x' = -A^T x + C^T u`` and numerical checks of duality.

The observability Gramian of ``(A, C)`` equals the controllability Gramian
of ``(-A^T, C^T)`` on every window, so nonuniform complete observability of
the primal and nonuniform complete controllability of the dual must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateGrid, DimensionMismatch, HypothesisUnmet, InfeasibleFit,
                     NotControllableOnGrid, NotObservableOnGrid)
from .flow import DEFAULT_CONFIG, IntegratorConfig
from .nucert import (COVERAGE_SLACK, GRID_NOTE, PD_TOL, GrowthEnvelope, certify_nucc, certify_nuco, envelope_grid,
                     fit_growth_envelope, gramian_grid, sample_transition_norms)
from .tvmat import System, TimeGrid, TvMatrix

IDENTITY_TOL = 1e-6
RATE_SLACK = 0.05


@dataclass(frozen=True)
class DualSystem:
    A_dual: TvMatrix
    B_dual: TvMatrix

    def primal(self) -> tuple[TvMatrix, TvMatrix]:
        """Recover ``(A, C)``; double negations collapse, so the ASTs match the originals."""
        back = dualize(self.A_dual, self.B_dual.transpose())
        return back.A_dual, back.B_dual.transpose()

    def as_system(self, name: str = "") -> System:
        return System(self.A_dual, B=self.B_dual, name=name)

    def to_config(self) -> dict:
        return self.as_system().to_config()


def dualize(A: TvMatrix, C: TvMatrix) -> DualSystem:
    """``(A, C) -> (-A^T, C^T)``, built on the expression trees."""
    n = A.rows
    if A.cols != n:
        raise DimensionMismatch(f"A must be square, got {A.rows}x{A.cols}")
    if C.cols != n:
        raise DimensionMismatch(f"C must have {n} columns, got {C.rows}x{C.cols}")
    return DualSystem(A.transpose().negate(), C.transpose())


def _inf_norm(x: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(x), axis=1)))


def check_gramian_identity(A: TvMatrix, C: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                           cfg: IntegratorConfig = DEFAULT_CONFIG, tol: float = IDENTITY_TOL) -> dict:
    """Compare ``M_(A,C)`` with ``W_(-A^T,C^T)`` on every grid window.

    The deviation at a point is ``||M - W||_inf / (1 + ||M||_inf)``.
    """
    d = dualize(A, C)
    M = gramian_grid(A, C, t_grid, sigma_grid, "M", cfg)
    W = gramian_grid(d.A_dual, d.B_dual, t_grid, sigma_grid, "W", cfg)
    worst, where = -1.0, (None, None)
    failures = 0
    for row_m, row_w in zip(M, W):
        for gm, gw in zip(row_m, row_w):
            dev = _inf_norm(gm.matrix - gw.matrix) / (1.0 + _inf_norm(gm.matrix))
            failures += dev > tol
            if dev > worst:
                worst, where = dev, (gm.t, gm.sigma)
    return {
        "check": "gramian_identity",
        "points": len(t_grid) * len(sigma_grid),
        "max_relative_deviation": worst,
        "at": {"t": where[0], "sigma": where[1]},
        "tolerance": tol,
        "failures": int(failures),
        "passed": failures == 0,
    }


def _nuco_verdict(A, C, t_grid, sigma_grid, cfg, pd_tol):
    try:
        cert = certify_nuco(A, C, t_grid, sigma_grid, cfg, pd_tol)
    except NotObservableOnGrid as exc:
        return None, "NotObservableOnGrid", str(exc)
    return cert, cert.verdict, ""


def _nucc_verdict(A, B, t_grid, sigma_grid, cfg, pd_tol):
    try:
        cert = certify_nucc(A, B, t_grid, sigma_grid, cfg, pd_tol)
    except NotControllableOnGrid as exc:
        return None, "NotControllableOnGrid", str(exc)
    return cert, cert.verdict, ""


def check_duality_equivalence(A: TvMatrix, C: TvMatrix, t_grid: TimeGrid, sigma_grid: TimeGrid,
                          cfg: IntegratorConfig = DEFAULT_CONFIG, pd_tol: float = PD_TOL,
                          env_grid: TimeGrid | None = None, rate_slack: float = RATE_SLACK,
                          env: GrowthEnvelope | None = None) -> dict:
    """Certify NUCO of ``(A, C)`` and NUCC of the dual on the same grids and compare.

    The primal plant must admit a fitted growth envelope ``(K0, a, eps)``;
    the adjoint transition matrix is then checked against the envelope
    ``K0 exp((a + eps) |t - tau| + eps tau)``.

    Raises
    ------
    HypothesisUnmet
        No growth envelope could be fitted for ``A``.
    """
    env_grid = env_grid or envelope_grid(t_grid, sigma_grid)
    if env is None:
        try:
            env = fit_growth_envelope(A, env_grid, env_grid, cfg)
        except (InfeasibleFit, DegenerateGrid) as exc:
            raise HypothesisUnmet("nonuniform bounded growth", str(exc)) from None

    adj = sample_transition_norms(A, env_grid, env_grid, cfg, adjoint=True)
    t, tau = adj[:, 0], adj[:, 1]
    bound = env.K0 * np.exp((env.a + env.eps) * np.abs(t - tau) + env.eps * tau)
    dual_ratio = float(np.max(adj[:, 2] / bound))

    d = dualize(A, C)
    primal, v_primal, why_primal = _nuco_verdict(A, C, t_grid, sigma_grid, cfg, pd_tol)
    dual, v_dual, why_dual = _nucc_verdict(d.A_dual, d.B_dual, t_grid, sigma_grid, cfg, pd_tol)
    equivalent = (v_primal == "CertifiedOnGrid") == (v_dual == "CertifiedOnGrid")

    rates = None
    if primal is not None and dual is not None:
        rates = {
            "nu0": primal.nu0, "mu0": dual.mu0,
            "nu1": primal.nu1, "mu1": dual.mu1,
            "max_difference": max(abs(primal.nu0 - dual.mu0), abs(primal.nu1 - dual.mu1)),
            "slack": rate_slack,
        }
        rates["within_slack"] = rates["max_difference"] <= rate_slack
    return {
        "check": "duality_equivalence",
        "envelope": env.to_json(),
        "dual_envelope": {
            "K0": env.K0, "a": env.a + env.eps, "eps": env.eps,
            "max_ratio": dual_ratio, "covers": dual_ratio <= 1.0 + COVERAGE_SLACK,
        },
        "primal_verdict": v_primal,
        "dual_verdict": v_dual,
        "primal_detail": why_primal,
        "dual_detail": why_dual,
        "equivalent": equivalent,
        "rates": rates,
        "passed": equivalent and dual_ratio <= 1.0 + COVERAGE_SLACK and (rates is None or rates["within_slack"]),
        "note": GRID_NOTE,
    }
