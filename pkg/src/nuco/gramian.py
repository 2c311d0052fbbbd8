"""Observability and controllability Gramians of LTV systems.

Three kinds are supported, all over the window ``[t, t + sigma]``:

``M``  observability, ``int Phi(s,t)^T C(s)^T C(s) Phi(s,t) ds``
``W``  controllability, ``int Phi(t,s) B(s) B(s)^T Phi(t,s)^T ds``
``K``  ``W`` transported to the window end, ``Phi(t+sigma,t) W Phi(t+sigma,t)^T``

The primary path integrates the Gramian jointly with the transition matrix
as one augmented ODE, so a single adaptive error control covers both.  A
composite Simpson rule over sampled transition matrices is kept as an
independent cross-check (:func:`simpson_gramian`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import DimensionMismatch
from .flow import DEFAULT_CONFIG, IntegratorConfig, Transition, solve_linear
from .tvmat import TvMatrix

KINDS = ("M", "W", "K")

# Error estimates come from a second solve with tolerances loosened by this factor.
_ESTIMATE_LOOSENING = 100.0


@dataclass(frozen=True)
class GramianResult:
    kind: str
    t: float
    sigma: float
    matrix: np.ndarray
    quad_error_estimate: float
    lambda_min: float
    lambda_max: float

    @property
    def psd(self) -> bool:
        return self.lambda_min >= -1e-8 * (1.0 + self.lambda_max)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "t": self.t,
            "sigma": self.sigma,
            "matrix": self.matrix.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "quad_error_estimate": self.quad_error_estimate,
        }


def symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def _result(kind, t, sigma, mat, err) -> GramianResult:
    mat = symmetrize(mat)
    eig = np.linalg.eigvalsh(mat)
    return GramianResult(kind, float(t), float(sigma), mat, float(err), float(eig[0]), float(eig[-1]))


def _check(A: TvMatrix, X: TvMatrix, kind: str) -> None:
    if A.rows != A.cols:
        raise DimensionMismatch(f"A must be square, got {A.rows}x{A.cols}")
    if kind == "M" and X.cols != A.rows:
        raise DimensionMismatch(f"C must have {A.rows} columns, got {X.cols}")
    if kind in ("W", "K") and X.rows != A.rows:
        raise DimensionMismatch(f"B must have {A.rows} rows, got {X.rows}")
    if kind not in KINDS:
        raise ValueError(f"unknown Gramian kind {kind!r}")


def _obs_rhs(A: TvMatrix, C: TvMatrix):
    n = A.rows
    nn = n * n

    def rhs(s, y):
        phi = y[:nn].reshape(n, n)
        cphi = C(s) @ phi
        return np.concatenate(((A(s) @ phi).ravel(), (cphi.T @ cphi).ravel()))

    return rhs


def _ctrl_rhs(A: TvMatrix, B: TvMatrix):
    # state: X(s) = Phi(t,s), Y(s) = Phi(s,t), running W
    n = A.rows
    nn = n * n

    def rhs(s, y):
        x = y[:nn].reshape(n, n)
        yy = y[nn:2 * nn].reshape(n, n)
        a = A(s)
        xb = x @ B(s)
        return np.concatenate(((-x @ a).ravel(), (a @ yy).ravel(), (xb @ xb.T).ravel()))

    return rhs


def _augmented(A: TvMatrix, X: TvMatrix, t: float, sigmas: np.ndarray, kind: str,
               cfg: IntegratorConfig) -> list[np.ndarray]:
    n = A.rows
    eye = np.eye(n).ravel()
    zero = np.zeros(n * n)
    ends = t + sigmas
    if kind == "M":
        _, ys, _ = solve_linear(_obs_rhs(A, X), np.concatenate((eye, zero)), t, float(ends[-1]), cfg,
                                t_eval=ends)
        return [ys[n * n:, k].reshape(n, n) for k in range(len(ends))]
    _, ys, _ = solve_linear(_ctrl_rhs(A, X), np.concatenate((eye, eye, zero)), t, float(ends[-1]), cfg,
                            t_eval=ends)
    out = []
    for k in range(len(ends)):
        w = ys[2 * n * n:, k].reshape(n, n)
        if kind == "K":
            fwd = ys[n * n:2 * n * n, k].reshape(n, n)
            w = fwd @ symmetrize(w) @ fwd.T
        out.append(w)
    return out


def gramian_series(A: TvMatrix, X: TvMatrix, t: float, sigmas: Sequence[float], kind: str = "M",
                   cfg: IntegratorConfig = DEFAULT_CONFIG, estimate_error: bool = True) -> list[GramianResult]:
    """Gramians of one ``kind`` at base time ``t`` for every window length in ``sigmas``.

    One augmented solve covers all window lengths.  ``X`` is ``C`` for
    ``kind="M"`` and ``B`` for ``"W"``/``"K"``.
    """
    _check(A, X, kind)
    sig = np.asarray(sigmas, dtype=float)
    if sig.ndim != 1 or len(sig) == 0 or np.any(sig <= 0) or np.any(np.diff(sig) <= 0):
        raise ValueError("sigmas must be a non-empty strictly increasing list of positive values")
    t = float(t)
    mats = _augmented(A, X, t, sig, kind, cfg)
    if estimate_error:
        coarse = _augmented(A, X, t, sig, kind, cfg.loosened(_ESTIMATE_LOOSENING))
        errs = [float(np.max(np.abs(symmetrize(a) - symmetrize(b)))) for a, b in zip(mats, coarse)]
    else:
        errs = [float("nan")] * len(mats)
    return [_result(kind, t, s, m, e) for s, m, e in zip(sig, mats, errs)]


def obs_gramian(A: TvMatrix, C: TvMatrix, t: float, sigma: float,
                cfg: IntegratorConfig = DEFAULT_CONFIG) -> GramianResult:
    """Observability Gramian ``M(t, t+sigma)``."""
    return gramian_series(A, C, t, [sigma], "M", cfg)[0]


def ctrl_gramian(A: TvMatrix, B: TvMatrix, t: float, sigma: float,
                 cfg: IntegratorConfig = DEFAULT_CONFIG) -> GramianResult:
    """Controllability Gramian ``W(t, t+sigma)``."""
    return gramian_series(A, B, t, [sigma], "W", cfg)[0]


def transported_gramian(A: TvMatrix, B: TvMatrix, t: float, sigma: float,
                        cfg: IntegratorConfig = DEFAULT_CONFIG) -> GramianResult:
    """``K(t, t+sigma) = Phi(t+sigma, t) W(t, t+sigma) Phi(t+sigma, t)^T``."""
    return gramian_series(A, B, t, [sigma], "K", cfg)[0]


def gramian(A: TvMatrix, X: TvMatrix, t: float, sigma: float, kind: str,
            cfg: IntegratorConfig = DEFAULT_CONFIG) -> GramianResult:
    return gramian_series(A, X, t, [sigma], kind, cfg)[0]


def simpson_gramian(A: TvMatrix, X: TvMatrix, t: float, sigma: float, kind: str = "M",
                    n_samples: int = 2049, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Composite Simpson quadrature of the Gramian integrand.

    Samples ``Phi(s, t)`` from a plain transition solve and inverts it where
    ``Phi(t, s)`` is needed, so it shares no code path with the augmented ODE.
    """
    _check(A, X, kind)
    if n_samples < 3 or n_samples % 2 == 0:
        raise ValueError("Simpson needs an odd number of samples >= 3")
    s = np.linspace(t, t + sigma, n_samples)
    phis = Transition(A, cfg).many(s, t)
    n = A.rows
    vals = np.empty((n_samples, n, n))
    for k, (sk, phi) in enumerate(zip(s, phis)):
        if kind == "M":
            cphi = X(sk) @ phi
            vals[k] = cphi.T @ cphi
        else:
            back = np.linalg.solve(phi, X(sk))
            vals[k] = back @ back.T
    out = simpson(vals, x=s, axis=0)
    if kind == "K":
        end = phis[-1]
        out = end @ out @ end.T
    return symmetrize(out)
