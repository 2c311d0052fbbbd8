"""Transition matrices of ``x' = A(t) x``.

``Phi(t, tau)`` is the value at ``t`` of the matrix solution of
``M'(s) = A(s) M(s)``, ``M(tau) = I``.  Requests with ``t < tau`` integrate
backwards in time instead of inverting a forward solution.

The adaptive path integrates ``M = exp(rho) Y`` with ``Y`` held at constant
Frobenius norm, so the error tolerances act relative to ``||Phi||`` even when
``Phi`` grows or decays by many orders of magnitude.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DimensionMismatch, IntegrationFailure
from .tvmat import TvMatrix

METHODS = ("rk45", "rk4")


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``method`` is ``"rk45"`` (adaptive Dormand-Prince 5(4) with dense output)
    or ``"rk4"`` (classical fixed-step Runge-Kutta with step ``rk4_step``).
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    method: str = "rk45"
    max_step: float = np.inf
    rk4_step: float = 1e-3

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.max_step > 0 or not self.rk4_step > 0:
            raise ValueError("step sizes must be positive")

    def loosened(self, factor: float) -> "IntegratorConfig":
        return IntegratorConfig(self.rel_tol * factor, self.abs_tol * factor, self.method,
                                self.max_step, self.rk4_step * factor ** 0.25)


DEFAULT_CONFIG = IntegratorConfig()


def solve_linear(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray,
                 t0: float, t1: float, cfg: IntegratorConfig, t_eval=None, dense: bool = False):
    """Integrate ``y' = rhs(s, y)`` from ``t0`` to ``t1``.

    Returns ``(ts, ys, sol)`` where ``ys[:, k]`` is the state at ``ts[k]``
    (the ``t_eval`` points, or the end point only) and ``sol`` is a dense
    interpolant when ``dense`` is requested with the adaptive method.
    """
    if t0 == t1:
        ts = np.array([t1]) if t_eval is None else np.asarray(t_eval, dtype=float)
        return ts, np.repeat(y0[:, None], len(ts), axis=1), None
    if cfg.method == "rk4":
        return _solve_rk4(rhs, y0, t0, t1, cfg.rk4_step, t_eval)
    res = solve_ivp(rhs, (t0, t1), y0, method="RK45", rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, t_eval=t_eval, dense_output=dense)
    if res.status != 0:
        raise IntegrationFailure(res.message, float(res.t[-1]) if len(res.t) else t0)
    if not np.all(np.isfinite(res.y)):
        bad = int(np.argmax(~np.all(np.isfinite(res.y), axis=0)))
        raise IntegrationFailure("non-finite state", float(res.t[bad]))
    if t_eval is None:
        return res.t[-1:], res.y[:, -1:], res.sol
    return res.t, res.y, res.sol


def _solve_rk4(rhs, y0, t0, t1, h, t_eval):
    targets = np.array([t1]) if t_eval is None else np.asarray(t_eval, dtype=float)
    direction = 1.0 if t1 > t0 else -1.0
    out = np.empty((len(y0), len(targets)))
    s, y = t0, np.array(y0, dtype=float)
    for k, target in enumerate(targets):
        while direction * (target - s) > 0:
            step = direction * min(h, abs(target - s))
            k1 = rhs(s, y)
            k2 = rhs(s + step / 2, y + step / 2 * k1)
            k3 = rhs(s + step / 2, y + step / 2 * k2)
            k4 = rhs(s + step, y + step * k3)
            y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s = target if abs(target - (s + step)) < 1e-14 * max(1.0, abs(target)) else s + step
            if not np.all(np.isfinite(y)):
                raise IntegrationFailure("non-finite state", s)
        out[:, k] = y
    return targets, out, None


class Transition:
    """Cached evaluator for ``Phi_A(t, tau)``.

    With ``adjoint=True`` it evaluates ``Psi(t, tau)``, the transition matrix
    of ``x' = -A(t)^T x``.

    One dense solution is kept per base point ``tau`` and direction; a
    request outside the solved span re-solves over the wider span.  Cache
    population is serialised by a lock, so instances may be shared between
    threads.
    """

    def __init__(self, plant: TvMatrix, cfg: IntegratorConfig = DEFAULT_CONFIG, adjoint: bool = False):
        if plant.rows != plant.cols:
            raise DimensionMismatch(f"plant must be square, got {plant.rows}x{plant.cols}")
        self.plant = plant
        self.cfg = cfg
        self.adjoint = adjoint
        self.n = plant.rows
        self._cache: dict[tuple[float, int], tuple[float, object]] = {}
        self._lock = threading.Lock()

    def generator(self, s: float) -> np.ndarray:
        a = self.plant(s)
        return -a.T if self.adjoint else a

    def _rhs(self, s, y):
        n = self.n
        return (self.generator(s) @ y.reshape(n, n)).ravel()

    def _scaled_rhs(self, s, y):
        # y = (Y, rho); rho' is the Frobenius growth rate of Y, removed from Y'
        n = self.n
        Y = y[:-1].reshape(n, n)
        GY = self.generator(s) @ Y
        rate = float(np.vdot(Y, GY) / np.vdot(Y, Y))
        out = np.empty_like(y)
        out[:-1] = (GY - rate * Y).ravel()
        out[-1] = rate
        return out

    def _unscale(self, y: np.ndarray, t: float) -> np.ndarray:
        with np.errstate(over="ignore"):
            phi = np.exp(y[-1]) * y[:-1].reshape(self.n, self.n)
        if not np.all(np.isfinite(phi)):
            raise IntegrationFailure("transition matrix overflows", t)
        return phi

    def _dense(self, tau: float, t: float):
        direction = 1 if t > tau else -1
        key = (tau, direction)
        hit = self._cache.get(key)
        if hit is not None and direction * (hit[0] - t) >= 0:
            return hit[1]
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and direction * (hit[0] - t) >= 0:
                return hit[1]
            y0 = np.append(np.eye(self.n).ravel(), 0.0)
            _, _, sol = solve_linear(self._scaled_rhs, y0, tau, t, self.cfg, dense=True)
            self._cache[key] = (t, sol)
            return sol

    def warm(self, tau: float, t_lo: float, t_hi: float) -> None:
        """Solve once around ``tau`` so later queries in ``[t_lo, t_hi]`` are cache hits."""
        tau = float(tau)
        if t_hi > tau:
            self._dense(tau, float(t_hi))
        if t_lo < tau:
            self._dense(tau, float(t_lo))

    def __call__(self, t: float, tau: float) -> np.ndarray:
        t, tau = float(t), float(tau)
        n = self.n
        if t == tau:
            return np.eye(n)
        if self.cfg.method == "rk4":
            _, ys, _ = solve_linear(self._rhs, np.eye(n).ravel(), tau, t, self.cfg)
            return ys[:, -1].reshape(n, n)
        return self._unscale(self._dense(tau, t)(t), t)

    def many(self, ts, tau: float) -> np.ndarray:
        """``Phi(t, tau)`` for every ``t`` in ``ts``; shape ``(len(ts), n, n)``."""
        ts = np.asarray(ts, dtype=float)
        tau = float(tau)
        out = np.empty((len(ts), self.n, self.n))
        if self.cfg.method == "rk4":
            for k, t in enumerate(ts):
                out[k] = self(t, tau)
            return out
        self.warm(tau, ts.min(initial=tau), ts.max(initial=tau))
        for k, t in enumerate(ts):
            out[k] = self(t, tau)
        return out


def transition(plant: TvMatrix, t: float, tau: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``Phi_A(t, tau)`` for a square ``plant``; ``t < tau`` is allowed."""
    return Transition(plant, cfg)(t, tau)


def transition_dual(plant: TvMatrix, t: float, tau: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``Psi(t, tau)`` of ``x' = -A^T(t) x``, integrated directly.

    Equals ``transition(plant, tau, t).T`` up to integration error.
    """
    return Transition(plant, cfg, adjoint=True)(t, tau)
