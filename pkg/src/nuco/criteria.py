"""Classical observability tests: Kalman rank, the L(t) stack, Gramian positivity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EvalError, NonFiniteDerivative
from .flow import DEFAULT_CONFIG, IntegratorConfig
from .gramian import GramianResult, obs_gramian
from .tvmat import TvMatrix

RANK_TOL = 1e-8
PD_TOL = 1e-10
FD_STEP = 1e-5


@dataclass
class RankReport:
    tested_at: float | None
    matrix_rows: int
    rank: int
    singular_values: list[float]
    observable: bool
    n: int = 0
    stack: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "tested_at": self.tested_at,
            "matrix_rows": self.matrix_rows,
            "rank": self.rank,
            "n": self.n,
            "singular_values": self.singular_values,
            "observable": self.observable,
        }


def numerical_rank(mat: np.ndarray, rank_tol: float = RANK_TOL) -> tuple[int, np.ndarray]:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > rank_tol * sv[0])), sv


def _report(stack, n, tested_at, rank_tol) -> RankReport:
    rank, sv = numerical_rank(stack, rank_tol)
    return RankReport(tested_at, stack.shape[0], rank, [float(x) for x in sv], rank == n, n, stack)


def lti_obs_rank(A, C, rank_tol: float = RANK_TOL) -> RankReport:
    """Rank of the stack ``[C; CA; ...; CA^(n-1)]`` for constant ``A``, ``C``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C must have {n} columns, got {C.shape}")
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return _report(np.vstack(blocks), n, None, rank_tol)


def _derivative(f, t: float, h: float) -> np.ndarray:
    # central difference with one Richardson level: O(h^4)
    d1 = (f(t + h) - f(t - h)) / (2 * h)
    d2 = (f(t + h / 2) - f(t - h / 2)) / h
    return (4 * d2 - d1) / 3


def ltv_L_rank(A: TvMatrix, C: TvMatrix, q: int | None = None, t_a: float = 0.0,
               fd_step: float = FD_STEP, rank_tol: float = RANK_TOL) -> RankReport:
    """Rank of ``L(t_a) = [L_0; ...; L_q]`` with ``L_0 = C``, ``L_i = L_{i-1} A + dL_{i-1}/dt``.

    Rank ``n`` is sufficient (not necessary) for observability on any
    interval containing ``t_a``.  ``q`` defaults to ``n - 1``.

    Derivatives are central differences with one Richardson extrapolation.
    ``fd_step`` is the step for a single derivative; a chain of ``q`` nested
    derivatives uses ``fd_step ** (1/q)`` at every level so that rounding
    noise stays near ``eps / fd_step`` instead of ``eps / fd_step ** q``.
    """
    n = A.rows
    if A.cols != n:
        raise DimensionMismatch(f"A must be square, got {A.rows}x{A.cols}")
    if C.cols != n:
        raise DimensionMismatch(f"C must have {n} columns, got {C.cols}")
    if q is None:
        q = n - 1
    if q < 0:
        raise ValueError("q must be >= 0")
    h = fd_step if q <= 1 else fd_step ** (1.0 / q)
    memo: dict[tuple[int, float], np.ndarray] = {}

    def L(i: int, t: float) -> np.ndarray:
        key = (i, t)
        if key not in memo:
            if i == 0:
                memo[key] = C(t)
            else:
                memo[key] = L(i - 1, t) @ A(t) + _derivative(lambda s: L(i - 1, s), t, h)
        return memo[key]

    try:
        blocks = [L(i, float(t_a)) for i in range(q + 1)]
    except EvalError as exc:
        raise EvalError(f"{exc.cause} while evaluating L(t) near t_a={t_a!r}", exc.index, exc.t) from None
    stack = np.vstack(blocks)
    if not np.all(np.isfinite(stack)):
        raise NonFiniteDerivative(f"non-finite entries in L(t) at t_a={t_a!r}")
    return _report(stack, n, float(t_a), rank_tol)


@dataclass
class ObservableAt:
    observable: bool
    witness: GramianResult

    def __bool__(self) -> bool:
        return self.observable

    def to_json(self) -> dict:
        return {"observable": self.observable, "witness": self.witness.to_json()}


def is_positive_definite(g: GramianResult, pd_tol: float = PD_TOL) -> bool:
    return g.lambda_min > pd_tol * (1.0 + g.lambda_max)


def observable_at(A: TvMatrix, C: TvMatrix, t0: float, tf: float,
                  cfg: IntegratorConfig = DEFAULT_CONFIG, pd_tol: float = PD_TOL) -> ObservableAt:
    """Whether ``M(t0, tf)`` is positive definite; the Gramian is the witness."""
    if not tf > t0:
        raise ValueError(f"need tf > t0, got t0={t0}, tf={tf}")
    g = obs_gramian(A, C, t0, tf - t0, cfg)
    return ObservableAt(is_positive_definite(g, pd_tol), g)
