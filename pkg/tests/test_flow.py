import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad

from nuco.errors import IntegrationFailure
from nuco.flow import IntegratorConfig, Transition, transition, transition_dual
from nuco.tvmat import TvMatrix


def m(rows):
    return TvMatrix.from_rows(rows)


@pytest.mark.parametrize("rows, t, tau, want", [
    ([["0"]], 3.0, -2.0, [[1.0]]),
    ([["-1"]], 1.0, 0.0, [[math.exp(-1)]]),
    ([["t"]], 1.0, 0.0, [[math.exp(0.5)]]),
    ([["0", "1"], ["0", "0"]], 0.0, 1.0, [[1, -1], [0, 1]]),
    ([["0", "1"], ["-1", "0"]], math.pi / 2, 0.0, [[0, 1], [-1, 0]]),
])
def test_known_transitions(rows, t, tau, want):
    np.testing.assert_allclose(transition(m(rows), t, tau), want, rtol=1e-8, atol=1e-9)


@pytest.mark.parametrize("rows, t, tau, want", [
    ([["0"]], 1.0, 0.0, [[1.0]]),
    ([["-1"]], 0.0, 1.0, [[math.exp(-1)]]),
    ([["0", "1"], ["0", "0"]], 1.0, 0.0, [[1, 0], [-1, 1]]),
])
def test_known_dual_transitions(rows, t, tau, want):
    np.testing.assert_allclose(transition_dual(m(rows), t, tau), want, rtol=1e-8, atol=1e-9)


PLANTS = [
    [["sin(t)"]],
    [["-1", "t"], ["0", "cos(t)"]],
    [["0", "1"], ["-1 - 0.5*sin(t)", "-0.1"]],
]


@pytest.mark.parametrize("rows", PLANTS)
def test_cocycle_and_inverse(rows):
    A = m(rows)
    grid = np.linspace(0.0, 4.0, 5)
    tr = Transition(A)
    for r, s, t in itertools.product(grid, repeat=3):
        lhs = tr(t, s) @ tr(s, r)
        ref = tr(t, r)
        assert np.max(np.abs(lhs - ref)) <= 1e-6 * (1 + np.abs(ref).sum(axis=1).max())
    phi = tr(3.0, 1.0)
    np.testing.assert_allclose(phi @ tr(1.0, 3.0), np.eye(A.rows), atol=1e-8)


@pytest.mark.parametrize("rows", PLANTS)
def test_dual_is_transposed_inverse(rows):
    A = m(rows)
    for t, tau in [(0.0, 2.0), (3.5, 0.5), (1.0, 1.0)]:
        back = transition(A, tau, t)
        dev = np.abs(transition_dual(A, t, tau) - back.T).sum(axis=1).max()
        assert dev <= 1e-6 * (1 + np.abs(back).sum(axis=1).max())


def test_scalar_quadrature_oracle():
    a = TvMatrix.from_rows([["sin(t) + 0.2*t"]])
    for t, tau in [(0.0, 5.0), (7.0, 1.0), (2.0, 2.5)]:
        integral, _ = quad(lambda s: math.sin(s) + 0.2 * s, tau, t, epsabs=1e-13, epsrel=1e-13)
        assert transition(a, t, tau)[0, 0] == pytest.approx(math.exp(integral), rel=1e-7)


def test_rk4_agrees_with_rk45():
    A = m(PLANTS[2])
    cfg = IntegratorConfig(method="rk4", rk4_step=1e-3)
    np.testing.assert_allclose(transition(A, 5.0, 0.0, cfg), transition(A, 5.0, 0.0), atol=1e-9)


def test_many_matches_single_calls():
    tr = Transition(m(PLANTS[1]))
    ts = np.linspace(-1.0, 3.0, 7)
    stack = tr.many(ts, 0.5)
    for t, phi in zip(ts, stack):
        np.testing.assert_allclose(phi, transition(m(PLANTS[1]), t, 0.5), rtol=1e-7, atol=1e-9)


def test_blow_up_raises():
    with pytest.raises(IntegrationFailure) as info:
        transition(m([["exp(t)"]]), 10.0, 0.0)
    assert info.value.time > 0


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
