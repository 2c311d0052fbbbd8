import math

import numpy as np
import pytest

from nuco.errors import DimensionMismatch
from nuco.gramian import ctrl_gramian, gramian_series, obs_gramian, simpson_gramian, transported_gramian
from nuco.flow import transition
from nuco.tvmat import TvMatrix

HALF = (1 - math.exp(-2)) / 2


def m(rows):
    return TvMatrix.from_rows(rows)


@pytest.mark.parametrize("A, X, t, sigma, want", [
    ([["0"]], [["1"]], 0.0, 2.0, [[2.0]]),
    ([["-1"]], [["1"]], 5.0, 1.0, [[HALF]]),
    ([["0"]], [["exp(-t)"]], 0.0, 1.0, [[HALF]]),
])
def test_obs_closed_forms(A, X, t, sigma, want):
    np.testing.assert_allclose(obs_gramian(m(A), m(X), t, sigma).matrix, want, rtol=1e-6)


@pytest.mark.parametrize("A, X, t, sigma, want", [
    ([["0"]], [["1"]], 0.0, 3.0, [[3.0]]),
    ([["1"]], [["1"]], 0.0, 1.0, [[HALF]]),
    ([["0", "1"], ["0", "0"]], [["0"], ["1"]], 0.0, 1.0, [[1 / 3, -1 / 2], [-1 / 2, 1]]),
])
def test_ctrl_closed_forms(A, X, t, sigma, want):
    np.testing.assert_allclose(ctrl_gramian(m(A), m(X), t, sigma).matrix, want, rtol=1e-6)


@pytest.mark.parametrize("A, want", [
    ([["1"]], (math.exp(2) - 1) / 2),
    ([["-1"]], HALF),
])
def test_transported_closed_forms(A, want):
    assert transported_gramian(m(A), m([["1"]]), 0.0, 1.0).matrix[0, 0] == pytest.approx(want, rel=1e-6)


def test_transport_is_identity_for_zero_plant():
    B = m([["1", "t"], ["sin(t)", "0"]])
    A = TvMatrix.zeros(2, 2)
    np.testing.assert_allclose(transported_gramian(A, B, 0.5, 2.0).matrix, ctrl_gramian(A, B, 0.5, 2.0).matrix,
                               rtol=1e-9)


A2 = m([["-0.3", "1"], ["-1", "0.1*sin(t)"]])
C2 = m([["1", "0.5*cos(t)"]])


def test_symmetric_psd():
    for kind, X in (("M", C2), ("W", C2.transpose()), ("K", C2.transpose())):
        g = gramian_series(A2, X, 1.0, [0.5, 2.0, 4.0], kind)
        for r in g:
            np.testing.assert_array_equal(r.matrix, r.matrix.T)
            assert r.psd
            assert r.lambda_min <= r.lambda_max


def test_additivity():
    t, s1, s2 = 0.5, 1.2, 2.3
    whole = obs_gramian(A2, C2, t, s1 + s2).matrix
    phi = transition(A2, t + s1, t)
    parts = obs_gramian(A2, C2, t, s1).matrix + phi.T @ obs_gramian(A2, C2, t + s1, s2).matrix @ phi
    np.testing.assert_allclose(parts, whole, rtol=1e-6)


def test_monotone_in_sigma():
    g = gramian_series(A2, C2, 0.0, np.linspace(0.25, 5.0, 12), "M")
    for lo, hi in zip(g, g[1:]):
        assert np.linalg.eigvalsh(hi.matrix - lo.matrix).min() >= -1e-8


@pytest.mark.parametrize("kind", ["M", "W", "K"])
def test_simpson_cross_check(kind):
    X = C2 if kind == "M" else C2.transpose()
    ode = gramian_series(A2, X, 1.0, [3.0], kind)[0].matrix
    simp = simpson_gramian(A2, X, 1.0, 3.0, kind)
    assert np.linalg.norm(ode - simp) <= 1e-6 * np.linalg.norm(simp)


def test_error_estimate_reported():
    g = obs_gramian(A2, C2, 0.0, 2.0)
    assert 0 <= g.quad_error_estimate < 1e-5


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        obs_gramian(A2, m([["1"]]), 0.0, 1.0)
    with pytest.raises(DimensionMismatch):
        ctrl_gramian(A2, m([["1", "1"]]), 0.0, 1.0)
    with pytest.raises(ValueError):
        obs_gramian(A2, C2, 0.0, 0.0)
