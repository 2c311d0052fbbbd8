import math

import numpy as np
import pytest

from nuco.errors import HypothesisUnmet
from nuco.feedback import (COND_BETA, COND_GAMMA, FeedbackGains, PHI_GREATER, PHI_LESS, close_loop,
                           closed_growth_bound, fit_feedback_gains, mat_mul, phi_case, unit_directions,
                           verify_closed_growth, verify_input_feedback, verify_preservation)
from nuco.flow import transition
from nuco.nucert import GrowthEnvelope
from nuco.tvmat import TimeGrid, TvMatrix, to_text

T = TimeGrid(0.0, 8.0, 9)
S = TimeGrid(0.5, 4.0, 8)


def m(rows):
    return TvMatrix.from_rows(rows)


def test_close_loop_expression():
    A, K, C = m([["0", "1"], ["-1", "0"]]), m([["0"], ["2"]]), m([["1", "0"]])
    closed = close_loop(A, K, C)
    np.testing.assert_allclose(closed(1.0), A(1.0) - K(1.0) @ C(1.0))
    assert to_text(closed.entry(0, 0)) == "0"


def test_mat_mul_skips_zero_literals():
    P = mat_mul(m([["0", "t"]]), m([["sin(t)"], ["2"]]))
    assert to_text(P.entry(0, 0)) == "t * 2"


def test_closed_loop_scalar_oracle():
    # A = 0, K = e^{0.1 t}, C = e^{-t}: Phi(t2, t1) = exp((e^{-0.9 t2} - e^{-0.9 t1}) / 0.9)
    closed = close_loop(m([["0"]]), m([["exp(0.1*t)"]]), m([["exp(-t)"]]))
    for t2, t1 in [(1.0, 0.0), (5.0, 2.0), (8.0, 0.0)]:
        want = math.exp((math.exp(-0.9 * t2) - math.exp(-0.9 * t1)) / 0.9)
        assert transition(closed, t2, t1)[0, 0] == pytest.approx(want, rel=1e-8)


def test_gain_fit_and_growth_bound():
    K, C = m([["exp(0.1*t)"]]), m([["exp(-t)"]])
    env = GrowthEnvelope(1.0, 1e-6, 0.0, 0.0)
    gains = fit_feedback_gains(K, C, T, env)
    assert gains.delta == pytest.approx(0.1, rel=1e-6) and gains.gamma == pytest.approx(1.0, rel=1e-6)
    assert gains.script_K == pytest.approx(1.0, rel=1e-6) and gains.script_C == pytest.approx(1.0, rel=1e-6)
    rep = verify_closed_growth(m([["0"]]), K, C, gains, env, T)
    assert rep["passed"] and rep["max_ratio"] <= 1.0
    assert rep["gronwall_factor"] == pytest.approx(math.exp(1 / 0.9), rel=1e-5)
    assert closed_growth_bound(env, gains, 2.0, 2.0) == pytest.approx(math.exp(1 / 0.9), rel=1e-5)


def test_growth_hypothesis_guard():
    env = GrowthEnvelope(1.0, 0.5, 0.0, 0.0)
    gains = FeedbackGains(m([["exp(t)"]]), 1.0, 1.0, 1.0, 0.5)
    with pytest.raises(HypothesisUnmet) as info:
        verify_closed_growth(m([["0"]]), m([["exp(t)"]]), m([["exp(-0.5*t)"]]), gains, env, T)
    assert info.value.condition == COND_GAMMA


def test_unit_directions_seeded():
    U = unit_directions(3, seed=4, n_random=5)
    assert U.shape == (3, 8)
    np.testing.assert_allclose(np.linalg.norm(U, axis=0), 1.0)
    np.testing.assert_array_equal(U, unit_directions(3, seed=4, n_random=5))


def test_phi_case():
    assert phi_case(12.5) == PHI_GREATER and phi_case(0.6) == PHI_LESS


@pytest.mark.parametrize("scale, case", [("1", PHI_GREATER), ("0.05", PHI_LESS)])
def test_output_feedback_containment(scale, case):
    A, B, F, C = m([["0"]]), m([["1"]]), m([[f"{scale}*exp(0.1*t)"]]), m([["exp(-0.3*t)"]])
    check = verify_preservation(A, B, F, C, T, S)
    assert check.case == case
    assert check.contained, check.violations[:3]
    assert check.equivalent
    assert check.reverse["equivalent"]


def test_input_feedback_paths_agree():
    rep = verify_input_feedback(m([["0"]]), m([["exp(-t)"]]), m([["exp(0.1*t)"]]), T, S)
    assert rep["agree"]
    assert rep["dual_check"]["contained"]
    closed = TvMatrix.from_rows(rep["closed_loop"])
    assert closed(2.0)[0, 0] == pytest.approx(-math.exp(-1.8))


def test_input_feedback_beta_guard():
    with pytest.raises(HypothesisUnmet) as info:
        verify_input_feedback(m([["0"]]), m([["1"]]), m([["exp(0.5*t)"]]), T, S)
    assert info.value.condition == COND_BETA
