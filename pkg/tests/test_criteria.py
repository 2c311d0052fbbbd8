import numpy as np
import pytest

from nuco.criteria import lti_obs_rank, ltv_L_rank, observable_at
from nuco.tvmat import TvMatrix


def m(rows):
    return TvMatrix.from_rows(rows)


def test_kalman_rank():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert lti_obs_rank(A, np.array([[1.0, 0.0]])).observable
    rep = lti_obs_rank(A, np.array([[0.0, 1.0]]))
    assert not rep.observable and rep.rank == 1


def test_kalman_rank_diagonal_repeated_mode():
    A = np.diag([-1.0, -1.0])
    assert not lti_obs_rank(A, np.array([[1.0, 1.0]])).observable


def test_ltv_rank_detects_time_varying_output():
    # x' = 0, y = [1, t] x: C alone has rank one but dC/dt adds the missing row
    rep = ltv_L_rank(TvMatrix.zeros(2, 2), m([["1", "t"]]), t_a=0.3)
    assert rep.observable and rep.rank == 2


def test_ltv_rank_blind_direction():
    rep = ltv_L_rank(m([["-1", "0"], ["0", "-2"]]), m([["exp(-t)", "0"]]), t_a=1.0)
    assert not rep.observable


def test_ltv_rank_matches_kalman_for_constant_plant():
    A = m([["0", "1"], ["-2", "-3"]])
    C = m([["1", "0"]])
    assert ltv_L_rank(A, C).rank == lti_obs_rank(A(0.0), C(0.0)).rank == 2


def test_gramian_test():
    A = m([["0", "1"], ["-1", "0"]])
    assert observable_at(A, m([["1", "0"]]), 0.0, 2.0)
    assert not observable_at(TvMatrix.zeros(2, 2), m([["1", "0"]]), 0.0, 2.0)
    with pytest.raises(ValueError):
        observable_at(A, m([["1", "0"]]), 1.0, 1.0)
