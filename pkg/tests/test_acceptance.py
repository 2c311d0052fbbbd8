"""Acceptance criteria, one test per criterion; the conftest prints a pass/fail line for each."""

import io
import itertools
import math
import time

import numpy as np
import pytest

from nuco.cli import run
from nuco.dual import check_gramian_identity
from nuco.flow import Transition
from nuco.gramian import ctrl_gramian, gramian, obs_gramian, simpson_gramian, transported_gramian
from nuco.nucert import CERTIFIED, certify_nuco, check_two_imply_third, fit_growth_envelope
from nuco.scenarios import library, run_scenario
from nuco.tvmat import TimeGrid, TvMatrix

HALF = (1 - math.exp(-2)) / 2


def m(rows):
    return TvMatrix.from_rows(rows)


@pytest.fixture(scope="module")
def lib():
    return library()


def test_ac1_transition_oracle():
    """transition matrices match closed forms for a(t) in {0, -1, t}; cocycle holds"""
    start = time.perf_counter()
    closed = {
        "0": lambda t, tau: 1.0,
        "-1": lambda t, tau: math.exp(-(t - tau)),
        "t": lambda t, tau: math.exp((t * t - tau * tau) / 2),
    }
    pairs = np.random.default_rng(2024).uniform(0.0, 10.0, size=(50, 2))
    worst = 0.0
    for src, exact in closed.items():
        tr = Transition(m([[src]]))
        for t, tau in pairs:
            ref = exact(t, tau)
            # relative: Phi for a(t) = t spans e^{+-50} on [0, 10]
            worst = max(worst, abs(tr(t, tau)[0, 0] - ref) / max(1.0, abs(ref)))
        grid = np.linspace(0.0, 10.0, 5)
        for r, s, t in itertools.product(grid, repeat=3):
            ref = tr(t, r)
            res = np.abs(tr(t, s) @ tr(s, r) - ref).max() / (1 + np.abs(ref).max())
            assert res <= 1e-6, (src, r, s, t, res)
    assert worst <= 1e-7, worst
    assert time.perf_counter() - start < 5.0


def test_ac2_gramian_oracles(lib):
    """Gramians match hand-integrated closed forms and Simpson-2049 on every scenario"""
    start = time.perf_counter()
    cases = [
        (obs_gramian, [["0"]], [["1"]], 0.0, 2.0, [[2.0]]),
        (obs_gramian, [["-1"]], [["1"]], 5.0, 1.0, [[HALF]]),
        (obs_gramian, [["0"]], [["exp(-t)"]], 0.0, 1.0, [[HALF]]),
        (ctrl_gramian, [["0"]], [["1"]], 0.0, 3.0, [[3.0]]),
        (ctrl_gramian, [["1"]], [["1"]], 0.0, 1.0, [[HALF]]),
        (ctrl_gramian, [["0", "1"], ["0", "0"]], [["0"], ["1"]], 0.0, 1.0, [[1 / 3, -1 / 2], [-1 / 2, 1]]),
        (transported_gramian, [["1"]], [["1"]], 0.0, 1.0, [[(math.e ** 2 - 1) / 2]]),
        (transported_gramian, [["-1"]], [["1"]], 0.0, 1.0, [[HALF]]),
    ]
    for fn, A, X, t, sigma, want in cases:
        got = fn(m(A), m(X), t, sigma).matrix
        np.testing.assert_allclose(got, want, rtol=1e-6, err_msg=f"{fn.__name__} A={A}")

    for sc in lib.values():
        t = sc.t_grid.t_start + 0.5 * (sc.t_grid.t_end - sc.t_grid.t_start)
        sigma = sc.sigma_grid.points[len(sc.sigma_grid) // 2]
        pairs = [("M", sc.system.C)] if sc.system.C is not None else []
        if sc.system.B is not None:
            pairs += [("W", sc.system.B), ("K", sc.system.B)]
        for kind, X in pairs:
            ode = gramian(sc.system.A, X, t, sigma, kind, sc.cfg).matrix
            simp = simpson_gramian(sc.system.A, X, t, sigma, kind, 2049, sc.cfg)
            # an unobservable output map gives M = 0 exactly; compare against the floor then
            rel = np.linalg.norm(ode - simp) / max(np.linalg.norm(simp), np.finfo(float).tiny)
            assert rel <= 1e-6, (sc.name, kind, rel)
    assert time.perf_counter() - start < 20.0


def test_ac3_duality_identity(lib):
    """M of (A, C) equals W of (-A^T, C^T) on a 21x16 grid for four scenario plants"""
    start = time.perf_counter()
    names = ["nonnormal", "stable", "unstable", "double_integrator"]
    for name in names:
        sc = lib[name]
        assert (len(sc.t_grid), len(sc.sigma_grid)) == (21, 16)
        rep = check_gramian_identity(sc.system.A, sc.system.C, sc.t_grid, sc.sigma_grid, sc.cfg)
        assert rep["passed"], (name, rep["max_relative_deviation"], rep["at"])
        assert rep["max_relative_deviation"] <= 1e-6
    assert lib["nonnormal"].system.A.rows == 2
    assert time.perf_counter() - start < 60.0


def test_ac4_uco_reduction():
    """A = -1, C = 1 certifies with zero rates, the UCO flag and theta0 = (1 - e^(-2 sigma)) / 2"""
    t_grid, sigma_grid = TimeGrid(0.0, 20.0, 21), TimeGrid(0.25, 8.0, 16)
    cert = certify_nuco(m([["-1"]]), m([["1"]]), t_grid, sigma_grid)
    assert cert.verdict == CERTIFIED and cert.uco
    assert abs(cert.nu0) <= 1e-3 and abs(cert.nu1) <= 1e-3
    np.testing.assert_allclose(cert.theta0, (1 - np.exp(-2 * sigma_grid.points)) / 2, rtol=0, atol=1e-6)


def test_ac5_section_bounds(lib):
    """explicit output-squeeze estimates bound lambda_min and lambda_max at every grid point"""
    start = time.perf_counter()
    for name in ("squeeze", "squeeze_flat", "squeeze_diag"):
        report, _ = run_scenario(lib[name], runs=("certify",))
        pb = report["runs"]["certify"]["explicit_bounds"]
        assert pb["violations"] == 0, (name, pb["violation_points"][:5])
        assert pb["max_lower_ratio"] <= 1 + 1e-8 and pb["max_upper_ratio"] <= 1 + 1e-8
        assert report["runs"]["certify"]["nuco"]["verdict"] == CERTIFIED
    assert time.perf_counter() - start < 60.0


def test_ac6_closed_loop_growth(lib):
    """closed-loop transition norms stay under the Gronwall growth bound (A = 0, K = e^(0.1t), C = e^(-t))"""
    sc = lib["fb_growth"]
    env = fit_growth_envelope(sc.system.A, TimeGrid(0.0, 12.0, 25))
    assert env.K0 == pytest.approx(1.0) and env.eps == 0.0 and env.a <= 1e-5
    report, _ = run_scenario(sc, runs=("growth",))
    g = report["runs"]["growth"]
    print(f"closed-loop growth: max observed/bound ratio {g['max_ratio']:.6g}")
    assert g["passed"] and g["max_ratio"] <= 1.0
    assert g["gronwall_factor"] == pytest.approx(math.exp(1 / 0.9), rel=1e-5)


def test_ac7_feedback_containment(lib):
    """closed-loop Gramian eigenvalues lie within the explicit bounds; verdicts agree both ways"""
    start = time.perf_counter()
    cases = set()
    for name in ("fb_growth", "fb_phi_greater", "fb_phi_less", "fb_rot2"):
        report, _ = run_scenario(lib[name], runs=("feedback",))
        fb = report["runs"]["feedback"]
        assert "error" not in fb, (name, fb)
        assert fb["contained"], (name, fb["violations"][:5])
        assert fb["equivalent"] and fb["closed_verdict"] == CERTIFIED, name
        assert fb["reverse"]["equivalent"], name
        if "skipped" not in fb["reverse"]:
            assert fb["reverse"]["contained"], name
        cases.add(fb["case"])
    assert {"PhiGreater", "PhiLess"} <= cases
    assert time.perf_counter() - start < 180.0


def test_ac8_input_feedback_paths(lib):
    """dual-path and direct controllability verdicts agree under input feedback, including L = 0"""
    for name in ("in_gain", "in_small_gain", "in_rot2", "in_zero"):
        report, _ = run_scenario(lib[name], runs=("feedback",))
        fb = report["runs"]["feedback"]
        assert "error" not in fb, (name, fb)
        assert fb["agree"], (name, fb["dual_path_verdict"], fb["direct_verdict"])


def test_ac9_two_imply_third(lib):
    """whenever two of W-bounds, K-bounds and the Kalman property hold, so does the third"""
    tested = 0
    for sc in lib.values():
        if sc.system.B is None:
            continue
        rep = check_two_imply_third(sc.system.A, sc.system.B, sc.t_grid, sc.sigma_grid, sc.cfg)
        assert rep["findings"] == [], (sc.name, rep["findings"], rep["detail"])
        tested += bool(rep["implications"])
    assert tested >= 3


def test_ac10_determinism():
    """two full scenario runs produce byte-identical reports"""
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        assert run(["scenario", "--all", "--seed", "7"], stdout=buf) == 0
        outs.append(buf.getvalue().encode())
    assert outs[0] == outs[1]
