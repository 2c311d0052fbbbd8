import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nuco.errors import DimensionMismatch, EvalError, ExprSyntaxError, UnknownIdentifier
from nuco.tvmat import (BinOp, Call, Neg, Num, TimeGrid, TvMatrix, Var, compile_expr, evaluate, load_matrix,
                        load_system, parse_expr, system_from_config, to_text)


@pytest.mark.parametrize("src, t, want", [
    ("1 + 2 * 3", 0.0, 7.0),
    ("2 ^ 3 ^ 2", 0.0, 512.0),
    ("-t ^ 2", 3.0, -9.0),
    ("(1 - t) / 4", 5.0, -1.0),
    ("exp(-t) * sin(t) + cos(0)", 1.0, math.exp(-1) * math.sin(1) + 1),
    ("ln(abs(t))", -math.e, 1.0),
    ("1.5e-1 * t", 2.0, 0.3),
])
def test_evaluate(src, t, want):
    assert evaluate(parse_expr(src), t) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("src", ["", "2 *", "(t", "t)", "sin t", "1..2", "3 $ 4"])
def test_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        parse_expr(src)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("t + * 2")
    assert info.value.offset == 4


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        parse_expr("tan(t)")
    with pytest.raises(UnknownIdentifier):
        parse_expr("x + 1")


@pytest.mark.parametrize("src, t", [("ln(t)", 0.0), ("1 / t", 0.0), ("exp(t)", 1000.0)])
def test_eval_errors(src, t):
    with pytest.raises(EvalError):
        compile_expr(parse_expr(src))(t)


def test_print_parse_round_trip_simple():
    for src in ["-(2 * t)^2", "t - (1 - t)", "2^(-t)", "exp(sin(t)) / (1 + t^2)", "-0"]:
        e = parse_expr(src)
        assert parse_expr(to_text(e)) == e


_leaf = st.one_of(st.just(Var()), st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda x: BinOp(*x)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "ln", "abs"]), children).map(lambda x: Call(*x)),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _extend, max_leaves=12))
def test_print_parse_round_trip(e):
    assert parse_expr(to_text(e)) == e


def test_matrix_ops():
    A = TvMatrix.from_rows([["t", "1"], ["0", "-exp(t)"]])
    assert A.shape == (2, 2)
    np.testing.assert_allclose(A(1.0), [[1, 1], [0, -math.e]])
    np.testing.assert_allclose(A.transpose()(1.0), A(1.0).T)
    np.testing.assert_allclose(A.negate()(2.0), -A(2.0))
    assert A.negate().negate() == A
    assert not A.is_constant()
    assert TvMatrix.constant([[1.0, 2.0]]).is_constant()
    assert TvMatrix.from_rows(A.to_rows()) == A


def test_ragged_rows():
    with pytest.raises(DimensionMismatch):
        TvMatrix.from_rows([["1", "2"], ["3"]])


def test_time_grid():
    g = TimeGrid.parse("0:2:5")
    np.testing.assert_allclose(g.points, [0, 0.5, 1, 1.5, 2])
    assert g.step == 0.5 and len(g) == 5
    assert TimeGrid.parse(str(g)) == g
    for bad in ["1:0:3", "0:1", "0:1:0", "a:b:c"]:
        with pytest.raises(ValueError):
            TimeGrid.parse(bad)


def test_system_config(tmp_path):
    cfg = {"n": 2, "p": 1, "m": 1, "A": [["0", "1"], ["-1", "0"]], "B": [["0"], ["1"]], "C": [["1", "0"]]}
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(cfg))
    s = load_system(path)
    assert s.A.shape == (2, 2) and s.B.shape == (2, 1) and s.C.shape == (1, 2)
    assert system_from_config(s.to_config()).A == s.A
    with pytest.raises(DimensionMismatch):
        system_from_config({**cfg, "n": 3})
    with pytest.raises(DimensionMismatch):
        system_from_config({**cfg, "C": [["1", "0", "0"]]})


def test_load_matrix(tmp_path):
    path = tmp_path / "gain.json"
    path.write_text(json.dumps({"L": [["0.5", "t"]]}))
    key, L = load_matrix(path)
    assert key == "L" and L.shape == (1, 2)
    with pytest.raises(KeyError):
        load_matrix(path, "F")
