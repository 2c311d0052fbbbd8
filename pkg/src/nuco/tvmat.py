"""Closed-form time-varying matrices.

Entries are scalar expressions in the time variable ``t`` built from real
literals, ``+ - * / ^``, unary minus and the functions ``sin cos exp ln abs``.
``^`` binds tighter than unary minus and is right-associative, so ``-t^2`` is
``-(t^2)`` and ``2^3^2`` is ``2^(3^2)``.

>>> m = TvMatrix.from_rows([["exp(-t)", "0"], ["t^2/2", "1"]])
>>> m(3.0)[1, 0]
4.5
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, EvalError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "ln", "abs")


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "t"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]

T = Var()
ZERO = Num(0.0)


def negate(e: Expr) -> Expr:
    """Negate ``e``, collapsing a double negation."""
    if isinstance(e, Neg):
        return e.operand
    return Neg(e)


def is_zero_literal(e: Expr) -> bool:
    if isinstance(e, Num):
        return e.value == 0.0
    if isinstance(e, Neg):
        return is_zero_literal(e.operand)
    return False


def depends_on_t(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Num):
        return False
    if isinstance(e, Neg):
        return depends_on_t(e.operand)
    if isinstance(e, Call):
        return depends_on_t(e.arg)
    return depends_on_t(e.left) or depends_on_t(e.right)


# --------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


class _Parser:
    # expr  := term (('+'|'-') term)*
    # term  := unary (('*'|'/') unary)*
    # unary := ('-'|'+') unary | power
    # power := atom ('^' unary)?
    # atom  := number | 't' | func '(' expr ')' | '(' expr ')'

    def __init__(self, src: str):
        self.src = src
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(src):
            m = _TOKEN.match(src, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {src[pos]!r}", self._byte(pos), src)
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), pos))
            pos = m.end()
        self.tokens.append(("end", "", len(src)))
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.src[:pos].encode("utf-8"))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok: tuple[str, str, int]):
        raise ExprSyntaxError(message, self._byte(tok[2]), self.src)

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok[1] != text:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            self.fail(f"expected {text!r}, found {found}", tok)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.fail("empty expression", self.peek())
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(f"unexpected {tok[1]!r}", tok)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                self.fail(f"literal {text!r} is not a finite real", tok)
            return Num(value)
        if kind == "ident":
            if text == "t":
                return T
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise UnknownIdentifier(f"unknown identifier {text!r}", self._byte(tok[2]), self.src)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.fail("unexpected end of input" if kind == "end" else f"unexpected {text!r}", tok)


def parse_expr(src: str) -> Expr:
    """Parse expression text into an AST.

    Raises
    ------
    ExprSyntaxError
        Malformed input; ``offset`` is the byte offset of the offending token.
    UnknownIdentifier
        A name that is neither ``t`` nor one of ``sin cos exp ln abs``.
    """
    if not isinstance(src, str):
        raise TypeError(f"expression must be text, got {type(src).__name__}")
    return _Parser(src).parse()


# --------------------------------------------------------------------------
# Printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    if isinstance(e, Num) and e.value < 0:
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Render ``e`` with the minimum parentheses that preserve its structure."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        if _prec(e.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) < _ATOM_PREC:
            left = f"({left})"
        if _prec(e.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# --------------------------------------------------------------------------
# Evaluation


def _ln(x: float) -> float:
    if x <= 0.0:
        raise EvalError(f"ln of non-positive argument {x!r}")
    return math.log(x)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise EvalError(f"exp overflow for argument {x!r}") from None


def _div(x: float, y: float) -> float:
    if y == 0.0:
        raise EvalError("division by zero")
    return x / y


def _pow(x: float, y: float) -> float:
    if not (x > 0.0 or float(y).is_integer()):
        raise EvalError(f"power with base {x!r} and non-integer exponent {y!r}")
    if x == 0.0 and y < 0:
        raise EvalError("division by zero")
    try:
        r = x ** y
    except OverflowError:
        raise EvalError(f"power overflow for {x!r}^{y!r}") from None
    return r


_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "ln": _ln,
    "abs": abs,
}


def compile_expr(e: Expr) -> Callable[[float], float]:
    """Turn an AST into a plain callable ``f(t) -> float``.

    Domain errors raise ``EvalError``; the callable does not check the final
    result for finiteness (``evaluate`` does).
    """
    if isinstance(e, Num):
        v = e.value
        return lambda t: v
    if isinstance(e, Var):
        return lambda t: t
    if isinstance(e, Neg):
        f = compile_expr(e.operand)
        return lambda t: -f(t)
    if isinstance(e, Call):
        g = _FUNC_IMPL[e.func]
        f = compile_expr(e.arg)
        return lambda t: g(f(t))
    fl, fr = compile_expr(e.left), compile_expr(e.right)
    op = e.op
    if op == "+":
        return lambda t: fl(t) + fr(t)
    if op == "-":
        return lambda t: fl(t) - fr(t)
    if op == "*":
        return lambda t: fl(t) * fr(t)
    if op == "/":
        return lambda t: _div(fl(t), fr(t))
    return lambda t: _pow(fl(t), fr(t))


def evaluate(e: Expr, t: float) -> float:
    """Evaluate ``e`` at ``t``; never returns a non-finite value."""
    v = compile_expr(e)(float(t))
    if not math.isfinite(v):
        raise EvalError(f"non-finite value {v!r}", t=t)
    return v


# --------------------------------------------------------------------------
# Matrices


def _as_expr(x) -> Expr:
    if isinstance(x, (Num, Var, Neg, BinOp, Call)):
        return x
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return Num(float(x)) if x >= 0 else Neg(Num(float(-x)))
    return parse_expr(str(x))


@dataclass(frozen=True)
class TvMatrix:
    """A ``rows x cols`` matrix of expressions in ``t``, stored row-major.

    Instances are immutable; calling one evaluates it at a time point.
    """

    rows: int
    cols: int
    entries: tuple

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionMismatch(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        if len(self.entries) != self.rows * self.cols:
            raise DimensionMismatch(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries, got {len(self.entries)}")
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "TvMatrix":
        """Build from a nested list of expression strings, numbers or ASTs."""
        if isinstance(rows, str) or not rows:
            raise DimensionMismatch("matrix must be a non-empty list of rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DimensionMismatch(f"ragged matrix rows with lengths {sorted(widths)}")
        return cls(len(rows), widths.pop(), tuple(_as_expr(x) for r in rows for x in r))

    @classmethod
    def constant(cls, values) -> "TvMatrix":
        arr = np.atleast_2d(np.asarray(values, dtype=float))
        return cls.from_rows(arr.tolist())

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "TvMatrix":
        return cls(rows, cols, (ZERO,) * (rows * cols))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def entry(self, i: int, j: int) -> Expr:
        return self.entries[i * self.cols + j]

    def to_rows(self) -> list[list[str]]:
        return [[to_text(self.entry(i, j)) for j in range(self.cols)] for i in range(self.rows)]

    def transpose(self) -> "TvMatrix":
        return TvMatrix(self.cols, self.rows,
                        tuple(self.entry(i, j) for j in range(self.cols) for i in range(self.rows)))

    def negate(self) -> "TvMatrix":
        return TvMatrix(self.rows, self.cols, tuple(negate(e) for e in self.entries))

    def is_constant(self) -> bool:
        return not any(depends_on_t(e) for e in self.entries)

    @cached_property
    def _compiled(self) -> tuple:
        return tuple(compile_expr(e) for e in self.entries)

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def eval(self, t: float) -> np.ndarray:
        """Evaluate every entry at ``t`` into a ``rows x cols`` float array.

        Raises ``EvalError`` carrying the row-major index of the failing entry.
        """
        t = float(t)
        out = np.empty(self.rows * self.cols)
        for k, f in enumerate(self._compiled):
            try:
                v = f(t)
            except EvalError as exc:
                raise EvalError(exc.cause, index=k, t=t) from None
            except (OverflowError, ValueError, ZeroDivisionError) as exc:
                raise EvalError(str(exc), index=k, t=t) from None
            if not math.isfinite(v):
                raise EvalError(f"non-finite value {v!r}", index=k, t=t)
            out[k] = v
        return out.reshape(self.rows, self.cols)

    def __str__(self) -> str:
        return json.dumps(self.to_rows())


# --------------------------------------------------------------------------
# Time grids and system files


@dataclass(frozen=True)
class TimeGrid:
    """Uniformly spaced, strictly increasing time points ``t_start..t_end``."""

    t_start: float
    t_end: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("grid end points must be finite")
        if self.t_start >= self.t_end:
            raise ValueError(f"grid needs t_start < t_end, got {self.t_start} >= {self.t_end}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.n_points}")

    @classmethod
    def parse(cls, text: str) -> "TimeGrid":
        """Parse ``"a:b:n"``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like start:end:count, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_points)

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    def __iter__(self):
        return iter(self.points.tolist())

    def __len__(self) -> int:
        return self.n_points

    def __str__(self) -> str:
        return f"{_fmt_num(float(self.t_start))}:{_fmt_num(float(self.t_end))}:{self.n_points}"


@dataclass(frozen=True)
class System:
    """An LTV system ``x' = A x + B u, y = C x`` read from a config file."""

    A: TvMatrix
    B: TvMatrix | None = None
    C: TvMatrix | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n = self.A.rows
        if self.A.cols != n:
            raise DimensionMismatch(f"A must be square, got {self.A.rows}x{self.A.cols}")
        if self.B is not None and self.B.rows != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.rows}")
        if self.C is not None and self.C.cols != n:
            raise DimensionMismatch(f"C must have {n} columns, got {self.C.cols}")

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def p(self) -> int:
        return 0 if self.B is None else self.B.cols

    @property
    def m(self) -> int:
        return 0 if self.C is None else self.C.rows

    def to_config(self) -> dict:
        cfg: dict = {"n": self.n, "p": self.p, "m": self.m, "A": self.A.to_rows()}
        if self.B is not None:
            cfg["B"] = self.B.to_rows()
        if self.C is not None:
            cfg["C"] = self.C.to_rows()
        return cfg


def system_from_config(cfg: Mapping) -> System:
    """Validate and build a :class:`System` from the JSON config mapping.

    The mapping holds ``n``, ``p``, ``m`` and row-major expression arrays
    ``A`` (required), ``B`` and ``C`` (optional).
    """
    if "A" not in cfg or "n" not in cfg:
        raise DimensionMismatch("system config needs at least 'n' and 'A'")
    n = int(cfg["n"])
    A = TvMatrix.from_rows(cfg["A"])
    if A.shape != (n, n):
        raise DimensionMismatch(f"A is {A.rows}x{A.cols} but n={n}")
    B = C = None
    if cfg.get("B") is not None:
        B = TvMatrix.from_rows(cfg["B"])
        p = int(cfg.get("p", B.cols))
        if B.shape != (n, p):
            raise DimensionMismatch(f"B is {B.rows}x{B.cols} but n={n}, p={p}")
    if cfg.get("C") is not None:
        C = TvMatrix.from_rows(cfg["C"])
        m = int(cfg.get("m", C.rows))
        if C.shape != (m, n):
            raise DimensionMismatch(f"C is {C.rows}x{C.cols} but m={m}, n={n}")
    return System(A, B, C, name=str(cfg.get("name", "")))


def load_system(path: str | Path) -> System:
    with open(path, encoding="utf-8") as fh:
        return system_from_config(json.load(fh))


def load_matrix(path: str | Path, key: str | Iterable[str] = ("F", "L", "K")) -> tuple[str, TvMatrix]:
    """Read a gain file: a JSON object with one matrix under ``key``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    keys = [key] if isinstance(key, str) else list(key)
    for k in keys:
        if k in data:
            return k, TvMatrix.from_rows(data[k])
    raise KeyError(f"{path}: expected one of {keys}")
