import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doobcond.coeffexpr import BinOp, Call, Neg, Num, Var, compile_expr, evaluate, parse, pretty_print
from doobcond.errors import DivisionByZero, ExprSyntaxError, NonFinite, UnknownIdentifier


def ev(src, x=0.0):
    return evaluate(parse(src), x)


def test_logistic_drift_tree():
    e = parse("0.5*x - 0.1*x^2")
    assert e == BinOp("-", BinOp("*", Num(0.5), Var()), BinOp("*", Num(0.1), BinOp("^", Var(), Num(2.0))))


def test_exp_value():
    assert ev("exp(-2*x)", 1.0) == pytest.approx(math.exp(-2.0))


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("log(x")
    assert info.value.offset == 6
    assert isinstance(info.value, SyntaxError)


@pytest.mark.parametrize("src", ["", "   ", "1 +", "2 3", "*x", "x)", "exp x", "1..2", "x # 1"])
def test_malformed(src):
    with pytest.raises(ExprSyntaxError):
        parse(src)


@pytest.mark.parametrize("src,offset", [("y + 1", 1), ("2*sin(x)", 3), ("x + mu", 5)])
def test_unknown_identifier(src, offset):
    with pytest.raises(UnknownIdentifier) as info:
        parse(src)
    assert info.value.offset == offset


@pytest.mark.parametrize("src,x,expected", [
    ("x^2 - 0.1*x^3", 2.0, 3.2),
    ("1.2*x", 10.0, 12.0),
    ("2+3*4", 0.0, 14.0),
    ("2^3^2", 0.0, 512.0),
    ("-2^2", 0.0, -4.0),
    ("2^-1", 0.0, 0.5),
    ("(-2)^2", 0.0, 4.0),
    ("--x", 3.0, 3.0),
    ("8/4/2", 0.0, 1.0),
    ("1-2-3", 0.0, -4.0),
    ("abs(x)", -2.5, 2.5),
    ("sqrt(x)", 9.0, 3.0),
    ("log(exp(x))", 1.5, 1.5),
    ("2e-3*x", 1000.0, 2.0),
    (".5", 0.0, 0.5),
    ("x − 1", 3.0, 2.0),
    ("(-8)^(1/1)", 0.0, -8.0),
])
def test_values(src, x, expected):
    assert ev(src, x) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("src,x", [("sqrt(x)", -1.0), ("log(x)", 0.0), ("log(x)", -1.0),
                                   ("exp(x)", 1000.0), ("x^0.5", -4.0), ("x^1000", 1e10)])
def test_nonfinite(src, x):
    with pytest.raises(NonFinite):
        ev(src, x)


@pytest.mark.parametrize("src,x", [("1/x", 0.0), ("x^-1", 0.0)])
def test_division_by_zero(src, x):
    with pytest.raises(DivisionByZero):
        ev(src, x)


def test_compile_matches_evaluate_and_reports_first_bad_point():
    e = parse("sqrt(x) + 1/(x - 2)")
    f = compile_expr(e)
    xs = np.array([0.5, 1.0, 3.0])
    assert np.allclose(f(xs), [evaluate(e, v) for v in xs], rtol=1e-15)
    assert f(4.0) == pytest.approx(2.5)
    with pytest.raises(NonFinite, match="x=2.0"):
        f(np.array([1.0, 2.0, -1.0]))
    loose = compile_expr(e, strict=False)
    assert np.isnan(loose(np.array([-1.0])))[0]


def test_compile_integer_power_of_negative_base():
    f = compile_expr(parse("x^3 - x^-2"))
    assert f(-2.0) == pytest.approx(-8.0 - 0.25)


# random trees for the round-trip and compile/evaluate properties
_leaves = st.one_of(
    # parsed literals are never negative; a leading minus becomes Neg
    st.builds(Num, st.floats(0, 1e3, allow_nan=False).map(lambda v: abs(round(v, 3)))),
    st.just(Var()),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(Call, st.sampled_from(["exp", "log", "sqrt", "abs"]), children),
    )


trees = st.recursive(_leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_round_trip(e):
    assert parse(pretty_print(e)) == e
    assert parse(pretty_print(parse(pretty_print(e)))) == parse(pretty_print(e))


@settings(max_examples=200, deadline=None)
@given(trees, st.floats(-5, 5))
def test_compiled_agrees_with_scalar(e, x):
    try:
        expected = evaluate(e, x)
    except NonFinite:
        expected = None
    try:
        got = compile_expr(e)(x)
    except NonFinite:
        got = None
    if expected is None or got is None:
        return
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(trees, st.floats(-5, 5))
def test_evaluate_is_deterministic(e, x):
    def once():
        try:
            return evaluate(e, x)
        except NonFinite as exc:
            return type(exc)
    assert once() == once()
