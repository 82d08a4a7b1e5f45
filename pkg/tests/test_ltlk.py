from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_formula
from tamplan.ltlk import (
    FALSE,
    LAST,
    TRUE,
    Always,
    BoundedTrace,
    Eventually,
    LinearAtom,
    LtlkError,
    Next,
    Not,
    ParseError,
    TemporalTerm,
    UndeclaredVariable,
    Until,
    VarDecl,
    VariableUniverse,
    eq,
    eval_formula,
    eval_term,
    is_temporal,
    linear,
    normalize,
    parse_formula,
    satisfies_prefix,
    to_text,
    var,
)

X = VariableUniverse.of(("x", "real"))
XYB = VariableUniverse.of(("x", "integer", -3, 3), ("y", "real"), ("b", "boolean"))


def trace_x(*xs):
    return BoundedTrace.from_columns(X, {"x": list(xs)})


# ---------------------------------------------------------------- parsing


def test_parse_always():
    assert parse_formula("G (x <= 3)", X) == Always(LinearAtom((1,), (TemporalTerm("x"),), "<=", 3))


def test_parse_eventually_next_term():
    assert parse_formula("F (X x = 1)", X) == Eventually(LinearAtom((1,), (TemporalTerm("x", 1),), "=", 1))


def test_parse_unbalanced_reports_position():
    with pytest.raises(ParseError) as exc:
        parse_formula("G (x <= y", VariableUniverse.of(("x", "real"), ("y", "real")))
    assert exc.value.line == 1
    assert exc.value.column >= 9


def test_parse_undeclared():
    with pytest.raises(UndeclaredVariable, match="z"):
        parse_formula("G (z <= 3)", X)


def test_parse_precedence():
    # unary > U > && > || > ->
    phi = parse_formula("b && b U b || !b -> b", XYB)
    text = to_text(phi)
    assert text == "(((b && (b U b)) || !b) -> b)"


def test_parse_literals_and_linear_sum():
    phi = parse_formula("last || (2*x - 1/2*X y + 3 >= 1 && true) || false", XYB)
    assert LAST in phi.args and FALSE in phi.args
    atom = phi.args[1].args[0]
    assert atom.coeffs == (2, Fraction(-1, 2)) and atom.const == -2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_print_parse_round_trip(seed):
    phi = random_formula(random.Random(seed), XYB, 4)
    assert normalize(parse_formula(to_text(phi), XYB)) == normalize(phi)


# ---------------------------------------------------------------- universes and traces


def test_universe_rejects_duplicates_and_inverted_bounds():
    with pytest.raises(LtlkError):
        VariableUniverse.of(("x", "real"), ("x", "integer"))
    with pytest.raises(LtlkError):
        VarDecl("x", "integer", 3, 1)
    with pytest.raises(LtlkError):
        VarDecl("X", "real")  # keyword


def test_trace_checks_sorts_and_bounds():
    with pytest.raises(LtlkError):
        BoundedTrace.from_columns(XYB, {"x": [7], "y": [0], "b": [True]})
    with pytest.raises(LtlkError):
        BoundedTrace.from_columns(XYB, {"x": [0], "y": [0], "b": [1]})


# ---------------------------------------------------------------- terms


def test_eval_term_examples():
    tr = trace_x(5, 7)
    assert eval_term(var("x"), tr, 0) == 5
    assert eval_term(var("x", 1), tr, 0) == 7
    assert eval_term(var("x", 1), tr, 1) == 7  # saturates at the horizon


# ---------------------------------------------------------------- formulas


def test_last_only_at_horizon():
    tr = trace_x(1, 2, 3)
    assert [eval_formula(LAST, tr, k) for k in range(3)] == [False, False, True]


def test_eventually_witness():
    assert eval_formula(Eventually(eq("x", 3)), trace_x(1, 2, 3), 0)


def test_until_examples():
    phi = Until(linear([(1, "x")], "<", 3), eq("x", 3))
    assert eval_formula(phi, trace_x(1, 2, 3), 0)
    assert not eval_formula(phi, trace_x(1, 5, 3), 0)


def test_prefix_constants():
    tr = trace_x(0, 1)
    assert satisfies_prefix(TRUE, tr)
    assert not satisfies_prefix(Always(FALSE), tr)
    assert not satisfies_prefix(Always(FALSE), trace_x(0))


def test_phi_safe_shape_on_unit_square():
    # inside [0,1]^2 at both steps
    u = VariableUniverse.of(("px", "real"), ("py", "real"))
    inside = Always(linear([(1, "px")], "<=", 1) & linear([(-1, "px")], "<=", 0)
                    & linear([(1, "py")], "<=", 1) & linear([(-1, "py")], "<=", 0))
    tr = BoundedTrace.from_columns(u, {"px": [Fraction(1, 4), Fraction(3, 4)], "py": [Fraction(1, 2), 1]})
    assert satisfies_prefix(inside, tr)
    bad = BoundedTrace.from_columns(u, {"px": [Fraction(1, 4), Fraction(5, 4)], "py": [0, 0]})
    assert not satisfies_prefix(inside, bad)


def test_next_saturates_at_last_instant():
    phi = Next(eq("x", 9))
    tr = trace_x(0, 9)
    assert eval_formula(phi, tr, 0) and eval_formula(phi, tr, 1)
    assert not eval_formula(phi, trace_x(9, 0), 0)


def test_instant_out_of_range():
    with pytest.raises(LtlkError):
        eval_formula(TRUE, trace_x(0), 1)


# ---------------------------------------------------------------- properties

values = st.integers(-3, 3)


@st.composite
def traces(draw, K=None):
    K = draw(st.integers(0, 4)) if K is None else K
    xs = draw(st.lists(values, min_size=K + 1, max_size=K + 1))
    ys = draw(st.lists(st.fractions(-3, 3, max_denominator=4), min_size=K + 1, max_size=K + 1))
    bs = draw(st.lists(st.booleans(), min_size=K + 1, max_size=K + 1))
    return BoundedTrace.from_columns(XYB, {"x": xs, "y": ys, "b": bs})


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9), traces())
def test_duality_identities(seed, tr):
    phi = random_formula(random.Random(seed), XYB, 3)
    for k in range(tr.K + 1):
        assert eval_formula(Always(phi), tr, k) == eval_formula(Not(Eventually(Not(phi))), tr, k)
        assert eval_formula(Eventually(phi), tr, k) == eval_formula(Until(TRUE, phi), tr, k)
        if k < tr.K:
            # at the horizon itself the saturating Next reads K again, so Last is primitive there
            assert eval_formula(LAST, tr, k) == eval_formula(Next(FALSE), tr, k)


def _until_direct(l, r, tr, k):
    return any(eval_formula(r, tr, i) and all(eval_formula(l, tr, j) for j in range(k, i))
               for i in range(k, tr.K + 1))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9), traces())
def test_until_expansion(seed, tr):
    rng = random.Random(seed)
    l, r = random_formula(rng, XYB, 3), random_formula(rng, XYB, 3)
    phi = Until(l, r)
    for k in range(tr.K + 1):
        direct = _until_direct(l, r, tr, k)
        assert eval_formula(phi, tr, k) == direct
        step = eval_formula(r, tr, k) or (eval_formula(l, tr, k) and k < tr.K and eval_formula(phi, tr, k + 1))
        assert direct == step


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), traces(), st.integers(-3, 3), st.booleans())
def test_monotonic_horizon(seed, tr, x, b):
    rng = random.Random(seed)
    while True:
        phi = random_formula(rng, XYB, 3, max_nexts=0)
        if not is_temporal(phi):
            break
    longer = tr.appended({"x": x, "y": Fraction(0), "b": b})
    for k in range(tr.K + 1):
        assert eval_formula(phi, tr, k) == eval_formula(phi, longer, k)
