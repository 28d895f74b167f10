import random

import pytest
import sympy as sp
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import coeff_to_sympy, random_series, series_to_sympy, truncate, xs
from rankone.series import (
    AffineTransform,
    Coeff,
    TruncatedSeries,
    coefficient_pick,
    format_coeff,
    format_series,
    independent_monomials,
    jet_value,
    linear_substitute,
    make_series,
    mat_inverse,
    mat_mul,
    monomials,
    multiply,
    partial_derivative,
    power,
    project,
    substitute,
    sym,
    variable,
)

seeds = st.integers(0, 2 ** 32)


def rng_of(seed):
    return random.Random(seed)


# ---------------------------------------------------------------- Coeff


def test_parse_and_format_roundtrip():
    text = "-1/24*F[4,0]*a[1,1]^2 + 1/4*a[1,1]^2*b[2] - a[1,1]^-1"
    c = Coeff.parse(text)
    assert Coeff.parse(format_coeff(c)) == c
    assert c.symbols() == {"F[4,0]", "a[1,1]", "b[2]"}
    assert Coeff.parse("-(x - 2*y)") == Coeff.parse("2*y - x")


@pytest.mark.parametrize("bad", ["1 +", "a^1/2", "(a", "a b", "3 $"])
def test_parse_errors(bad):
    with pytest.raises(ValueError):
        Coeff.parse(bad)


def test_natural_symbol_order():
    c = sym("A[10,1]") + sym("A[2,1]")
    assert format_coeff(c) == "A[2,1] + A[10,1]"


def test_laurent_inverse_and_division():
    a = sym("a") * 3
    assert a * a.inverse() == Coeff.const(1)
    assert (sym("b") / a) * 3 == sym("b") * sym("a") ** -1
    with pytest.raises(ZeroDivisionError):
        (sym("a") + 1).inverse()


def test_eps_truncation():
    eps = sym("eps")
    assert (1 + eps * sym("A")) * (1 + eps * sym("B")) == 1 + eps * (sym("A") + sym("B"))


def test_subs_with_inverse_hint():
    c = sym("a") ** -2 * sym("b")
    eps = sym("eps")
    got = c.subs({"a": 1 + eps}, {"a": 1 - eps})
    assert got == sym("b") * (1 - 2 * eps)


def test_linear_parts():
    c = Coeff.parse("2*T[1]*F[5,0] - A[1,1] + 7")
    parts, rest = c.linear_parts(["T[1]", "A[1,1]"])
    assert parts["T[1]"] == sym("F[5,0]") * 2
    assert parts["A[1,1]"] == Coeff.const(-1)
    assert rest == Coeff.const(7)
    with pytest.raises(ValueError):
        Coeff.parse("T[1]^2").linear_parts(["T[1]"])


coeff_terms = st.lists(
    st.tuples(st.integers(-5, 5), st.integers(1, 4), st.sampled_from(["a", "b", "c", ""]),
              st.integers(-2, 3)),
    max_size=4)


def _build(terms):
    out = Coeff()
    for num, den, name, e in terms:
        t = Coeff.const(mpq(num, den))
        if name:
            t = t * sym(name) ** e
        out = out + t
    return out


@settings(max_examples=100)
@given(x=coeff_terms, y=coeff_terms, z=coeff_terms)
def test_coeff_ring_axioms(x, y, z):
    a, b, c = _build(x), _build(y), _build(z)
    assert (a + b) + c == a + (b + c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    assert a - a == Coeff()
    assert Coeff.parse(format_coeff(a)) == a
    assert sp.simplify(coeff_to_sympy(a * b) - coeff_to_sympy(a) * coeff_to_sympy(b)) == 0


# ----------------------------------------------------------- series basics


def test_make_series_validation():
    with pytest.raises(ValueError):
        make_series(2, 3, [((1, 1, 1), 1)])
    with pytest.raises(ValueError):
        make_series(2, 3, [((2, 2), 1)])
    with pytest.raises(ValueError):
        make_series(2, 3, [((-1, 2), 1)])
    F = make_series(2, 3, [((1, 1), "1/2"), ((1, 1), "1/2"), ((2, 0), "a - b")])
    assert F.get((1, 1)) == 1
    assert F.get((2, 0)) == Coeff.parse("a - b")


def test_graded_lex_items_and_format():
    F = make_series(3, 3, [((0, 0, 1), 1), ((1, 0, 0), 2), ((0, 2, 0), -1), ((2, 0, 1), "1/3")])
    assert [s for s, _ in F.items()] == [(1, 0, 0), (0, 0, 1), (0, 2, 0), (2, 0, 1)]
    assert format_series(F) == "2*x1 + x3 - x2^2 + 1/3*x1^2*x3"


def test_coefficient_pick_refuses_unknown_orders():
    F = make_series(2, 4, [((2, 0), mpq(1, 2)), ((3, 1), 5)])
    assert coefficient_pick(F, (3, 1)) == 5
    assert coefficient_pick(F, (1, 0)) == 0
    assert jet_value(F, (3, 1)) == 30
    with pytest.raises(ValueError):
        coefficient_pick(F, (4, 1))
    with pytest.raises(ValueError):
        coefficient_pick(F, (1, 1, 1))


def test_with_order_cannot_raise():
    F = make_series(2, 3, [((1, 1), 1)])
    with pytest.raises(ValueError):
        F.with_order(4)
    assert F.with_order(1).is_zero()


def test_monomial_enumeration_counts():
    from math import comb
    for n in range(1, 5):
        for d in range(6):
            ms = list(monomials(n, d))
            assert len(ms) == len(set(ms)) == comb(n + d - 1, d)
            if d >= 1:
                assert len(independent_monomials(n, d)) == n


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(1, 4), N=st.integers(0, 6))
def test_multiply_matches_sympy(seed, n, N):
    rng = rng_of(seed)
    a = random_series(rng, n, N, density=0.4)
    b = random_series(rng, n, N, density=0.4)
    got = series_to_sympy(multiply(a, b))
    want = truncate(series_to_sympy(a) * series_to_sympy(b), n, N)
    assert sp.expand(got - want) == 0


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(2, 4), cap=st.integers(0, 3))
def test_multiply_xprime_cap(seed, n, cap):
    rng = rng_of(seed)
    a = random_series(rng, n, 5, density=0.4)
    b = random_series(rng, n, 5, density=0.4)
    assert multiply(a, b, xprime_max=cap) == project(multiply(a, b), "xprime_max", cap)


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(1, 4))
def test_derivative_matches_sympy(seed, n):
    rng = rng_of(seed)
    F = random_series(rng, n, 5)
    x = xs(n)
    for i in range(n):
        d = partial_derivative(F, i)
        assert d.N == 4
        assert sp.expand(series_to_sympy(d) - truncate(sp.diff(series_to_sympy(F), x[i]), n, 4)) == 0


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(1, 3), m=st.integers(1, 3))
def test_substitute_matches_sympy(seed, n, m):
    rng = rng_of(seed)
    N = 4
    F = random_series(rng, n, N, low=1, density=0.5)
    reps = [random_series(rng, m, N, low=1, density=0.4) for _ in range(n)]
    got = substitute(F, reps)
    assert got.exact
    x = xs(n)
    expr = series_to_sympy(F).subs({x[i]: sp.Symbol(f"r{i}") for i in range(n)})
    expr = expr.subs({sp.Symbol(f"r{i}"): series_to_sympy(reps[i]) for i in range(n)})
    # the replacements live in the first m variables, reusing the names x1..xm
    want = truncate(expr, m, got.N)
    assert sp.expand(series_to_sympy(got) - want) == 0


def test_substitute_with_constants_is_flagged():
    F = make_series(1, 3, [((2,), 1)])
    got = substitute(F, [make_series(1, 3, [((0,), 1), ((1,), 1)])])
    assert not got.exact
    assert got == make_series(1, 3, [((0,), 1), ((1,), 2), ((2,), 1)]) and not got.exact


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(1, 4))
def test_linear_substitute_equals_general_substitution(seed, n):
    rng = rng_of(seed)
    N = 4
    F = random_series(rng, n, N)
    while True:
        M = [[mpq(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(n)] for _ in range(n)]
        try:
            mat_inverse(M)
            break
        except ValueError:
            continue
    reps = []
    for i in range(n):
        r = TruncatedSeries(n, N)
        for j in range(n):
            if M[i][j]:
                r = r + variable(n, N, j, M[i][j])
        reps.append(r)
    const = F.get((0,) * n)
    G = linear_substitute(F, M)
    H = substitute(F - const, reps) + const
    assert G == H


def test_power_and_symbolic_coefficients():
    x = make_series(2, 4, [((1, 0), "a"), ((0, 1), 1)])
    p = power(x, 3)
    assert p.get((2, 1)) == sym("a") ** 2 * 3
    assert p.get((3, 0)) == sym("a") ** 3
    with pytest.raises(ValueError):
        power(x, -1)


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(2, 4), m=st.integers(0, 6))
def test_projection_modes(seed, n, m):
    F = random_series(rng_of(seed), n, 6)
    modes = {
        "total_order": lambda s: sum(s) <= m,
        "homogeneous": lambda s: sum(s) == m,
        "independent_to": lambda s: sum(s) <= m and sum(s[1:]) <= 1,
        "independent_at": lambda s: sum(s) == m and sum(s[1:]) <= 1,
        "xprime_min": lambda s: sum(s[1:]) >= m,
        "xprime_max": lambda s: sum(s[1:]) <= m,
    }
    for mode, keep in modes.items():
        P = project(F, mode, m)
        assert P.coeffs == {s: c for s, c in F.coeffs.items() if keep(s)}
    assert project(project(F, "independent_to", 6), "total_order", m) == project(F, "independent_to", m)


def test_projection_rejects_bad_input():
    F = make_series(2, 3, [((1, 1), 1)])
    with pytest.raises(ValueError):
        project(F, "total_order", -1)
    with pytest.raises(ValueError):
        project(F, "nonsense", 1)


# ------------------------------------------------------------ affine maps


def test_affine_compose_and_inverse():
    rng = rng_of(3)
    n = 3
    A = [[mpq(rng.randint(-3, 3), 1) + (3 if i == j else 0) for j in range(n)] for i in range(n)]
    T = AffineTransform.from_blocks(A, b=[1, 0, mpq(1, 2)], c=[0, 2, 0], d=mpq(3))
    assert T.then(T.inverse()).is_identity()
    assert T.inverse().then(T).is_identity()
    S = AffineTransform.from_blocks(A)
    assert mat_mul([list(r) for r in S.then(T).linear], [[1 if i == j else 0 for j in range(4)]
                                                         for i in range(4)]) == mat_mul(
        [list(r) for r in T.linear], [list(r) for r in S.linear])
    assert T.is_origin_fixing()
