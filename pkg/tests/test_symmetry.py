import random

import pytest
import sympy as sp
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import coeff_to_sympy, series_to_sympy, truncate, xs
from rankone.sampling import random_invariants, random_rank1_graph, rng_for
from rankone.series import Coeff, sym
from rankone.symmetry import (
    AffineVectorField,
    ClosedFormMismatch,
    Equation,
    LinearSystem,
    SymmetryError,
    extract_system,
    field_symbols,
    general_stabilizer_matrix,
    isotropy_of_template,
    stabilizer_closed_forms,
    nonexistence_verdict,
    obstruction_equations,
    solve_numeric,
    solve_triangular_symbolic,
    stabilizer_at_order,
    tangency_residual,
    tangency_system,
)

seeds = st.integers(0, 2 ** 32)


def random_field(rng, n, translations=True):
    return AffineVectorField(n, {s: mpq(rng.randint(-3, 3), rng.randint(1, 3))
                                 for s in field_symbols(n, translations)})


def sympy_residual(L, F, order):
    n = F.n
    x = xs(n)
    f = series_to_sympy(F)
    v = lambda s: coeff_to_sympy(L[s])
    total = -(v("T0") + sum(v(f"C[{j}]") * x[j - 1] for j in range(1, n + 1)) + v("D") * f)
    for i in range(1, n + 1):
        Xi = v(f"T[{i}]") + v(f"B[{i}]") * f + sum(v(f"A[{i},{j}]") * x[j - 1] for j in range(1, n + 1))
        total += Xi * sp.diff(f, x[i - 1])
    return truncate(total, n, order)


@settings(max_examples=100)
@given(seed=seeds, n=st.integers(2, 3))
def test_tangency_residual_matches_sympy(seed, n):
    rng = random.Random(seed)
    F, _, _ = random_rank1_graph(n, 5, rng_for(seed, "sym", n))
    L = random_field(rng, n)
    R = tangency_residual(L, F)
    assert R.N == 4
    assert sp.expand(series_to_sympy(R) - sympy_residual(L, F, 4)) == 0


def test_tangency_residual_order_limits():
    F, _, _ = random_rank1_graph(3, 5, rng_for(0, "lim"))
    L = random_field(random.Random(0), 3, translations=False)
    assert tangency_residual(L, F).N == 5
    with pytest.raises(ValueError):
        tangency_residual(random_field(random.Random(0), 3), F, order=5)


def test_independent_only_residual_agrees_on_low_grades():
    F, _, _ = random_rank1_graph(3, 6, rng_for(2, "ind"))
    L = random_field(random.Random(2), 3)
    full = tangency_residual(L, F)
    low = tangency_residual(L, F, independent_only=True)
    assert low.coeffs == {s: c for s, c in full.coeffs.items() if sum(s[1:]) <= 1}


def test_extract_system_round_trips_residual():
    F, _, _ = random_rank1_graph(2, 5, rng_for(4, "ex"))
    L = AffineVectorField.general(2)
    R = tangency_residual(L, F)
    system = extract_system(R, field_symbols(2))
    direct = tangency_system(F, field_symbols(2), 4)
    assert {e.label: e.expression() for e in system.equations} == \
        {e.label: e.expression() for e in direct.equations}


@settings(max_examples=100)
@given(seed=seeds, rows=st.integers(1, 6), cols=st.integers(1, 6))
def test_solve_numeric_matches_sympy_nullspace(seed, rows, cols):
    rng = random.Random(seed)
    names = [f"u[{k}]" for k in range(cols)]
    M = [[mpq(rng.choice([0, 0, rng.randint(-4, 4)]), rng.randint(1, 3)) for _ in range(cols)]
         for _ in range(rows)]
    eqs = [Equation(f"E{r}", {names[c]: M[r][c] for c in range(cols) if M[r][c]}) for r in range(rows)]
    sol = solve_numeric(LinearSystem(names, eqs), prefer_free=names[-1:])
    ref = sp.Matrix([[sp.Rational(int(v.numerator), int(v.denominator)) for v in r] for r in M])
    assert sol.dimension == len(ref.nullspace())
    for vec in sol.basis:
        for r in range(rows):
            assert sum((M[r][c] * vec.get(names[c], 0) for c in range(cols)), mpq(0)) == 0


def test_solve_numeric_rejects_bad_systems():
    with pytest.raises(SymmetryError):
        solve_numeric(LinearSystem(["a"], [Equation("E", {"a": 1}, mpq(1))]))
    with pytest.raises(SymmetryError):
        solve_numeric(LinearSystem(["a"], [Equation("E", {"a": sym("p")})]))


def test_solve_triangular_symbolic():
    eqs = [Equation("E1", {"a": 2, "b": 1}), Equation("E2", {"b": sym("p")}),
           Equation("E3", {"c": 1, "a": -1})]
    desc = solve_triangular_symbolic(LinearSystem(["a", "b", "c"], eqs), [("a", "E1"), "c"])
    assert desc.solved["a"] == sym("b") * mpq(-1, 2)
    assert desc.solved["c"] == sym("b") * mpq(-1, 2)
    assert desc.free == ["b"]
    with pytest.raises(SymmetryError):
        solve_triangular_symbolic(LinearSystem(["b"], eqs[1:2]), ["b"])
    with pytest.raises(SymmetryError):
        solve_triangular_symbolic(LinearSystem(["a"], eqs[:1]), ["a", "b"])
    with pytest.raises(SymmetryError):
        solve_triangular_symbolic(LinearSystem(["c"], eqs), [("c", "E1")])


@pytest.mark.parametrize("n", range(2, 7))
def test_stabilizer_closed_forms(n):
    st_ = stabilizer_at_order(n)
    assert st_.free == ["A[1,1]"] + [f"A[{k},1]" for k in range(2, n + 1)] + [f"B[{n}]"]
    assert st_.matrix_view == general_stabilizer_matrix(n)
    for k, v in stabilizer_closed_forms(n).items():
        assert st_.solved.get(k, Coeff()) == v
    # each generator is tangent to the chain jet through order n+1
    from rankone.symmetry import chain_series
    F = chain_series(n, n + 1)
    for f in st_.free:
        L = AffineVectorField.from_matrix(st_.generator({f: 1}))
        assert tangency_residual(L, F).is_zero()


@pytest.mark.parametrize("n", range(2, 6))
def test_isotropy_of_template(n):
    inv = random_invariants(n, n + 3, rng_for(1, "iso", n))
    desc = isotropy_of_template(n, inv)
    assert desc.free == (["A[1,1]", f"B[{n}]"] if n == 2 else ["A[1,1]"])


def test_obstruction_strict_mode():
    with pytest.raises(ClosedFormMismatch):
        obstruction_equations(5)
    res = obstruction_equations(6)
    assert all(ok for ok, _, _ in res.checks.values())
    assert res.extra_unknowns == []
    with pytest.raises(ValueError):
        obstruction_equations(4)


def test_verdict_refuses_small_dimensions():
    with pytest.raises(ValueError):
        nonexistence_verdict(4, {})


@pytest.mark.parametrize("zero", [True, False])
def test_verdict_on_seeded_instance(zero):
    n = 6
    inv = random_invariants(n, n + 5, rng_for(11, "v", zero), branch_zero=zero)
    v = nonexistence_verdict(n, inv)
    assert v.branch == ("zero" if zero else "nonzero")
    assert v.ok and v.agreement
    assert v.realizable_T_dimension < n
    assert set(v.relation_T) <= {f"T[{i}]" for i in range(1, n + 1)}
