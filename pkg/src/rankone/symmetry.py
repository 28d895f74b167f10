"""Infinitesimal affine symmetries of graphs.

An affine field ``L = sum X_i d/dx_i + U d/du`` with
``X_i = T_i + sum_j A_ij x_j + B_i u`` and ``U = T0 + sum_j C_j x_j + D u``
is tangent to ``u = F(x)`` when ``L(-u + F)|_{u=F}`` vanishes identically.
The residual is linear in the field coefficients, so each coefficient gets a
basis series and systems are read off monomial by monomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

from gmpy2 import mpq

from .rank1 import IndependentJetData, complete_rank1
from .series import (
    ONE,
    ZERO,
    Coeff,
    TruncatedSeries,
    as_coeff,
    exponent_label,
    format_coeff,
    independent_monomials,
    multiply,
    partial_derivative,
    project,
    sigma_factorial,
    simplify,
    sym,
    to_rational,
)


class SymmetryError(RuntimeError):
    pass


class ClosedFormMismatch(AssertionError):
    """A computed coefficient disagrees with a closed form it must reproduce."""


# ------------------------------------------------------------------ fields


def field_symbols(n: int, translations: bool = True) -> list[str]:
    names = []
    if translations:
        names.append("T0")
        names += [f"T[{i}]" for i in range(1, n + 1)]
    names += [f"A[{i},{j}]" for i in range(1, n + 1) for j in range(1, n + 1)]
    names += [f"B[{i}]" for i in range(1, n + 1)]
    names += [f"C[{j}]" for j in range(1, n + 1)]
    names.append("D")
    return names


@dataclass
class AffineVectorField:
    """Coefficients of an affine field, keyed by the fixed symbol names."""

    n: int
    values: dict = field(default_factory=dict)

    @classmethod
    def general(cls, n: int, translations: bool = True) -> "AffineVectorField":
        return cls(n, {s: sym(s) for s in field_symbols(n, translations)})

    def __getitem__(self, name: str):
        return self.values.get(name, ZERO)

    def matrix(self) -> list[list]:
        """Rows ``X_1..X_n`` as ``[A_i1..A_in, B_i]`` and last row ``[C.., D]``."""
        n = self.n
        rows = [[self[f"A[{i},{j}]"] for j in range(1, n + 1)] + [self[f"B[{i}]"]]
                for i in range(1, n + 1)]
        rows.append([self[f"C[{j}]"] for j in range(1, n + 1)] + [self["D"]])
        return rows

    def translation(self) -> list:
        return [self[f"T[{i}]"] for i in range(1, self.n + 1)] + [self["T0"]]

    @classmethod
    def from_matrix(cls, M, T=None, T0=ZERO) -> "AffineVectorField":
        n = len(M) - 1
        vals = {}
        for i in range(n):
            for j in range(n):
                vals[f"A[{i + 1},{j + 1}]"] = M[i][j]
            vals[f"B[{i + 1}]"] = M[i][n]
            vals[f"C[{i + 1}]"] = M[n][i]
        vals["D"] = M[n][n]
        for i, t in enumerate(T or []):
            vals[f"T[{i + 1}]"] = t
        vals["T0"] = T0
        return cls(n, {k: v for k, v in vals.items() if v})


def residual_basis(F: TruncatedSeries, names, xprime_cap: int | None = None) -> dict[str, TruncatedSeries]:
    """Series multiplying each field coefficient in ``L(-u + F)|_{u=F}``."""
    n, N = F.n, F.N
    lay = F.layout
    dF = [partial_derivative(F, i) for i in range(n)]
    out: dict[str, TruncatedSeries] = {}
    FdF: dict[int, TruncatedSeries] = {}

    def shift(s: TruncatedSeries, j: int) -> TruncatedSeries:
        u = lay.unit[j]
        t = {p + u: c for p, c in s._t.items() if lay.degree(p) + 1 <= N}
        return TruncatedSeries(n, N, t)

    for name in names:
        if name == "T0":
            out[name] = TruncatedSeries(n, N, {0: -ONE})
        elif name.startswith("T["):
            i = int(name[2:-1]) - 1
            out[name] = dF[i]
        elif name.startswith("A["):
            i, j = (int(v) - 1 for v in name[2:-1].split(","))
            out[name] = shift(dF[i], j)
        elif name.startswith("B["):
            i = int(name[2:-1]) - 1
            if i not in FdF:
                FdF[i] = multiply(F, TruncatedSeries(n, N, dF[i]._t), xprime_max=xprime_cap)
            out[name] = FdF[i]
        elif name.startswith("C["):
            j = int(name[2:-1]) - 1
            out[name] = TruncatedSeries(n, N, {lay.unit[j]: -ONE} if N >= 1 else {})
        elif name == "D":
            out[name] = -F
        else:
            raise ValueError(f"unknown field symbol {name!r}")
    if xprime_cap is not None:
        out = {k: project(v, "xprime_max", xprime_cap) for k, v in out.items()}
    return out


def _residual_order(F: TruncatedSeries, names) -> int:
    # translations consume one derivative; the other terms preserve degree
    return F.N - 1 if any(s.startswith("T") and s != "T0" for s in names) else F.N


def tangency_residual(L: AffineVectorField, F: TruncatedSeries, order: int | None = None,
                      independent_only: bool = False) -> TruncatedSeries:
    """``L(-u + F(x))|_{u=F(x)}`` truncated at ``order``.

    ``independent_only`` keeps monomials of x'-degree at most one and only
    needs ``F`` up to x'-degree two.
    """
    names = [s for s, v in L.values.items() if v]
    top = _residual_order(F, names)
    order = top if order is None else order
    if order > top:
        raise ValueError(f"residual order {order} exceeds what truncation {F.N} determines ({top})")
    basis = residual_basis(F, names, 1 if independent_only else None)
    acc: dict = {}
    lay = F.layout
    for s in names:
        v = L.values[s]
        for p, c in basis[s]._t.items():
            if lay.degree(p) > order:
                continue
            acc[p] = acc.get(p, ZERO) + c * v
    return TruncatedSeries(F.n, order, {p: simplify(c) for p, c in acc.items() if c})


# ---------------------------------------------------------------- systems


@dataclass
class Equation:
    label: str
    coeffs: dict
    const: object = ZERO

    def expression(self) -> Coeff:
        out = as_coeff(self.const)
        for s, c in self.coeffs.items():
            out = out + sym(s) * c
        return out

    def __str__(self):
        return f"{self.label}: 0 = {format_coeff(self.expression())}"


@dataclass
class LinearSystem:
    unknowns: list
    equations: list

    def by_label(self) -> dict[str, Equation]:
        return {e.label: e for e in self.equations}

    def lines(self) -> list[str]:
        return [str(e) for e in self.equations]


def monomial_label(sigma) -> str:
    return exponent_label("E", sigma)


def system_from_basis(basis: dict[str, TruncatedSeries], unknowns, order: int,
                      fixed: dict | None = None, skip=None) -> LinearSystem:
    """One equation per monomial of degree at most ``order``.

    ``fixed`` gives values for symbols that are not unknowns.
    """
    lay = None
    rows: dict[int, dict] = {}
    consts: dict[int, object] = {}
    for s, series in basis.items():
        lay = series.layout
        if s in unknowns:
            for p, c in series._t.items():
                if lay.degree(p) <= order:
                    rows.setdefault(p, {})[s] = c
        elif fixed and fixed.get(s):
            v = fixed[s]
            for p, c in series._t.items():
                if lay.degree(p) <= order:
                    consts[p] = consts.get(p, ZERO) + c * v
    eqs = []
    if lay is None:
        return LinearSystem(list(unknowns), [])
    keys = set(rows) | {p for p, c in consts.items() if c}
    for p in sorted(keys, key=lambda q: (lay.degree(q), -q)):
        sigma = lay.unpack(p)
        if skip and sigma in skip:
            continue
        co = {s: simplify(c) for s, c in rows.get(p, {}).items() if c}
        const = simplify(consts.get(p, ZERO))
        if co or const:
            eqs.append(Equation(monomial_label(sigma), co, const))
    return LinearSystem(list(unknowns), eqs)


def tangency_system(F: TruncatedSeries, unknowns=None, order: int | None = None,
                    independent_only: bool = False, fixed: dict | None = None,
                    skip=None) -> LinearSystem:
    n = F.n
    unknowns = list(unknowns) if unknowns is not None else field_symbols(n)
    names = list(unknowns) + [s for s in (fixed or {}) if s not in unknowns]
    top = _residual_order(F, names)
    order = top if order is None else order
    if order > top:
        raise ValueError(f"residual order {order} exceeds what truncation {F.N} determines ({top})")
    basis = residual_basis(F, names, 1 if independent_only else None)
    return system_from_basis(basis, unknowns, order, fixed, skip)


def extract_system(residual: TruncatedSeries, unknowns) -> LinearSystem:
    """Split each coefficient of a residual into its linear form."""
    unknowns = list(unknowns)
    eqs = []
    for sigma, c in residual.items():
        parts, rest = as_coeff(c).linear_parts(unknowns)
        co = {s: simplify(v) for s, v in parts.items() if v}
        if co or rest:
            eqs.append(Equation(monomial_label(sigma), co, simplify(rest)))
    return LinearSystem(unknowns, eqs)


@dataclass
class NumericSolution:
    unknowns: list
    pivots: dict
    free: list
    basis: list
    dimension: int
    realizable_T_dimension: int
    inconsistent: bool = False

    def solved_expressions(self) -> dict[str, Coeff]:
        out = {}
        for var, row in self.pivots.items():
            e = Coeff()
            for f, c in row.items():
                e = e + sym(f) * c
            out[var] = e
        return out


def _rref(rows: list[list], ncols: int) -> tuple[list[list], list[int]]:
    M = [r[:] for r in rows]
    piv_cols = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(M)) if M[i][c]), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv if v else v for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c]:
                f = M[i][c]
                M[i] = [a - f * b if b else a for a, b in zip(M[i], M[r])]
        piv_cols.append(c)
        r += 1
        if r == len(M):
            break
    return M[:r], piv_cols


def solve_numeric(system: LinearSystem, prefer_free=()) -> NumericSolution:
    """Exact reduced row echelon solution of a homogeneous rational system.

    Columns listed in ``prefer_free`` are placed last so they become free
    whenever possible.
    """
    pref = [s for s in prefer_free if s in system.unknowns]
    cols = [s for s in system.unknowns if s not in pref] + pref
    idx = {s: i for i, s in enumerate(cols)}
    rows = []
    for e in system.equations:
        if e.const:
            raise SymmetryError(f"equation {e.label} is not homogeneous")
        r = [ZERO] * len(cols)
        for s, c in e.coeffs.items():
            if isinstance(c, Coeff):
                if not c.is_constant():
                    raise SymmetryError(f"equation {e.label} has a symbolic coefficient")
                c = c.constant()
            r[idx[s]] = to_rational(c)
        rows.append(r)
    R, piv = _rref(rows, len(cols))
    pivset = set(piv)
    free = [cols[c] for c in range(len(cols)) if c not in pivset]
    pivots = {}
    for row, c in zip(R, piv):
        pivots[cols[c]] = {cols[j]: -row[j] for j in range(len(cols)) if j != c and row[j]}
    basis = []
    for f in free:
        vec = {f: ONE}
        for var, row in pivots.items():
            if row.get(f):
                vec[var] = row[f]
        basis.append(vec)
    tnames = [s for s in system.unknowns if s.startswith("T[")]
    tdim = _rank([[v.get(t, ZERO) for t in tnames] for v in basis]) if tnames else 0
    return NumericSolution(list(system.unknowns), pivots, free, basis, len(free), tdim)


def _rank(rows) -> int:
    if not rows or not rows[0]:
        return 0
    return len(_rref(rows, len(rows[0]))[1])


@dataclass
class StabilizerDescription:
    solved: dict
    free: list
    matrix_view: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def generator(self, assign: dict) -> list[list]:
        """Numeric field matrix with the free symbols set from ``assign`` (others 0)."""
        vals = {f: to_rational(assign.get(f, 0)) for f in self.free}
        return [[simplify(as_coeff(v).subs(vals)) for v in row] for row in self.matrix_view]

    def lines(self) -> list[str]:
        out = [f"{k} = {format_coeff(v)}" for k, v in self.solved.items()]
        out.append("free: " + ", ".join(self.free))
        return out

    def matrix_lines(self) -> list[str]:
        return ["[" + ", ".join(format_coeff(v) for v in row) + "]" for row in self.matrix_view]


def solve_triangular_symbolic(system: LinearSystem, order) -> StabilizerDescription:
    """Solve unknowns one at a time, each from one equation with a constant pivot.

    ``order`` items are unknown names, or ``(name, label)`` pairs naming
    the equation to use.  Without a label the first unused equation that
    contains the unknown (after substituting earlier solutions) is taken.
    """
    exprs = [(e.label, e.expression()) for e in system.equations]
    used: set[str] = set()
    solved: dict[str, Coeff] = {}
    log = []
    for item in order:
        name, label = (item, None) if isinstance(item, str) else item
        chosen = None
        for lab, ex in exprs:
            if lab in used or (label is not None and lab != label):
                continue
            cur = ex.subs(solved) if solved else ex
            parts, rest = cur.linear_parts([name])
            if name in parts:
                chosen = (lab, parts[name], rest)
                break
            if label is not None:
                raise SymmetryError(f"equation {label} does not contain {name}")
        if chosen is None:
            raise SymmetryError(f"no equation left for {name}")
        lab, piv, rest = chosen
        if not piv.is_constant():
            raise SymmetryError(f"not triangular over constants: pivot {format_coeff(piv)} "
                                f"for {name} in equation {lab}")
        used.add(lab)
        solved[name] = rest * (-1 / piv.constant())
        log.append((name, lab, piv.constant()))
    names = list(solved)
    for i in range(len(names) - 1, -1, -1):
        later = {k: solved[k] for k in names[i + 1:]}
        solved[names[i]] = solved[names[i]].subs(later)
    free = sorted({s for v in solved.values() for s in v.symbols()})
    return StabilizerDescription(solved, free, [], log)


# -------------------------------------------------------------- stabilizers


def chain_series(n: int, N: int, extra: dict | None = None, max_grade: int | None = None) -> TruncatedSeries:
    from .normalform import template_independent
    return complete_rank1(IndependentJetData(n, N, template_independent(n, N, extra)), max_grade=max_grade)


def stabilizer_preference(n: int) -> list[str]:
    return ["A[1,1]"] + [f"A[{k},1]" for k in range(2, n + 1)] + [f"B[{n}]"]


_stab_cache: dict = {}


def stabilizer_at_order(n: int, order: int | None = None, F: TruncatedSeries | None = None,
                        prefer_free=None) -> StabilizerDescription:
    """Isotropy fields (no translations) tangent to the chain jet up to ``order``.

    Default is ``order = n + 1`` with the bare chain completion, whose free
    parameters are ``A11, A21, ..., An1, Bn``.
    """
    if n < 2:
        raise ValueError("dimension must be at least 2")
    order = n + 1 if order is None else order
    key = (n, order) if F is None and prefer_free is None else None
    if key and key in _stab_cache:
        return _stab_cache[key]
    if F is None:
        F = chain_series(n, order)
    unknowns = field_symbols(n, translations=False)
    system = tangency_system(F, unknowns, order)
    pref = stabilizer_preference(n) if prefer_free is None else list(prefer_free)
    sol = solve_numeric(system, pref)
    solved = {k: v for k, v in sol.solved_expressions().items()}
    free = [s for s in unknowns if s in sol.free]
    vals = {s: solved.get(s, sym(s) if s in free else ZERO) for s in unknowns}
    L = AffineVectorField(n, vals)
    desc = StabilizerDescription({k: solved[k] for k in unknowns if k in solved}, free,
                                 [[simplify(v) for v in row] for row in L.matrix()])
    if key:
        _stab_cache[key] = desc
    return desc


def stabilizer_closed_forms(n: int) -> dict[str, Coeff]:
    """Closed forms for the last rows of the order n+1 stabilizer."""
    out = {f"B[{n - 1}]": sym(f"A[{n},1]") * mpq(-2, n), f"A[{n},2]": Coeff()}
    for k in range(3, n + 1):
        out[f"A[{n},{k}]"] = sym(f"A[{n - k + 1},1]") * (-mpq(k - 2, n - k + 1) * comb(n, k))
    return out


def general_stabilizer_matrix(n: int) -> list[list]:
    """The order n+1 stabilizer matrix assembled from the closed forms."""
    A = lambda k: sym(f"A[{k},1]")
    rows = []
    for i in range(1, n + 1):
        row = [A(i)] + [ZERO] * (n - 1)
        for k in range(3, i + 1):
            row[k - 1] = A(i - k + 1) * (-mpq(k - 2, i - k + 1) * comb(i, k))
        row.append(A(i + 1) * mpq(-2, i + 1) if i < n else sym(f"B[{n}]"))
        rows.append(row)
    rows.append([ZERO] * n + [A(1) * 2])
    return [[simplify(v) for v in r] for r in rows]


def isotropy_of_template(n: int, invariants: dict, order: int | None = None) -> StabilizerDescription:
    """Isotropy fields preserving the normalized monomials up to ``order``.

    Equations sit at the independent monomials fixed by the normal form; the
    free invariant positions are skipped since the group may rescale them.
    """
    from .normalform import free_invariant_monomials
    order = n + 3 if order is None else order
    F = chain_series(n, order, invariants, max_grade=2)
    unknowns = field_symbols(n, translations=False)
    skip = set(free_invariant_monomials(n, order))
    system = tangency_system(F, unknowns, order, independent_only=True, skip=skip)
    sol = solve_numeric(system, ["A[1,1]"])
    solved = sol.solved_expressions()
    free = [s for s in unknowns if s in sol.free]
    vals = {s: solved.get(s, sym(s) if s in free else ZERO) for s in unknowns}
    L = AffineVectorField(n, vals)
    return StabilizerDescription({k: solved[k] for k in unknowns if k in solved}, free,
                                 [[simplify(v) for v in row] for row in L.matrix()])


# ----------------------------------------------------------------- brackets


def top_parameter_series(n: int, prefix: str = "F") -> dict[tuple, Coeff]:
    """Symbolic plain coefficients ``F[s]/s!`` for order n+2 independent monomials."""
    return {s: sym(exponent_label(prefix, s)) * mpq(1, sigma_factorial(s))
            for s in independent_monomials(n, n + 2)}


def order_n2_action_brackets(n: int) -> list[tuple[tuple, Coeff]]:
    """``s! [L(-u+F)|_{u=F}]_s`` at the order n+2 independent monomials.

    ``L`` is the general order n+1 stabilizer field and ``F`` the chain with
    symbolic order n+2 coefficients.
    """
    if n < 2 or n > 12:
        raise ValueError("dimension out of range")
    stab = stabilizer_at_order(n)
    F = chain_series(n, n + 2, top_parameter_series(n))
    L = AffineVectorField(n, {})
    Mv = stab.matrix_view
    L = AffineVectorField.from_matrix(Mv)
    R = tangency_residual(L, F, n + 2)
    return [(s, simplify(R.get(s) * sigma_factorial(s))) for s in independent_monomials(n, n + 2)]


def finite_stabilizer_matrix(n: int) -> list[list]:
    """Finite stability group matrices in low dimension (group parameters
    ``a[i,1]``, ``b[n]``; rows ``y1..yn, v``)."""
    a = lambda i: sym(f"a[{i},1]")
    a1 = a(1)
    inv = lambda k: a1 ** (-k)
    b = sym(f"b[{n}]")
    Z = ZERO
    if n == 2:
        return [[a1, Z, -a1 * a(2)], [a(2), ONE, b], [Z, Z, a1 ** 2]]
    rows = [[a1] + [Z] * (n - 1) + [-a1 * a(2)],
            [a(2), ONE] + [Z] * (n - 2) + [a(2) ** 2 * mpq(-1, 2) - a1 * a(3) * mpq(2, 3)]]
    if n == 3:
        rows.append([a(3), Z, inv(1), b])
    elif n == 4:
        rows.append([a(3), Z, inv(1), Z, a1 * a(4) * mpq(-1, 2) - a(2) * a(3)])
        rows.append([a(4), Z, a(2) * inv(2) * -2, inv(2), b])
    elif n == 5:
        rows.append([a(3), Z, inv(1), Z, Z, -a(2) * a(3) - a1 * a(4) * mpq(1, 2)])
        rows.append([a(4), Z, a(2) * inv(2) * -2, inv(2), Z,
                     -a(2) * a(4) - a(3) ** 2 * mpq(2, 3) - a1 * a(5) * mpq(2, 5)])
        rows.append([a(5), Z, a(2) ** 2 * inv(3) * 5 - a(3) * inv(2) * mpq(10, 3),
                     a(2) * inv(3) * -5, inv(3), b])
    else:
        raise ValueError("finite stabilizer matrices are tabulated for n = 2..5")
    rows.append([Z] * n + [a1 ** 2])
    return [[simplify(v) for v in r] for r in rows]


def finite_action_equations(n: int) -> dict[tuple, Coeff]:
    """Coefficients of ``-d F(x) + G(A x + b F(x))`` at the order n+2
    independent monomials, for chain jets ``F``, ``G`` with symbolic order
    n+2 parameters and the finite stabilizer matrix."""
    from .series import substitute, variable
    M = finite_stabilizer_matrix(n)
    F = chain_series(n, n + 2, top_parameter_series(n, "F"))
    G = chain_series(n, n + 2, top_parameter_series(n, "G"))
    N = n + 2
    reps = []
    for i in range(n):
        r = F.scale(M[i][n]) if M[i][n] else TruncatedSeries(n, N)
        for j in range(n):
            if M[i][j]:
                r = r + variable(n, N, j, M[i][j])
        reps.append(r)
    R = substitute(G, reps) - F.scale(M[n][n])
    return {"lower": project(R, "total_order", n + 1),
            "top": {s: R.get(s) for s in independent_monomials(n, n + 2)}}


def linearized_finite_action(n: int) -> dict[tuple, Coeff]:
    """First-order part of the finite action at the identity.

    With ``a11 = 1 + eps A11``, ``a_k1 = eps A_k1``, ``b = eps B_n`` (and
    ``G = F``) the coefficient of ``eps`` at each order n+2 independent
    monomial, multiplied by ``s!``.
    """
    M = finite_stabilizer_matrix(n)
    eps = sym("eps")
    mp = {"a[1,1]": 1 + eps * sym("A[1,1]"), f"b[{n}]": eps * sym(f"B[{n}]")}
    for k in range(2, n + 1):
        mp[f"a[{k},1]"] = eps * sym(f"A[{k},1]")
    inv = {"a[1,1]": 1 - eps * sym("A[1,1]")}
    Me = [[simplify(as_coeff(v).subs(mp, inv)) for v in row] for row in M]
    return _first_order_action(n, Me)


def _first_order_action(n: int, Me) -> dict[tuple, Coeff]:
    from .series import substitute, variable
    N = n + 2
    F = chain_series(n, N, top_parameter_series(n, "F"))
    reps = []
    for i in range(n):
        r = F.scale(Me[i][n]) if Me[i][n] else TruncatedSeries(n, N)
        for j in range(n):
            if Me[i][j]:
                r = r + variable(n, N, j, Me[i][j])
        reps.append(r)
    R = substitute(F, reps) - F.scale(Me[n][n])
    out = {}
    for s in independent_monomials(n, N):
        c = as_coeff(R.get(s))
        first = Coeff({m: v for m, v in c.terms.items() if dict(m).get("eps") == 1})
        out[s] = simplify(first.subs({"eps": 1}) * sigma_factorial(s))
    return out


def linearized_generator_action(n: int) -> dict[tuple, Coeff]:
    """Same as :func:`linearized_finite_action` using ``I + eps M`` with ``M``
    the general order n+1 stabilizer matrix."""
    M = stabilizer_at_order(n).matrix_view
    eps = sym("eps")
    Me = [[simplify((ONE if i == j else ZERO) + eps * v) for j, v in enumerate(row)]
          for i, row in enumerate(M)]
    return _first_order_action(n, Me)


# ------------------------------------------------------------- obstruction


def free_parameter_symbols(n: int, N: int) -> dict[tuple, Coeff]:
    from .normalform import free_invariant_monomials
    return {s: sym(exponent_label("F", s)) * mpq(1, sigma_factorial(s))
            for s in free_invariant_monomials(n, N)}


def _e(n: int, head: int, pos: int | None = None) -> tuple:
    e = [0] * n
    e[0] = head
    if pos is not None:
        e[pos - 1] += 1
    return tuple(e)


@dataclass
class ObstructionResult:
    n: int
    eqI: Coeff
    eqII: Coeff
    solved: dict
    log: list
    checks: dict
    extra_unknowns: list


def obstruction_solve_order(n: int) -> list:
    lab = lambda s: monomial_label(s)
    order = [("T0", lab((0,) * n))]
    order.append(("C[1]", lab(_e(n, 1))))
    for j in range(2, n + 1):
        order.append((f"C[{j}]", lab(_e(n, 0, j))))
    order.append(("D", lab(_e(n, 2))))
    for k in range(1, n + 1):
        order.append((f"A[{k},{n}]", lab(_e(n, k, n))))
    order.append((f"A[2,{n - 1}]", lab(_e(n, 2, n - 1))))
    order.append((f"A[2,{n - 2}]", lab(_e(n, 2, n - 2))))
    order.append(("B[1]", lab(_e(n, 3))))
    order.append(("A[2,1]", lab(_e(n, n + 1, n))))
    order.append(("B[2]", lab(_e(n, 4))))
    order.append(("A[3,1]", lab(_e(n, n + 1, n - 1))))
    order.append(("B[3]", lab(_e(n, 5))))
    order.append(("A[4,1]", lab(_e(n, n + 1, n - 2))))
    return order


def obstruction_expected(n: int) -> dict[str, Coeff]:
    """Closed forms the elimination has to reproduce."""
    T = lambda i: sym(f"T[{i}]")
    A11 = sym("A[1,1]")
    Fl = lambda pos: sym(exponent_label("F", _e(n, n + 2, pos)))
    F0, F1, F2 = Fl(n), Fl(n - 1), Fl(n - 2)
    q = lambda a, b: mpq(a, b)
    out = {
        "D": T(2) + A11 * 2,
        f"A[{n - 1},{n}]": -T(1),
        f"A[{n},{n}]": -A11 * (n - 2) - T(2) * (n - 1),
        "B[1]": T(1) * F0 * q(2, (n + 1) * (n - 2)) + T(3) * q(n, 3 * (n - 2)),
        "A[2,1]": -T(1) * F0 * q(2, (n + 1) * (n - 2)) - T(3) * q(2 * (n - 1), 3 * (n - 2)),
        "B[2]": T(1) * F1 * q(4, (n - 3) * n * (n + 1)) + T(4) * q(n - 1, 6 * (n - 3)),
        "A[3,1]": -T(1) * F1 * q(6, (n - 3) * n * (n + 1)) - T(4) * q(n - 2, 2 * (n - 3)),
        "B[3]": T(1) * F2 * q(12, n * (n - 4) * (n * n - 1)) + T(5) * q(n - 2, 10 * (n - 4)),
        "A[4,1]": -T(1) * F2 * q(24, n * (n - 4) * (n * n - 1)) - T(5) * q(2 * (n - 3), 5 * (n - 4)),
    }
    for k in range(1, n - 1):
        out[f"A[{k},{n}]"] = Coeff()
    return out


def obstruction_equations(n: int, strict: bool = True) -> ObstructionResult:
    """Equations I and II after the triangular elimination.

    ``strict`` raises :class:`ClosedFormMismatch` on any disagreement with
    the expected closed forms; the comparison results are in ``checks``.
    """
    if n < 5:
        raise ValueError("the obstruction equations need n >= 5 (denominators n-3, n-4)")
    N = n + 5
    F = chain_series(n, N, free_parameter_symbols(n, N), max_grade=2)
    unknowns = field_symbols(n)
    system = tangency_system(F, unknowns, n + 4, independent_only=True)
    desc = solve_triangular_symbolic(system, obstruction_solve_order(n))
    eqs = system.by_label()
    subs = desc.solved
    I = eqs[monomial_label(_e(n, n + 2, n))].expression().subs(subs)
    II = eqs[monomial_label(_e(n, n + 3, n))].expression().subs(subs)
    checks = {}
    for name, want in obstruction_expected(n).items():
        got = subs.get(name)
        checks[f"solved {name}"] = (got == want, format_coeff(got), format_coeff(want))
    T = lambda i: sym(f"T[{i}]")
    # relations between intermediate unknowns before back substitution
    rel = {
        "B1 + A21 + T3/3": (sym("B[1]") + sym("A[2,1]") + T(3) * mpq(1, 3), _e(n, 3)),
        "3B2 + 2A31 + T4/2": (sym("B[2]") * 3 + sym("A[3,1]") * 2 + T(4) * mpq(1, 2), _e(n, 4)),
        "2B3 + A41 + T5/5": (sym("B[3]") * 2 + sym("A[4,1]") + T(5) * mpq(1, 5), _e(n, 5)),
    }
    for name, (expr, sigma) in rel.items():
        eq = eqs[monomial_label(sigma)].expression().subs(
            {k: v for k, v in subs.items() if not k.startswith(("B[", "A[2,1]", "A[3,1]", "A[4,1]"))})
        ratio = _proportional(eq, expr)
        checks[f"relation {name}"] = (ratio is not None, format_coeff(eq), format_coeff(expr))
    fI = sym(exponent_label("F", _e(n, n + 2, n)))
    fII = sym(exponent_label("F", _e(n, n + 3, n)))
    coef = lambda E, s: E.linear_parts([s])[0].get(s, Coeff())
    want = {
        "I: T4": (coef(I, "T[4]"), Coeff.const(mpq(-1, 12 * (n - 3) * factorial(n)))),
        "I: A11": (coef(I, "A[1,1]"), fI * mpq(2, factorial(n + 2))),
        "II: T5": (coef(II, "T[5]"), Coeff.const(mpq(-1, 30 * (n - 4) * factorial(n)))),
        "II: A11": (coef(II, "A[1,1]"), fII * mpq(3, factorial(n + 3))),
    }
    for name, (got, exp) in want.items():
        checks[name] = (got == exp, format_coeff(got), format_coeff(exp))
    allowed = {f"T[{i}]" for i in range(1, n + 1)} | {"A[1,1]"}
    extra = sorted((I.symbols() | II.symbols()) & set(unknowns) - allowed)
    res = ObstructionResult(n, I, II, subs, desc.log, checks, extra)
    if strict:
        bad = [k for k, v in checks.items() if not v[0]]
        if bad:
            raise ClosedFormMismatch("; ".join(f"{k}: got {checks[k][1]}, expected {checks[k][2]}" for k in bad))
    return res


def _proportional(a: Coeff, b: Coeff):
    """Rational ``r`` with ``a == r * b``, or None."""
    if not b.terms:
        return ZERO if not a.terms else None
    m, c = next(iter(b.terms.items()))
    r = a.terms.get(m, ZERO) / c
    return r if a == b * r else None


_obstruction_cache: dict = {}


def cached_obstruction(n: int) -> ObstructionResult:
    if n not in _obstruction_cache:
        _obstruction_cache[n] = obstruction_equations(n, strict=False)
    return _obstruction_cache[n]


# ------------------------------------------------------------------ verdict


@dataclass
class VerdictReport:
    n: int
    branch: str
    relation: Coeff
    relation_T: dict
    lie_dimension: int
    realizable_T_dimension: int
    agreement: bool
    obstruction_extra: list
    ok: bool
    notes: list = field(default_factory=list)


def nonexistence_verdict(n: int, invariants: dict, order: int | None = None) -> VerdictReport:
    """Case split on the x1^(n+2) x_n invariant plus a brute-force elimination.

    ``invariants`` are plain coefficients of the free normal-form monomials.
    """
    if n < 5:
        raise ValueError(f"n = {n} is outside the range n >= 5 where equations I and II apply")
    N = n + 5
    order = n + 4 if order is None else order
    obs = cached_obstruction(n)
    vals = {exponent_label("F", s): v * sigma_factorial(s) for s, v in invariants.items()}
    from .normalform import free_invariant_monomials
    for s in free_invariant_monomials(n, N):
        vals.setdefault(exponent_label("F", s), ZERO)
    I = obs.eqI.subs(vals)
    II = obs.eqII.subs(vals)
    key = _e(n, n + 2, n)
    notes = []
    if not invariants.get(key):
        branch = "zero"
        relation = I
    else:
        branch = "nonzero"
        parts, rest = I.linear_parts(["A[1,1]"])
        a = parts["A[1,1]"]
        if not a.is_constant():
            raise SymmetryError("A11 coefficient of equation I is not a number")
        relation = II.subs({"A[1,1]": rest * (-1 / a.constant())})
    relation = as_coeff(relation)
    tnames = [f"T[{i}]" for i in range(1, n + 1)]
    parts, rest = relation.linear_parts(tnames)
    relT = {k: simplify(v) for k, v in parts.items()}
    pure = not rest and all(as_coeff(v).is_constant() for v in parts.values()) and bool(parts)
    # brute force elimination on the same instance
    F = chain_series(n, N, invariants, max_grade=2)
    system = tangency_system(F, field_symbols(n), order, independent_only=True)
    sol = solve_numeric(system)
    agree = True
    for vec in sol.basis:
        v = {s: vec.get(s, ZERO) for s in field_symbols(n)}
        for E in (I, II):
            if simplify(as_coeff(E).subs(v)):
                agree = False
    # the relation must hold on every realizable direction
    for vec in sol.basis:
        if simplify(relation.subs({s: vec.get(s, ZERO) for s in field_symbols(n)})):
            agree = False
    if not pure:
        notes.append("relation is not a pure linear form in T1..Tn")
    ok = pure and sol.realizable_T_dimension < n and sol.dimension <= 4 and agree
    return VerdictReport(n, branch, relation, relT, sol.dimension, sol.realizable_T_dimension,
                         agree, obs.extra_unknowns, ok, notes)
