"""Jet space prolongation of affine vector fields.

Jet coordinates are plain polynomial indeterminates named ``x[i]``, ``u``
and ``u[nu]`` (``nu`` a multi-index), carried by :class:`Coeff` next to the
field parameters.  Since ``u[nu]`` is keyed by the multi-index, mixed
partials are identified by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .series import (
    ZERO,
    Coeff,
    TruncatedSeries,
    as_coeff,
    exponent_label,
    independent_monomials,
    monomials,
    sigma_factorial,
    simplify,
    sym,
)
from .symmetry import AffineVectorField


def x_name(i: int) -> str:
    return f"x[{i}]"


def jet_name(nu) -> str:
    return exponent_label("u", nu)


def _parse_jet(name: str):
    if name == "u":
        return ()
    if name.startswith("u["):
        return tuple(int(v) for v in name[2:-1].split(","))
    return None


def _unit(n: int, i: int) -> tuple:
    e = [0] * n
    e[i] = 1
    return tuple(e)


def _add(a, b) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


@dataclass(frozen=True)
class JetPolynomial:
    """Polynomial in ``x[i]``, ``u``, ``u[nu]`` with parameter coefficients."""

    n: int
    expr: Coeff = field(default_factory=Coeff)

    def __add__(self, other):
        return JetPolynomial(self.n, self.expr + _expr(other))

    def __sub__(self, other):
        return JetPolynomial(self.n, self.expr - _expr(other))

    def __mul__(self, other):
        return JetPolynomial(self.n, self.expr * _expr(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return JetPolynomial(self.n, -self.expr)

    def __eq__(self, other):
        return isinstance(other, JetPolynomial) and self.n == other.n and self.expr == other.expr

    def __hash__(self):
        return hash((self.n, self.expr))

    def __str__(self):
        return str(self.expr)

    def jet_order(self) -> int:
        """Highest ``|nu|`` among the jet symbols present (0 for ``u`` only, -1 for none)."""
        top = -1
        for s in self.expr.symbols():
            nu = _parse_jet(s)
            if nu is not None:
                top = max(top, sum(nu))
        return top

    def subs(self, mapping) -> "JetPolynomial":
        return JetPolynomial(self.n, self.expr.subs(mapping))

    def at_origin(self) -> "JetPolynomial":
        zero = {x_name(i): ZERO for i in range(1, self.n + 1)}
        zero["u"] = ZERO
        return self.subs(zero)


def _expr(v) -> Coeff:
    return v.expr if isinstance(v, JetPolynomial) else as_coeff(v)


def total_derivative(p: JetPolynomial, i: int) -> JetPolynomial:
    """``D_{x_i} p`` with ``i`` 1-based."""
    n = p.n
    e = _unit(n, i - 1)
    ex = p.expr
    out = ex.diff(x_name(i))
    for s in ex.symbols():
        nu = _parse_jet(s)
        if nu is None:
            continue
        out = out + ex.diff(s) * sym(jet_name(_add(nu, e)) if nu else jet_name(e))
    return JetPolynomial(n, out)


def field_components(L: AffineVectorField) -> tuple[list[JetPolynomial], JetPolynomial]:
    n = L.n
    xs = [sym(x_name(j)) for j in range(1, n + 1)]
    u = sym("u")
    X = []
    for i in range(1, n + 1):
        e = as_coeff(L[f"T[{i}]"]) + as_coeff(L[f"B[{i}]"]) * u
        for j in range(1, n + 1):
            e = e + as_coeff(L[f"A[{i},{j}]"]) * xs[j - 1]
        X.append(JetPolynomial(n, e))
    U = as_coeff(L["T0"]) + as_coeff(L["D"]) * u
    for j in range(1, n + 1):
        U = U + as_coeff(L[f"C[{j}]"]) * xs[j - 1]
    return X, JetPolynomial(n, U)


@dataclass
class ProlongedField:
    base: AffineVectorField
    order: int
    U_coeffs: dict

    def __getitem__(self, nu) -> JetPolynomial:
        return self.U_coeffs[tuple(nu)]

    def at_origin(self) -> dict:
        return {nu: p.at_origin() for nu, p in self.U_coeffs.items()}


def prolong(L: AffineVectorField, kappa: int) -> ProlongedField:
    """``U_nu = D^nu (U - sum X_i u_i) + sum X_i u_{nu + e_i}`` for ``1 <= |nu| <= kappa``."""
    if kappa < 1:
        raise ValueError("prolongation order must be at least 1")
    n = L.n
    X, U = field_components(L)
    Q = U
    for i in range(n):
        Q = Q - X[i] * sym(jet_name(_unit(n, i)))
    Dq = {(0,) * n: Q}
    out = {}
    for d in range(1, kappa + 1):
        for nu in monomials(n, d):
            i = next(k for k in range(n) if nu[k])
            prev = list(nu)
            prev[i] -= 1
            Dq[nu] = total_derivative(Dq[tuple(prev)], i + 1)
            val = Dq[nu]
            for k in range(n):
                val = val + X[k] * sym(jet_name(_add(nu, _unit(n, k))))
            out[nu] = val
    return ProlongedField(L, kappa, out)


def series_jets(F: TruncatedSeries, upto: int | None = None, keep=()) -> dict[str, object]:
    """Jet values ``u[nu] = nu! [x^nu] F`` at the origin, except multi-indices in ``keep``."""
    upto = F.N if upto is None else upto
    keep = set(keep)
    out = {"u": F.get((0,) * F.n)}
    for d in range(1, upto + 1):
        for nu in monomials(F.n, d):
            if nu not in keep:
                out[jet_name(nu)] = F.get(nu) * sigma_factorial(nu)
    return out


def prolongation_on_template(n: int, kappa: int | None = None) -> dict:
    """Origin values of the prolonged order n+1 stabilizer field on the chain jet.

    Jets of order at most ``kappa`` are those of the chain completion, except
    the independent ones of order n+2 which stay symbolic ``u[...]``.
    """
    from .symmetry import chain_series, stabilizer_at_order
    kappa = n + 2 if kappa is None else kappa
    L = AffineVectorField.from_matrix(stabilizer_at_order(n).matrix_view)
    P = prolong(L, kappa)
    F = chain_series(n, kappa)
    keep = independent_monomials(n, n + 2)
    vals = series_jets(F, kappa, keep)
    origin = {x_name(i): ZERO for i in range(1, n + 1)}
    return {nu: simplify(p.expr.subs(origin).subs(vals)) for nu, p in P.U_coeffs.items()}


def brackets_from_prolongation(n: int) -> dict:
    """Prolongation values at the order n+2 independent multi-indices with
    ``u[s]`` renamed to ``F[s]`` and the sign flipped."""
    vals = prolongation_on_template(n)
    ren = {jet_name(s): sym(exponent_label("F", s)) for s in independent_monomials(n, n + 2)}
    return {s: simplify(-as_coeff(vals[s]).subs(ren)) for s in independent_monomials(n, n + 2)}


def graph_consistency(L: AffineVectorField, F: TruncatedSeries, kappa: int) -> dict:
    """``U_nu + d^nu R(0) - sum_i T_i d^(nu+e_i) F(0)`` for each ``|nu| <= kappa``.

    ``R`` is the tangency residual; every value must vanish.
    """
    from .symmetry import tangency_residual
    n = F.n
    P = prolong(L, kappa)
    R = tangency_residual(L, F, kappa)
    vals = series_jets(F, kappa + 1)
    origin = {x_name(i): ZERO for i in range(1, n + 1)}
    out = {}
    for nu, p in P.U_coeffs.items():
        v = as_coeff(p.expr.subs(origin).subs(vals))
        v = v + as_coeff(R.get(nu)) * sigma_factorial(nu)
        for i in range(n):
            m = _add(nu, _unit(n, i))
            v = v - as_coeff(L[f"T[{i + 1}]"]) * (F.get(m) * sigma_factorial(m))
        out[nu] = simplify(v)
    return out
