"""Hessians, the rank one identity and completion from independent jets."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

from .series import (
    ONE,
    ZERO,
    Coeff,
    TruncatedSeries,
    _FIELD,
    layout,
    multiply,
    partial_derivative,
    project,
    simplify,
    to_rational,
)


class RankOneError(ValueError):
    pass


@dataclass
class IndependentJetData:
    """Plain coefficients of the monomials ``x1^a`` and ``x1^a x_j``."""

    n: int
    N: int
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for sigma in self.values:
            if len(sigma) != self.n:
                raise ValueError(f"exponent {sigma} has wrong length")
            if sum(sigma[1:]) > 1:
                raise ValueError(f"exponent {sigma} is not independent (x'-degree > 1)")
            if sum(sigma) > self.N:
                raise ValueError(f"exponent {sigma} exceeds truncation {self.N}")

    @classmethod
    def from_series(cls, F: TruncatedSeries) -> "IndependentJetData":
        return cls(F.n, F.N, {s: c for s, c in project(F, "xprime_max", 1).items()})

    def to_series(self) -> TruncatedSeries:
        lay = layout(self.n)
        return TruncatedSeries(self.n, self.N,
                               {lay.pack(s): c for s, c in self.values.items() if c})


def independent_part(F: TruncatedSeries) -> TruncatedSeries:
    return project(F, "xprime_max", 1)


def hessian(F: TruncatedSeries) -> list[list[TruncatedSeries]]:
    if F.N < 2:
        raise ValueError("hessian needs truncation order at least 2")
    first = [partial_derivative(F, i) for i in range(F.n)]
    H = [[None] * F.n for _ in range(F.n)]
    for i in range(F.n):
        for j in range(i, F.n):
            H[i][j] = H[j][i] = partial_derivative(first[i], j)
    return H


def matrix_rank(rows) -> int:
    """Rank of a rational matrix by exact elimination."""
    M = [[to_rational(v) for v in r] for r in rows]
    rank = 0
    cols = len(M[0]) if M else 0
    for c in range(cols):
        piv = next((r for r in range(rank, len(M)) if M[r][c]), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c]:
                f = M[r][c] / M[rank][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[rank])]
        rank += 1
    return rank


def hessian_at_origin(F: TruncatedSeries) -> list[list]:
    n = F.n
    out = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            c = F.get(tuple(e))
            out[i][j] = c * (2 if i == j else 1)
    return out


def hessian_rank_at_origin(F: TruncatedSeries) -> int:
    return matrix_rank(hessian_at_origin(F))


def rank1_residuals(F: TruncatedSeries) -> dict[tuple[int, int], TruncatedSeries]:
    """``F11*Fij - F1i*F1j`` for ``2 <= i <= j <= n`` (1-based keys)."""
    if not F.get((2,) + (0,) * (F.n - 1)):
        raise RankOneError("F_x1x1(0) vanishes; pivot the coordinates first")
    H = hessian(F)
    out = {}
    for i in range(1, F.n):
        for j in range(i, F.n):
            out[(i + 1, j + 1)] = multiply(H[0][0], H[i][j]) - multiply(H[0][i], H[0][j])
    return out


def all_minor_residuals(F: TruncatedSeries) -> dict[tuple, TruncatedSeries]:
    """Every 2x2 Hessian minor ``Hij*Hkl - Hil*Hkj`` with ``i<k``, ``j<l``."""
    H = hessian(F)
    n = F.n
    out = {}
    for i in range(n):
        for k in range(i + 1, n):
            for j in range(n):
                for l in range(j + 1, n):
                    out[(i + 1, k + 1, j + 1, l + 1)] = (
                        multiply(H[i][j], H[k][l]) - multiply(H[i][l], H[k][j]))
    return out


def is_rank1(F: TruncatedSeries) -> bool:
    """Hessian of rank one at the origin with every 2x2 minor vanishing to the truncation order."""
    if hessian_rank_at_origin(F) != 1:
        return False
    if F.get((2,) + (0,) * (F.n - 1)):
        return all(r.is_zero() for r in rank1_residuals(F).values())
    return all(r.is_zero() for r in all_minor_residuals(F).values())


# ---------------------------------------------------------------- completion


def _slice_mul(A: dict, B: dict, N: int, deg, out: dict, sign=1):
    get = out.get
    for pa, ca in A.items():
        da = deg(pa)
        if da > N:
            continue
        for pb, cb in B.items():
            if da + deg(pb) > N:
                continue
            p = pa + pb
            v = ca * cb
            out[p] = get(p, ZERO) + (v if sign > 0 else -v)


def _d2(slc: dict, lay, i: int, j: int) -> dict:
    """Second derivative of a slice in x_i, x_j (0-based)."""
    si, sj = lay.shifts[i], lay.shifts[j]
    ui, uj = lay.unit[i], lay.unit[j]
    out = {}
    for p, c in slc.items():
        a = (p >> si) & _FIELD
        if i == j:
            if a >= 2:
                out[p - 2 * ui] = c * (a * (a - 1))
        else:
            b = (p >> sj) & _FIELD
            if a and b:
                out[p - ui - uj] = c * (a * b)
    return out


def _forbidden_mask(lay, idx) -> int:
    m = 0
    for i in idx:
        m |= _FIELD << lay.shifts[i]
    return m


def _filter(slc: dict, mask: int) -> dict:
    if not mask:
        return slc
    return {p: c for p, c in slc.items() if not p & mask}


def complete_rank1(data, max_grade: int | None = None) -> TruncatedSeries:
    """Unique rank one series with the given independent coefficients.

    Works grade by grade in the x'-degree: with ``[.]_g`` the grade ``g``
    slice, ``F11 * Fkl = F1k * F1l`` gives
    ``[Fkl]_h = ([F1k F1l]_h - sum_{a>=1} [F11]_a [Fkl]_{h-a}) / [F11]_0``
    and ``[F11]_0`` is a unit series in ``x1`` alone.  Each dependent
    coefficient is read from the lexicographically smallest pair ``(k, l)``.
    ``max_grade`` stops after that x'-degree (2 gives the border only).
    """
    if isinstance(data, TruncatedSeries):
        data = IndependentJetData.from_series(data)
    n, N = data.n, data.N
    if N < 2:
        raise ValueError("completion needs truncation order at least 2")
    lay = layout(n)
    deg = lay.degree
    e1 = (2,) + (0,) * (n - 1)
    if not data.values.get(e1):
        raise RankOneError("missing pivot: the x1^2 coefficient must be nonzero")
    F: dict[int, dict] = {0: {}, 1: {}}
    for sigma, c in data.values.items():
        c = simplify(c) if isinstance(c, Coeff) else to_rational(c)
        if c:
            F[sum(sigma[1:])][lay.pack(sigma)] = c
    top = N if max_grade is None else min(max_grade, N)
    Nd = N - 2

    # [F11]_0 inverse as a univariate series in x1
    f11 = _d2(F[0], lay, 0, 0)
    ux = lay.unit[0]
    coeffs = [f11.get(k * ux, ZERO) for k in range(Nd + 1)]
    inv0 = [ZERO] * (Nd + 1)
    c0inv = 1 / coeffs[0] if not isinstance(coeffs[0], Coeff) else coeffs[0].inverse()
    inv0[0] = c0inv
    for k in range(1, Nd + 1):
        acc = ZERO
        for j in range(1, k + 1):
            if coeffs[j]:
                acc = acc + coeffs[j] * inv0[k - j]
        inv0[k] = simplify(-acc * c0inv) if acc else ZERO
    inv0d = {k * ux: v for k, v in enumerate(inv0) if v}

    pairs = list(combinations_with_replacement(range(1, n), 2))
    D11: dict[int, dict] = {}
    D1: dict[tuple, dict] = {}
    Dkl: dict[tuple, dict] = {}

    def refresh(g: int):
        D11[g] = _d2(F[g], lay, 0, 0)
        if g >= 1:
            for k in range(1, n):
                D1[(k, g - 1)] = _d2(F[g], lay, 0, k)
        if g >= 2:
            for (k, l) in pairs:
                Dkl[(k, l, g - 2)] = _d2(F[g], lay, k, l)

    refresh(0)
    refresh(1)
    for g in range(2, top + 1):
        h = g - 2
        new: dict = {}
        for (k, l) in pairs:
            # target monomials for which (k, l) is the smallest pair
            forb = [j for j in range(1, n) if j < k or (k < j < l)]
            if l > k:
                forb.append(k)
            mask_t = _forbidden_mask(lay, forb)
            X: dict = {}
            for a in range(h + 1):
                A = _filter(D1[(k, a)], mask_t)
                B = _filter(D1[(l, h - a)], mask_t)
                if A and B:
                    _slice_mul(A, B, Nd, deg, X)
            for a in range(1, h + 1):
                A = _filter(D11[a], mask_t)
                B = _filter(Dkl[(k, l, h - a)], mask_t)
                if A and B:
                    _slice_mul(A, B, Nd, deg, X, sign=-1)
            if not X:
                continue
            Y: dict = {}
            _slice_mul(inv0d, {p: c for p, c in X.items() if c}, Nd, deg, Y)
            uk, ul = lay.unit[k], lay.unit[l]
            for tau, c in Y.items():
                if not c or tau & mask_t:
                    continue
                p = tau + uk + ul
                if k == l:
                    a = lay.exp(p, k)
                    f = a * (a - 1)
                else:
                    f = lay.exp(p, k) * lay.exp(p, l)
                new[p] = simplify(c * (ONE / f))
        F[g] = {p: c for p, c in new.items() if c}
        refresh(g)
    out = {}
    for slc in F.values():
        out.update(slc)
    return TruncatedSeries(n, N, out)
