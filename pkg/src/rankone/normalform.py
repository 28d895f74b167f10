"""Affine normalization of rank one graphs.

Stages: order two (pivot, square completion, u-dilation), the chain
induction producing ``x1^m x_m / m!``, and the top-order reductions that
clear the remaining order ``n+2`` and one order ``n+3`` coefficient.  Every
stage returns the affine maps it used so the result can be re-derived from
the input through the fundamental equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

from gmpy2 import mpq

from .rank1 import RankOneError, complete_rank1, hessian_at_origin, rank1_residuals
from .series import (
    ONE,
    ZERO,
    AffineTransform,
    Coeff,
    TruncatedSeries,
    constant_series,
    exponent_label,
    independent_monomials,
    layout,
    linear_substitute,
    mat_identity,
    mat_inverse,
    mat_mul,
    multiply,
    partial_derivative,
    project,
    sigma_factorial,
    simplify,
)


class NormalizationError(RuntimeError):
    pass


# ------------------------------------------------------------ graph transforms


def directional_derivative(H: TruncatedSeries, beta) -> TruncatedSeries:
    out = None
    for j, bj in enumerate(beta):
        if not bj:
            continue
        term = partial_derivative(H, j).scale(bj)
        out = term if out is None else out + term
    if out is None:
        return TruncatedSeries(H.n, max(H.N - 1, 0))
    return out


def _slice_product(A: dict, B: dict) -> dict:
    out: dict = {}
    get = out.get
    for pa, ca in A.items():
        for pb, cb in B.items():
            p = pa + pb
            out[p] = get(p, ZERO) + ca * cb
    return out


def _u_shear(H1: TruncatedSeries, beta) -> TruncatedSeries:
    """Solve ``H(z) = H1(z - beta * H(z))`` degree by degree.

    With ``D_k = (-1)^k / k! (beta . grad)^k H1`` and ``P_k = H^k``,
    ``[H]_m = [D_0]_m + sum_k sum_j [D_k]_{m-j} [P_k]_j``; the right side
    only involves degrees of ``H`` below ``m``.
    """
    n, N = H1.n, H1.N
    lay = H1.layout
    if any(lay.degree(p) < 2 for p in H1._t):
        raise NormalizationError("u-shear needs a graphing function of order at least two")
    K = N // 2
    D = [H1]
    cur = H1
    for k in range(1, K + 1):
        cur = directional_derivative(cur, beta)
        D.append(cur)
    Ds = []
    for k, Dk in enumerate(D):
        f = mpq((-1) ** k, factorial(k))
        g: dict[int, dict] = {}
        for p, c in Dk._t.items():
            g.setdefault(lay.degree(p), {})[p] = c * f
        Ds.append(g)
    H: dict[int, dict] = {}
    P: dict[tuple, dict] = {}

    def pslice(k: int, j: int) -> dict:
        if k == 1:
            return H.get(j, {})
        key = (k, j)
        if key not in P:
            acc: dict = {}
            for i in range(2, j - 2 * (k - 1) + 1):
                A = H.get(i)
                B = pslice(k - 1, j - i)
                if A and B:
                    for p, c in _slice_product(A, B).items():
                        acc[p] = acc.get(p, ZERO) + c
            P[key] = {p: c for p, c in acc.items() if c}
        return P[key]

    for m in range(N + 1):
        acc = dict(Ds[0].get(m, {}))
        for k in range(1, K + 1):
            for j in range(2 * k, m + 1):
                Dk = Ds[k].get(m - j)
                if not Dk:
                    continue
                Pk = pslice(k, j)
                if not Pk:
                    continue
                for p, c in _slice_product(Dk, Pk).items():
                    acc[p] = acc.get(p, ZERO) + c
        H[m] = {p: c for p, c in acc.items() if c}
    out = {}
    for s in H.values():
        out.update(s)
    return TruncatedSeries(n, N, out, H1.exact)


def transform_graph(F: TruncatedSeries, T: AffineTransform) -> TruncatedSeries:
    """Graphing function of the image of ``{u = F(x)}`` under ``T``.

    ``T`` must fix the origin.  When the u-column ``b`` is nonzero the
    u-row must not involve ``x`` (``c = 0``); this covers all maps used by
    the normalization.
    """
    if T.n != F.n:
        raise ValueError(f"transform dimension {T.n} does not match series dimension {F.n}")
    if not T.is_origin_fixing():
        raise ValueError("only origin-fixing transforms are supported")
    A, b, c, d = T.blocks()
    n = F.n
    Ainv = mat_inverse(A)
    if any(b):
        if any(c):
            raise ValueError("transforms mixing both u into y and x into v are not supported")
        dinv = simplify(ONE / d) if not isinstance(d, Coeff) else d.inverse()
        beta = [simplify(sum((Ainv[i][j] * b[j] for j in range(n)), ZERO) * dinv) for i in range(n)]
        H = _u_shear(F.scale(d), beta)
    else:
        H = F.scale(d)
        lin = {}
        for j in range(n):
            if c[j]:
                lin[layout(n).unit[j]] = c[j]
        if lin and F.N >= 1:
            H = H + TruncatedSeries(n, F.N, lin)
    return linear_substitute(H, Ainv)


def fundamental_residual(F: TruncatedSeries, G: TruncatedSeries, T: AffineTransform) -> TruncatedSeries:
    """``-c.x - d F(x) + G(A x + b F(x))`` by Taylor expansion.

    With ``G' = G o A`` and ``beta = A^{-1} b`` the composition equals
    ``sum_k F^k / k! (beta . grad)^k G'``.  This is independent of the
    implicit solver used by :func:`transform_graph` and serves as its
    oracle.
    """
    A, b, c, d = T.blocks()
    n = F.n
    N = min(F.N, G.N)
    Gp = linear_substitute(G.with_order(N), A)
    Ainv = mat_inverse(A)
    beta = [simplify(sum((Ainv[i][j] * b[j] for j in range(n)), ZERO)) for i in range(n)]
    Fn = F.with_order(N)
    total = Gp
    if any(beta):
        deriv = Gp
        Fk = constant_series(n, N, ONE)
        for k in range(1, N + 1):
            deriv = directional_derivative(deriv, beta)
            Fk = multiply(Fk, Fn)
            if not Fk or not deriv:
                break
            total = total + multiply(Fk, TruncatedSeries(n, N, deriv._t)).scale(mpq(1, factorial(k)))
    lin = {layout(n).unit[j]: -c[j] for j in range(n) if c[j]}
    out = total - Fn.scale(d)
    if lin:
        out = out + TruncatedSeries(n, N, lin)
    return out.with_order(N)


def compose_all(n: int, transforms) -> AffineTransform:
    T = AffineTransform.identity(n)
    for t in transforms:
        T = T.then(t, label="composite")
    return T


def _linear(n: int, A, label: str, d=ONE) -> AffineTransform:
    return AffineTransform.from_blocks(A, d=d, label=label)


def _perm_matrix(n: int, i: int, j: int):
    M = mat_identity(n)
    M[i][i] = M[j][j] = ZERO
    M[i][j] = M[j][i] = ONE
    return M


# --------------------------------------------------------------------- order 2


def normalize_order2(F: TruncatedSeries) -> tuple[TruncatedSeries, AffineTransform]:
    """Bring the quadratic part to ``x1^2/2``.

    Pivoting makes the ``x1 x1`` Hessian entry nonzero (a swap, or
    ``x_j := y_1 + y_j`` when all diagonal entries vanish), then
    ``y_1 = x_1 + sum_j (h_1j/h_11) x_j`` completes the square and the
    u-dilation ``v = u/h_11`` normalizes the pivot.
    """
    n = F.n
    if F.N < 2:
        raise ValueError("order-2 normalization needs truncation at least 2")
    lay = F.layout
    for p in F._t:
        if lay.degree(p) < 2:
            raise NormalizationError("graphing function must vanish to order 2 (origin on graph, zero gradient)")
    h = hessian_at_origin(F)
    if not any(any(r) for r in h):
        raise NormalizationError("order-2 degenerate: the Hessian vanishes at the origin")
    steps = []
    if not h[0][0]:
        diag = next((j for j in range(1, n) if h[j][j]), None)
        if diag is not None:
            steps.append(_linear(n, _perm_matrix(n, 0, diag), "order2:swap"))
        else:
            i, j = next((i, j) for i in range(n) for j in range(i + 1, n) if h[i][j])
            if i != 0:
                steps.append(_linear(n, _perm_matrix(n, 0, i), "order2:swap"))
                j = j if j != 0 else i
            # x_j = y_1 + y_j, so y_j = x_j - x_1
            M = mat_identity(n)
            M[j][0] = -ONE
            steps.append(_linear(n, M, "order2:pivot"))
    G = F
    for t in steps:
        G = transform_graph(G, t)
    h = hessian_at_origin(G)
    h11 = h[0][0]
    M = mat_identity(n)
    for j in range(1, n):
        M[0][j] = h[0][j] / h11
    sq = _linear(n, M, "order2:square")
    dil = AffineTransform.from_blocks(mat_identity(n), d=ONE / h11, label="order2:dilation")
    steps += [sq, dil]
    T = compose_all(n, steps)
    T = AffineTransform(T.linear, T.translation, "order2")
    G = transform_graph(F, T)
    quad = project(G, "homogeneous", 2)
    expected = {(2,) + (0,) * (n - 1): mpq(1, 2)}
    if quad.coeffs != expected:
        raise RankOneError(f"Hessian rank at the origin exceeds one: quadratic part {quad}")
    return G, T


# ------------------------------------------------------------------ chain


def _check_rank1(F: TruncatedSeries, upto: int):
    probe = F.with_order(min(F.N, upto))
    bad = {k: r for k, r in rank1_residuals(probe).items() if not r.is_zero()}
    if bad:
        (i, j), r = next(iter(bad.items()))
        raise RankOneError(f"input is not rank one: residual ({i},{j}) = {r}")


def chain_induction(F: TruncatedSeries, verify: bool = True
                    ) -> tuple[TruncatedSeries, list[AffineTransform], int]:
    """Produce the chain ``x1^2/2 + x1^2 x2/2 + sum x1^m x_m/m!``.

    At step ``nu`` the order ``nu+1`` independent slice gives
    ``phi_1 = nu! [x1^(nu+1)]`` and ``phi_j = nu! [x1^nu x_j]``.  At
    ``nu = 2`` the b-shear ``y1 = x1 + b1 u`` removes ``phi_1`` first; then
    ``new x_nu := sum_j phi_j x_j`` with the smallest ``j >= nu`` having
    ``phi_j != 0`` as pivot.  If no such ``j`` exists the surface is a
    product and ``n_H = nu - 1`` is returned.
    """
    n, N = F.n, F.N
    if project(F, "total_order", 2).coeffs != {(2,) + (0,) * (n - 1): mpq(1, 2)}:
        raise NormalizationError("chain induction expects an order-2 normalized input")
    if verify:
        _check_rank1(F, n + 2)
    transforms: list[AffineTransform] = []
    T = AffineTransform.identity(n)

    def current(order: int) -> TruncatedSeries:
        return transform_graph(F.with_order(min(order, N)), T) if transforms else F.with_order(min(order, N))

    n_H = n
    for nu in range(2, n + 1):
        if nu + 1 > N:
            n_H = n
            break
        G = current(nu + 1)
        if nu == 2:
            c3 = G.get((3,) + (0,) * (n - 1))
            if c3:
                Tb = AffineTransform.from_blocks(mat_identity(n), b=[2 * c3] + [ZERO] * (n - 1),
                                                 label="chain:b-shear")
                transforms.append(Tb)
                T = T.then(Tb)
                G = current(nu + 1)
        phi = [ZERO] * n
        e = [0] * n
        e[0] = nu + 1
        phi[0] = G.get(tuple(e)) * factorial(nu)
        for j in range(1, n):
            e = [0] * n
            e[0] = nu
            e[j] = 1
            phi[j] = G.get(tuple(e)) * factorial(nu)
        piv = next((j for j in range(nu - 1, n) if phi[j]), None)
        if piv is None:
            n_H = nu - 1
            break
        k = nu - 1
        if piv != k:
            Ts = _linear(n, _perm_matrix(n, k, piv), f"chain:swap{nu}")
            transforms.append(Ts)
            T = T.then(Ts)
            phi[k], phi[piv] = phi[piv], phi[k]
        if phi[k] == 1 and not any(phi[j] for j in range(n) if j != k):
            continue
        M = mat_identity(n)
        M[k] = list(phi)
        Tc = _linear(n, M, f"chain:nu{nu}")
        transforms.append(Tc)
        T = T.then(Tc)
    return (transform_graph(F, T) if transforms else F), transforms, n_H


# --------------------------------------------------------- top orders


def _matrix_exp_nilpotent(M):
    """``exp(M)`` for a nilpotent rational matrix."""
    m = len(M)
    out = mat_identity(m)
    term = mat_identity(m)
    for k in range(1, m + 1):
        term = [[v / k for v in row] for row in mat_mul(term, M)]
        if not any(any(r) for r in term):
            break
        out = [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(out, term)]
    else:
        raise NormalizationError("flow generator is not nilpotent")
    return out


def flow_transform(M, t, label: str) -> AffineTransform:
    tM = [[simplify(v * t) for v in row] for row in M]
    E = _matrix_exp_nilpotent(tM)
    return AffineTransform(tuple(tuple(r) for r in E), label=label)


def top_order_targets(n: int) -> list[tuple[tuple, str]]:
    """Kill list as (exponent, generator symbol) in processing order."""
    out = []
    for k in range(n, 2, -1):
        e = [0] * n
        e[0] = n + 1
        e[k - 1] = 1
        out.append((tuple(e), f"A[{n - k + 2},1]"))
    out.append(((n + 2,) + (0,) * (n - 1), f"B[{n}]"))
    if n >= 3:
        e = [0] * n
        e[0] = n + 2
        e[2] = 1
        out.append((tuple(e), f"A[{n},1]"))
    return out


def normalize_top_orders(F: TruncatedSeries) -> tuple[TruncatedSeries, list[AffineTransform]]:
    """Clear ``x1^(n+1) x_k`` (k = n..3), ``x1^(n+2)`` and ``x1^(n+2) x3``.

    Each step uses the flow ``exp(t L)`` of one generator of the isotropy
    algebra of the order ``n+1`` chain jet, so lower orders are untouched.
    The target coefficient is affine in ``t``; its slope is read from
    evaluations at ``t = 0, 1, 2`` on the series truncated at the target
    order.
    """
    from .symmetry import stabilizer_at_order

    n, N = F.n, F.N
    stab = stabilizer_at_order(n)
    transforms: list[AffineTransform] = []
    T = AffineTransform.identity(n)
    for sigma, gen in top_order_targets(n):
        order = sum(sigma)
        if order > N:
            break
        base = transform_graph(F.with_order(order), T) if transforms else F.with_order(order)
        g0 = base.get(sigma)
        if not g0:
            continue
        M = stab.generator({gen: ONE})
        vals = []
        for t in (1, 2):
            vals.append(transform_graph(base, flow_transform(M, t, "probe")).get(sigma))
        slope = vals[0] - g0
        if vals[1] - g0 != 2 * slope:
            raise NormalizationError(f"coefficient {sigma} is not affine along the {gen} flow")
        if not slope:
            raise NormalizationError(f"generator {gen} does not move coefficient {sigma}")
        t_star = -g0 / slope
        Tk = flow_transform(M, t_star, f"top:{gen}")
        transforms.append(Tk)
        T = T.then(Tk)
    return (transform_graph(F, T) if transforms else F), transforms


# ---------------------------------------------------------------- template


def chain_data(n: int, N: int) -> dict:
    """Independent coefficients of the chain ``x1^2/2 + x1^2x2/2 + sum x1^m x_m/m!``."""
    vals = {(2,) + (0,) * (n - 1): mpq(1, 2)}
    if n >= 2 and N >= 3:
        vals[(2, 1) + (0,) * (n - 2)] = mpq(1, 2)
    for m in range(3, n + 1):
        if m + 1 > N:
            break
        e = [0] * n
        e[0] = m
        e[m - 1] = 1
        vals[tuple(e)] = mpq(1, factorial(m))
    return vals


def free_invariant_monomials(n: int, N: int) -> list[tuple]:
    """Independent monomials of orders n+2..N left free by the normal form."""
    out = []
    for d in range(n + 2, N + 1):
        for s in independent_monomials(n, d):
            if d == n + 2 and s != (n + 1, 1) + (0,) * (n - 2):
                continue
            if d == n + 3 and n >= 3 and s == (n + 2, 0, 1) + (0,) * (n - 3):
                continue
            out.append(s)
    return out


def template_independent(n: int, N: int, invariants: dict | None = None) -> dict:
    vals = chain_data(n, N)
    for s, v in (invariants or {}).items():
        if v:
            vals[s] = v
    return vals


def weight(sigma) -> int:
    """``-2 + s1 - s3 - 2 s4 - ... - (n-2) s_n``."""
    w = -2 + sigma[0]
    for k in range(2, len(sigma)):
        w -= (k - 1) * sigma[k]
    return w


def dilation_transform(n: int, a) -> AffineTransform:
    """``y1 = a x1``, ``y2 = x2``, ``y_k = a^-(k-2) x_k``, ``v = a^2 u``."""
    a = mpq(a)
    if not a:
        raise ValueError("dilation parameter must be nonzero")
    A = mat_identity(n)
    A[0][0] = a
    for k in range(2, n):
        A[k][k] = a ** -(k - 1)
    return AffineTransform.from_blocks(A, d=a * a, label="dilation")


def check_dilation_action(F: TruncatedSeries, a) -> bool:
    """After the residual dilation, ``F_s = a^weight(s) * G_s`` for every ``s``."""
    a = mpq(a)
    if not a:
        raise ValueError("dilation parameter must be nonzero")
    G = transform_graph(F, dilation_transform(F.n, a))
    lay = F.layout
    keys = set(F._t) | set(G._t)
    for p in keys:
        s = lay.unpack(p)
        if F._t.get(p, ZERO) != G._t.get(p, ZERO) * a ** weight(s):
            return False
    return True


def _border_formulas(n: int, N: int, inv: dict) -> dict[tuple, object]:
    """Closed-form border coefficients of the normal form at orders n+3..n+5.

    ``inv`` maps exponent tuples to plain coefficients of free invariants.
    Only valid below order ``2n+2``, where products of two chain blocks
    start to add terms.
    """
    def F(*sig):
        s = tuple(sig) + (0,) * (n - len(sig))
        return inv.get(s, ZERO) * sigma_factorial(s)

    def mono(a, i, j):
        e = [0] * n
        e[0] = a
        e[i - 1] += 1
        e[j - 1] += 1
        return tuple(e)

    f = factorial
    out: dict[tuple, object] = {}
    if n + 3 <= N:
        out[mono(n + 1, 2, 2)] = F(n + 1, 1) / f(n)
    if n + 4 <= N and n >= 3:
        out[mono(n + 2, 2, 2)] = F(n + 2, 1) / f(n + 1)
        out[mono(n + 2, 2, 3)] = F(n + 1, 1) / (2 * f(n))
        for k in range(4, n + 1):
            out[mono(n + 2, 2, k)] = F(*((n + 2,) + (0,) * (k - 2) + (1,))) / f(n + 1)
    if n + 5 <= N and n >= 4:
        e3 = (n + 3,) + (0,) * (n - 1)
        out[mono(n + 3, 2, 2)] = F(n + 3, 1) / f(n + 2) - F(*e3) / (2 * f(n + 1))
        out[mono(n + 3, 2, 3)] = F(n + 3, 0, 1) / f(n + 2) + F(n + 2, 1) / (2 * f(n + 1))
        out[mono(n + 3, 2, 4)] = F(n + 3, 0, 0, 1) / f(n + 2) + F(n + 1, 1) / (6 * f(n))
        for k in range(5, n + 1):
            out[mono(n + 3, 2, k)] = F(*((n + 3,) + (0,) * (k - 2) + (1,))) / f(n + 2)
        for k in range(4, n + 1):
            out[mono(n + 3, 3, k)] = F(*((n + 2,) + (0,) * (k - 2) + (1,))) / (2 * f(n + 1))
    return {s: v for s, v in out.items() if sum(s) < 2 * n + 2}


def chain_border(n: int, N: int) -> dict[tuple, object]:
    """Border coefficients ``x1^(nu-1) x_i x_j`` for ``i + j = nu + 1``."""
    out = {}
    for nu in range(3, min(n, N - 1) + 1):
        for i in range(2, nu):
            j = nu + 1 - i
            if j < i or j > n:
                continue
            e = [0] * n
            e[0] = nu - 1
            e[i - 1] += 1
            e[j - 1] += 1
            v = mpq(1, factorial(i - 1) * factorial(j - 1))
            out[tuple(e)] = v / 2 if i == j else v
    return out


@dataclass
class TemplateCheck:
    ok: bool
    mismatches: list = field(default_factory=list)
    checked_order: int = 0
    checked: int = 0


def verify_template(G: TruncatedSeries, explicit: bool = True) -> TemplateCheck:
    """Compare the independent and border parts with the normal form template.

    The expected border is the rank one completion of the expected
    independent part; the closed-form blocks are checked as well where they
    apply.
    """
    n = G.n
    top = min(G.N, n + 5)
    inv = {s: G.get(s) for s in free_invariant_monomials(n, top)}
    expected_ind = template_independent(n, top, inv)
    expect = complete_rank1_border(n, top, expected_ind)
    lay = G.layout
    mism = []
    checked = 0
    seen = set()
    for p, c in expect._t.items():
        s = lay.unpack(p)
        seen.add(s)
        checked += 1
        got = G.get(s)
        if got != c:
            mism.append((s, c, got))
    for s, c in project(G.with_order(top), "xprime_max", 2).items():
        if s not in seen and c:
            checked += 1
            mism.append((s, ZERO, c))
    if explicit:
        blocks = {**chain_border(n, top), **_border_formulas(n, top, inv)}
        for s, v in blocks.items():
            checked += 1
            if G.get(s) != v:
                mism.append((s, v, G.get(s)))
    return TemplateCheck(not mism, sorted(set(mism), key=lambda t: (sum(t[0]), t[0])), top, checked)


def complete_rank1_border(n: int, N: int, values: dict) -> TruncatedSeries:
    from .rank1 import IndependentJetData
    return complete_rank1(IndependentJetData(n, N, values), max_grade=2)


def normal_form_instance(n: int, N: int, invariants: dict | None = None,
                         max_grade: int | None = 2) -> TruncatedSeries:
    """Rank one completion of the chain plus the given free invariants."""
    from .rank1 import IndependentJetData
    return complete_rank1(IndependentJetData(n, N, template_independent(n, N, invariants)),
                          max_grade=max_grade)


# ------------------------------------------------------------- full pipeline


@dataclass
class NormalFormReport:
    n: int
    n_H: int
    normalized: TruncatedSeries
    transform_log: list = field(default_factory=list)
    residual_invariants: dict = field(default_factory=dict)
    template: TemplateCheck | None = None
    certified_order: int = 0
    product_factor: dict | None = None
    notes: list = field(default_factory=list)

    @property
    def composite(self) -> AffineTransform:
        return compose_all(self.n, self.transform_log)


def residual_invariants(G: TruncatedSeries) -> dict[str, object]:
    """Jet values of the free independent coefficients, labelled ``F[...]``."""
    n = G.n
    out = {}
    for s in free_invariant_monomials(n, min(G.N, n + 5)):
        out[exponent_label("F", s)] = G.get(s) * sigma_factorial(s)
    return out


def full_normal_form(F: TruncatedSeries, verify: bool = True) -> NormalFormReport:
    n, N = F.n, F.N
    G, T2 = normalize_order2(F)
    log = [T2]
    G, chain_log, n_H = chain_induction(G, verify=verify)
    log += chain_log
    notes = []
    if n_H < n:
        dumb = list(range(n_H + 1, n + 1))
        factor = {
            "dumb_variables": [f"x{i}" for i in dumb],
            "count": len(dumb),
        }
        notes.append(f"product branch: normalization stops at n_H = {n_H}")
        return NormalFormReport(n, n_H, G, log, {}, None, min(N, n_H + 1), factor, notes)
    if N < n + 3:
        notes.append(f"prefix certificate only: truncation {N} < {n + 3}")
    G, top_log = normalize_top_orders(G)
    log += top_log
    if N < n + 5:
        notes.append(f"template verified through order {N} (full template needs {n + 5})")
    check = verify_template(G)
    return NormalFormReport(n, n, G, log, residual_invariants(G), check, check.checked_order, None, notes)
