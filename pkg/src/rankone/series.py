"""Exact truncated multivariate power series.

Coefficients are either plain rationals (``gmpy2.mpq``) or elements of a
Laurent polynomial ring in named parameters (:class:`Coeff`).  Series store
plain monomial coefficients: the coefficient of ``x^s`` is ``F_s`` and the
jet value ``d^s F(0)`` equals ``s! * F_s``.

Internally exponent vectors are packed into one integer, six bits per
variable with ``x1`` in the most significant slot.  Adding packed keys
multiplies monomials, which keeps the inner product loops cheap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable, Iterable, Mapping, Sequence

from gmpy2 import mpq

ZERO = mpq(0)
ONE = mpq(1)

# parameter degrees above these caps are discarded on multiplication;
# "eps" carries first-order infinitesimal calculus
DEGREE_CAPS = {"eps": 1}

_BITS = 6
_FIELD = (1 << _BITS) - 1
MAX_EXPONENT = _FIELD


def to_rational(value) -> mpq:
    """Convert ints, strings like ``"-3/4"``, Fractions or mpq to mpq."""
    if isinstance(value, str):
        return mpq(value.strip())
    if hasattr(value, "numerator") and not isinstance(value, (int, type(ZERO))):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


def format_rational(q) -> str:
    q = mpq(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------- parameters

_SPLIT = re.compile(r"(\d+)")
_name_keys: dict[str, tuple] = {}


def symbol_key(name: str) -> tuple:
    """Natural sort key: ``A[2,1]`` < ``A[10,1]``."""
    k = _name_keys.get(name)
    if k is None:
        k = tuple(int(p) if p.isdigit() else p for p in _SPLIT.split(name))
        _name_keys[name] = k
    return k


def _mono_key(mono: tuple) -> tuple:
    return (sum(abs(e) for _, e in mono), tuple((symbol_key(s), e) for s, e in mono))


_MISS = object()
_mono_cache: dict = {}


def _mono_mul(m1: tuple, m2: tuple):
    if not m1:
        return m2
    if not m2:
        return m1
    key = (m1, m2)
    hit = _mono_cache.get(key, _MISS)
    if hit is not _MISS:
        return hit
    d = dict(m1)
    for s, e in m2:
        e2 = d.get(s, 0) + e
        if e2:
            d[s] = e2
        else:
            del d[s]
    out = None
    for s, cap in DEGREE_CAPS.items():
        if d.get(s, 0) > cap:
            break
    else:
        out = tuple(sorted(d.items(), key=lambda t: symbol_key(t[0])))
    if len(_mono_cache) > 2_000_000:
        _mono_cache.clear()
    _mono_cache[key] = out
    return out


class Coeff:
    """Laurent polynomial in named parameters with exact rational coefficients.

    ``terms`` maps a monomial, a name-sorted tuple of ``(name, exponent)``
    pairs with nonzero exponents, to a nonzero rational.  The empty tuple is
    the constant monomial.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = terms if terms is not None else {}

    # construction
    @classmethod
    def const(cls, q) -> "Coeff":
        q = to_rational(q)
        return cls({(): q} if q else {})

    @classmethod
    def symbol(cls, name: str, exp: int = 1) -> "Coeff":
        return cls({((name, exp),): ONE})

    @classmethod
    def parse(cls, text: str) -> "Coeff":
        return parse_expression(text)

    # queries
    def __bool__(self):
        return bool(self.terms)

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def constant(self) -> mpq:
        return self.terms.get((), ZERO)

    def symbols(self) -> set[str]:
        return {s for m in self.terms for s, _ in m}

    def is_unit(self) -> bool:
        return len(self.terms) == 1

    def degree_in(self, name: str) -> int:
        return max((dict(m).get(name, 0) for m in self.terms), default=0)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Coeff):
            return other
        try:
            return Coeff.const(other)
        except (TypeError, ValueError):
            return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        t = dict(self.terms)
        for m, c in o.terms.items():
            v = t.get(m, ZERO) + c
            if v:
                t[m] = v
            else:
                t.pop(m, None)
        return Coeff(t)

    __radd__ = __add__

    def __neg__(self):
        return Coeff({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Coeff):
            if len(other.terms) > len(self.terms):
                a, b = other.terms, self.terms
            else:
                a, b = self.terms, other.terms
            t: dict = {}
            get = t.get
            for m2, c2 in b.items():
                for m1, c1 in a.items():
                    m = _mono_mul(m1, m2)
                    if m is None:
                        continue
                    t[m] = get(m, ZERO) + c1 * c2
            return Coeff({m: c for m, c in t.items() if c})
        try:
            q = to_rational(other)
        except (TypeError, ValueError):
            return NotImplemented
        if not q:
            return Coeff()
        return Coeff({m: c * q for m, c in self.terms.items()})

    __rmul__ = __mul__

    def inverse(self) -> "Coeff":
        if not self.is_unit():
            raise ZeroDivisionError(f"cannot invert non-monomial {self}")
        (m, c), = self.terms.items()
        return Coeff({tuple((s, -e) for s, e in m): 1 / c})

    def __truediv__(self, other):
        if isinstance(other, Coeff):
            if other.is_constant():
                return self * (1 / other.constant())
            return self * other.inverse()
        return self * (1 / to_rational(other))

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        out = Coeff.const(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self.terms == o.terms

    def __hash__(self):
        if self.is_constant():
            return hash(self.constant())
        return hash(frozenset(self.terms.items()))

    # calculus and substitution
    def diff(self, name: str) -> "Coeff":
        t = {}
        for m, c in self.terms.items():
            d = dict(m)
            e = d.get(name, 0)
            if not e:
                continue
            if e == 1:
                del d[name]
            else:
                d[name] = e - 1
            nm = tuple(sorted(d.items(), key=lambda p: symbol_key(p[0])))
            t[nm] = t.get(nm, ZERO) + c * e
        return Coeff({m: c for m, c in t.items() if c})

    def subs(self, mapping: Mapping[str, object], inverses: Mapping[str, object] | None = None) -> "Coeff":
        """Replace parameters by values (numbers or Coeff).

        Negative powers use ``inverses[name]`` when given, otherwise the
        value must be a unit.
        """
        if not any(s in mapping for s in self.symbols()):
            return self
        powers: dict = {}
        out = Coeff()
        for m, c in self.terms.items():
            term = Coeff({(): c})
            rest = []
            for s, e in m:
                if s in mapping:
                    key = (s, e)
                    p = powers.get(key)
                    if p is None:
                        if e < 0 and inverses and s in inverses:
                            v, k = inverses[s], -e
                        else:
                            v, k = mapping[s], e
                        v = v if isinstance(v, Coeff) else Coeff.const(v)
                        p = v ** k
                        powers[key] = p
                    term = term * p
                else:
                    rest.append((s, e))
            if rest:
                term = term * Coeff({tuple(rest): ONE})
            out = out + term
        return out

    def linear_parts(self, unknowns: Iterable[str]) -> tuple[dict, "Coeff"]:
        """Split into ``sum(coef[u] * u) + rest`` for the given unknowns.

        Raises ValueError if some term is nonlinear in the unknowns.
        """
        unk = set(unknowns)
        parts: dict[str, Coeff] = {}
        rest: dict = {}
        for m, c in self.terms.items():
            hit = [(s, e) for s, e in m if s in unk]
            if not hit:
                rest[m] = c
                continue
            if len(hit) > 1 or hit[0][1] != 1:
                raise ValueError(f"term {_format_term(m, c)} is not linear in the unknowns")
            s = hit[0][0]
            other = tuple(p for p in m if p[0] != s)
            parts.setdefault(s, Coeff()).terms[other] = c
        return parts, Coeff(rest)

    def __str__(self):
        return format_coeff(self)

    def __repr__(self):
        return f"Coeff({format_coeff(self)!r})"


def as_coeff(value) -> Coeff:
    return value if isinstance(value, Coeff) else Coeff.const(value)


def sym(name: str) -> Coeff:
    return Coeff.symbol(name)


def simplify(value):
    """Return a plain rational when a Coeff is parameter free."""
    if isinstance(value, Coeff) and value.is_constant():
        return value.constant()
    return value


def is_unit(value) -> bool:
    if isinstance(value, Coeff):
        return value.is_unit()
    return bool(value)


def inverse(value):
    if isinstance(value, Coeff):
        if value.is_constant():
            return 1 / value.constant()
        return value.inverse()
    return 1 / mpq(value)


def _format_term(m, c) -> str:
    factors = [s if e == 1 else f"{s}^{e}" for s, e in m]
    if not factors:
        return format_rational(c)
    head = "" if abs(c) == 1 else format_rational(abs(c)) + "*"
    sign = "-" if c < 0 else ""
    return sign + head + "*".join(factors)


def format_coeff(value) -> str:
    if not isinstance(value, Coeff):
        return format_rational(value)
    if not value.terms:
        return "0"
    items = sorted(value.terms.items(), key=lambda kv: _mono_key(kv[0]))
    out = ""
    for i, (m, c) in enumerate(items):
        t = _format_term(m, c)
        if i == 0:
            out = t
        elif t.startswith("-"):
            out += " - " + t[1:]
        else:
            out += " + " + t
    return out


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\[[-0-9, ]*\])?)"
    r"|(?P<op>[-+*^()]))"
)


def parse_expression(text: str) -> Coeff:
    """Parse ``-1/24*a[1,1]^2*F[4,0] + b`` style expressions."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse expression at column {pos + 1}: {text!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind).replace(" ", "")))
    tokens.append(("end", ""))
    i = 0

    def peek():
        return tokens[i]

    def take():
        nonlocal i
        i += 1
        return tokens[i - 1]

    def factor() -> Coeff:
        kind, val = take()
        if kind == "num":
            base = Coeff.const(mpq(val))
        elif kind == "name":
            base = Coeff.symbol(val)
        elif val == "(":
            base = expr()
            if take()[1] != ")":
                raise ValueError(f"unbalanced parenthesis in {text!r}")
        elif val == "-":
            return -factor()
        else:
            raise ValueError(f"unexpected token {val!r} in {text!r}")
        if peek()[1] == "^":
            take()
            sign = 1
            if peek()[1] == "-":
                take()
                sign = -1
            k, v = take()
            if k != "num" or "/" in v:
                raise ValueError(f"bad exponent in {text!r}")
            base = base ** (sign * int(v))
        return base

    def term() -> Coeff:
        out = factor()
        while peek()[1] == "*":
            take()
            out = out * factor()
        return out

    def expr() -> Coeff:
        sign = 1
        if peek()[1] in "+-" and peek()[0] == "op":
            sign = -1 if take()[1] == "-" else 1
        out = term() * sign
        while peek()[0] == "op" and peek()[1] in "+-":
            op = take()[1]
            t = term()
            out = out + t if op == "+" else out - t
        return out

    result = expr()
    if peek()[0] != "end":
        raise ValueError(f"trailing input in expression {text!r}")
    return result


# ------------------------------------------------------------- exponent packing


class _Layout:
    """Packing tables for a fixed dimension."""

    def __init__(self, n: int):
        self.n = n
        self.shifts = [_BITS * (n - 1 - i) for i in range(n)]
        self.unit = [1 << s for s in self.shifts]
        self.top = self.shifts[0]
        self._unpack: dict[int, tuple] = {}
        self._deg: dict[int, int] = {}

    def pack(self, sigma: Sequence[int]) -> int:
        p = 0
        for e in sigma:
            p = (p << _BITS) | e
        return p

    def unpack(self, p: int) -> tuple:
        t = self._unpack.get(p)
        if t is None:
            t = tuple((p >> s) & _FIELD for s in self.shifts)
            self._unpack[p] = t
        return t

    def degree(self, p: int) -> int:
        d = self._deg.get(p)
        if d is None:
            d = sum(self.unpack(p))
            self._deg[p] = d
        return d

    def x1(self, p: int) -> int:
        return p >> self.top

    def xprime(self, p: int) -> int:
        return self.degree(p) - (p >> self.top)

    def exp(self, p: int, i: int) -> int:
        return (p >> self.shifts[i]) & _FIELD


_layouts: dict[int, _Layout] = {}


def layout(n: int) -> _Layout:
    lay = _layouts.get(n)
    if lay is None:
        lay = _layouts[n] = _Layout(n)
    return lay


def _add(a, b):
    return a + b


# ------------------------------------------------------------------- series


class TruncatedSeries:
    """Sparse truncated power series ``sum F_s x^s`` with ``|s| <= N``.

    Instances are treated as immutable.  ``exact`` is cleared when a
    substitution with constant terms was performed, in which case the result
    is only the exact composition of the stored polynomial.
    """

    __slots__ = ("n", "N", "_t", "exact")

    def __init__(self, n: int, N: int, packed: dict | None = None, exact: bool = True):
        if n < 1:
            raise ValueError("dimension must be positive")
        if N < 0 or N > MAX_EXPONENT:
            raise ValueError(f"truncation order must be in 0..{MAX_EXPONENT}")
        self.n = n
        self.N = N
        self._t = packed if packed is not None else {}
        self.exact = exact

    # ---- construction and access
    @property
    def layout(self) -> _Layout:
        return layout(self.n)

    @property
    def coeffs(self) -> dict[tuple, object]:
        lay = self.layout
        return {lay.unpack(p): c for p, c in self._t.items()}

    def items(self):
        """(exponent tuple, coefficient) pairs in graded-lex order, x1 heaviest."""
        lay = self.layout
        for p in sorted(self._t, key=lambda q: (lay.degree(q), -q)):
            yield lay.unpack(p), self._t[p]

    def __len__(self):
        return len(self._t)

    def __bool__(self):
        return bool(self._t)

    def __getitem__(self, sigma) -> object:
        return coefficient_pick(self, sigma)

    def get(self, sigma, default=ZERO):
        return self._t.get(self.layout.pack(sigma), default)

    def is_zero(self) -> bool:
        return not self._t

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self.n == other.n and self.N == other.N and self._t == other._t

    def __hash__(self):
        return hash((self.n, self.N, frozenset(self._t.items())))

    def __repr__(self):
        return f"TruncatedSeries(n={self.n}, N={self.N}, {format_series(self)})"

    def __str__(self):
        return format_series(self)

    def with_order(self, N: int) -> "TruncatedSeries":
        """Truncate to ``min(N, self.N)``; raising the order is refused."""
        if N > self.N:
            raise ValueError(f"cannot raise truncation from {self.N} to {N}")
        if N == self.N:
            return self
        return project(self, "total_order", N)

    # ---- ring operations
    def _check(self, other: "TruncatedSeries"):
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self + constant_series(self.n, self.N, other)
        self._check(other)
        N = min(self.N, other.N)
        lay = self.layout
        t = {p: c for p, c in self._t.items() if lay.degree(p) <= N}
        for p, c in other._t.items():
            if lay.degree(p) > N:
                continue
            v = t.get(p, ZERO) + c
            if v:
                t[p] = v
            else:
                t.pop(p, None)
        return TruncatedSeries(self.n, N, t, self.exact and other.exact)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.n, self.N, {p: -c for p, c in self._t.items()}, self.exact)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "TruncatedSeries":
        if isinstance(c, Coeff) and c.is_constant():
            c = c.constant()
        if not isinstance(c, Coeff):
            c = to_rational(c)
            if not c:
                return TruncatedSeries(self.n, self.N, {}, self.exact)
        t = {}
        for p, v in self._t.items():
            w = v * c
            if w:
                t[p] = w
        return TruncatedSeries(self.n, self.N, t, self.exact)

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return multiply(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, k: int):
        return power(self, k)

    def map_coefficients(self, fn: Callable) -> "TruncatedSeries":
        t = {}
        for p, c in self._t.items():
            v = fn(c)
            if v:
                t[p] = v
        return TruncatedSeries(self.n, self.N, t, self.exact)

    def subs_parameters(self, mapping: Mapping[str, object]) -> "TruncatedSeries":
        """Substitute values for named parameters in every coefficient."""
        return self.map_coefficients(
            lambda c: simplify(c.subs(mapping)) if isinstance(c, Coeff) else c
        )

    def derivative(self, i: int) -> "TruncatedSeries":
        return partial_derivative(self, i)

    def project(self, mode: str, m: int) -> "TruncatedSeries":
        return project(self, mode, m)

    def symbols(self) -> set[str]:
        out: set[str] = set()
        for c in self._t.values():
            if isinstance(c, Coeff):
                out |= c.symbols()
        return out

    def constant_term(self):
        return self._t.get(0, ZERO)

    def by_degree(self) -> dict[int, list]:
        lay = self.layout
        g: dict[int, list] = {}
        for p, c in self._t.items():
            g.setdefault(lay.degree(p), []).append((p, c))
        return g


def constant_series(n: int, N: int, c) -> TruncatedSeries:
    if not isinstance(c, Coeff):
        c = to_rational(c)
    return TruncatedSeries(n, N, {0: c} if c else {})


def variable(n: int, N: int, i: int, coef=ONE) -> TruncatedSeries:
    """The series ``coef * x_{i+1}`` (0-based index ``i``)."""
    if not 0 <= i < n:
        raise ValueError(f"variable index {i} out of range for dimension {n}")
    if N < 1:
        return TruncatedSeries(n, N)
    return TruncatedSeries(n, N, {layout(n).unit[i]: coef})


def make_series(dimension: int, truncation: int, entries: Iterable) -> TruncatedSeries:
    """Build a series from ``(exponents, value)`` pairs; duplicates are summed.

    Values may be numbers, ``"p/q"`` strings, Coeff instances or expression
    strings.
    """
    lay = layout(dimension)
    t: dict = {}
    if truncation < 0 or truncation > MAX_EXPONENT:
        raise ValueError(f"truncation order {truncation} out of range")
    for sigma, value in entries:
        sigma = tuple(sigma)
        if len(sigma) != dimension:
            raise ValueError(f"exponent {sigma} has length {len(sigma)}, expected {dimension}")
        if any((not isinstance(e, int)) or e < 0 for e in sigma):
            raise ValueError(f"exponent {sigma} has a negative or non-integer entry")
        if sum(sigma) > truncation:
            raise ValueError(f"exponent {sigma} has degree {sum(sigma)} above truncation {truncation}")
        if isinstance(value, Coeff):
            c = simplify(value)
        elif isinstance(value, str):
            try:
                c = mpq(value.strip())
            except ValueError:
                c = simplify(parse_expression(value))
        else:
            c = to_rational(value)
        p = lay.pack(sigma)
        v = t.get(p, ZERO) + c
        if v:
            t[p] = v
        else:
            t.pop(p, None)
    return TruncatedSeries(dimension, truncation, t)


def _grouped(s: TruncatedSeries, cap: int | None):
    lay = s.layout
    g: dict = {}
    for p, c in s._t.items():
        xp = lay.xprime(p)
        if cap is not None and xp > cap:
            continue
        g.setdefault((lay.degree(p), xp), []).append((p, c))
    return g


def multiply(a: TruncatedSeries, b: TruncatedSeries, xprime_max: int | None = None,
             order: int | None = None) -> TruncatedSeries:
    """Truncated product.  ``xprime_max`` keeps only terms of degree at most
    that in ``x2..xn`` (factors above the cap are skipped since the x'-degree
    is additive)."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    N = min(a.N, b.N) if order is None else min(a.N, b.N, order)
    ga = _grouped(a, xprime_max)
    gb = _grouped(b, xprime_max)
    res: dict = {}
    get = res.get
    for (da, xa), la in ga.items():
        for (db, xb), lb in gb.items():
            if da + db > N:
                continue
            if xprime_max is not None and xa + xb > xprime_max:
                continue
            for pa, ca in la:
                for pb, cb in lb:
                    p = pa + pb
                    res[p] = get(p, ZERO) + ca * cb
    return TruncatedSeries(a.n, N, {p: c for p, c in res.items() if c}, a.exact and b.exact)


def power(s: TruncatedSeries, k: int, xprime_max: int | None = None) -> TruncatedSeries:
    if k < 0:
        raise ValueError("negative power")
    out = constant_series(s.n, s.N, ONE)
    for _ in range(k):
        out = multiply(out, s, xprime_max)
    return out


def partial_derivative(s: TruncatedSeries, i: int) -> TruncatedSeries:
    """Derivative in ``x_{i+1}`` (0-based ``i``); truncation drops by one."""
    if not 0 <= i < s.n:
        raise ValueError(f"variable index {i} out of range for dimension {s.n}")
    lay = s.layout
    sh = lay.shifts[i]
    u = lay.unit[i]
    t = {}
    for p, c in s._t.items():
        e = (p >> sh) & _FIELD
        if e:
            t[p - u] = c * e
    return TruncatedSeries(s.n, max(s.N - 1, 0), t, s.exact)


PROJECTION_MODES = ("total_order", "independent_to", "independent_at",
                    "xprime_min", "xprime_max", "homogeneous")


def project(s: TruncatedSeries, mode: str, m: int) -> TruncatedSeries:
    """Projections onto monomial classes.

    ``independent`` monomials are those of degree at most one in ``x2..xn``.
    The truncation order is kept for filters and lowered for degree cuts.
    """
    if m < 0:
        raise ValueError("projection parameter must be non-negative")
    lay = s.layout
    deg = lay.degree
    xp = lay.xprime
    if mode == "total_order":
        keep = lambda p: deg(p) <= m
        N = min(s.N, m)
    elif mode == "independent_to":
        keep = lambda p: deg(p) <= m and xp(p) <= 1
        N = min(s.N, m)
    elif mode == "independent_at":
        keep = lambda p: deg(p) == m and xp(p) <= 1
        N = min(s.N, m)
    elif mode == "homogeneous":
        keep = lambda p: deg(p) == m
        N = min(s.N, m)
    elif mode == "xprime_min":
        keep = lambda p: xp(p) >= m
        N = s.N
    elif mode == "xprime_max":
        keep = lambda p: xp(p) <= m
        N = s.N
    else:
        raise ValueError(f"unknown projection mode {mode!r}")
    return TruncatedSeries(s.n, N, {p: c for p, c in s._t.items() if keep(p)}, s.exact)


def coefficient_pick(s: TruncatedSeries, tau: Sequence[int]):
    """Plain coefficient of ``x^tau``; refuses monomials beyond the truncation."""
    tau = tuple(tau)
    if len(tau) != s.n:
        raise ValueError(f"exponent {tau} has wrong length for dimension {s.n}")
    if sum(tau) > s.N:
        raise ValueError(f"monomial {tau} lies above truncation order {s.N}; its value is unknown")
    return s._t.get(s.layout.pack(tau), ZERO)


def jet_value(s: TruncatedSeries, tau: Sequence[int]):
    """``d^tau F(0) = tau! * F_tau``."""
    f = 1
    for e in tau:
        f *= factorial(e)
    return coefficient_pick(s, tau) * f


def is_independent(sigma: Sequence[int]) -> bool:
    return sum(sigma[1:]) <= 1


def monomials(n: int, degree: int):
    """Exponent tuples of exact degree, graded-lex order with x1 heaviest."""
    if n == 1:
        yield (degree,)
        return
    for a in range(degree, -1, -1):
        for rest in monomials(n - 1, degree - a):
            yield (a,) + rest


def independent_monomials(n: int, degree: int) -> list[tuple]:
    """``x1^degree`` then ``x1^(degree-1) x_j`` for j = 2..n."""
    if degree < 1:
        return [(0,) * n] if degree == 0 else []
    out = [(degree,) + (0,) * (n - 1)]
    for j in range(1, n):
        e = [0] * n
        e[0] = degree - 1
        e[j] = 1
        out.append(tuple(e))
    return out


def exponent_label(prefix: str, sigma: Sequence[int]) -> str:
    return f"{prefix}[{','.join(str(e) for e in sigma)}]"


def sigma_factorial(sigma: Sequence[int]) -> int:
    f = 1
    for e in sigma:
        f *= factorial(e)
    return f


def format_series(s: TruncatedSeries, names: Sequence[str] | None = None) -> str:
    if not s._t:
        return "0"
    names = names or [f"x{i + 1}" for i in range(s.n)]
    parts = []
    for sigma, c in s.items():
        mono = "*".join(
            names[i] if e == 1 else f"{names[i]}^{e}" for i, e in enumerate(sigma) if e
        )
        cs = format_coeff(c)
        if not mono:
            parts.append(cs)
        elif isinstance(c, Coeff) and len(c.terms) > 1:
            parts.append(f"({cs})*{mono}")
        elif cs == "1":
            parts.append(mono)
        elif cs == "-1":
            parts.append("-" + mono)
        else:
            parts.append(f"{cs}*{mono}")
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


# ------------------------------------------------------------- substitution


def _min_degree(s: TruncatedSeries) -> int:
    lay = s.layout
    return min((lay.degree(p) for p in s._t), default=s.N + 1)


def substitute(s: TruncatedSeries, replacements: Sequence[TruncatedSeries]) -> TruncatedSeries:
    """Compose ``s(r_1, ..., r_n)``.

    Without constant terms in the replacements the result is exact to the
    smaller of the two truncation orders.  With constant terms the stored
    polynomial of ``s`` is composed exactly and the result is flagged
    ``exact=False``, since the unknown tail of ``s`` would feed low orders.
    """
    if len(replacements) != s.n:
        raise ValueError(f"expected {s.n} replacements, got {len(replacements)}")
    m = replacements[0].n
    for r in replacements:
        if r.n != m:
            raise ValueError("replacements must share one dimension")
    Nr = min(r.N for r in replacements)
    has_const = any(r.constant_term() for r in replacements)
    if has_const:
        N = Nr
    else:
        # the unknown tail of s starts at degree (s.N + 1) * low
        low = min((_min_degree(r) for r in replacements), default=Nr + 1)
        N = min(Nr, (s.N + 1) * low - 1)
    reps = [r.with_order(N) if r.N > N else r for r in replacements]
    lay = s.layout
    powers: list[list[TruncatedSeries]] = [[constant_series(m, N, ONE)] for _ in range(s.n)]

    def pw(i: int, k: int) -> TruncatedSeries:
        lst = powers[i]
        while len(lst) <= k:
            lst.append(multiply(lst[-1], reps[i]))
        return lst[k]

    terms = sorted(((lay.unpack(p), c) for p, c in s._t.items()), key=lambda t: t[0])
    acc: dict = {}

    def rec(items, i, prefix: TruncatedSeries):
        if i == s.n:
            for _, c in items:
                for p, v in prefix._t.items():
                    acc[p] = acc.get(p, ZERO) + v * c
            return
        groups: dict[int, list] = {}
        for item in items:
            groups.setdefault(item[0][i], []).append(item)
        for e, grp in groups.items():
            nxt = prefix if e == 0 else multiply(prefix, pw(i, e))
            if nxt._t:
                rec(grp, i + 1, nxt)

    if terms:
        rec(terms, 0, constant_series(m, N, ONE))
    out = TruncatedSeries(m, N, {p: c for p, c in acc.items() if c},
                          s.exact and not has_const)
    return out


def identity_replacements(n: int, N: int) -> list[TruncatedSeries]:
    return [variable(n, N, i) for i in range(n)]


# elementary linear changes acting on packed dictionaries

def _scale_var(t: dict, lay: _Layout, i: int, c) -> dict:
    sh = lay.shifts[i]
    pw: dict[int, object] = {0: ONE}
    out = {}
    for p, v in t.items():
        e = (p >> sh) & _FIELD
        f = pw.get(e)
        if f is None:
            f = pw[e] = c ** e if isinstance(c, Coeff) else mpq(c) ** e
        w = v * f
        if w:
            out[p] = w
    return out


def _shear_var(t: dict, lay: _Layout, i: int, j: int, lam) -> dict:
    """x_i -> x_i + lam * x_j."""
    ui, uj = lay.unit[i], lay.unit[j]
    sh = lay.shifts[i]
    shj = lay.shifts[j]
    pw = [ONE]
    out: dict = {}
    get = out.get
    for p, v in t.items():
        a = (p >> sh) & _FIELD
        if not a:
            out[p] = get(p, ZERO) + v
            continue
        if ((p >> shj) & _FIELD) + a > _FIELD:
            raise OverflowError("exponent overflow in linear substitution")
        while len(pw) <= a:
            pw.append(pw[-1] * lam)
        q = p
        for k in range(a + 1):
            w = v * (comb(a, k) * pw[k]) if k else v
            out[q] = get(q, ZERO) + w
            q += uj - ui
    return {p: c for p, c in out.items() if c}


def _permute_vars(t: dict, lay: _Layout, target: Sequence[int]) -> dict:
    """Rename variable i to target[i]."""
    out = {}
    for p, v in t.items():
        sig = lay.unpack(p)
        q = 0
        for i, e in enumerate(sig):
            q += e << lay.shifts[target[i]]
        out[q] = v
    return out


def elementary_factors(M: Sequence[Sequence[object]]) -> list[tuple]:
    """Factor ``M = P^T L D U`` into elementary operations.

    Returns a list of ops, to be applied in order to ``F`` to obtain
    ``F(M y)``: ``("perm", target)``, ``("shear", i, j, lam)``,
    ``("scale", i, c)``.  Pivots must be units (nonzero rationals or single
    parameter monomials).
    """
    n = len(M)
    U = [[simplify(as_coeff(v)) if isinstance(v, Coeff) else to_rational(v) for v in row]
         for row in M]
    perm = list(range(n))
    L = [[ZERO] * n for _ in range(n)]
    for k in range(n):
        r = next((r for r in range(k, n) if is_unit(U[r][k])), None)
        if r is None:
            raise ValueError("matrix is singular or has no unit pivot")
        if r != k:
            U[k], U[r] = U[r], U[k]
            perm[k], perm[r] = perm[r], perm[k]
            L[k], L[r] = L[r], L[k]
        piv_inv = inverse(U[k][k])
        for i in range(k + 1, n):
            if not U[i][k]:
                continue
            f = simplify(U[i][k] * piv_inv)
            L[i][k] = f
            U[i] = [simplify(U[i][j] - f * U[k][j]) for j in range(n)]
    ops: list[tuple] = []
    # x_{perm[i]} -> x_i
    if perm != list(range(n)):
        target = [0] * n
        for i, p in enumerate(perm):
            target[p] = i
        ops.append(("perm", target))
    for k in range(n):
        for i in range(k + 1, n):
            if L[i][k]:
                ops.append(("shear", i, k, L[i][k]))
    diag = [U[k][k] for k in range(n)]
    for k in range(n):
        if diag[k] != 1:
            ops.append(("scale", k, diag[k]))
    for j in range(n - 1, 0, -1):
        for i in range(j):
            if U[i][j]:
                ops.append(("shear", i, j, simplify(U[i][j] * inverse(diag[i]))))
    return ops


def linear_substitute(s: TruncatedSeries, M: Sequence[Sequence[object]]) -> TruncatedSeries:
    """``s(M y)`` for an invertible square matrix ``M``; degree preserving."""
    if len(M) != s.n or any(len(r) != s.n for r in M):
        raise ValueError(f"matrix must be {s.n}x{s.n}")
    lay = s.layout
    t = dict(s._t)
    for op in elementary_factors(M):
        if op[0] == "perm":
            t = _permute_vars(t, lay, op[1])
        elif op[0] == "shear":
            t = _shear_var(t, lay, op[1], op[2], op[3])
        else:
            t = _scale_var(t, lay, op[1], op[2])
    return TruncatedSeries(s.n, s.N, t, s.exact)


# ------------------------------------------------------------ affine maps


def mat_mul(X, Y):
    n, m, k = len(X), len(Y[0]), len(Y)
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = ZERO
            for l in range(k):
                if X[i][l] and Y[l][j]:
                    acc = acc + X[i][l] * Y[l][j]
            row.append(simplify(acc))
        out.append(row)
    return out


def mat_identity(n: int):
    return [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]


def mat_inverse(M):
    """Exact inverse over Q (or units-only pivots over the parameter ring)."""
    n = len(M)
    A = [[simplify(v) if isinstance(v, Coeff) else to_rational(v) for v in row] + e
         for row, e in zip(M, mat_identity(n))]
    for k in range(n):
        r = next((r for r in range(k, n) if is_unit(A[r][k])), None)
        if r is None:
            raise ValueError("matrix not invertible with unit pivots")
        A[k], A[r] = A[r], A[k]
        inv = inverse(A[k][k])
        A[k] = [simplify(v * inv) for v in A[k]]
        for i in range(n):
            if i != k and A[i][k]:
                f = A[i][k]
                A[i] = [simplify(a - f * b) for a, b in zip(A[i], A[k])]
    return [row[n:] for row in A]


@dataclass(frozen=True)
class AffineTransform:
    """Affine map of ``(x, u)`` space: ``(y, v) = linear @ (x, u) + translation``.

    Rows ``0..n-1`` give ``y``, the last row gives ``v``.  ``label`` names the
    normalization stage that produced it.
    """

    linear: tuple
    translation: tuple = ()
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lin = tuple(tuple(simplify(v) if isinstance(v, Coeff) else to_rational(v) for v in row)
                    for row in self.linear)
        object.__setattr__(self, "linear", lin)
        m = len(lin)
        tr = self.translation or (ZERO,) * m
        object.__setattr__(self, "translation",
                           tuple(simplify(v) if isinstance(v, Coeff) else to_rational(v) for v in tr))

    @property
    def n(self) -> int:
        return len(self.linear) - 1

    @classmethod
    def identity(cls, n: int, label: str = "identity") -> "AffineTransform":
        return cls(tuple(tuple(r) for r in mat_identity(n + 1)), label=label)

    @classmethod
    def from_blocks(cls, A, b=None, c=None, d=ONE, label: str = "") -> "AffineTransform":
        n = len(A)
        b = b or [ZERO] * n
        c = c or [ZERO] * n
        rows = [list(A[i]) + [b[i]] for i in range(n)] + [list(c) + [d]]
        return cls(tuple(tuple(r) for r in rows), label=label)

    def blocks(self):
        n = self.n
        L = self.linear
        A = [list(L[i][:n]) for i in range(n)]
        b = [L[i][n] for i in range(n)]
        c = list(L[n][:n])
        d = L[n][n]
        return A, b, c, d

    def is_origin_fixing(self) -> bool:
        return not any(self.translation)

    def then(self, other: "AffineTransform", label: str | None = None) -> "AffineTransform":
        """Apply ``self`` first, then ``other``."""
        lin = mat_mul(other.linear, self.linear)
        tr = [simplify(sum((other.linear[i][j] * self.translation[j] for j in range(len(lin))), ZERO)
                       + other.translation[i]) for i in range(len(lin))]
        return AffineTransform(tuple(tuple(r) for r in lin), tuple(tr),
                               label if label is not None else f"{self.label}+{other.label}")

    def inverse(self) -> "AffineTransform":
        inv = mat_inverse(self.linear)
        tr = [simplify(-sum((inv[i][j] * self.translation[j] for j in range(len(inv))), ZERO))
              for i in range(len(inv))]
        return AffineTransform(tuple(tuple(r) for r in inv), tuple(tr), f"inverse({self.label})")

    def is_identity(self) -> bool:
        return self.linear == tuple(tuple(r) for r in mat_identity(self.n + 1)) and not any(self.translation)

    def format(self) -> list[str]:
        return ["[" + ", ".join(format_coeff(v) for v in row) + "]" for row in self.linear]
