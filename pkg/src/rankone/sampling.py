"""Seeded random rational data.

Numerators are drawn from -9..9 and denominators from 1..5 so that exact
arithmetic stays cheap; the same seed always gives the same data.
"""

from __future__ import annotations

import random

from gmpy2 import mpq

from .normalform import free_invariant_monomials, normal_form_instance
from .series import AffineTransform, ZERO, mat_inverse


def rng_for(seed: int, *salt) -> random.Random:
    return random.Random(repr((seed,) + salt))


def random_rational(rng: random.Random, nonzero: bool = False) -> mpq:
    while True:
        q = mpq(rng.randint(-9, 9), rng.randint(1, 5))
        if q or not nonzero:
            return q


def random_invariants(n: int, N: int, rng: random.Random, branch_zero: bool | None = None) -> dict:
    """Plain coefficients for the free normal-form monomials.

    ``branch_zero`` forces the ``x1^(n+2) x_n`` coefficient to vanish
    (True) or not (False).
    """
    inv = {s: random_rational(rng) for s in free_invariant_monomials(n, N)}
    key = (n + 2,) + (0,) * (n - 2) + (1,)
    if branch_zero is not None and key in inv:
        inv[key] = ZERO if branch_zero else random_rational(rng, nonzero=True)
    return inv


def random_affine(n: int, rng: random.Random, u_shear: bool = True) -> AffineTransform:
    """Origin-fixing affine map with invertible ``A``, nonzero ``d`` and ``c = 0``."""
    while True:
        A = [[random_rational(rng) for _ in range(n)] for _ in range(n)]
        try:
            mat_inverse(A)
            break
        except ValueError:
            continue
    b = [random_rational(rng) for _ in range(n)] if u_shear else None
    return AffineTransform.from_blocks(A, b=b, d=random_rational(rng, nonzero=True), label="random")


def random_rank1_graph(n: int, N: int, rng: random.Random):
    """A nondegenerate rank one graph in general position.

    Returns ``(F, F0, T)`` with ``F0`` a normal form instance and ``F`` its
    image under the random map ``T``.
    """
    from .normalform import transform_graph
    F0 = normal_form_instance(n, N, random_invariants(n, N, rng), max_grade=None)
    T = random_affine(n, rng)
    return transform_graph(F0, T), F0, T
