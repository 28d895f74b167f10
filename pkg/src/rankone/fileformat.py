"""Hypersurface spec files and deterministic report serialization.

A spec file is a JSON object::

    {
      "dimension": 3,
      "truncation_order": 6,
      "mode": "numeric",
      "coefficients": [{"exponents": [2, 0, 0], "value": "1/2"}, ...],
      "metadata": {"source": "..."}
    }

Numeric values are ``"p/q"`` strings (or integers written as ``"p"``).
Symbolic values are sums of products, e.g. ``"1/24*F[4,0]*a^2 - b"``, with
parameter names made of letters, digits and ``[i,j,...]`` index lists.
Coefficients are written in graded-lex order of the exponents and keys in a
fixed order, so canonical input round-trips byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .series import Coeff, TruncatedSeries, format_coeff, make_series


class SpecError(ValueError):
    pass


MODES = ("numeric", "symbolic")


@dataclass
class HypersurfaceSpec:
    dimension: int
    truncation_order: int
    mode: str = "numeric"
    coefficients: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_series(self) -> TruncatedSeries:
        try:
            return make_series(self.dimension, self.truncation_order,
                               [(c["exponents"], c["value"]) for c in self.coefficients])
        except ValueError as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def from_series(cls, F: TruncatedSeries, metadata: dict | None = None) -> "HypersurfaceSpec":
        symbolic = any(isinstance(c, Coeff) for _, c in F.items())
        coeffs = [{"exponents": list(s), "value": format_coeff(c)} for s, c in F.items()]
        return cls(F.n, F.N, "symbolic" if symbolic else "numeric", coeffs, dict(metadata or {}))


def _fail(where: str, msg: str):
    raise SpecError(f"{where}: {msg}")


def parse_spec(text: str) -> HypersurfaceSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        _fail("top level", "expected a JSON object")
    for key in ("dimension", "truncation_order", "coefficients"):
        if key not in raw:
            _fail(key, "missing field")
    n, N = raw["dimension"], raw["truncation_order"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        _fail("dimension", f"expected a positive integer, got {n!r}")
    if not isinstance(N, int) or isinstance(N, bool) or N < 0:
        _fail("truncation_order", f"expected a nonnegative integer, got {N!r}")
    mode = raw.get("mode", "numeric")
    if mode not in MODES:
        _fail("mode", f"expected one of {', '.join(MODES)}, got {mode!r}")
    meta = raw.get("metadata", {})
    if not isinstance(meta, dict) or not all(isinstance(v, str) for v in meta.values()):
        _fail("metadata", "expected a map of strings")
    if not isinstance(raw["coefficients"], list):
        _fail("coefficients", "expected a list")
    coeffs = []
    for k, c in enumerate(raw["coefficients"]):
        where = f"coefficients[{k}]"
        if not isinstance(c, dict) or set(c) != {"exponents", "value"}:
            _fail(where, "expected an object with exactly 'exponents' and 'value'")
        e = c["exponents"]
        if (not isinstance(e, list) or len(e) != n
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in e)):
            _fail(where + ".exponents", f"expected {n} nonnegative integers, got {e!r}")
        if sum(e) > N:
            _fail(where + ".exponents", f"degree {sum(e)} exceeds truncation_order {N}")
        v = c["value"]
        if not isinstance(v, str):
            _fail(where + ".value", f"expected a string, got {v!r}")
        coeffs.append({"exponents": list(e), "value": v})
    spec = HypersurfaceSpec(n, N, mode, coeffs, dict(meta))
    try:
        F = spec.to_series()
    except SpecError as exc:
        _fail("coefficients", str(exc))
    if mode == "numeric" and any(isinstance(c, Coeff) for _, c in F.items()):
        _fail("mode", "numeric spec contains parameter expressions")
    return spec


def serialize_spec(spec: HypersurfaceSpec) -> str:
    order = sorted(spec.coefficients, key=lambda c: (sum(c["exponents"]), [-v for v in c["exponents"]]))
    obj = {
        "dimension": spec.dimension,
        "truncation_order": spec.truncation_order,
        "mode": spec.mode,
        "coefficients": [{"exponents": c["exponents"], "value": c["value"]} for c in order],
        "metadata": dict(sorted(spec.metadata.items())),
    }
    return dump_json(obj)


def dump_json(obj) -> str:
    """Stable JSON: two-space indent, lists of scalars kept on one line."""
    return _encode(obj, 0) + "\n"


def _encode(obj, depth: int) -> str:
    pad = "  " * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, depth + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * depth + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(json.dumps(v) for v in obj) + "]"
        items = [pad + _encode(v, depth + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * depth + "]"
    return json.dumps(obj)
