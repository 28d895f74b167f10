import json

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from rankone.fileformat import HypersurfaceSpec, SpecError, dump_json, parse_spec, serialize_spec
from rankone.sampling import random_rank1_graph, rng_for
from rankone.series import make_series, sym

CANONICAL = """{
  "dimension": 2,
  "truncation_order": 4,
  "mode": "symbolic",
  "coefficients": [
    {
      "exponents": [2, 0],
      "value": "1/2"
    },
    {
      "exponents": [2, 1],
      "value": "a - 1/3*F[4,0]"
    }
  ],
  "metadata": {
    "note": "example"
  }
}
"""


def test_canonical_text_round_trips_byte_for_byte():
    spec = parse_spec(CANONICAL)
    assert serialize_spec(spec) == CANONICAL
    F = spec.to_series()
    assert F.get((2, 1)) == sym("a") - sym("F[4,0]") * mpq(1, 3)


@settings(max_examples=100)
@given(seed=st.integers(0, 2 ** 32), n=st.integers(2, 4))
def test_series_round_trip(seed, n):
    F, _, _ = random_rank1_graph(n, n + 2, rng_for(seed, "ff", n))
    text = serialize_spec(HypersurfaceSpec.from_series(F, {"seed": str(seed)}))
    spec = parse_spec(text)
    assert spec.mode == "numeric"
    assert spec.to_series() == F
    assert serialize_spec(spec) == text


def _spec(**over):
    base = {"dimension": 2, "truncation_order": 3, "coefficients": [{"exponents": [2, 0], "value": "1/2"}]}
    base.update(over)
    return json.dumps(base)


@pytest.mark.parametrize("text, where", [
    ("{", "line 1"),
    ("[]", "top level"),
    (json.dumps({"dimension": 2, "coefficients": []}), "truncation_order"),
    (_spec(dimension=0), "dimension"),
    (_spec(dimension=True), "dimension"),
    (_spec(truncation_order=-1), "truncation_order"),
    (_spec(mode="fuzzy"), "mode"),
    (_spec(metadata={"a": 1}), "metadata"),
    (_spec(coefficients={}), "coefficients"),
    (_spec(coefficients=[{"exponents": [2, 0]}]), "coefficients[0]"),
    (_spec(coefficients=[{"exponents": [2], "value": "1"}]), "coefficients[0].exponents"),
    (_spec(coefficients=[{"exponents": [2, 2], "value": "1"}]), "coefficients[0].exponents"),
    (_spec(coefficients=[{"exponents": [2, 0], "value": 1}]), "coefficients[0].value"),
    (_spec(coefficients=[{"exponents": [2, 0], "value": "1 +"}]), "coefficients"),
    (_spec(coefficients=[{"exponents": [2, 0], "value": "a"}]), "mode"),
])
def test_diagnostics_name_the_offending_field(text, where):
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert str(exc.value).startswith(where)


def test_symbolic_mode_accepts_parameters():
    spec = parse_spec(_spec(mode="symbolic", coefficients=[{"exponents": [2, 0], "value": "1/2*a"}]))
    assert spec.to_series() == make_series(2, 3, [((2, 0), sym("a") * mpq(1, 2))])


def test_dump_json_layout():
    assert dump_json({"a": [1, 2], "b": {}, "c": [{"d": None}]}) == (
        '{\n  "a": [1, 2],\n  "b": {},\n  "c": [\n    {\n      "d": null\n    }\n  ]\n}\n')
