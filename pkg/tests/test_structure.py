import pytest
from hypothesis import given, settings, strategies as st

from formgate import FormulaStructure, classify_match


def test_canonical_string_ordering():
    s = FormulaStructure((2,), (2,), False)
    assert s.canonical_string == "P2(x) + I2(x)"
    s = FormulaStructure((5, 1), (4, 2), True)
    assert s.canonical_string == "P1(x) + P5(x) + I2(x) + I4(x) + sin(x)"


def test_empty_structure_renders_zero():
    assert FormulaStructure().canonical_string == "0"
    assert FormulaStructure().is_empty


def test_structural_equality_iff_string_equality():
    a = FormulaStructure((1, 2), (3,), False)
    b = FormulaStructure((2, 1, 2), (3,), False)  # duplicates collapse
    assert a == b
    assert a.canonical_string == b.canonical_string
    c = FormulaStructure((1,), (3,), False)
    assert c != a and c.canonical_string != a.canonical_string


@settings(max_examples=50, deadline=None)
@given(
    poly=st.sets(st.integers(1, 5)),
    inter=st.sets(st.integers(2, 4)),
    sin=st.booleans(),
)
def test_canonical_string_is_pure_function_of_fields(poly, inter, sin):
    a = FormulaStructure(tuple(poly), tuple(inter), sin)
    b = FormulaStructure(tuple(sorted(poly, reverse=True)), tuple(inter), sin)
    assert a == b and a.canonical_string == b.canonical_string
    assert (a.canonical_string == FormulaStructure().canonical_string) == a.is_empty


def test_order_bounds_validated():
    with pytest.raises(ValueError):
        FormulaStructure((0,), (), False)
    with pytest.raises(ValueError):
        FormulaStructure((), (1,), False)


def test_match_classification():
    truth = FormulaStructure((2,), (2,), False)
    assert classify_match(FormulaStructure((2,), (2,), False), truth) == "exact"
    assert classify_match(FormulaStructure((2, 4), (2,), False), truth) == "superset"
    assert classify_match(FormulaStructure((2,), (2,), True), truth) == "superset"
    assert classify_match(FormulaStructure((4,), (2,), False), truth) == "miss"
    assert classify_match(FormulaStructure(), truth) == "miss"


def test_match_is_coefficient_blind_by_construction():
    # structures carry no coefficients at all; identical term sets match
    assert classify_match(
        FormulaStructure((3, 2), (), False), FormulaStructure((2, 3), (), False)
    ) == "exact"


def test_round_trip_dict():
    s = FormulaStructure((1, 4), (2, 3), True)
    assert FormulaStructure.from_dict(s.to_dict()) == s
