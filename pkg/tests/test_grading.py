import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramodel.grading import (
    GradingError,
    HomogeneitySet,
    ModelSpace,
    ScalingVector,
    StructureElement,
    aniso_norm,
    as_fraction,
    gamma_apply,
    index_set_below,
    index_set_boundary,
    multiindex_weight,
    parse_poly_symbol,
    poly_symbol,
    sector_norm,
    triangularity_violations,
)

scalings = st.lists(st.integers(1, 3), min_size=1, max_size=3).map(tuple)


@pytest.mark.parametrize(
    "s, x, expected",
    [((2, 1, 1), (4, 0, 0), 2.0), ((1, 1), (0, 0), 0.0), ((2, 1), (0.25, 0.5), 1.0)],
)
def test_aniso_norm_examples(s, x, expected):
    assert aniso_norm(np.array(x, float), ScalingVector(s)) == pytest.approx(expected, abs=1e-15)


@given(scalings, st.floats(0.01, 10.0), st.data())
def test_aniso_norm_is_homogeneous_under_scaled_dilation(s, lam, data):
    x = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=len(s), max_size=len(s))))
    scaled = x * lam ** np.array(s, float)
    assert aniso_norm(scaled, s) == pytest.approx(lam * aniso_norm(x, s), rel=1e-12, abs=1e-12)


def test_aniso_norm_stacks_and_wraps():
    s = ScalingVector((1, 1))
    pts = np.array([[0.9, 0.0], [0.25, 0.25]])
    assert np.allclose(aniso_norm(pts, s), [0.9, 0.5])
    assert np.allclose(aniso_norm(pts, s, wrap=1.0), [0.1, 0.5])


@pytest.mark.parametrize("k, s, expected", [((2, 1), (2, 1), 5), ((0, 0), (2, 1), 0), ((0, 3), (2, 1), 3)])
def test_multiindex_weight_examples(k, s, expected):
    assert multiindex_weight(k, ScalingVector(s)) == expected


@given(scalings, st.data())
def test_multiindex_weight_is_additive(s, data):
    ks = st.lists(st.integers(0, 4), min_size=len(s), max_size=len(s))
    k, l = data.draw(ks), data.draw(ks)
    assert multiindex_weight([a + b for a, b in zip(k, l)], s) == multiindex_weight(k, s) + multiindex_weight(l, s)


def test_index_set_below_examples():
    assert set(index_set_below(1.2, ScalingVector((2, 1, 1)))) == {(0, 0, 0), (0, 1, 0), (0, 0, 1)}
    assert index_set_below(0.5, ScalingVector((1, 1))) == [(0, 0)]
    assert index_set_below(-1, ScalingVector((1, 1))) == []


def test_index_set_boundary_examples():
    assert set(index_set_boundary(0.5, ScalingVector((1, 1)))) == {(1, 0), (0, 1)}
    assert index_set_boundary(2.5, ScalingVector((1,))) == [(3,)]


def test_index_set_boundary_matches_brute_force_enumeration():
    # oracle: all k with |k|_s <= gamma + max(s), filtered by the boundary definition;
    # (1, 1) belongs to the set because (1, 1) - e_1 = (0, 1) has weight 1 < 3/2
    s, gamma = ScalingVector((2, 1)), Fraction(3, 2)
    brute = set()
    for k in itertools.product(range(6), repeat=2):
        w = multiindex_weight(k, s)
        if w > gamma + max(s.s):
            continue
        m = next(i for i, v in enumerate(k) if v) if any(k) else None
        if m is None or w <= gamma:
            continue
        lower = list(k)
        lower[m] -= 1
        if multiindex_weight(lower, s) < gamma:
            brute.add(k)
    assert brute == {(1, 0), (0, 2), (1, 1)}
    assert set(index_set_boundary(gamma, s)) == brute


@given(scalings, st.fractions(Fraction(1, 10), Fraction(5)).filter(lambda g: g.denominator != 1))
def test_boundary_elements_cross_gamma_in_first_nonzero_coordinate(s, gamma):
    s = ScalingVector(s)
    below = set(index_set_below(gamma, s))
    for k in index_set_boundary(gamma, s):
        m = next(i for i, v in enumerate(k) if v)
        lower = list(k)
        lower[m] -= 1
        assert multiindex_weight(k, s) > gamma
        assert tuple(lower) in below


def test_index_set_boundary_rejects_integer_and_nonpositive_gamma():
    with pytest.raises(GradingError):
        index_set_boundary(2, ScalingVector((1, 1)))
    with pytest.raises(GradingError):
        index_set_boundary(-0.5, ScalingVector((1, 1)))


def test_homogeneity_set_rejects_gamma_in_shifted_set():
    with pytest.raises(GradingError, match="A \\+ N"):
        HomogeneitySet((Fraction(0), Fraction(3, 4)), Fraction(7, 4))
    with pytest.raises(GradingError):
        HomogeneitySet((Fraction(1, 2),), Fraction(6, 5))
    hs = HomogeneitySet((0, Fraction(3, 4), 1), Fraction(6, 5))
    assert hs.A == (0, Fraction(3, 4), 1)


def test_as_fraction_is_exact_for_rationals_and_rounds_floats():
    assert as_fraction("6/5") == Fraction(6, 5)
    assert as_fraction(1.2) == Fraction(6, 5)


def _space():
    return ModelSpace({0: ["1"], 1: ["X^(1,0)", "X^(0,1)"]})


def test_sector_norm_examples():
    space = _space()
    assert sector_norm(space.vector({"1": 3.0}), 0, space) == 3.0
    assert sector_norm(space.vector({"X^(1,0)": 1.0, "X^(0,1)": -2.0}), 1, space) == 3.0
    assert sector_norm(space.vector({"1": 5.0}), 1, space) == 0.0


def test_structure_element_identity_and_polynomial_shift():
    space = _space()
    tau = space.vector({"1": 0.3, "X^(1,0)": 2.0, "X^(0,1)": -1.0})
    assert np.array_equal(gamma_apply(StructureElement.identity(space), tau), tau)
    h = (0.2, -0.7)
    m = np.eye(3)
    m[space.index["1"], space.index["X^(1,0)"]] = h[0]
    m[space.index["1"], space.index["X^(0,1)"]] = h[1]
    shift = StructureElement(space, m)
    out = shift.apply(space.vector({"X^(1,0)": 1.0}))
    assert np.allclose(out, space.vector({"X^(1,0)": 1.0, "1": h[0]}))


def test_structure_element_rejects_non_triangular_matrices():
    space = _space()
    m = np.eye(3)
    m[space.index["X^(1,0)"], space.index["1"]] = 1.0
    assert triangularity_violations(space, m) == [("X^(1,0)", "1")]
    with pytest.raises(GradingError):
        StructureElement(space, m)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=3).filter(any))
def test_poly_symbol_round_trip(k):
    k = tuple(k)
    assert parse_poly_symbol(poly_symbol(k)) == k


def test_zero_multiindex_is_the_unit_symbol():
    assert poly_symbol((0, 0)) == ModelSpace.UNIT
    assert parse_poly_symbol(ModelSpace.UNIT) is None
