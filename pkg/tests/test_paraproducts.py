import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramodel.grading import ScalingVector
from paramodel.harness import break_structure
from paramodel.lpanalysis import GridField, GridSpec, build_partition, constant_field, lp_block
from paramodel.models import ModelledField, make_synthetic_field, pam_model, pam_modelled, poly_lift, poly_model
from paramodel.paraproducts import (
    ParaproductError,
    ParaproductTermLog,
    bony_para,
    fit_decay,
    residual_curve,
    sharp_remainder,
    structure_para,
    structure_para_bruteforce,
    structure_residual,
    structure_residual_quadrature,
)

SQUARE = GridSpec((64, 64), ScalingVector((1, 1)))
EPS = np.finfo(float).eps


def rough(spec, seed, alpha=0.75, cutoff=None):
    return make_synthetic_field(spec, alpha, seed, cutoff or spec.N[0] // 4)


def pam_field(spec, seed=0, cutoff=None):
    P = build_partition(spec)
    m = pam_model(spec.s, Fraction(3, 4), Fraction(6, 5), rough(spec, seed, 0.75, cutoff))
    F = pam_modelled(rough(spec, seed + 1, 1.2, cutoff), rough(spec, seed + 2, 1.5, cutoff), m, P=P)
    return m, F, P


def test_bony_paraproduct_with_unit_low_factor():
    P = build_partition(SQUARE)
    g = rough(SQUARE, 3)
    out = bony_para(constant_field(SQUARE, 1.0), g, P)
    expected = g - lp_block(g, -1, P) - lp_block(g, 0, P)
    assert np.max(np.abs(out.samples - expected.samples)) <= 1e-13 * g.sup()


def test_bony_paraproduct_with_constant_high_factor():
    P = build_partition(SQUARE)
    out = bony_para(rough(SQUARE, 3), constant_field(SQUARE, 2.0), P)
    assert np.max(np.abs(out.samples)) <= 1e-15


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 40))
def test_bony_paraproduct_is_bilinear(a, b, seed):
    P = build_partition(SQUARE)
    f1, f2, g = rough(SQUARE, seed), rough(SQUARE, seed + 100), rough(SQUARE, seed + 200)
    lhs = bony_para(f1 * a + f2 * b, g, P).samples
    rhs = a * bony_para(f1, g, P).samples + b * bony_para(f2, g, P).samples
    scale = (abs(a) + abs(b) + 1) * f1.sup() * g.sup() * 10
    assert np.max(np.abs(lhs - rhs)) <= 64 * EPS * scale
    lhs = bony_para(f1, g * a + f2 * b, P).samples
    rhs = a * bony_para(f1, g, P).samples + b * bony_para(f1, f2, P).samples
    assert np.max(np.abs(lhs - rhs)) <= 64 * EPS * scale


def test_bony_log_terms_sum_to_the_result_and_stay_annular():
    P = build_partition(SQUARE)
    log = ParaproductTermLog()
    out = bony_para(rough(SQUARE, 1), rough(SQUARE, 2), P, log)
    assert np.max(np.abs(log.total(out).samples - out.samples)) <= 8 * EPS * max(1.0, out.sup())
    assert log.scales == list(range(1, P.J_max + 1))
    assert max(log.leakage) <= 1e-10
    buf = io.StringIO()
    log.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "label,j,sup,leakage,margin"


def test_bony_paraproduct_rejects_mismatched_grids():
    P = build_partition(SQUARE)
    other = GridSpec((32, 32), ScalingVector((1, 1)))
    with pytest.raises(ParaproductError):
        bony_para(rough(SQUARE, 1), rough(other, 2), P)


def test_polynomial_structure_paraproducts_vanish():
    gamma = Fraction(5, 2)
    m = poly_model((1, 1), gamma)
    P = build_partition(SQUARE)
    F = poly_lift(rough(SQUARE, 1, 2.5, 8), gamma, m)
    for a in m.space.homogeneities:
        assert not np.any(structure_para(F, m, a, P).samples)
        sharp = sharp_remainder(F, m, gamma, P)[a]
        assert np.array_equal(sharp.samples, F.sector(a).samples)


def test_pam_paraproducts_per_sector():
    m, F, P = pam_field(SQUARE)
    unit = structure_para(F, m, 0, P)
    bony = bony_para(F.component("I(Xi)"), m.params["noise"], P)
    assert np.max(np.abs(unit.samples - bony.samples)) <= 8 * EPS * max(1.0, bony.sup())
    assert not np.any(structure_para(F, m, Fraction(3, 4), P).samples)
    assert not np.any(structure_para(F, m, 1, P).samples)
    with pytest.raises(ParaproductError):
        structure_para(F, m, Fraction(1, 2), P)


@given(st.floats(-3, 3), st.integers(0, 20))
def test_structure_paraproduct_is_linear_in_the_field(c, seed):
    m, F, P = pam_field(SQUARE, seed)
    _, G, _ = pam_field(SQUARE, seed + 50)
    G = ModelledField(m.space, G.field)
    lhs = structure_para(F * c + G, m, 0, P).samples
    rhs = c * structure_para(F, m, 0, P).samples + structure_para(G, m, 0, P).samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (abs(c) + 1) * max(1.0, np.abs(rhs).max())


def test_sharp_remainder_of_zero_is_zero():
    m, F, P = pam_field(SQUARE)
    zero = ModelledField(m.space, GridField(SQUARE, np.zeros_like(F.field.samples)))
    assert all(not np.any(v.samples) for v in sharp_remainder(zero, m, m.gamma, P).values())


# frozen direct double-sum evaluation on an 8x8 grid (J_max = 1), unit sector
BRUTE_FORCE_8x8 = {(0, 0): -0.16585553051028248, (3, 5): 0.043411645267982024, (7, 2): -0.006349366346707376}
BRUTE_FORCE_8x8_ENERGY = 0.3225830489115931


def test_structure_paraproduct_matches_the_direct_double_sum_on_8x8():
    spec = GridSpec((8, 8), ScalingVector((1, 1)))
    P = build_partition(spec)
    assert P.J_max == 1
    m = pam_model((1, 1), Fraction(3, 4), Fraction(6, 5), make_synthetic_field(spec, 0.75, 0, 3))
    F = pam_modelled(make_synthetic_field(spec, 1.2, 1, 3), make_synthetic_field(spec, 1.5, 2, 3), m, P=P)
    fast = structure_para(F, m, 0, P).samples[0]
    for idx, value in BRUTE_FORCE_8x8.items():
        assert fast[idx] == pytest.approx(value, abs=1e-10)
    assert float(np.sum(fast**2)) == pytest.approx(BRUTE_FORCE_8x8_ENERGY, rel=1e-10)
    for a in m.space.homogeneities:
        slow = structure_para_bruteforce(F, m, a, P).samples
        assert np.max(np.abs(structure_para(F, m, a, P).samples - slow)) <= 1e-10


def test_residual_matches_grid_quadrature_for_k_zero():
    spec = GridSpec((32, 32), ScalingVector((1, 1)))
    m, F, P = pam_field(spec)
    for x in [(0, 0), (5, 17), (31, 2)]:
        for a in (0, Fraction(3, 4), 1):
            for N in range(P.J_max + 1):
                fast = structure_residual(F, m, x, a, (0, 0), N, P)
                slow = structure_residual_quadrature(F, m, x, a, (0, 0), N, P)
                assert np.max(np.abs(fast - slow)) <= 1e-12 * max(1.0, F.field.sup())


def test_residual_rejects_inadmissible_arguments():
    m, F, P = pam_field(SQUARE)
    with pytest.raises(ParaproductError):
        structure_residual(F, m, (0, 0), 0, (1, 1), 3, P)
    with pytest.raises(ParaproductError):
        structure_residual(F, m, (0, 0), 0, (0, 0), P.J_max + 1, P)
    with pytest.raises(ParaproductError):
        structure_residual(F, m, (0, 0), Fraction(1, 3), (0, 0), 2, P)


def test_constant_offset_in_a_polynomial_sector_shifts_the_residual_exactly():
    m, F, P = pam_field(SQUARE)
    c = 0.37
    comps = {n: F.component(n) for n in m.space.symbols}
    comps["X^(1,0)"] = comps["X^(1,0)"] + constant_field(SQUARE, c)
    Fb = ModelledField.from_components(m.space, comps)
    for N in range(2, P.J_max + 1):
        for x in [(3, 4), (40, 11)]:
            diff = structure_residual(Fb, m, x, 0, (1, 0), N, P) - structure_residual(F, m, x, 0, (1, 0), N, P)
            assert diff[0] == pytest.approx(-c, abs=1e-9)


def test_fit_decay_recovers_a_power_law():
    scales = list(range(3, 10))
    values = [5.0 * 2.0 ** (-0.7 * n) for n in scales]
    exponent, rms, usable = fit_decay(scales, values, 0.0)
    assert exponent == pytest.approx(0.7, abs=1e-12) and rms <= 1e-12 and all(usable)
    exponent, _, usable = fit_decay(scales, values, values[3])
    assert exponent is None and sum(usable) == 3


def test_polynomial_lift_residuals_decay_at_the_nominal_rate():
    spec = GridSpec((2**14,), ScalingVector((1,)))
    gamma = Fraction(3, 2)
    m = poly_model((1,), gamma)
    P = build_partition(spec)
    F = poly_lift(make_synthetic_field(spec, 1.5, 0, spec.N[0] // 4), gamma, m)
    pts = np.random.default_rng(0).integers(0, spec.N[0], (8, 1))
    for a, k in [(Fraction(0), (0,)), (Fraction(0), (1,)), (Fraction(1), (0,))]:
        c = residual_curve(F, m, pts, a, k, P, N_min=P.J_max - 5)
        assert c.claimed
        assert c.exponent >= c.expected - 0.25


@pytest.mark.parametrize("kind", ["checkerboard", "poly_offset"])
def test_broken_fields_stop_decaying(kind):
    spec = GridSpec((256, 256), ScalingVector((1, 1)))
    m, F, P = pam_field(spec)
    Fb, (a, k) = break_structure(F, m, kind)
    pts = np.random.default_rng(1).integers(0, 256, (8, 2))
    c = residual_curve(Fb, m, pts, a, k, P, N_min=P.J_max - 4)
    assert c.claimed and c.exponent <= 0.1
