from fractions import Fraction

import numpy as np
import pytest

from paramodel.grading import ModelSpace, ScalingVector, gamma_apply
from paramodel.lpanalysis import GridSpec, build_partition, constant_field, spectral_derivative
from paramodel.models import (
    NOISE,
    ModelError,
    check_model,
    kernel_consistency,
    load_model,
    make_synthetic_field,
    pam_model,
    pam_modelled,
    poly_lift,
    poly_model,
)
from paramodel.norms import besov_norm, taylor_remainder
from paramodel.paraproducts import bony_para, sharp_remainder, structure_para

SQUARE = GridSpec((64, 64), ScalingVector((1, 1)))


def pam_setup(spec=SQUARE, seed=0, cutoff=None):
    cutoff = cutoff or spec.N[0] // 4
    noise = make_synthetic_field(spec, 0.75, seed, cutoff)
    return pam_model(spec.s, Fraction(3, 4), Fraction(6, 5), noise)


def test_poly_model_symbols_for_three_halves():
    m = poly_model((1, 1), Fraction(3, 2))
    assert set(m.space.symbols) == {ModelSpace.UNIT, "X^(1,0)", "X^(0,1)"}
    assert m.homogeneities.A == (Fraction(0), Fraction(1))


def test_poly_model_rejects_integer_gamma():
    with pytest.raises(ModelError):
        poly_model((1, 1), 2)


def test_poly_model_translates_first_order_symbols():
    m = poly_model((1, 1), Fraction(3, 2))
    x, y = np.array([0.1, 0.7]), np.array([0.4, 0.2])
    G = m.gamma_at(y, x)
    e = np.zeros(m.space.dim)
    e[m.space.index["X^(1,0)"]] = 1.0
    out = gamma_apply(G, e)
    assert out[m.space.index[ModelSpace.UNIT]] == pytest.approx(0.3, abs=1e-15)


@pytest.mark.parametrize("s, gamma", [((1, 1), Fraction(5, 2)), ((2, 1), Fraction(7, 2)), ((2, 1, 1), Fraction(5, 2))])
def test_poly_model_satisfies_the_group_law(s, gamma):
    m = poly_model(s, gamma)
    rep = check_model(m, on_grid=False)
    assert rep.chen_defect <= 1e-12
    assert rep.identity_defect == 0.0
    assert rep.triangularity_violations == 0
    assert kernel_consistency(m, on_grid=False) <= 1e-12


def test_pam_model_translates_the_noise_symbol():
    m = pam_setup()
    noise = m.params["noise"]
    x, y = (3, 5), (40, 17)
    G = m.gamma_at(SQUARE.point(y), SQUARE.point(x))
    e = np.zeros(m.space.dim)
    e[m.space.index[NOISE]] = 1.0
    out = gamma_apply(G, e)
    expected = noise.samples[0][y] - noise.samples[0][x]
    assert out[m.space.index[ModelSpace.UNIT]] == pytest.approx(expected, abs=1e-14)
    assert out[m.space.index[NOISE]] == 1.0


def test_pam_model_chen_identity_and_kernel():
    m = pam_setup()
    rep = check_model(m)
    assert rep.chen_defect <= 1e-12
    assert rep.identity_defect == 0.0
    assert rep.triangularity_violations == 0
    assert kernel_consistency(m, n_pairs=1000) <= 1e-12


def test_pam_model_rejects_bad_homogeneities():
    noise = make_synthetic_field(SQUARE, 0.75, 0, 8)
    with pytest.raises(ModelError):
        pam_model((1, 1), Fraction(3, 4), Fraction(9, 5), noise)


def test_pam_gamma_bound_is_stable_under_grid_doubling():
    bounds = [check_model(pam_setup(GridSpec((N, N), ScalingVector((1, 1))))).gamma_bound for N in (64, 128, 256)]
    for a, b in zip(bounds, bounds[1:]):
        assert 0.5 <= b / a <= 2.0


def test_synthetic_field_is_deterministic_per_seed():
    a = make_synthetic_field(SQUARE, 0.5, 7, 16)
    b = make_synthetic_field(SQUARE, 0.5, 7, 16)
    c = make_synthetic_field(SQUARE, 0.5, 8, 16)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert not np.array_equal(a.samples, c.samples)


def test_synthetic_field_rejects_cutoff_beyond_band():
    with pytest.raises(ModelError):
        make_synthetic_field(SQUARE, 0.5, 0, 32)


def test_synthetic_field_roughness_calibration():
    spec = GridSpec((256, 256), ScalingVector((1, 1)))
    P = build_partition(spec)
    at, above = [], []
    for cutoff in (16, 32, 64):
        f = make_synthetic_field(spec, 0.75, 0, cutoff)
        at.append(besov_norm(f, 0.75, P).value)
        above.append(besov_norm(f, 1.25, P).value)
    for a, b in zip(at, at[1:]):
        assert b / a <= 2.0
    for a, b in zip(above, above[1:]):
        assert b / a >= 1.3


def test_poly_lift_channels():
    m = poly_model((1, 1), Fraction(5, 2))
    f = make_synthetic_field(SQUARE, 2.0, 1, 8)
    F = poly_lift(f, Fraction(5, 2), m)
    assert np.array_equal(F.component(ModelSpace.UNIT).samples, f.samples)
    d11 = spectral_derivative(f, (1, 1)).samples
    assert np.array_equal(F.component("X^(1,1)").samples, d11)
    d20 = spectral_derivative(f, (2, 0)).samples / 2.0
    assert np.allclose(F.component("X^(2,0)").samples, d20, rtol=0, atol=1e-15 * np.abs(d20).max())
    C = poly_lift(constant_field(SQUARE, 2.5), Fraction(5, 2), m)
    assert np.allclose(C.component(ModelSpace.UNIT).samples, 2.5)
    others = [n for n in m.space.symbols if n != ModelSpace.UNIT]
    assert all(np.max(np.abs(C.component(n).samples)) <= 1e-12 for n in others)


@pytest.mark.parametrize("s, N, gamma", [((1, 1), (64, 64), Fraction(5, 2)), ((2, 1), (64, 16), Fraction(7, 2))])
def test_poly_lift_defects_are_taylor_remainders(s, N, gamma):
    spec = GridSpec(N, ScalingVector(s))
    m = poly_model(s, gamma)
    f = make_synthetic_field(spec, 2.0, 3, 3)
    F = poly_lift(f, gamma, m)
    rng = np.random.default_rng(0)
    xs = rng.integers(0, spec.N, (200, 2)) / np.asarray(spec.N)
    ys = xs + rng.integers(-8, 9, (200, 2)) / np.asarray(spec.N)
    G = m.gamma_batch(xs, ys)
    defect = F.values_at(ys).T - np.einsum("pij,pj->pi", G, F.values_at(xs).T)
    rem = taylor_remainder(f, xs, ys - xs, gamma)[0]
    unit = m.space.index[ModelSpace.UNIT]
    assert np.max(np.abs(defect[:, unit] - rem)) <= 1e-8 * max(1.0, np.abs(rem).max())


def test_poly_lift_rejects_mismatched_order():
    m = poly_model((1, 1), Fraction(3, 2))
    with pytest.raises(ModelError):
        poly_lift(constant_field(SQUARE), Fraction(5, 2), m)


def test_pam_modelled_with_vanishing_coefficient():
    m = pam_setup()
    w = make_synthetic_field(SQUARE, 1.2, 2, 16)
    F = pam_modelled(constant_field(SQUARE, 0.0), w, m)
    assert np.max(np.abs(F.component(ModelSpace.UNIT).samples - w.samples)) <= 1e-15
    dw = spectral_derivative(w, (1, 0)).samples
    assert np.max(np.abs(F.component("X^(1,0)").samples - dw)) <= 1e-12 * np.abs(dw).max()


def test_pam_sharp_remainder_of_the_unit_sector_is_w():
    m = pam_setup()
    P = build_partition(SQUARE)
    g = make_synthetic_field(SQUARE, 1.2, 4, 16)
    w = make_synthetic_field(SQUARE, 1.2, 5, 16)
    F = pam_modelled(g, w, m, P=P)
    sharp = sharp_remainder(F, m, m.gamma, P)
    assert np.max(np.abs(sharp[Fraction(0)].samples - w.samples)) <= 1e-12 * w.sup()


def test_pam_kernel_paraproduct_equals_bony_paraproduct():
    m = pam_setup()
    P = build_partition(SQUARE)
    g = make_synthetic_field(SQUARE, 1.2, 4, 16)
    F = pam_modelled(g, make_synthetic_field(SQUARE, 1.2, 5, 16), m, P=P)
    a = structure_para(F, m, 0, P)
    b = bony_para(g, m.params["noise"], P)
    assert np.max(np.abs(a.samples[0] - b.samples[0])) <= 8 * np.finfo(float).eps * max(1.0, b.sup())


def test_model_description_round_trip(tmp_path):
    m = pam_setup()
    from paramodel.models import save_model

    path = tmp_path / "pam.json"
    save_model(m, str(path))
    loaded = load_model(str(path))
    assert loaded.space == m.space and loaded.gamma == m.gamma
    rng = np.random.default_rng(1)
    u = rng.integers(0, 64, (100, 2)) / 64
    v = rng.integers(0, 64, (100, 2)) / 64
    assert np.max(np.abs(loaded.gamma_batch(u, v) - m.gamma_batch(u, v))) <= 1e-14


def test_model_description_rejects_other_formats(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ModelError):
        load_model(str(path))
