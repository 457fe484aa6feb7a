import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jchsim.crystal import CrystalGeometry
from jchsim.params import KHZ, DriveParams, make_drive
from jchsim.superexchange import (
    DegenerateIntermediateError,
    S_MINUS,
    S_PLUS,
    S_Z1,
    SpinHalfModel,
    build_spin_hamiltonian,
    pair_effective_matrix,
    spin_half_analytic,
    spin_half_general,
    spin_one_general,
    spin_one_isotropic_analytic,
    spin_product_index,
)


def uniform_pair(t_x_khz, t_y_khz):
    return CrystalGeometry.from_uniform_hoppings(2, t_x_khz * KHZ,
                                                 t_y_khz * KHZ)


def test_frozen_isotropic_xxz_constants():
    # at zeta = pi/4 the closed forms reduce to K_xy = -9 t_x t_y / (16 g)
    # and K_z = -9 (t_x^2 + t_y^2) / (32 g)
    g = 34.0 * KHZ
    t_x, t_y = 1e-3 * KHZ, 1.7e-3 * KHZ
    drive = make_drive(g_x=g, g_y=g, delta=0.0)
    model = spin_half_general(uniform_pair(1e-3, 1.7e-3), drive,
                              homogeneous=True)
    assert model.K_xy[0, 1] == pytest.approx(-9.0 * t_x * t_y / (16.0 * g),
                                             rel=1e-12)
    assert model.K_z[0, 1] == pytest.approx(
        -9.0 * (t_x**2 + t_y**2) / (32.0 * g), rel=1e-12)
    kxy_a, kz_a, _ = spin_half_analytic(g, g, t_x, t_y)
    assert kxy_a == pytest.approx(-9.0 * t_x * t_y / (16.0 * g), rel=1e-14)
    assert kz_a == pytest.approx(-9.0 * (t_x**2 + t_y**2) / (32.0 * g),
                                 rel=1e-14)


def test_engine_matches_analytic_anisotropic():
    rng = np.random.default_rng(23)
    for _ in range(10):
        g_x = rng.uniform(8.0, 40.0)
        g_y = rng.uniform(8.0, 40.0)
        scale = rng.uniform(0.001, 0.05) * min(g_x, g_y)
        t_x = scale * rng.uniform(0.2, 1.0)
        t_y = scale * rng.uniform(0.2, 1.0)
        drive = make_drive(g_x=g_x * KHZ, g_y=g_y * KHZ, delta=0.0)
        geo = uniform_pair(t_x, t_y)
        model = spin_half_general(geo, drive, homogeneous=True)
        kxy_a, kz_a, h_a = spin_half_analytic(g_x * KHZ, g_y * KHZ,
                                              geo.t_x, geo.t_y)
        assert model.K_xy[0, 1] == pytest.approx(kxy_a[0, 1], rel=1e-10)
        assert model.K_z[0, 1] == pytest.approx(kz_a[0, 1], rel=1e-10)
        assert model.H_field[0] == pytest.approx(h_a[0], rel=1e-10)


def test_spin_one_isotropic_closed_forms():
    g = 34.0 * KHZ
    t_x, t_y = 0.1 * KHZ, 0.17 * KHZ
    drive = make_drive(g_x=g, g_y=g, delta=0.0)
    geo = uniform_pair(0.1, 0.17)
    model = spin_one_general(geo, drive, homogeneous=True)
    jxy_a, jz_a, b_a = spin_one_isotropic_analytic(g, geo.t_x, geo.t_y)
    assert model.J_xy[0, 1] == pytest.approx(jxy_a[0, 1], rel=1e-6)
    assert model.J_z[0, 1] == pytest.approx(jz_a[0, 1], rel=1e-6)
    assert model.B_field[0] == pytest.approx(b_a.sum(axis=1)[0], rel=1e-6)
    # the cubic/quartic channels close at the isotropic point
    scale = abs(model.J_xy[0, 1])
    for extra in (model.W, model.V, model.v_p1, model.v_m1):
        assert abs(extra[0, 1]) < 1e-10 * scale
    assert abs(model.D_field[0]) < 1e-10 * scale


def test_no_direct_double_flip_coupling():
    # (1,-1) <-> (-1,1) needs four phonon moves; absent at second order
    drive = make_drive(g_x=12.0 * KHZ, g_y=18.0 * KHZ, delta=-0.5 * KHZ)
    pair = pair_effective_matrix(0, 1, uniform_pair(0.05, 0.07), drive,
                                 manifold="one", homogeneous=True)
    i = pair.labels.index(("1", "-1"))
    j = pair.labels.index(("-1", "1"))
    assert abs(pair.second_order[i, j]) < 1e-14 * np.max(
        np.abs(pair.second_order))


def test_second_order_scales_quadratically():
    drive = make_drive(g_x=20.0 * KHZ, g_y=26.0 * KHZ, delta=3.0 * KHZ)
    base = pair_effective_matrix(0, 1, uniform_pair(0.02, 0.03), drive,
                                 manifold="half", homogeneous=True)
    scaled = pair_effective_matrix(0, 1, uniform_pair(0.06, 0.09), drive,
                                   manifold="half", homogeneous=True)
    assert np.max(np.abs(scaled.second_order - 9.0 * base.second_order)) \
        < 1e-10 * np.max(np.abs(scaled.second_order))


def test_species_swap_symmetry():
    t_x, t_y = 0.04, 0.07
    g_x, g_y = 14.0, 22.0
    d1 = make_drive(g_x=g_x * KHZ, g_y=g_y * KHZ, delta=0.0)
    d2 = make_drive(g_x=g_y * KHZ, g_y=g_x * KHZ, delta=0.0)
    m1 = spin_half_general(uniform_pair(t_x, t_y), d1, homogeneous=True)
    m2 = spin_half_general(uniform_pair(t_y, t_x), d2, homogeneous=True)
    assert m2.K_xy[0, 1] == pytest.approx(m1.K_xy[0, 1], rel=1e-12)
    assert m2.K_z[0, 1] == pytest.approx(m1.K_z[0, 1], rel=1e-12)
    assert m2.H_field[0] == pytest.approx(-m1.H_field[0], rel=1e-12)
    o1 = spin_one_general(uniform_pair(t_x, t_y), d1, homogeneous=True)
    o2 = spin_one_general(uniform_pair(t_y, t_x), d2, homogeneous=True)
    assert o2.J_xy[0, 1] == pytest.approx(o1.J_xy[0, 1], rel=1e-12)
    assert o2.J_z[0, 1] == pytest.approx(o1.J_z[0, 1], rel=1e-12)
    assert o2.W[0, 1] == pytest.approx(-o1.W[0, 1], rel=1e-10)
    assert o2.V[0, 1] == pytest.approx(o1.V[0, 1], rel=1e-10)
    assert o2.v_p1[0, 1] == pytest.approx(o1.v_m1[0, 1], rel=1e-10)
    assert o2.B_field[0] == pytest.approx(-o1.B_field[0], rel=1e-12)
    assert o2.D_field[0] == pytest.approx(o1.D_field[0], rel=1e-10)


def test_zero_hopping_gives_free_spins():
    drive = make_drive(g_x=20.0 * KHZ, g_y=21.0 * KHZ, delta=0.0)
    model = spin_half_general(uniform_pair(0.0, 0.0), drive, homogeneous=True)
    assert np.all(model.K_xy == 0.0)
    assert np.all(model.K_z == 0.0)
    assert np.all(model.H_field == 0.0)
    assert model.E0_split[0] != 0.0  # zeroth-order splitting survives


def test_degenerate_intermediate_raises():
    g = 34.0 * KHZ
    drive = make_drive(g_x=g, g_y=g, delta=1e6 * g)
    with pytest.raises(DegenerateIntermediateError):
        pair_effective_matrix(0, 1, uniform_pair(0.1, 0.17), drive,
                              manifold="half", homogeneous=True)


def test_benign_zero_coupled_crossing_passes():
    # at g_y = sqrt(3) g_x, delta = 0 an intermediate crosses the manifold
    # energy with exactly vanishing coupling; must not raise
    g_x = 10.0 * KHZ
    drive = make_drive(g_x=g_x, g_y=math.sqrt(3.0) * g_x, delta=0.0)
    pair = pair_effective_matrix(0, 1, uniform_pair(0.01, 0.01), drive,
                                 manifold="half", homogeneous=True)
    assert np.all(np.isfinite(pair.second_order))


def test_pair_matrix_consistency_with_spin_hamiltonian():
    drive = make_drive(g_x=12.0 * KHZ, g_y=18.0 * KHZ, delta=-0.5 * KHZ)
    geo = uniform_pair(0.05, 0.07)
    for manifold, builder in (("half", spin_half_general),
                              ("one", spin_one_general)):
        pair = pair_effective_matrix(0, 1, geo, drive, manifold=manifold,
                                     homogeneous=True)
        model = builder(geo, drive, homogeneous=True)
        h = build_spin_hamiltonian(model).dense()
        idx = [spin_product_index(lab, manifold) for lab in pair.labels]
        diff = np.max(np.abs(h[np.ix_(idx, idx)].real - pair.matrix))
        assert diff < 1e-12 * max(1.0, np.max(np.abs(pair.matrix)))
        assert np.max(np.abs(h.imag)) == 0.0


def test_extraction_residuals_tiny():
    drive = make_drive(g_x=25.0 * KHZ, g_y=31.0 * KHZ, delta=2.0 * KHZ)
    geo = CrystalGeometry.from_uniform_hoppings(3, 0.05 * KHZ, 0.08 * KHZ)
    for builder in (spin_half_general, spin_one_general):
        model = builder(geo, drive, homogeneous=True)
        scale = max(np.max(np.abs(model.K_xy if hasattr(model, "K_xy")
                                  else model.J_xy)), 1e-30)
        assert model.residuals["extraction"] < 1e-10 * scale
        assert model.residuals["hermiticity"] < 1e-12 * scale


def test_spin_one_operator_algebra():
    comm = S_Z1 @ S_PLUS - S_PLUS @ S_Z1
    assert np.allclose(comm, S_PLUS)
    comm = S_Z1 @ S_MINUS - S_MINUS @ S_Z1
    assert np.allclose(comm, -S_MINUS)
    casimir = 0.5 * (S_PLUS @ S_MINUS + S_MINUS @ S_PLUS) + S_Z1 @ S_Z1
    assert np.allclose(casimir, 2.0 * np.eye(3))


def test_spin_product_index_bijective():
    seen = set()
    for a in ("up", "down"):
        for b in ("up", "down"):
            seen.add(spin_product_index((a, b), "half"))
    assert seen == set(range(4))
    seen = {spin_product_index((a, b), "one")
            for a in ("1", "0", "-1") for b in ("1", "0", "-1")}
    assert seen == set(range(9))


def test_transition_elements_feed_back_consistently():
    # the off-diagonal pattern T1 = Jxy + 2 v_p1 etc. must reproduce the
    # raw pair matrix elements it was extracted from
    drive = make_drive(g_x=12.0 * KHZ, g_y=18.0 * KHZ, delta=-0.5 * KHZ)
    geo = uniform_pair(0.05, 0.07)
    pair = pair_effective_matrix(0, 1, geo, drive, manifold="one",
                                 homogeneous=True)
    model = spin_one_general(geo, drive, homogeneous=True)
    m2 = pair.second_order
    lab = pair.labels
    t_1 = m2[lab.index(("1", "0")), lab.index(("0", "1"))]
    t_m1 = m2[lab.index(("-1", "0")), lab.index(("0", "-1"))]
    assert model.J_xy[0, 1] + 2.0 * model.v_p1[0, 1] == pytest.approx(
        t_1, rel=1e-12)
    assert model.J_xy[0, 1] + 2.0 * model.v_m1[0, 1] == pytest.approx(
        t_m1, rel=1e-12)


def test_inhomogeneous_detunings_break_field_uniformity():
    trap_geo = CrystalGeometry.from_uniform_hoppings(3, 0.05 * KHZ,
                                                     0.08 * KHZ)
    drive = make_drive(g_x=19.0 * KHZ, g_y=20.0 * KHZ, delta=-0.22 * KHZ)
    hom = spin_half_general(trap_geo, drive, homogeneous=True)
    inh = spin_half_general(trap_geo, drive, homogeneous=False)
    assert hom.E0_split[0] == pytest.approx(hom.E0_split[1])
    assert inh.E0_split[0] != pytest.approx(inh.E0_split[1])


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=8.0, max_value=40.0),
       st.floats(min_value=8.0, max_value=40.0),
       st.floats(min_value=-1.5, max_value=1.5),
       st.floats(min_value=0.001, max_value=0.03),
       st.floats(min_value=0.001, max_value=0.03))
def test_pair_matrix_properties(g_x, g_y, d_over_g, tx_frac, ty_frac):
    g_lo = min(g_x, g_y)
    drive = make_drive(g_x=g_x * KHZ, g_y=g_y * KHZ,
                       delta=d_over_g * g_lo * KHZ)
    geo = uniform_pair(tx_frac * g_lo, ty_frac * g_lo)
    pair = pair_effective_matrix(0, 1, geo, drive, manifold="half",
                                 homogeneous=True)
    m2 = pair.second_order
    assert np.max(np.abs(m2 - m2.T)) == 0.0
    assert np.all(np.isfinite(m2))
    # K_xy is exactly bilinear in (t_x, t_y): the flip-flop element has no
    # t_x^2 or t_y^2 piece, so doubling t_x alone doubles it
    model = spin_half_general(geo, drive, homogeneous=True)
    geo2 = uniform_pair(2.0 * tx_frac * g_lo, ty_frac * g_lo)
    model2 = spin_half_general(geo2, drive, homogeneous=True)
    assert model2.K_xy[0, 1] == pytest.approx(2.0 * model.K_xy[0, 1],
                                              rel=1e-10, abs=1e-18)
