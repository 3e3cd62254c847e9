import math

import numpy as np
import pytest

from schwarzschild_vlasov.geodesic_flow import Budget, GeodesicState, integrate
from schwarzschild_vlasov.geometry import BlackHoleParams, t_of_t_star, r_of_r_star
from schwarzschild_vlasov.vlasov import (
    CustomData,
    SeparableBump,
    TrappingFamily,
    build_ensemble,
    bump,
    default_t_anchor,
    evaluate_f,
    flux_density_on_S,
    mixed_bump,
    momentum_bounds,
)

P = BlackHoleParams()


def test_bump_profile():
    assert bump(0.0) == 1.0
    assert bump(1.0) == 0.0 and bump(-1.5) == 0.0
    s = np.linspace(0, 0.999, 200)
    assert np.all(np.diff(bump(s)) < 0)


def test_bump_rejects_support_through_zero_covector():
    with pytest.raises(ValueError, match="zero covector"):
        SeparableBump(v_center=(0.0, 0.0, 0.0), v_width=(1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        SeparableBump(r_star_width=0.0)
    with pytest.raises(ValueError):
        TrappingFamily(epsilon=0.0, t_anchor=1.0)


def test_evaluate_f_on_initial_surface_is_the_data():
    f = SeparableBump()
    rs = np.array([-1.0, 0.0, 0.7])
    r = r_of_r_star(rs)
    t = t_of_t_star(np.zeros(3), r)
    th, ph = np.full(3, 1.4), np.full(3, 0.3)
    vr, vth, vph = np.array([0.8, 1.0, 0.5]), np.array([0.1, -0.3, 0.0]), np.array([0.2, 0.0, -0.4])
    got = evaluate_f(t, rs, th, ph, vr, vth, vph, f, P)
    np.testing.assert_allclose(got, f.f0(rs, th, ph, vr, vth, vph), rtol=1e-15)


def test_evaluate_f_is_transported_along_characteristics():
    f = mixed_bump()
    rs0, th0, vr0, vth0, vph0 = 0.4, 1.45, 0.2, 0.9, 0.3
    r0 = float(r_of_r_star(rs0))
    st0 = GeodesicState(0.0, float(t_of_t_star(0.0, r0)), rs0, th0, 0.5, vr0, vth0, vph0)
    traj = integrate(st0, P, budget=Budget(s_max=30.0))
    assert traj.exit_kind == "budget"
    end = traj.state_at(traj.exit_s)
    later = evaluate_f(end.t, end.r_star, end.theta, end.phi, end.v_rstar, end.v_theta, end.v_phi, f, P)[0]
    assert later == pytest.approx(float(f.f0(rs0, th0, 0.5, vr0, vth0, vph0)), rel=1e-7)
    assert later > 0


def test_evaluate_f_rejects_past_points():
    f = SeparableBump()
    with pytest.raises(ValueError, match="past"):
        evaluate_f(-50.0, 0.0, 1.5, 0.0, 0.9, 0.0, 0.0, f, P)


def test_zero_data_is_identically_zero():
    f = SeparableBump(amplitude=0.0)
    assert np.all(evaluate_f(10.0, 0.0, 1.5, 0.0, 0.9, 0.0, 0.0, f, P) == 0.0)
    ens = build_ensemble(f, 1000, P)
    assert len(ens) == 0 and ens.total_number_flux == 0.0


def test_momentum_bounds_contain_support():
    f = SeparableBump()
    b = momentum_bounds(f, P.M)
    rng = np.random.default_rng(3)
    box = f.support()
    X = np.array([rng.uniform(lo, hi, 5000) for lo, hi in box])
    r = r_of_r_star(X[0])
    L2 = X[4] ** 2 + X[5] ** 2 / np.sin(X[1]) ** 2
    E = np.sqrt(X[3] ** 2 + (1 - 2 / r) * L2 / r**2)
    assert np.all(np.sqrt(L2) <= b["L_max"]) and np.all(E <= b["E_max"])


def test_number_flux_converges_across_samplers():
    f = mixed_bump()
    g1 = build_ensemble(f, 0, P, counts=[14, 14, 1, 14, 14, 14]).total_number_flux
    g2 = build_ensemble(f, 0, P, counts=[16, 16, 1, 16, 16, 16]).total_number_flux
    s = build_ensemble(f, 2**16, P, sampling="sobol", seed=4).total_number_flux
    assert g1 == pytest.approx(g2, rel=1e-3)
    assert s == pytest.approx(g2, rel=2e-3)


def test_flux_density_reduces_to_one_for_tangential_momenta():
    r = np.array([2.5, 3.0, 10.0])
    np.testing.assert_allclose(flux_density_on_S(r, np.zeros(3), np.ones(3), 1.0), 1.0)
    assert np.all(flux_density_on_S(r, np.ones(3), np.zeros(3), 1.0) == 1 + 2 / r)


def test_trapping_family_sits_on_circular_orbit():
    fam = TrappingFamily(0.1, default_t_anchor(P))
    assert fam.f0(0.0, math.pi / 2, 0.0, 0.0, 0.0, math.sqrt(3.0)) == 1.0
    ens = build_ensemble(fam, 4096, P)
    assert np.all(ens.t == fam.t_anchor)
    assert np.all(np.abs(ens.r_star) < 0.1)


def test_custom_data_scaling_is_linear():
    box = ((-1, 1), (1.2, 1.9), (0, 2 * math.pi), (0.2, 1.0), (-0.5, 0.5), (-0.5, 0.5))

    def prof(rs, th, ph, vr, vth, vph):
        return bump(np.asarray(rs)) * bump((np.asarray(vr) - 0.6) / 0.4)

    a = build_ensemble(CustomData(prof, box, constant_axes=("phi",)), 20_000, P).total_number_flux
    b = build_ensemble(CustomData(prof, box, amplitude=3.0, constant_axes=("phi",)), 20_000, P).total_number_flux
    assert b == pytest.approx(3 * a, rel=1e-14)
