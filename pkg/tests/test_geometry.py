import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from schwarzschild_vlasov.dual import Dual
from schwarzschild_vlasov.geometry import (
    BlackHoleParams,
    SurfaceSpec,
    crossing_function,
    delta,
    delta_of_r_star,
    foliation_geometry,
    gamma0_bounds_constant,
    r_of_r_star,
    r_star_of_r,
    redshift_boundary,
    redshift_conditions,
    tau_level,
    t_of_t_star,
    ubar_sup_norm,
)


def test_photon_sphere_is_origin_of_tortoise():
    assert r_star_of_r(3.0) == 0.0
    assert r_of_r_star(0.0) == 3.0


def test_tortoise_closed_form_value():
    # r* = r + 2M ln(r - 2M) - 3M - 2M ln M at M = 2, r = 10
    M, r = 2.0, 10.0
    assert r_star_of_r(r, M) == pytest.approx(r + 2 * M * math.log(r - 2 * M) - 3 * M - 2 * M * math.log(M), rel=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=-20.0, max_value=1e4), st.sampled_from([0.5, 1.0, 3.0]))
def test_tortoise_inverse_round_trip(x, M):
    # below r - 2M ~ 1e-7 M the round trip through r is ill-conditioned (dr*/dr = 1/Delta)
    x = x * M
    r = r_of_r_star(x, M)
    assert r > 2 * M
    assert r_star_of_r(r, M) == pytest.approx(x, abs=1e-9 * max(1.0, abs(x)))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=2.0 + 1e-9, max_value=500.0))
def test_tortoise_inverse_matches_bracketing_root(r):
    x = float(r_star_of_r(r))
    root = brentq(lambda z: float(r_star_of_r(z)) - x, 2.0 + 1e-12, 1e3, xtol=1e-14, rtol=1e-15)
    assert r_of_r_star(x) == pytest.approx(root, rel=1e-12)


def test_tortoise_domain_error():
    with pytest.raises(ValueError):
        r_star_of_r(2.0)


def _delta_mp(x, M=1.0):
    # bisection in 50 digits on the increasing map z -> exp(z) + 2M(z - ln M) - M, z = ln(r - 2M)
    mp.mp.dps = 50
    lo, hi = mp.mpf(-400), mp.mpf(20)
    for _ in range(400):
        mid = (lo + hi) / 2
        if mp.exp(mid) + 2 * M * (mid - mp.log(M)) - M - x > 0:
            hi = mid
        else:
            lo = mid
    gap = mp.exp((lo + hi) / 2)
    return float(gap / (2 * M + gap))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-200.0, max_value=200.0))
def test_delta_of_r_star_against_high_precision(x):
    assert delta_of_r_star(x) == pytest.approx(_delta_mp(x), rel=1e-13)


def test_delta_of_r_star_near_horizon_keeps_digits():
    # deep near the horizon r - 2M ~ exp((x + M)/2M), so Delta ~ gap / 2M
    x = -60.0
    gap = math.exp((x + 1.0) / 2.0 - math.exp((x + 1.0) / 2.0) / 2.0)
    assert delta_of_r_star(x) == pytest.approx(gap / (2.0 + gap), rel=1e-10)


def test_dual_derivative_of_inverse_is_delta():
    x = Dual(0.7, 1.0)
    r = r_of_r_star(x)
    assert r.du == pytest.approx(delta(r.re), rel=1e-14)
    D = delta_of_r_star(x)
    assert D.du == pytest.approx(2.0 / r.re**2 * delta(r.re), rel=1e-12)


def test_redshift_boundary_against_bisection_oracle():
    # binding condition: 3/4 - r/4 - 4 Delta^2 = 0
    root = brentq(lambda r: 0.75 - r / 4.0 - 4.0 * (1 - 2 / r) ** 2, 2.0 + 1e-9, 3.0, xtol=1e-15)
    assert redshift_boundary() == pytest.approx(root, abs=1e-12)
    assert 2.45 < root < 2.46


def test_redshift_conditions_at_defaults():
    c1, c2 = redshift_conditions(2.4)
    assert c1 >= 0 and c2 >= 0


@pytest.mark.parametrize("kw, field", [
    (dict(r0=2.9), "red-shift"),
    (dict(r0=2.3, r1=2.2), "r0, r1, R0"),
    (dict(R0=2.95), "r0, r1, R0"),
    (dict(M=-1.0), "M"),
    (dict(eps_horizon=0.5), "eps_horizon"),
])
def test_params_validation_names_the_constraint(kw, field):
    with pytest.raises(ValueError, match=field):
        BlackHoleParams(**kw)


def test_u0_puts_R0_on_both_pieces(params):
    # {t* = 0} and {u = u0} meet on r = R0
    t0 = t_of_t_star(0.0, params.R0)
    assert t0 - r_star_of_r(params.R0) == pytest.approx(params.u0, abs=1e-14)
    assert params.u0 == pytest.approx(-3.7726, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-5.0, max_value=50.0))
def test_tau_level_continuous_across_R0(tau):
    P = BlackHoleParams()
    h = 1e-9
    for r in (P.R0 - h, P.R0 + h):
        t = tau + P.u0 + float(r_star_of_r(P.R0))  # a point of N_tau at r = R0
        ts = t + 2 * math.log(r - 2.0)
        assert float(tau_level(ts, r, P)) == pytest.approx(tau, abs=1e-6)


def test_crossing_function_signs(params):
    t = 1.0
    rs = 0.0
    assert crossing_function(SurfaceSpec.cylinder(4.0), t, rs, params) < 0
    assert crossing_function(SurfaceSpec.incoming_null(0.5), t, rs, params) == pytest.approx(0.5)
    assert crossing_function(SurfaceSpec.horizon(), t, rs, params) < 0


def test_foliation_geometry_pieces(params):
    r = np.array([2.5, 3.5, 10.0])
    g = foliation_geometry(SurfaceSpec.sigma(1.0), r, params)
    gam = np.sqrt(1 + 2 / r)
    assert np.allclose(g["gamma0"][:2], 1 / gam[:2])
    assert g["gamma0"][2] == pytest.approx(delta(10.0) / 2)
    assert np.all(g["n_u"][2:] == 0.0) and np.all(g["n_ubar"][2:] == 1.0)
    neg = foliation_geometry(SurfaceSpec.sigma(-1.0), r, params)
    assert np.all(neg["n_u"] == 0.0)  # tau < 0 keeps only the null piece
    C = gamma0_bounds_constant(params)
    assert np.all((g["gamma0"] >= 1 / C) & (g["gamma0"] <= C))


def test_ubar_sup_norm(params):
    assert ubar_sup_norm(params) == pytest.approx(1.0)  # |Ubar(2M)| = M with M = 1
