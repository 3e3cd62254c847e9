import math
import warnings

import numpy as np
import pytest

from schwarzschild_vlasov import _kernels as K
from schwarzschild_vlasov.geodesic_flow import Budget
from schwarzschild_vlasov.geometry import BlackHoleParams, SurfaceSpec, t_of_t_star, r_of_r_star
from schwarzschild_vlasov.moments_fluxes import (
    MomentSpec,
    QuadSpec,
    WeightSpec,
    bulk_integral,
    bulk_series,
    direct_moment_on_S,
    hypersurface_flux,
    initial_energy_norm,
    number_flux_balance,
    pointwise_moment,
    push_ensemble,
)
from schwarzschild_vlasov.vlasov import ParticleEnsemble, SeparableBump, build_ensemble, mixed_bump

P = BlackHoleParams()
BIG = Budget(s_max=1e6)


def _single(r_star, v_rstar, v_phi, weight=2.5):
    r = r_of_r_star(np.array([r_star]))
    one = lambda v: np.array([v], dtype=float)  # noqa: E731
    return ParticleEnsemble(t_of_t_star(np.zeros(1), r), one(r_star), one(math.pi / 2), one(0.0),
                            one(v_rstar), one(0.0), one(v_phi), one(weight), one(1.0), {"surface": "S"})


def test_single_outgoing_particle_flux():
    ens = _single(0.5, 1.0, 0.3)
    # a nearly radial outgoing ray keeps u almost fixed, so it escapes at a small level
    res = push_ensemble(ens, P, [1.0, 2.0], budget=BIG)
    for tau in (1.0, 2.0):
        rec = hypersurface_flux(res, SurfaceSpec.sigma(tau), MomentSpec.number(), P)
        assert rec.value == 2.5 and rec.crossings == 1
    esc = hypersurface_flux(res, SurfaceSpec.cylinder(1000.0), MomentSpec.number(), P)
    assert esc.value == 2.5
    assert hypersurface_flux(res, SurfaceSpec.horizon(), MomentSpec.number(), P).value == 0.0


def test_single_particle_vt_flux_is_its_energy():
    ens = _single(0.5, 1.0, 0.3)
    res = push_ensemble(ens, P, [2.0], budget=BIG)
    r = float(r_of_r_star(0.5))
    E = math.sqrt(1.0 + (1 - 2 / r) * 0.09 / r**2)
    rec = hypersurface_flux(res, SurfaceSpec.sigma(2.0), MomentSpec.vt(), P)
    assert rec.value == pytest.approx(2.5 * E, rel=1e-9)


def test_unregistered_level_raises():
    res = push_ensemble(_single(0.5, 1.0, 0.3), P, [4.0], budget=BIG)
    with pytest.raises(ValueError, match="not registered"):
        hypersurface_flux(res, SurfaceSpec.sigma(5.0), MomentSpec.number(), P)


def test_number_balance_partitions_initial_flux():
    ens = build_ensemble(mixed_bump(), 20_000, P)
    res = push_ensemble(ens, P, [4.0, 16.0], budget=BIG)
    for tau in (4.0, 16.0):
        b = number_flux_balance(res, tau, P)
        assert b["n_unresolved"] == 0
        assert b["sigma"] + b["horizon"] + b["escape"] == pytest.approx(b["initial"], rel=1e-12)
    # flux still on the leaf can only decrease along the ladder
    assert number_flux_balance(res, 16.0, P)["sigma"] <= number_flux_balance(res, 4.0, P)["sigma"]


def test_moment_homogeneity_and_ordering():
    ens = build_ensemble(mixed_bump(), 5_000, P)
    res = push_ensemble(ens, P, [2.0], budget=BIG)
    S = SurfaceSpec.sigma(2.0)
    one = hypersurface_flux(res, S, MomentSpec.vt(), P).value
    two = hypersurface_flux(res, S, MomentSpec(vt_power=1.0, scale=2.0), P).value
    assert two == pytest.approx(2 * one, rel=1e-15)
    vN = hypersurface_flux(res, S, MomentSpec.vN(), P).value
    assert vN >= one


def test_moment_spec_validation():
    with pytest.raises(ValueError):
        MomentSpec(indicator="r<3")
    with pytest.raises(ValueError):
        MomentSpec(scale=-1.0)
    assert MomentSpec.W(1.9, 0.95).weight_id == "rp^1.9*ratio_q^0.95"


def test_bulk_accumulator_for_unit_integrand():
    ens = _single(0.0, 0.0, math.sqrt(3.0), weight=1.0)  # circular photon orbit
    res = push_ensemble(ens, P, [5.0, 10.0], acc_kind=K.ACC_ONE, r_lo=0.0, r_hi=math.inf, stop_tau=10.0 + 1e-9,
                        budget=BIG)
    series = bulk_series(res)
    # at fixed r, dt*/ds = dt/ds = E/Delta, so the affine length up to level tau is tau Delta/E
    E, D = 1.0 / 3.0, 1.0 / 3.0
    assert series[1] == pytest.approx(10.0 * D / E, rel=1e-8)
    assert series[0] == pytest.approx(0.5 * series[1], rel=1e-8)
    assert bulk_integral(res) == pytest.approx(series[1], rel=1e-8)


def test_pointwise_moment_on_initial_surface_matches_direct_quadrature():
    f = SeparableBump()
    rs, th = 0.3, 1.4
    t = float(t_of_t_star(0.0, float(r_of_r_star(rs))))
    spec = MomentSpec.vN(2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pm = pointwise_moment((t, rs, th, 0.0), spec, f, P, QuadSpec(levels=(16, 24, 32)))
    direct = direct_moment_on_S((t, rs, th, 0.0), spec, f, P, n=120)
    assert pm.value == pytest.approx(direct, rel=2e-3)


def test_pointwise_moment_vanishes_off_support():
    f = SeparableBump()
    # before any flux arrives at large r
    pm = pointwise_moment((2.0, 60.0, 1.5, 0.0), MomentSpec.number(), f, P)
    assert pm.value == 0.0


def test_initial_energy_norm_q_zero_doubles_number_flux():
    f = mixed_bump()
    ens = build_ensemble(f, 20_000, P)
    out = initial_energy_norm(f, WeightSpec(a=0.0, q=0.0, s=1.02), P, ensemble=ens)
    assert out["first"] == pytest.approx(2 * out["number_flux"], rel=1e-14)
    assert out["total"] == out["first"] + out["second"]
    zero = initial_energy_norm(SeparableBump(amplitude=0.0), WeightSpec(), P)
    assert zero["total"] == 0.0
    with pytest.raises(ValueError):
        WeightSpec(s=0.5)
