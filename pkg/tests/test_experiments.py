import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schwarzschild_vlasov.geometry import BlackHoleParams, SurfaceSpec, crossing_function, r_of_r_star
from schwarzschild_vlasov.experiments import (
    DecaySeries,
    bounded_rule,
    circular_orbit_ensemble,
    exterior_bump,
    loglog_slope,
    point_on_leaf,
    pointwise_admissible,
    run_conservation,
    run_decay,
    run_exterior,
    run_geodesic,
    run_iled,
    run_trapping,
)
from schwarzschild_vlasov.vlasov import SeparableBump, mixed_bump

P = BlackHoleParams()


def test_bounded_rule():
    assert bounded_rule([1.0, 3.0, 2.0])
    assert bounded_rule([1.0, 3.0, 3.0])
    assert not bounded_rule([1.0, 2.0, 3.0])
    assert not bounded_rule([1.0, math.inf, 1.0])
    assert bounded_rule([0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=2, max_size=12))
def test_bounded_rule_is_scale_invariant(xs):
    assert bounded_rule(xs) == bounded_rule([7.5 * x for x in xs])
    # appending a value no larger than the running max keeps it bounded
    assert bounded_rule(xs + [max(xs)])


def test_loglog_slope_of_power_law():
    t = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(t, 3.0 * t**-1.9) == pytest.approx(-1.9, rel=1e-12)
    assert math.isnan(loglog_slope(t, np.zeros(4)))


def test_decay_series_invariants():
    s = DecaySeries([16.0, 32.0], [1.0, 0.5], "w", (16.0, 32.0), -1.0, {"total": 2.0}, np.array([10, 5]), p=1.0)
    np.testing.assert_allclose(s.scaled(), [17 / 2, 33 / 4])
    assert s.in_window.all()
    with pytest.raises(ValueError):
        DecaySeries([2.0, 1.0], [1.0, 1.0], "w", (0, 3), 0.0, {}, np.zeros(2))
    with pytest.raises(ValueError):
        DecaySeries([1.0, 2.0], [-1.0, 1.0], "w", (0, 3), 0.0, {}, np.zeros(2))
    zero = DecaySeries([1.0, 2.0], [0.0, 0.0], "w", (0, 3), 0.0, {"total": 0.0}, np.zeros(2))
    assert np.all(zero.scaled() == 0.0)


def test_pointwise_admissibility():
    assert not pointwise_admissible(1.9, 1.02)["ok"]
    assert pointwise_admissible(1.9, 1.004)["ok"]
    assert not pointwise_admissible(2.0, 1.0)["ok"]


def test_point_on_leaf_lies_on_leaf():
    for tau, rs in ((4.0, -2.0), (4.0, 10.0), (16.0, 0.0)):
        t = point_on_leaf(tau, rs, P)
        assert crossing_function(SurfaceSpec.sigma(tau), t, rs, P) == pytest.approx(0.0, abs=1e-12)


def test_circular_orbit_ensemble():
    ens = circular_orbit_ensemble(P)
    assert len(ens) == 1
    assert float(r_of_r_star(ens.r_star[0])) == pytest.approx(3.0)
    assert ens.L()[0] == pytest.approx(math.sqrt(3.0))


def test_exterior_bump_support():
    b = exterior_bump(P)
    lo = b.support()[0][0]
    assert lo >= P.R0_star + 2.0


def test_small_conservation_run():
    rep = run_conservation(mixed_bump(), taus=(4.0, 16.0), n_particles=4000)
    assert rep.passed, rep.summary()
    assert rep.constants["number_residual_max"] <= 1e-9
    assert rep.constants["vt_residual_max"] <= 1e-6


def test_zero_data_decay_is_trivially_bounded():
    rep = run_decay(SeparableBump(amplitude=0.0), n_particles=2**10, seeds=(0,), negative_control=False)
    assert rep.passed
    assert rep.constants["C_per_seed"] == [0.0]
    assert rep.constants["seed_spread"] == 0.0


def test_decay_rejects_inadmissible_exponents():
    with pytest.raises(ValueError):
        run_decay(mixed_bump(), p=2.0, n_particles=2**10)


def test_trapping_requires_decreasing_epsilons():
    with pytest.raises(ValueError, match="decreasing"):
        run_trapping(epsilons=(0.05, 0.1))


def test_small_geodesic_run():
    rep = run_geodesic(n_random=20, s_max=200.0)
    assert rep.passed, rep.summary()


def test_iled_on_a_trapped_node_does_not_converge():
    # five Gauss nodes per axis put one particle exactly on the circular photon orbit
    rep = run_iled(mixed_bump(), n_particles=4000)
    assert not rep.passed
    assert rep.constants["last_increment_ratio"] == pytest.approx(2.0, rel=1e-3)


def test_small_iled_run():
    rep = run_iled(n_particles=4000)
    assert rep.passed, rep.summary()


def test_small_exterior_run():
    rep = run_exterior(n_particles=4000)
    assert rep.passed, rep.summary()
    assert rep.constants["C"] <= 1.0
