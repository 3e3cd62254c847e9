import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schwarzschild_vlasov.geometry import BlackHoleParams, delta
from schwarzschild_vlasov.phase_space import (
    admissible_exponents,
    angular_momentum_sq,
    chi,
    fiber_measure_density,
    mass_shell_energy,
    null_components,
    q_of,
    weight_W,
    zeta,
)

P = BlackHoleParams()

radii = st.floats(min_value=2.0 + 1e-6, max_value=1e4)
# subnormal momenta underflow when squared; physical scales stay far above that
momenta = st.floats(min_value=-10.0, max_value=10.0).filter(lambda x: x == 0.0 or abs(x) > 1e-100)
thetas = st.floats(min_value=0.05, max_value=math.pi - 0.05)


@settings(max_examples=300, deadline=None)
@given(radii, thetas, momenta, momenta, momenta)
def test_null_components_satisfy_shell_identities(r, th, vr, vth, vph):
    L2 = angular_momentum_sq(th, vth, vph)
    if vr == 0.0 and L2 == 0.0:
        return
    v_t, v_u, v_ubar = (float(a) for a in null_components(r, vr, L2))
    scale = vr * vr + delta(r) * L2 / (r * r)
    assert v_u + v_ubar == pytest.approx(v_t, rel=1e-14, abs=1e-14 * math.sqrt(scale))
    assert 4.0 * v_u * v_ubar == pytest.approx(delta(r) * L2 / (r * r), rel=1e-12, abs=1e-300)
    # future directed: both null components non-positive
    assert v_u <= 0.0 and v_ubar <= 0.0
    assert v_ubar - v_u == pytest.approx(vr, rel=1e-13, abs=1e-13 * math.sqrt(scale))


@settings(max_examples=200, deadline=None)
@given(radii, thetas, momenta, momenta, momenta)
def test_red_shift_weight_dominates_v_t(r, th, vr, vth, vph):
    if vr == 0.0 and vth == 0.0 and vph == 0.0:
        return
    fr = mass_shell_energy(r, th, vr, vth, vph, P)
    # v_N and v_t share a sign and |v_N| >= |v_t|
    assert fr.v_N <= 0.0
    assert abs(fr.v_N) >= abs(fr.v_t) * (1 - 1e-14)
    assert fr.bracket_vt == pytest.approx(math.sqrt(1 + fr.v_t**2))


def test_v_N_equals_v_t_outside_r1():
    fr = mass_shell_energy(5.0, 1.0, 0.3, -0.2, 0.4, P)
    assert fr.v_N == fr.v_t


def test_zero_covector_rejected():
    with pytest.raises(ValueError, match="zero momentum"):
        mass_shell_energy(3.0, 1.0, 0.0, 0.0, 0.0, P)
    with pytest.raises(ValueError, match="r > 2M"):
        mass_shell_energy(2.0, 1.0, 1.0, 0.0, 0.0, P)


def test_chi_values_and_monotonicity():
    assert chi(P.r0, P) == 1.0 and chi(2.1, P) == 1.0
    assert chi(P.r1, P) == 0.0 and chi(10.0, P) == 0.0
    rs = np.linspace(P.r0, P.r1, 2001)
    c = chi(rs, P)
    assert np.all(np.diff(c) <= 0.0)
    assert np.all((c >= 0) & (c <= 1))


def test_zeta_closed_form():
    assert zeta(2, 1.02) == pytest.approx(1 / 1.02 + 1 / 1.02**2, rel=1e-15)
    assert zeta(2, 1.02) == pytest.approx(1.9416, abs=1e-4)


@pytest.mark.parametrize("x, q", [(1.9, 0.95), (2.0, 1.0), (1.0, 1.0), (0.5, 0.75), (3.5, 1.75)])
def test_q_of(x, q):
    assert q_of(x) == pytest.approx(q)


def test_admissible_exponents():
    assert admissible_exponents(1.9, 1.02)["ok"]
    assert not admissible_exponents(2.0, 1.02)["ok"]
    assert admissible_exponents(2.0, 1.02)["p_integer"]
    # zeta_2(1.2) = 1.528 < 1.9
    assert not admissible_exponents(1.9, 1.2)["ok"]
    with pytest.raises(ValueError):
        admissible_exponents(1.9, 1.0)


def test_weight_W_q_zero_is_pure_radial_power():
    fr = mass_shell_energy(5.0, 1.0, 0.3, -0.2, 0.4, P)
    assert weight_W(fr, 5.0, 1.5, 0.0) == pytest.approx(5.0**1.5)
    ratio = abs(fr.v_ubar) / abs(fr.v_t)
    assert weight_W(fr, 5.0, 2.0, 1.0) == pytest.approx(25.0 * ratio)


def test_weight_W_radial_directions():
    out = mass_shell_energy(5.0, 1.0, 1.0, 0.0, 0.0, P)
    inn = mass_shell_energy(5.0, 1.0, -1.0, 0.0, 0.0, P)
    # an outgoing radial ray has v_ubar = 0, an ingoing one v_ubar = v_t
    assert out.v_ubar == 0.0 and out.v_u == out.v_t == -1.0
    assert inn.v_ubar == inn.v_t == -1.0 and inn.v_u == 0.0
    assert weight_W(out, 5.0, 2.0, 1.0) == 0.0
    assert weight_W(inn, 5.0, 2.0, 1.0) == pytest.approx(25.0)


def test_trapped_frame():
    fr = mass_shell_energy(3.0, math.pi / 2, 0.0, 0.0, math.sqrt(3.0), P)
    assert fr.v_t == pytest.approx(-1 / 3, rel=1e-15)
    assert fr.v_u == pytest.approx(-1 / 6, rel=1e-15) and fr.v_ubar == pytest.approx(-1 / 6, rel=1e-15)


def test_fiber_measure_density_pole():
    assert fiber_measure_density(3.0, math.pi / 2, -2.0) == pytest.approx(1 / 18)
    with pytest.raises(ValueError):
        fiber_measure_density(3.0, 0.0, -1.0)
