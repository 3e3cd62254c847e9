"""Null mass-shell kinematics on the Regge-Wheeler chart.

Phase points are 7-tuples (t, r*, theta, phi, v_rstar, v_theta, v_phi); v_t is
eliminated through the null constraint. Angular momentum uses

    L^2 = v_theta^2 + v_phi^2 / sin^2(theta)

which is the convention forced by g^{phiphi} = 1/(r^2 sin^2 theta). Everything
here is written against the ``dual`` module so it can be differentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dual as dm
from .geometry import BlackHoleParams, _real_array, delta, r_of_r_star

STATE_NAMES = ("t", "r_star", "theta", "phi", "v_rstar", "v_theta", "v_phi")


@dataclass
class MomentumFrame:
    v_t: object
    v_u: object
    v_ubar: object
    L: object
    v_N: object
    bracket_vt: object


def angular_momentum_sq(theta, v_theta, v_phi):
    s = dm.sin(theta)
    return v_theta * v_theta + v_phi * v_phi / (s * s)


def null_energy(r, v_rstar, L2, M: float = 1.0):
    """|v_t| from the null constraint."""
    return dm.sqrt(v_rstar * v_rstar + delta(r, M) * L2 / (r * r))


def _smooth_step(x):
    # e(x) / (e(x) + e(1 - x)), e(x) = exp(-1/x) on x > 0, else 0
    xr = _real_array(dm.real(x))
    pos = xr > 0
    neg = (1.0 - xr) > 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        safe_x = dm.where(pos, x, 1.0)
        safe_y = dm.where(neg, 1.0 - x, 1.0)
        ex = dm.where(pos, dm.exp(-1.0 / safe_x), 0.0)
        ey = dm.where(neg, dm.exp(-1.0 / safe_y), 0.0)
        return ex / (ex + ey)


def chi(r, params: BlackHoleParams):
    """Red-shift cutoff: 1 on r <= r0, 0 on r >= r1, smooth and monotone in between."""
    x = (params.r1 - r) / (params.r1 - params.r0)
    out = _smooth_step(x)
    if np.ndim(dm.real(out)) == 0 and not isinstance(out, dm.Dual):
        return float(out)
    return out


def v_N_of(r, v_t, v_u, params: BlackHoleParams):
    c = chi(r, params)
    D = delta(r, params.M)
    return 2.0 * c * v_u / D + 8.0 * c * D * v_t + v_t


def null_components(r, v_rstar, L2, M: float = 1.0):
    """(v_t, v_u, v_ubar) with the small null component taken from 4 v_u v_ubar = Delta L^2/r^2.

    Avoids the cancellation in (v_t -/+ v_rstar)/2 for nearly radial momenta.
    """
    if not any(isinstance(z, dm.Dual) for z in (r, v_rstar, L2)):
        r = _real_array(r)
        v_rstar = _real_array(v_rstar)
        L2 = _real_array(L2)
    prod = delta(r, M) * L2 / (r * r)
    E = dm.sqrt(v_rstar * v_rstar + prod)
    big = -(E + dm.fabs(v_rstar)) / 2.0  # the larger-magnitude null component
    nonzero = np.asarray(dm.real(big)) != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = dm.where(nonzero, prod / (4.0 * dm.where(nonzero, big, 1.0)), 0.0)
    out_going = np.asarray(dm.real(v_rstar)) >= 0.0
    v_u = dm.where(out_going, big, small)
    v_ubar = dm.where(out_going, small, big)
    return -E, v_u, v_ubar


def mass_shell_energy(r, theta, v_rstar, v_theta, v_phi, params: BlackHoleParams) -> MomentumFrame:
    """Fill every derived momentum field at a phase point (r given directly)."""
    M = params.M
    r_re = np.asarray(dm.real(r))
    if np.any(r_re <= 2.0 * M):
        raise ValueError("mass_shell_energy: need r > 2M")
    L2 = angular_momentum_sq(theta, v_theta, v_phi)
    v_t, v_u, v_ubar = null_components(r, v_rstar, L2, M)
    if np.any(np.asarray(dm.real(v_t)) == 0.0):
        raise ValueError("mass_shell_energy: zero momentum is not on the null shell")
    L = dm.sqrt(L2)
    return MomentumFrame(
        v_t=v_t,
        v_u=v_u,
        v_ubar=v_ubar,
        L=L,
        v_N=v_N_of(r, v_t, v_u, params),
        bracket_vt=dm.sqrt(1.0 + v_t * v_t),
    )


def frame_of_state(y, params: BlackHoleParams) -> MomentumFrame:
    """Frame at a 7-component phase state (r recovered from r*)."""
    r = r_of_r_star(y[1], params.M)
    return mass_shell_energy(r, y[2], y[4], y[5], y[6], params)


def weight_W(frame: MomentumFrame, r, p: float, q: float):
    """r^p (|v_ubar|/|v_t|)^q."""
    ratio = dm.fabs(frame.v_ubar) / dm.fabs(frame.v_t)
    if q == 0:
        return r ** p * (ratio * 0.0 + 1.0)
    return r ** p * ratio ** q


def fiber_measure_density(r, theta, v_t):
    """Density of dmu_P against dv_rstar dv_theta dv_phi."""
    s = np.abs(np.sin(theta))
    if np.any(s == 0.0):
        raise ValueError("fiber_measure_density: pole, sin(theta) = 0")
    return 1.0 / (r * r * s * np.abs(v_t))


# --- lifted rotations -------------------------------------------------------------


def rotation_field(i: int, y):
    """Components of the lifted rotation field Omega-hat_i on the 7-dim phase state."""
    t, rs, th, ph, vr, vth, vph = y
    zero = 0.0 * vr
    if i == 3:
        return [zero, zero, zero, zero + 1.0, zero, zero, zero]
    s, c = dm.sin(th), dm.cos(th)
    cot = c / s
    sp, cp = dm.sin(ph), dm.cos(ph)
    if np.any(np.asarray(dm.real(s)) == 0.0):
        raise ValueError("rotation_field: pole, rotate the point away from theta in {0, pi}")
    if i == 1:
        return [zero, zero, -sp, -cot * cp, zero, -cp * vph / (s * s), cp * vth - sp * cot * vph]
    if i == 2:
        return [zero, zero, cp, -cot * sp, zero, -sp * vph / (s * s), sp * vth + cp * cot * vph]
    raise ValueError("rotation index must be 1, 2 or 3")


def lifted_rotation(i: int, g, y):
    """Omega-hat_i(g) at the phase state y, by forward-mode differentiation."""
    y = list(y)
    return dm.derivative(g, y, rotation_field(i, y))


# --- exponent bookkeeping -------------------------------------------------------


def zeta(k: int, s: float) -> float:
    return sum(s ** (-n) for n in range(1, k + 1))


def q_of(x: float) -> float:
    return x / 2.0 if math.ceil(x) % 2 == 0 else (x + 1.0) / 2.0


def admissible_exponents(p: float, s: float) -> dict:
    if p < 0 or not s > 1:
        raise ValueError("admissible_exponents: need p >= 0 and s > 1")
    ceil_p = math.ceil(p)
    z = zeta(ceil_p, s)
    integer = float(p).is_integer()
    ok = (not integer) and ceil_p % 2 == 0 and z >= p
    return {"ok": ok, "q_p": q_of(p), "ceil_p": ceil_p, "zeta": z, "p_integer": integer}


def angle_bracket(w):
    return dm.sqrt(1.0 + w * w)
