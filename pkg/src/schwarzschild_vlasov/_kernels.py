"""Compiled per-particle integrator for the equatorially reduced characteristic system.

Reduced state y = (t*, r, phi, v_rstar) with L = v_phi constant:

    dt*/ds     = (|v_t| + (2M/r) v_rstar) / Delta
    dr/ds      = v_rstar
    dphi/ds    = L / r^2
    dv_rstar/ds = (r - 3M) L^2 / r^4

This is the Liouville flow written in (t*, r) instead of (t, r*). Both right-hand
sides stay finite as r -> 2M for ingoing momenta, so no tortoise inversion is needed
inside the step loop. The stepper is Dormand-Prince 5(4) with the usual quartic
continuous extension; events are located on the dense output.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange
from scipy.integrate import RK45

_A = np.ascontiguousarray(RK45.A, dtype=np.float64)
_B = np.ascontiguousarray(RK45.B, dtype=np.float64)
_E = np.ascontiguousarray(RK45.E, dtype=np.float64)
_P = np.ascontiguousarray(RK45.P, dtype=np.float64)

# the bundled TBB is too old for numba; skip it rather than warn on every import
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

NSTATE = 4
# exit kinds
ALIVE, HORIZON, ESCAPE, STOPPED, BUDGET, FAILED = 0, 1, 2, 3, 4, 5
# accumulator integrands (per unit s)
ACC_NONE, ACC_VN_DTAU, ACC_VT_GAMMA0_DTAU, ACC_ONE, ACC_VT = 0, 1, 2, 3, 4

_GX = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
_GW = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@njit(cache=True)
def energy(y, L, M):
    r = y[1]
    vr = y[3]
    e2 = vr * vr + (1.0 - 2.0 * M / r) * L * L / (r * r)
    if e2 < 0.0:
        e2 = 0.0
    return math.sqrt(e2)


@njit(cache=True)
def _a_over_delta(vr, E, L, r, M):
    # (|v_t| + v_rstar) / Delta = 2|v_u|/Delta, cancellation-free for ingoing momenta
    if vr >= 0.0:
        return (E + vr) / (1.0 - 2.0 * M / r)
    den = E - vr
    if den <= 0.0:
        return 0.0
    return L * L / (r * r * den)


@njit(cache=True)
def rhs(y, L, M, out):
    r = y[1]
    vr = y[3]
    E = energy(y, L, M)
    out[0] = _a_over_delta(vr, E, L, r, M) - vr
    out[1] = vr
    out[2] = L / (r * r)
    out[3] = (r - 3.0 * M) * L * L / (r * r * r * r)


@njit(cache=True)
def tau_level(y, M, R0, u0):
    r = y[1]
    if r < R0:
        return y[0]
    # u = t* - 4M ln(r - 2M) - r + 3M + 2M ln M
    return y[0] - 4.0 * M * math.log(r - 2.0 * M) - r + 3.0 * M + 2.0 * M * math.log(M) - u0


@njit(cache=True)
def ubar_of(y, M):
    # t + r* with the logarithms cancelled
    return y[0] + y[1] - 3.0 * M - 2.0 * M * math.log(M)


@njit(cache=True)
def chi(r, r0, r1):
    x = (r1 - r) / (r1 - r0)
    ex = math.exp(-1.0 / x) if x > 0.0 else 0.0
    ey = math.exp(-1.0 / (1.0 - x)) if x < 1.0 else 0.0
    return ex / (ex + ey)


@njit(cache=True)
def integrand(kind, y, L, M, r0, r1):
    if kind == ACC_ONE:
        return 1.0
    r = y[1]
    vr = y[3]
    E = energy(y, L, M)
    if kind == ACC_VT:
        return E
    aod = _a_over_delta(vr, E, L, r, M)
    dtau = aod - vr
    if kind == ACC_VN_DTAU:
        c = chi(r, r0, r1)
        D = 1.0 - 2.0 * M / r
        return (c * aod + 8.0 * c * D * E + E) * dtau
    if kind == ACC_VT_GAMMA0_DTAU:
        return E * dtau / math.sqrt(1.0 + 2.0 * M / r)
    return 0.0


@njit(cache=True)
def dense(y, K, h, th, out):
    t1 = th
    t2 = th * th
    t3 = t2 * th
    t4 = t3 * th
    for j in range(NSTATE):
        acc = 0.0
        for i in range(7):
            acc += K[i, j] * (_P[i, 0] * t1 + _P[i, 1] * t2 + _P[i, 2] * t3 + _P[i, 3] * t4)
        out[j] = y[j] + h * acc


@njit(cache=True)
def step(y, h, L, M, K, ynew, tmp, rtol, atol):
    """One Dormand-Prince step; K[0] must hold f(y). Returns the RMS error norm."""
    for st in range(1, 6):
        for j in range(NSTATE):
            acc = 0.0
            for m in range(st):
                acc += _A[st, m] * K[m, j]
            tmp[j] = y[j] + h * acc
        rhs(tmp, L, M, K[st])
    for j in range(NSTATE):
        acc = 0.0
        for m in range(6):
            acc += _B[m] * K[m, j]
        ynew[j] = y[j] + h * acc
    rhs(ynew, L, M, K[6])
    err = 0.0
    for j in range(NSTATE):
        e = 0.0
        for m in range(7):
            e += _E[m] * K[m, j]
        e *= h
        sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
        err += (e / sc) ** 2
    return math.sqrt(err / NSTATE)


@njit(cache=True)
def _event_value(kind, level, yv, M, R0, u0):
    if kind == 0:
        return tau_level(yv, M, R0, u0) - level
    if kind == 1:
        return yv[0] - level
    if kind == 2:
        return yv[1] - level
    if kind == 3:
        return ubar_of(yv, M) - level
    return yv[0] - 2.0 * M * math.log(yv[1] - 2.0 * M) - level


@njit(cache=True)
def locate(kind, level, y, K, h, ta, fa, tb, fb, M, R0, u0, work):
    """Root of an event function on the dense output between ta and tb (Illinois)."""
    side = 0
    tc = tb
    for _ in range(200):
        if fb == fa:
            tc = 0.5 * (ta + tb)
        else:
            tc = (ta * fb - tb * fa) / (fb - fa)
        if not (min(ta, tb) < tc < max(ta, tb)):
            tc = 0.5 * (ta + tb)
        dense(y, K, h, tc, work)
        fc = _event_value(kind, level, work, M, R0, u0)
        if abs(fc) <= 1e-12 * max(1.0, abs(level)) or abs(tb - ta) <= 1e-15:
            return tc
        if (fc > 0.0) == (fb > 0.0):
            tb, fb = tc, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            ta, fa = tc, fc
            if side == 1:
                fb *= 0.5
            side = 1
    return tc


@njit(cache=True)
def _segment(kind, y, K, h, ta, tb, L, M, r0, r1, work):
    if tb <= ta:
        return 0.0
    acc = 0.0
    for g in range(3):
        dense(y, K, h, ta + (tb - ta) * _GX[g], work)
        acc += _GW[g] * integrand(kind, work, L, M, r0, r1)
    return acc * (tb - ta) * h


@njit(cache=True)
def region_integral(kind, y, K, h, th_end, ra, rb_, r_lo, r_hi, L, M, R0, u0, r0, r1, work):
    """Integral of the accumulator integrand over the part of [0, th_end] with r in [r_lo, r_hi]."""
    if kind == ACC_NONE or th_end <= 0.0:
        return 0.0
    cuts = np.empty(4)
    nc = 0
    for lv in (r_lo, r_hi):
        fa = ra - lv
        fb = rb_ - lv
        if (fa < 0.0) != (fb < 0.0):
            cuts[nc] = locate(2, lv, y, K, h, 0.0, fa, th_end, fb, M, R0, u0, work)
            nc += 1
    if nc == 2 and cuts[1] < cuts[0]:
        c = cuts[0]
        cuts[0] = cuts[1]
        cuts[1] = c
    total = 0.0
    prev = 0.0
    for k in range(nc + 1):
        nxt = cuts[k] if k < nc else th_end
        if nxt > prev:
            dense(y, K, h, 0.5 * (prev + nxt), work)
            if r_lo <= work[1] <= r_hi:
                total += _segment(kind, y, K, h, prev, nxt, L, M, r0, r1, work)
        prev = nxt
    return total


@njit(cache=True)
def push_one(
    y0, L, direction, taus, stop_kind, stop_level, r_hor, r_max, ubar_max, s_max, max_steps,
    rtol, atol, acc_kind, r_lo, r_hi, M, R0, u0, r0, r1,
    cross, info, exit_state, rec_s, rec_y, rec_k, rec_h,
):
    """Integrate one reduced trajectory.

    cross[k] = (r, v_rstar, acc, s, t*, phi) at the upward crossing of tau-level taus[k]
    (NaN if never crossed). info = (exit kind, s, acc, tau level, steps, max energy drift).
    rec_* receive every accepted step when they have room (trajectory dumps).
    """
    K = np.empty((7, NSTATE))
    y = y0.copy()
    ynew = np.empty(NSTATE)
    tmp = np.empty(NSTATE)
    work = np.empty(NSTATE)
    nt = taus.shape[0]
    for k in range(nt):
        for j in range(6):
            cross[k, j] = np.nan
    E0 = energy(y, L, M)
    s = 0.0
    acc = 0.0
    drift = 0.0
    kind = ALIVE
    rhs(y, L, M, K[0])
    tau0 = tau_level(y, M, R0, u0)
    nxt = 0
    while nxt < nt and taus[nxt] <= tau0:
        if taus[nxt] == tau0 and direction > 0:
            cross[nxt, 0] = y[1]
            cross[nxt, 1] = y[3]
            cross[nxt, 2] = 0.0
            cross[nxt, 3] = 0.0
            cross[nxt, 4] = y[0]
            cross[nxt, 5] = y[2]
        nxt += 1
    # initial step from the local time scale of the radial motion
    h = direction * 0.05 * min(max(y[1] - 2.0 * M, 1e-3 * M), y[1]) / max(E0, 1e-300)
    nrec = 0
    cap = rec_s.shape[0]
    steps = 0
    fstop0 = _event_value(stop_kind, stop_level, y, M, R0, u0)
    while True:
        if steps >= max_steps or abs(s) >= s_max:
            kind = BUDGET
            break
        if abs(s + h) > s_max:
            h = direction * (s_max - abs(s))
        err = step(y, h, L, M, K, ynew, tmp, rtol, atol)
        finite = math.isfinite(err) and math.isfinite(ynew[0]) and math.isfinite(ynew[1])
        if not finite or err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2) if finite else 0.2
            if abs(h) < 1e-14 * max(1.0, abs(s)):
                kind = FAILED
                break
            continue
        steps += 1
        # terminal events inside this step: earliest wins
        th_end = 1.0
        ra = y[1]
        rb_ = ynew[1]
        if rb_ <= r_hor:
            t_e = locate(2, r_hor, y, K, h, 0.0, ra - r_hor, 1.0, rb_ - r_hor, M, R0, u0, work)
            if t_e <= th_end:
                th_end = t_e
                kind = HORIZON
        if rb_ >= r_max:
            t_e = locate(2, r_max, y, K, h, 0.0, ra - r_max, 1.0, rb_ - r_max, M, R0, u0, work)
            if t_e < th_end:
                th_end = t_e
                kind = ESCAPE
        if ubar_max < np.inf and ubar_of(ynew, M) >= ubar_max:
            t_e = locate(3, ubar_max, y, K, h, 0.0, ubar_of(y, M) - ubar_max, 1.0,
                         ubar_of(ynew, M) - ubar_max, M, R0, u0, work)
            if t_e < th_end:
                th_end = t_e
                kind = ESCAPE
        fstop1 = _event_value(stop_kind, stop_level, ynew, M, R0, u0)
        if (direction > 0 and fstop1 >= 0.0 > fstop0) or (direction < 0 and fstop1 <= 0.0 < fstop0):
            t_e = locate(stop_kind, stop_level, y, K, h, 0.0, fstop0, 1.0, fstop1, M, R0, u0, work)
            if t_e < th_end:
                th_end = t_e
                kind = STOPPED
        # ladder crossings (tau level is non-decreasing along future-directed flow)
        if direction > 0 and nxt < nt:
            ta = tau_level(y, M, R0, u0)
            tb = tau_level(ynew, M, R0, u0)
            while nxt < nt and tb >= taus[nxt]:
                t_c = locate(0, taus[nxt], y, K, h, 0.0, ta - taus[nxt], 1.0, tb - taus[nxt], M, R0, u0, work)
                if t_c > th_end:
                    break
                dense(y, K, h, t_c, work)
                cross[nxt, 0] = work[1]
                cross[nxt, 1] = work[3]
                cross[nxt, 4] = work[0]
                cross[nxt, 5] = work[2]
                part = region_integral(acc_kind, y, K, h, t_c, ra, work[1], r_lo, r_hi, L, M, R0, u0, r0, r1, tmp)
                cross[nxt, 2] = acc + part
                cross[nxt, 3] = s + t_c * h
                nxt += 1
        if nrec < cap:
            rec_s[nrec] = s
            rec_h[nrec] = h
            for j in range(NSTATE):
                rec_y[nrec, j] = y[j]
            for i in range(7):
                for j in range(NSTATE):
                    rec_k[nrec, i, j] = K[i, j]
            nrec += 1
        if kind != ALIVE:
            dense(y, K, h, th_end, work)
            acc += region_integral(acc_kind, y, K, h, th_end, ra, work[1], r_lo, r_hi, L, M, R0, u0, r0, r1, tmp)
            s += th_end * h
            for j in range(NSTATE):
                y[j] = work[j]
            break
        acc += region_integral(acc_kind, y, K, h, 1.0, ra, rb_, r_lo, r_hi, L, M, R0, u0, r0, r1, tmp)
        s += h
        for j in range(NSTATE):
            y[j] = ynew[j]
        for j in range(NSTATE):
            K[0, j] = K[6, j]
        fstop0 = fstop1
        if E0 > 0.0:
            d = abs(energy(y, L, M) - E0) / E0
            if d > drift:
                drift = d
        fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
        h *= fac
    for j in range(NSTATE):
        exit_state[j] = y[j]
    info[0] = kind
    info[1] = s
    info[2] = acc
    info[3] = tau_level(y, M, R0, u0)
    info[4] = steps
    info[5] = drift
    return nrec


@njit(parallel=True, cache=True)
def push_batch(
    Y0, Ls, direction, taus, stop_kind, stop_level, r_hor, r_max, ubar_max, s_max, max_steps,
    rtol, atol, acc_kind, r_lo, r_hi, M, R0, u0, r0, r1,
    cross, info, exit_state,
):
    n = Y0.shape[0]
    for i in prange(n):
        rec_s = np.empty(0)
        rec_y = np.empty((0, NSTATE))
        rec_k = np.empty((0, 7, NSTATE))
        rec_h = np.empty(0)
        push_one(
            Y0[i], Ls[i], direction, taus, stop_kind, stop_level, r_hor, r_max, ubar_max, s_max,
            max_steps, rtol, atol, acc_kind, r_lo, r_hi, M, R0, u0, r0, r1,
            cross[i], info[i], exit_state[i], rec_s, rec_y, rec_k, rec_h,
        )
