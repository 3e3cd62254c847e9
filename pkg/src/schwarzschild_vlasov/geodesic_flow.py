"""Characteristics of the massless Vlasov equation (null geodesics on the co-mass shell).

Two integration paths:

* the production path reduces each geodesic to its orbital plane and integrates the
  4-dim system in ``_kernels`` (compiled, horizon-regular, dense output + events);
* ``integrate_unreduced`` integrates the full 7-dim system in (t, r*, theta, phi, v)
  with scipy's DOP853 and is kept as an independent cross-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import _kernels as K
from . import dual as dm
from .geometry import (
    BlackHoleParams,
    SurfaceSpec,
    crossing_function,
    delta,
    r_of_r_star,
    r_star_of_r,
    t_of_t_star,
)
from .phase_space import angular_momentum_sq

EXIT_NAMES = {
    K.ALIVE: "alive",
    K.HORIZON: "horizon",
    K.ESCAPE: "escape",
    K.STOPPED: "stopped",
    K.BUDGET: "budget",
    K.FAILED: "failed",
}


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-10
    atol: float = 1e-12
    event: float = 1e-10
    conservation: float = 1e-7


@dataclass(frozen=True)
class Budget:
    s_max: float = 1e4
    r_max: float = 1e3
    ubar_max: float = math.inf
    max_steps: int = 2_000_000


def liouville_rhs(y, params: BlackHoleParams):
    """d/ds of (t, r*, theta, phi, v_rstar, v_theta, v_phi) along the Liouville field."""
    t, rs, th, ph, vr, vth, vph = y
    M = params.M
    r = r_of_r_star(rs, M)
    D = delta(r, M)
    s = dm.sin(th)
    s2 = s * s
    L2 = vth * vth + vph * vph / s2
    E = dm.sqrt(vr * vr + D * L2 / (r * r))
    r2 = r * r
    return [
        E / D,
        vr / D,
        vth / r2,
        vph / (r2 * s2),
        (r - 3.0 * M) * L2 / (r2 * r2),
        dm.cos(th) / s * vph * vph / (r2 * s2),
        0.0 * vph,
    ]


# --- equatorial reduction ----------------------------------------------------------


def _unit_vectors(theta, phi):
    st, ct, sp, cp = math.sin(theta), math.cos(theta), math.sin(phi), math.cos(phi)
    n = np.array([st * cp, st * sp, ct])
    e_th = np.array([ct * cp, ct * sp, -st])
    e_ph = np.array([-sp, cp, 0.0])
    return n, e_th, e_ph


def _rotation_to_z(j: np.ndarray) -> np.ndarray:
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(j, z))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    ax = np.cross(j, z)
    s = np.linalg.norm(ax)
    ax = ax / s
    Kx = np.array([[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]])
    return np.eye(3) + s * Kx + (1 - c) * Kx @ Kx


@dataclass(frozen=True)
class Reduction:
    rotation: np.ndarray  # maps original Cartesian directions to the reduced frame
    phi: float  # reduced azimuth of the initial point (theta = pi/2)
    L: float  # v_phi in the reduced frame (>= 0)


def equatorial_reduce(theta: float, phi: float, v_theta: float, v_phi: float) -> Reduction:
    """Rotate so the orbital plane becomes theta = pi/2 with v_theta = 0 and v_phi = L >= 0."""
    n, e_th, e_ph = _unit_vectors(theta, phi)
    m = v_theta * e_th + (v_phi / math.sin(theta)) * e_ph  # tangential motion direction, |m| = L
    L = float(np.linalg.norm(m))
    if L > 0.0:
        j = np.cross(n, m) / L
    else:
        j = np.cross(n, [0.0, 0.0, 1.0])
        if np.linalg.norm(j) < 1e-8:
            j = np.cross(n, [1.0, 0.0, 0.0])
        j = j / np.linalg.norm(j)
    R = _rotation_to_z(j)
    nr = R @ n
    return Reduction(R, float(math.atan2(nr[1], nr[0]) % (2 * math.pi)), L)


def equatorial_restore(red: Reduction, phi_reduced, L=None):
    """Map reduced azimuths back to (theta, phi, v_theta, v_phi) in the original frame."""
    phi_reduced = np.atleast_1d(np.asarray(phi_reduced, dtype=float))
    L = red.L if L is None else L
    cp, sp = np.cos(phi_reduced), np.sin(phi_reduced)
    z = np.zeros_like(cp)
    RT = red.rotation.T
    n = RT @ np.vstack([cp, sp, z])
    m = RT @ np.vstack([-sp * L, cp * L, z])
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0]) % (2 * math.pi)
    st, ct = np.sin(theta), np.cos(theta)
    e_th = np.vstack([ct * np.cos(phi), ct * np.sin(phi), -st])
    e_ph = np.vstack([-np.sin(phi), np.cos(phi), z])
    v_theta = np.sum(m * e_th, axis=0)
    v_phi = st * np.sum(m * e_ph, axis=0)
    return theta, phi, v_theta, v_phi


def equatorial_reduce_many(theta, phi, v_theta, v_phi):
    """Vectorised reduction: returns reduced azimuth, L and the per-particle orbit normals."""
    theta, phi = np.asarray(theta, float), np.asarray(phi, float)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    n = np.stack([st * cp, st * sp, ct], axis=-1)
    e_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_ph = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    m = np.asarray(v_theta)[..., None] * e_th + (np.asarray(v_phi) / st)[..., None] * e_ph
    L = np.linalg.norm(m, axis=-1)
    return L, n, m


# --- states and events ----------------------------------------------------------------


@dataclass
class GeodesicState:
    s: float
    t: float
    r_star: float
    theta: float
    phi: float
    v_rstar: float
    v_theta: float
    v_phi: float
    conserved_ref: dict = field(default_factory=dict)

    @property
    def y(self) -> list:
        return [self.t, self.r_star, self.theta, self.phi, self.v_rstar, self.v_theta, self.v_phi]


@dataclass
class EventRecord:
    kind: str  # 'surface', 'horizon', 'escape', 'budget'
    s_event: float
    state: GeodesicState
    surface: SurfaceSpec | None = None
    residual: float = 0.0


@dataclass
class Trajectory:
    """Accepted steps of a reduced integration plus its dense output."""

    params: BlackHoleParams
    reduction: Reduction
    L: float
    E0: float
    direction: int
    s: np.ndarray
    y: np.ndarray
    k: np.ndarray
    h: np.ndarray
    exit_kind: str
    exit_s: float
    exit_y: np.ndarray
    max_drift: float
    events: list = field(default_factory=list)

    def reduced_at(self, s_query: float) -> np.ndarray:
        i = int(np.searchsorted(self.s * self.direction, s_query * self.direction, side="right") - 1)
        i = min(max(i, 0), len(self.s) - 1)
        th = (s_query - self.s[i]) / self.h[i]
        out = np.empty(4)
        K.dense(self.y[i], self.k[i], self.h[i], th, out)
        return out

    def state_from_reduced(self, s: float, yr: np.ndarray) -> GeodesicState:
        M = self.params.M
        t = float(t_of_t_star(yr[0], yr[1], M))
        th, ph, vth, vph = (float(a[0]) for a in equatorial_restore(self.reduction, yr[2], self.L))
        return GeodesicState(
            s, t, float(r_star_of_r(yr[1], M)), th, ph, float(yr[3]), vth, vph,
            {"v_t": -self.E0, "L": self.L},
        )

    def state_at(self, s: float) -> GeodesicState:
        return self.state_from_reduced(s, self.reduced_at(s))


def _reduced_initial(state: GeodesicState, params: BlackHoleParams):
    M = params.M
    red = equatorial_reduce(state.theta, state.phi, state.v_theta, state.v_phi)
    r = float(r_of_r_star(state.r_star, M))
    t_star = state.t + 2.0 * M * math.log(r - 2.0 * M)
    return red, np.array([t_star, r, red.phi, state.v_rstar])


def _surface_value(surface: SurfaceSpec, yr: np.ndarray, params: BlackHoleParams) -> float:
    M = params.M
    r = yr[1]
    t = float(t_of_t_star(yr[0], r, M))
    return float(crossing_function(surface, t, float(r_star_of_r(r, M)), params, r=r))


def integrate(
    state: GeodesicState,
    params: BlackHoleParams,
    events: Sequence[SurfaceSpec] = (),
    budget: Budget = Budget(),
    tol: Tolerances = Tolerances(),
    direction: int = 1,
    max_record: int = 200_000,
) -> Trajectory:
    """Integrate one characteristic on the reduced path and locate all requested crossings."""
    M = params.M
    red, y0 = _reduced_initial(state, params)
    L = red.L
    cap = max_record
    rec_s = np.empty(cap)
    rec_y = np.empty((cap, 4))
    rec_k = np.empty((cap, 7, 4))
    rec_h = np.empty(cap)
    cross = np.empty((0, 6))
    info = np.empty(6)
    exit_y = np.empty(4)
    stop_kind, stop_level = 1, -math.inf  # never fires in either direction
    n = K.push_one(
        y0, L, int(direction), np.empty(0), stop_kind, stop_level, params.r_horizon_proxy,
        budget.r_max, budget.ubar_max, budget.s_max, budget.max_steps, tol.rtol, tol.atol,
        K.ACC_NONE, 0.0, 0.0, M, params.R0, params.u0, params.r0, params.r1,
        cross, info, exit_y, rec_s, rec_y, rec_k, rec_h,
    )
    if n >= cap and int(info[4]) > cap:
        raise RuntimeError("integrate: trajectory record capacity exceeded; raise max_record")
    E0 = K.energy(y0, L, M)
    traj = Trajectory(
        params, red, L, E0, int(direction), rec_s[:n].copy(), rec_y[:n].copy(), rec_k[:n].copy(),
        rec_h[:n].copy(), EXIT_NAMES[int(info[0])], float(info[1]), exit_y.copy(), float(info[5]),
    )
    if traj.exit_kind == "failed":
        raise RuntimeError(f"integrate: step size underflow at reduced state {exit_y}")
    traj.events = _locate_events(traj, events, tol)
    end = traj.state_from_reduced(traj.exit_s, traj.exit_y)
    kind = {"horizon": "horizon", "escape": "escape"}.get(traj.exit_kind, "budget")
    traj.events.append(EventRecord(kind, traj.exit_s, end))
    return traj


def _locate_events(traj: Trajectory, surfaces: Sequence[SurfaceSpec], tol: Tolerances) -> list:
    out = []
    params = traj.params
    ends = np.vstack([traj.y, traj.exit_y[None, :]]) if len(traj.y) else traj.exit_y[None, :]
    for surf in surfaces:
        vals = np.array([_surface_value(surf, yy, params) for yy in ends])
        for i in range(len(traj.y)):
            fa, fb = vals[i], vals[i + 1]
            last = i == len(traj.y) - 1
            th_b = 1.0 if not last else (traj.exit_s - traj.s[i]) / traj.h[i]
            if fa == 0.0 and i == 0:
                if fb > 0.0:
                    out.append(EventRecord("surface", 0.0, traj.state_from_reduced(0.0, traj.y[0]), surf, 0.0))
                continue
            if (fa < 0.0) == (fb < 0.0) or fb == 0.0 and fa == 0.0:
                continue
            buf = np.empty(4)

            def f(th, i=i):
                K.dense(traj.y[i], traj.k[i], traj.h[i], th, buf)
                return _surface_value(surf, buf, params)

            th = brentq(f, 0.0, th_b, xtol=1e-15, rtol=1e-15, maxiter=200)
            s_ev = traj.s[i] + th * traj.h[i]
            res = f(th)
            yr = traj.reduced_at(s_ev)
            out.append(EventRecord("surface", float(s_ev), traj.state_from_reduced(float(s_ev), yr), surf, abs(res)))
    out.sort(key=lambda e: e.s_event * traj.direction)
    return out


def dump_trajectory_csv(traj: Trajectory, path, n_per_step: int = 1) -> None:
    """Per-step trajectory dump with conserved-quantity drift columns."""
    cols = ["s", "t", "r_star", "r", "theta", "phi", "v_rstar", "v_theta", "v_phi", "v_t_drift", "shell_drift"]
    M = traj.params.M
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(len(traj.s)):
            for j in range(n_per_step):
                s = traj.s[i] + traj.h[i] * j / n_per_step
                st = traj.state_at(s)
                r = float(r_of_r_star(st.r_star, M))
                E = math.sqrt(st.v_rstar**2 + (1 - 2 * M / r) * angular_momentum_sq(st.theta, st.v_theta, st.v_phi) / r**2)
                drift = (E - traj.E0) / traj.E0 if traj.E0 > 0 else 0.0
                L2 = angular_momentum_sq(st.theta, st.v_theta, st.v_phi)
                shell = (-(E * E) + st.v_rstar**2 + (1 - 2 * M / r) * L2 / r**2) / max(traj.E0**2, 1e-300)
                row = [s, st.t, st.r_star, r, st.theta, st.phi, st.v_rstar, st.v_theta, st.v_phi, drift, shell]
                w.writerow([f"{v:.17g}" for v in row])


# --- unreduced cross-check ------------------------------------------------------------


def integrate_unreduced(
    state: GeodesicState,
    params: BlackHoleParams,
    s_end: float,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    s_eval=None,
    pole_margin: float = 1e-3,
):
    """Full 7-dim integration with scipy DOP853 (independent of the reduced path)."""

    def f(s, y):
        return np.array(liouville_rhs(list(y), params), dtype=float)

    def pole(s, y):
        return math.sin(y[2]) - pole_margin

    pole.terminal = True

    def horizon(s, y):
        return y[1] - float(r_star_of_r(params.r_horizon_proxy, params.M))

    horizon.terminal = True
    sol = solve_ivp(f, (0.0, s_end), np.array(state.y, dtype=float), method="DOP853", rtol=rtol,
                    atol=atol, dense_output=True, events=[pole, horizon], t_eval=s_eval)
    if sol.status == 1 and len(sol.t_events[0]):
        raise RuntimeError("integrate_unreduced: trajectory approached a coordinate pole")
    return sol


# --- ensembles ------------------------------------------------------------------------


@dataclass
class PushSpec:
    """What the batch pusher should record."""

    taus: np.ndarray = field(default_factory=lambda: np.empty(0))
    stop_kind: int = 0  # 0: foliation time, 1: t*, 2: r, 3: ubar, 4: t
    stop_level: float = math.inf
    direction: int = 1
    acc_kind: int = K.ACC_NONE
    r_lo: float = 0.0
    r_hi: float = 0.0


def push_reduced(
    Y0: np.ndarray,
    L: np.ndarray,
    params: BlackHoleParams,
    spec: PushSpec,
    budget: Budget = Budget(),
    tol: Tolerances = Tolerances(),
    chunk: int = 50_000,
    reducer: Callable | None = None,
):
    """Push reduced initial states (N, 4) forward/backward through the compiled kernel.

    With a reducer, it is called as reducer(slice, cross, info, exit_state) per chunk and
    nothing is retained; otherwise the full arrays are returned.
    """
    Y0 = np.ascontiguousarray(Y0, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.float64)
    taus = np.ascontiguousarray(np.asarray(spec.taus, dtype=np.float64))
    n = Y0.shape[0]
    keep = reducer is None
    if keep:
        cross_all = np.empty((n, len(taus), 6))
        info_all = np.empty((n, 6))
        exit_all = np.empty((n, 4))
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        cross = np.empty((b - a, len(taus), 6))
        info = np.empty((b - a, 6))
        ex = np.empty((b - a, 4))
        K.push_batch(
            Y0[a:b], L[a:b], int(spec.direction), taus, int(spec.stop_kind), float(spec.stop_level),
            params.r_horizon_proxy, budget.r_max, budget.ubar_max, budget.s_max, int(budget.max_steps),
            tol.rtol, tol.atol, int(spec.acc_kind), float(spec.r_lo), float(spec.r_hi),
            params.M, params.R0, params.u0, params.r0, params.r1, cross, info, ex,
        )
        if keep:
            cross_all[a:b], info_all[a:b], exit_all[a:b] = cross, info, ex
        else:
            reducer(slice(a, b), cross, info, ex)
    if keep:
        return cross_all, info_all, exit_all
    return None
