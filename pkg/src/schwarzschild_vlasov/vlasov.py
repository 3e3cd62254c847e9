"""Initial data, pointwise evaluation by backward characteristics, and particle ensembles.

An ensemble discretises the number-flux measure f |v.n| dmu_P dmu_Sigma of its data
surface. On S = {t* = 0} that measure, written against dr* dtheta dphi dv_rstar
dv_theta dv_phi, has density

    f * (1 + (2M/r) v_rstar/|v_t|)

and on a slice {t = const} it is just f. These are the particle weights per unit cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.stats import qmc

from . import _kernels as K
from .geodesic_flow import Budget, PushSpec, Tolerances, equatorial_reduce_many, push_reduced
from .geometry import BlackHoleParams, delta, r_of_r_star, r_star_of_r, t_of_t_star
from .phase_space import angular_momentum_sq

SQRT3 = math.sqrt(3.0)
AXES = ("r_star", "theta", "phi", "v_rstar", "v_theta", "v_phi")


def bump(s):
    """exp(1 - 1/(1 - s^2)) on |s| < 1, else 0; equals 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _wrap(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class SeparableBump:
    """Bump in r* times a momentum box bump, times an angular profile.

    angular='band' multiplies by bump((theta - pi/2)/theta_width); 'uniform' is constant.
    Nothing depends on phi, so ensembles use a single phi cell.
    """

    r_star_center: float = 0.0
    r_star_width: float = 2.0
    v_center: tuple = (0.9, 0.0, 0.0)
    v_width: tuple = (0.7, 1.0, 1.0)
    angular: Literal["band", "uniform"] = "band"
    theta_width: float = math.pi / 4
    amplitude: float = 1.0

    def __post_init__(self):
        if self.r_star_width <= 0 or min(self.v_width) <= 0:
            raise ValueError("SeparableBump: widths must be positive")
        if self.amplitude < 0:
            raise ValueError("SeparableBump: amplitude must be >= 0")
        if not 0 < self.theta_width <= math.pi / 2:
            raise ValueError("SeparableBump: theta_width must lie in (0, pi/2]")
        if all(abs(c) < w for c, w in zip(self.v_center, self.v_width)):
            raise ValueError("SeparableBump: momentum support must avoid the zero covector")

    surface = "S"

    def f0(self, r_star, theta, phi, v_rstar, v_theta, v_phi):
        out = self.amplitude * bump((np.asarray(r_star) - self.r_star_center) / self.r_star_width)
        for v, c, w in zip((v_rstar, v_theta, v_phi), self.v_center, self.v_width):
            out = out * bump((np.asarray(v) - c) / w)
        if self.angular == "band":
            out = out * bump((np.asarray(theta) - np.pi / 2) / self.theta_width)
        return out

    def support(self) -> list:
        c, w = self.v_center, self.v_width
        th = (np.pi / 2 - self.theta_width, np.pi / 2 + self.theta_width) if self.angular == "band" else (0.0, np.pi)
        return [
            (self.r_star_center - self.r_star_width, self.r_star_center + self.r_star_width),
            th,
            (0.0, 2 * np.pi),
            (c[0] - w[0], c[0] + w[0]),
            (c[1] - w[1], c[1] + w[1]),
            (c[2] - w[2], c[2] + w[2]),
        ]

    constant_axes = ("phi",)


@dataclass(frozen=True)
class TrappingFamily:
    """Data concentrated on the circular photon orbit, given on the slice {t = t_anchor}."""

    epsilon: float
    t_anchor: float
    M: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("TrappingFamily: epsilon must be positive")

    @property
    def surface(self):
        return ("t", self.t_anchor)

    def f0(self, r_star, theta, phi, v_rstar, v_theta, v_phi):
        e = self.epsilon
        return (
            self.amplitude
            * bump(np.asarray(r_star) / e)
            * bump((np.asarray(theta) - np.pi / 2) / e)
            * bump(_wrap(phi) / e)
            * bump(np.asarray(v_rstar) / e)
            * bump(np.asarray(v_theta) / e)
            * bump((np.asarray(v_phi) - SQRT3 * self.M) / e)
        )

    def support(self) -> list:
        e = self.epsilon
        return [(-e, e), (np.pi / 2 - e, np.pi / 2 + e), (-e, e), (-e, e), (-e, e),
                (SQRT3 * self.M - e, SQRT3 * self.M + e)]

    constant_axes = ()


@dataclass(frozen=True)
class CustomData:
    """Caller-supplied smooth, compactly supported profile on S."""

    func: Callable
    box: tuple  # six (lo, hi) pairs in AXES order
    amplitude: float = 1.0
    constant_axes: tuple = ()
    surface = "S"

    def f0(self, *args):
        return self.amplitude * np.asarray(self.func(*args), dtype=float)

    def support(self) -> list:
        return [tuple(b) for b in self.box]


def mixed_bump() -> SeparableBump:
    """Bump around the photon sphere whose momentum box holds both radial directions and the
    trapped direction (v_rstar = 0, L/|v_t| = sqrt(27) M), so some flux lingers near r = 3M."""
    return SeparableBump(v_center=(0.0, 1.0, 0.0), v_width=(1.0, 0.6, 1.0))


def default_t_anchor(params: BlackHoleParams) -> float:
    from .geometry import ubar_sup_norm

    return 1.0 + abs(params.u0) + ubar_sup_norm(params)


# --- ensembles ----------------------------------------------------------------------------


@dataclass
class ParticleEnsemble:
    t: np.ndarray
    r_star: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    v_rstar: np.ndarray
    v_theta: np.ndarray
    v_phi: np.ndarray
    weight: np.ndarray
    f: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.weight)

    @property
    def total_number_flux(self) -> float:
        return math.fsum(self.weight)

    def r(self, M: float) -> np.ndarray:
        return r_of_r_star(self.r_star, M) if len(self) else np.empty(0)

    def L(self) -> np.ndarray:
        return np.sqrt(angular_momentum_sq(self.theta, self.v_theta, self.v_phi))

    def reduced(self, params: BlackHoleParams):
        """(t*, r, 0, v_rstar) rows and L: the in-plane state of each particle."""
        r = self.r(params.M)
        t_star = self.t + 2.0 * params.M * np.log(r - 2.0 * params.M)
        Y = np.column_stack([t_star, r, np.zeros_like(r), self.v_rstar])
        return Y, self.L()

    def subset(self, mask) -> "ParticleEnsemble":
        md = dict(self.metadata)
        return ParticleEnsemble(self.t[mask], self.r_star[mask], self.theta[mask], self.phi[mask],
                                self.v_rstar[mask], self.v_theta[mask], self.v_phi[mask],
                                self.weight[mask], self.f[mask], md)

    def scaled(self, factor: float) -> "ParticleEnsemble":
        return ParticleEnsemble(self.t, self.r_star, self.theta, self.phi, self.v_rstar, self.v_theta,
                                self.v_phi, self.weight * factor, self.f * factor, dict(self.metadata))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r_star", "theta", "phi", "v_rstar", "v_theta", "v_phi", "weight"])
            for row in zip(self.r_star, self.theta, self.phi, self.v_rstar, self.v_theta, self.v_phi, self.weight):
                w.writerow([f"{v:.17g}" for v in row])


def flux_density_on_S(r, v_rstar, L2, M: float):
    """|v.n_S| dmu_P dmu_S per unit (dr* dtheta dphi dv^3), divided by f."""
    E = np.sqrt(v_rstar**2 + delta(r, M) * L2 / r**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 1.0 + (2.0 * M / r) * v_rstar / E
    return np.where(E > 0, out, 0.0)


def _grid_counts(spec, n_target: int) -> list:
    active = [a for a in AXES if a not in spec.constant_axes]
    n_each = max(1, int(math.floor(n_target ** (1.0 / len(active)) + 1e-9)))
    return [n_each if a in active else 1 for a in AXES]


def build_ensemble(
    spec,
    n_target: int,
    params: BlackHoleParams,
    sampling: Literal["gauss", "stratified", "sobol"] = "gauss",
    seed: int = 0,
    counts: list | None = None,
) -> ParticleEnsemble:
    """Discretise the data's number-flux measure into weighted particles (zero weights dropped)."""
    box = spec.support()
    if any(not hi > lo for lo, hi in box):
        raise ValueError("build_ensemble: empty support")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    width = hi - lo
    if sampling in ("stratified", "gauss"):
        counts = counts or _grid_counts(spec, n_target)
        axes, vols = [], []
        for i, c in enumerate(counts):
            if sampling == "gauss" and AXES[i] not in spec.constant_axes:
                x, gw = np.polynomial.legendre.leggauss(c)
                axes.append(lo[i] + 0.5 * width[i] * (x + 1.0))
                vols.append(0.5 * width[i] * gw)
            else:
                axes.append(lo[i] + (np.arange(c) + 0.5) * width[i] / c)
                vols.append(np.full(c, width[i] / c))
        X = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
        cell = np.ravel(np.einsum("a,b,c,d,e,f->abcdef", *vols))
        meta = {"sampling": sampling, "counts": list(counts), "seed": None}
    elif sampling == "sobol":
        active = [i for i, a in enumerate(AXES) if a not in spec.constant_axes]
        eng = qmc.Sobol(d=len(active), scramble=True, seed=seed)
        m = int(math.floor(math.log2(max(n_target, 2))))
        U = eng.random_base2(m)
        X = np.tile(0.5 * (lo + hi), (U.shape[0], 1))
        X[:, active] = lo[active] + U * width[active]
        cell = float(np.prod(width)) / U.shape[0]
        meta = {"sampling": "sobol", "n": int(U.shape[0]), "seed": seed}
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    f = spec.f0(*X.T)
    keep = f > 0.0
    X, f = X[keep], f[keep]
    cell = cell[keep] if np.ndim(cell) else cell
    r = r_of_r_star(X[:, 0], params.M) if len(f) else np.empty(0)
    L2 = angular_momentum_sq(X[:, 1], X[:, 4], X[:, 5])
    if spec.surface == "S":
        dens = flux_density_on_S(r, X[:, 3], L2, params.M)
        t = t_of_t_star(np.zeros_like(r), r, params.M) if len(f) else np.empty(0)
    else:
        dens = np.ones_like(f)
        t = np.full_like(f, float(spec.surface[1]))
    w = f * dens * cell
    meta.update({"surface": spec.surface if spec.surface == "S" else list(spec.surface),
                 "cell_volume": float(np.mean(cell)) if len(f) else 0.0})
    return ParticleEnsemble(t, X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4], X[:, 5], w, f, meta)


# --- backward evaluation --------------------------------------------------------------------


def momentum_bounds(spec, M: float) -> dict:
    """Bounds on the conserved quantities (|v_t|, L, v_phi) over the data's support."""
    box = spec.support()
    th_lo, th_hi = box[1]
    smin = min(math.sin(th_lo), math.sin(th_hi)) if th_lo > 0 and th_hi < math.pi else 0.0
    if th_lo <= math.pi / 2 <= th_hi:
        smin = min(math.sin(th_lo), math.sin(th_hi)) if smin > 0 else 0.0
    vth = max(abs(box[4][0]), abs(box[4][1]))
    vph = max(abs(box[5][0]), abs(box[5][1]))
    vr = max(abs(box[3][0]), abs(box[3][1]))
    L_max = math.inf if smin <= 0 else math.sqrt(vth**2 + (vph / smin) ** 2)
    # Delta/r^2 peaks at r = 3M with value 1/(27 M^2)
    E_max = math.sqrt(vr**2 + L_max**2 / (27.0 * M * M)) if math.isfinite(L_max) else math.inf
    return {"E_max": E_max, "L_max": L_max, "v_phi": box[5]}


def _data_stop(spec, params: BlackHoleParams):
    if spec.surface == "S":
        return 1, 0.0
    return 4, float(spec.surface[1])


def evaluate_f(
    t, r_star, theta, phi, v_rstar, v_theta, v_phi,
    spec,
    params: BlackHoleParams,
    budget: Budget = Budget(),
    tol: Tolerances = Tolerances(),
    return_status: bool = False,
):
    """f at phase points in the future of the data surface, by tracing characteristics back."""
    arr = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (t, r_star, theta, phi, v_rstar, v_theta, v_phi)]
    t, r_star, theta, phi, v_rstar, v_theta, v_phi = np.broadcast_arrays(*arr)
    n = t.size
    M = params.M
    out = np.zeros(n)
    status = np.zeros(n, dtype=int)
    if getattr(spec, "amplitude", 1.0) == 0.0:
        return (out, status) if return_status else out
    r = r_of_r_star(r_star, M)
    L, nvec, mvec = equatorial_reduce_many(theta, phi, v_theta, v_phi)
    E = np.sqrt(v_rstar**2 + delta(r, M) * L**2 / r**2)
    b = momentum_bounds(spec, M)
    vlo, vhi = b["v_phi"]
    candidate = (E <= b["E_max"] * (1 + 1e-12)) & (L <= b["L_max"] * (1 + 1e-12))
    candidate &= (v_phi >= vlo) & (v_phi <= vhi)
    stop_kind, level = _data_stop(spec, params)
    t_star = t + 2.0 * M * np.log(r - 2.0 * M)
    here = t if stop_kind == 4 else t_star
    on_surface = candidate & (np.abs(here - level) <= 1e-13 * max(1.0, abs(level)))
    if np.any(on_surface):
        idx = np.nonzero(on_surface)[0]
        out[idx] = spec.f0(r_star[idx], theta[idx], phi[idx], v_rstar[idx], v_theta[idx], v_phi[idx])
    past = candidate & ~on_surface & (here < level)
    if np.any(past):
        raise ValueError("evaluate_f: query point lies to the past of the data surface")
    trace = np.nonzero(candidate & ~on_surface)[0]
    if len(trace):
        Y0 = np.column_stack([t_star[trace], r[trace], np.zeros(len(trace)), v_rstar[trace]])
        ps = PushSpec(stop_kind=stop_kind, stop_level=level, direction=-1)
        _, info, ex = push_reduced(Y0, L[trace], params, ps, budget, tol)
        kinds = info[:, 0].astype(int)
        status[trace] = kinds
        if np.any(kinds == K.BUDGET) or np.any(kinds == K.FAILED):
            raise RuntimeError(
                f"evaluate_f: {int(np.sum(kinds >= K.BUDGET))} backward characteristics exhausted the budget"
            )
        ok = kinds == K.STOPPED
        sel = trace[ok]
        if len(sel):
            ph = ex[ok, 2]
            Lr = L[sel]
            nn, mm = nvec[sel], mvec[sel]
            with np.errstate(invalid="ignore", divide="ignore"):
                yhat = np.where(Lr[:, None] > 0, mm / np.where(Lr > 0, Lr, 1.0)[:, None], 0.0)
            c, s_ = np.cos(ph)[:, None], np.sin(ph)[:, None]
            n_new = c * nn + s_ * yhat
            m_new = Lr[:, None] * (-s_ * nn + c * yhat)
            th_new = np.arccos(np.clip(n_new[:, 2], -1.0, 1.0))
            ph_new = np.arctan2(n_new[:, 1], n_new[:, 0]) % (2 * np.pi)
            st, ct = np.sin(th_new), np.cos(th_new)
            e_th = np.column_stack([ct * np.cos(ph_new), ct * np.sin(ph_new), -st])
            e_ph = np.column_stack([-np.sin(ph_new), np.cos(ph_new), np.zeros_like(st)])
            vth_new = np.sum(m_new * e_th, axis=1)
            vph_new = st * np.sum(m_new * e_ph, axis=1)
            r_new = ex[ok, 1]
            out[sel] = spec.f0(r_star_of_r(r_new, M), th_new, ph_new, ex[ok, 3], vth_new, vph_new)
    return (out, status) if return_status else out
