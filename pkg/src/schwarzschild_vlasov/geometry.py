"""Schwarzschild exterior: tortoise coordinate, null charts and the hyperboloidal-type foliation.

Conventions (geometric units, G = c = 1):

    r*  = r + 2M ln(r - 2M) - 3M - 2M ln M      (r* = 0 on the photon sphere)
    u   = t - r*,  ubar = t + r*,  t* = t + 2M ln(r - 2M)
    Delta = 1 - 2M/r

The leaves Sigma_tau are {t* = tau} for r < R0 glued to the outgoing null cone
N_tau = {u = tau + u0} for r >= R0; for tau < 0 only the null piece is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import dual as dm
from .dual import Dual

SurfaceKind = Literal["sigma", "outgoing_null", "incoming_null", "cylinder", "horizon", "initial"]


def redshift_conditions(r, M: float = 1.0):
    """The two pointwise conditions a red-shift cutoff radius has to satisfy.

    Returns (1 - r/4M - 4 Delta^2 - 1/4, 1 - r/4M - 1/4); both must be >= 0 on (2M, r0].
    Both are decreasing in r, so checking r = r0 suffices.
    """
    d = 1.0 - 2.0 * M / r
    return 0.75 - r / (4.0 * M) - 4.0 * d * d, 0.75 - r / (4.0 * M)


def redshift_boundary(M: float = 1.0) -> float:
    """Largest admissible r0, by bisection on the binding condition (about 2.45M)."""
    lo, hi = 2.0 * M * (1 + 1e-12), 3.0 * M
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if min(redshift_conditions(mid, M)) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class BlackHoleParams:
    M: float = 1.0
    R0: float = 4.0
    r0: float = 2.4
    r1: float = 2.7
    eps_horizon: float = 1e-6
    t0: float | None = None  # defaults to -2M ln(R0 - 2M), which puts {t0, R0} on S = {t* = 0}
    _u0: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.t0 is None:
            object.__setattr__(self, "t0", -2.0 * self.M * math.log(self.R0 - 2.0 * self.M))
        self.validate()
        object.__setattr__(self, "_u0", self.t0 - float(r_star_of_r(self.R0, self.M)))

    def validate(self) -> None:
        M = self.M
        if not M > 0:
            raise ValueError(f"M: must be positive, got {M}")
        if not self.r0 > 2 * M:
            raise ValueError(f"r0: must exceed 2M, got {self.r0}")
        c1, c2 = redshift_conditions(self.r0, M)
        if c1 < 0 or c2 < 0:
            raise ValueError(
                f"r0: {self.r0} violates the red-shift admissibility conditions "
                f"(1 - r/4M - 4 Delta^2 >= 1/4 and 1 - r/4M >= 1/4 on (2M, r0]); "
                f"largest admissible value is about {redshift_boundary(M):.4f}"
            )
        if not 2 * M < self.r0 < self.r1 < 3 * M < self.R0:
            raise ValueError(
                f"r0, r1, R0: need 2M < r0 < r1 < 3M < R0, got r0={self.r0}, r1={self.r1}, R0={self.R0}"
            )
        if not 0 < self.eps_horizon < 0.1 * M:
            raise ValueError(f"eps_horizon: must lie in (0, 0.1M), got {self.eps_horizon}")

    @property
    def u0(self) -> float:
        return self._u0

    @property
    def R0_star(self) -> float:
        return float(r_star_of_r(self.R0, self.M))

    @property
    def r_horizon_proxy(self) -> float:
        return 2.0 * self.M + self.eps_horizon

    def with_(self, **kw) -> "BlackHoleParams":
        return replace(self, **kw)


# --- tortoise coordinate ---------------------------------------------------------


def delta(r, M: float = 1.0):
    return 1.0 - 2.0 * M / r


def r_star_of_r(r, M: float = 1.0):
    """Regge-Wheeler coordinate, normalised to vanish at r = 3M."""
    rr = dm.real(r)
    if np.any(np.asarray(rr) <= 2.0 * M):
        raise ValueError("r_star_of_r: domain error, need r > 2M")
    return r + 2.0 * M * dm.log(r - 2.0 * M) - 3.0 * M - 2.0 * M * math.log(M)


def _real_array(x):
    """Float array, keeping long double when given (the finite-difference oracle uses it)."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float)


def _invert_tortoise(x, M: float):
    return 2.0 * M + _invert_tortoise_gap(x, M)


def _invert_tortoise_gap(x, M: float):
    # Solve exp(z) + 2M(z - ln M) - M - x = 0 for z = ln(r - 2M). The left side is
    # increasing and convex in z with slope >= 2M, so Newton converges monotonically
    # from any start after the first step.
    x = _real_array(x)
    lnM = math.log(M)
    tol = 4.0 * np.finfo(x.dtype).eps
    z = np.where(x > M, np.log(np.maximum(x + M, M)), (x + M) / (2.0 * M) + lnM)
    z = np.minimum(z, 745.0)
    for _ in range(100):
        ez = np.exp(z)
        g = ez + 2.0 * M * (z - lnM) - M - x
        step = g / (ez + 2.0 * M)
        z = z - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(z))):
            break
    else:
        raise RuntimeError("r_of_r_star: Newton iteration did not converge")
    if not np.all(np.isfinite(z)):
        raise RuntimeError("r_of_r_star: non-finite iterate")
    return np.exp(z)


def delta_of_r_star(x, M: float = 1.0):
    """Delta as a function of r*, accurate near the horizon where 1 - 2M/r loses digits."""
    if isinstance(x, Dual):
        D = delta_of_r_star(x.re, M)
        r = r_of_r_star(x.re, M)
        return Dual(D, x.du * D * 2.0 * M / (r * r))
    gap = _invert_tortoise_gap(x, M)
    out = gap / (2.0 * M + gap)
    return float(out) if np.ndim(out) == 0 else out


def r_of_r_star(x, M: float = 1.0):
    """Inverse of r_star_of_r. Accepts floats, arrays and dual numbers (dr/dr* = Delta)."""
    if isinstance(x, Dual):
        r = r_of_r_star(x.re, M)
        return Dual(r, x.du * delta(r, M))
    out = _invert_tortoise(x, M)
    return float(out) if np.ndim(out) == 0 else out


def chart_transforms(t, r_star, M: float = 1.0) -> dict:
    """Null and ingoing-regular coordinates of a point given as (t, r*)."""
    r = r_of_r_star(r_star, M)
    return {
        "u": t - r_star,
        "ubar": t + r_star,
        "t_star": t + 2.0 * M * dm.log(r - 2.0 * M),
        "r": r,
        "Delta": delta(r, M),
    }


def t_of_t_star(t_star, r, M: float = 1.0):
    return t_star - 2.0 * M * dm.log(r - 2.0 * M)


def gamma(r, M: float = 1.0):
    return dm.sqrt(1.0 + 2.0 * M / r)


def ubar_on_initial_surface(r, M: float = 1.0):
    """ubar - tau along {t* = tau}, in closed form: r - 3M - 2M ln M."""
    return r - 3.0 * M - 2.0 * M * math.log(M)


def ubar_sup_norm(params: BlackHoleParams) -> float:
    """sup of |Ubar| over (2M, R0]; Ubar is increasing so the sup sits at an endpoint."""
    M = params.M
    return max(abs(ubar_on_initial_surface(2.0 * M, M)), abs(ubar_on_initial_surface(params.R0, M)))


# --- surfaces ------------------------------------------------------------------


@dataclass(frozen=True)
class SurfaceSpec:
    """A hypersurface from the foliation catalogue.

    kind: 'sigma' (value = tau), 'outgoing_null' (value = tau, the null leaf N_tau),
    'incoming_null' (value = wbar, {ubar = wbar}), 'cylinder' (value = R, {r = R}),
    'horizon' ({r = 2M + eps}), 'initial' (S = {t* = 0}).
    """

    kind: SurfaceKind
    value: float = 0.0

    @staticmethod
    def sigma(tau: float) -> "SurfaceSpec":
        return SurfaceSpec("sigma", float(tau))

    @staticmethod
    def incoming_null(wbar: float) -> "SurfaceSpec":
        return SurfaceSpec("incoming_null", float(wbar))

    @staticmethod
    def cylinder(R: float) -> "SurfaceSpec":
        return SurfaceSpec("cylinder", float(R))

    @staticmethod
    def horizon() -> "SurfaceSpec":
        return SurfaceSpec("horizon")

    @staticmethod
    def initial() -> "SurfaceSpec":
        return SurfaceSpec("initial")


def tau_level(t_star, r, params: BlackHoleParams):
    """Foliation time of a point: t* inside r < R0, u - u0 outside. Continuous at r = R0."""
    M = params.M
    r_arr = np.asarray(dm.real(r))
    outside = r_arr >= params.R0
    if not np.any(outside):
        return t_star
    u = t_of_t_star(t_star, r, M) - r_star_of_r(r, M)
    return dm.where(outside, u - params.u0, t_star)


def crossing_function(surface: SurfaceSpec, t, r_star, params: BlackHoleParams, r=None):
    """Signed level function: zero on the surface, negative on its past side."""
    M = params.M
    if r is None:
        r = r_of_r_star(r_star, M)
    kind = surface.kind
    if kind == "sigma" or kind == "outgoing_null":
        t_star = t + 2.0 * M * dm.log(r - 2.0 * M)
        return tau_level(t_star, r, params) - surface.value
    if kind == "initial":
        return t + 2.0 * M * dm.log(r - 2.0 * M)
    if kind == "incoming_null":
        return t + r_star - surface.value
    if kind == "cylinder":
        return r - surface.value
    if kind == "horizon":
        return params.r_horizon_proxy - r
    raise ValueError(f"unknown surface kind {kind!r}")


def foliation_geometry(surface: SurfaceSpec, r, params: BlackHoleParams) -> dict:
    """Normal (in the (d_u, d_ubar) basis), volume density and lapse-type factor gamma0.

    Spacelike piece (r < R0, also the whole of S): n = (1/gamma) d_ubar + (gamma/Delta) d_u,
    density gamma r^2 against dr dmu_S2, gamma0 = 1/gamma.
    Outgoing null piece: n = d_ubar, density r^2 against dubar dmu_S2, gamma0 = Delta/2.
    Incoming null {ubar = wbar}: n = d_u, density r^2 against -du dmu_S2.
    """
    M = params.M
    r = np.asarray(r, dtype=float)
    D = delta(r, M)
    g = np.sqrt(1.0 + 2.0 * M / r)
    kind = surface.kind
    if kind == "incoming_null":
        return {"n_u": np.ones_like(r), "n_ubar": np.zeros_like(r), "density": r * r,
                "gamma": g, "gamma0": D / 2.0, "Ubar": ubar_on_initial_surface(r, M)}
    if kind == "initial":
        spacelike = np.ones(r.shape, dtype=bool)
    elif kind in ("sigma", "outgoing_null"):
        spacelike = (r < params.R0) & (surface.value >= 0.0) & (kind == "sigma")
    else:
        raise ValueError(f"foliation_geometry: unsupported surface kind {kind!r}")
    return {
        "n_u": np.where(spacelike, g / D, 0.0),
        "n_ubar": np.where(spacelike, 1.0 / g, 1.0),
        "density": np.where(spacelike, g * r * r, r * r),
        "gamma": g,
        "gamma0": np.where(spacelike, 1.0 / g, D / 2.0),
        "Ubar": ubar_on_initial_surface(r, M),
    }


def gamma0_bounds_constant(params: BlackHoleParams) -> float:
    """The constant C with 1/C <= gamma0 <= C on (2M, infinity)."""
    return max(math.sqrt(2.0), 2.0 / float(delta(params.R0, params.M)))
