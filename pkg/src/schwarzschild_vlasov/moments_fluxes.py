"""Integral functionals of f: pointwise moments, hypersurface fluxes and bulk integrals.

Fluxes and bulk integrals are read off a pushed ensemble. A particle's weight already
carries the number-flux measure, so a rho-type functional over a leaf is the weighted
sum of g at the crossings, and a bulk integral in the foliation form is the weighted
sum of the line integrals of g along the flow:

    int dtau int_Sigma rho[g f] = sum_i w_i int g dtau.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geodesic_flow import Budget, PushSpec, Tolerances, push_reduced
from .geometry import BlackHoleParams, SurfaceSpec, delta, r_of_r_star, r_star_of_r, t_of_t_star
from .phase_space import angular_momentum_sq, chi, fiber_measure_density, null_components
from .vlasov import ParticleEnsemble, evaluate_f, flux_density_on_S, momentum_bounds

_INDICATORS = (None, "r<=R0", "|r*|<=1")


@dataclass(frozen=True)
class MomentSpec:
    """g = scale * |v_N|^vN_power * |v_t|^vt_power * r^W_p (|v_ubar|/|v_t|)^W_q * <v_t>^bracket_power * 1_region."""

    vN_power: float = 0.0
    vt_power: float = 0.0
    W_p: float = 0.0
    W_q: float = 0.0
    bracket_power: float = 0.0
    indicator: str | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.indicator not in _INDICATORS:
            raise ValueError(f"MomentSpec: indicator must be one of {_INDICATORS}")
        if self.scale < 0:
            raise ValueError("MomentSpec: scale must be >= 0")

    @staticmethod
    def number() -> "MomentSpec":
        return MomentSpec()

    @staticmethod
    def vN(a: float = 1.0) -> "MomentSpec":
        return MomentSpec(vN_power=a)

    @staticmethod
    def vt(a: float = 1.0) -> "MomentSpec":
        return MomentSpec(vt_power=a)

    @staticmethod
    def W(p: float, q: float, a: float = 0.0) -> "MomentSpec":
        return MomentSpec(vN_power=a, W_p=p, W_q=q)

    @property
    def weight_id(self) -> str:
        parts = []
        for name, val in (("vN", self.vN_power), ("vt", self.vt_power), ("rp", self.W_p),
                          ("ratio_q", self.W_q), ("bracket", self.bracket_power)):
            if val:
                parts.append(f"{name}^{val:g}")
        if self.indicator:
            parts.append(f"1[{self.indicator}]")
        if self.scale != 1.0:
            parts.append(f"{self.scale:g}")
        return "*".join(parts) or "1"

    def __call__(self, r, v_rstar, L, params: BlackHoleParams):
        """g at reduced phase data (r, v_rstar, L); vectorised."""
        r = np.asarray(r, dtype=float)
        v_t, v_u, v_ubar = null_components(r, v_rstar, np.asarray(L, dtype=float) ** 2, params.M)
        E = np.abs(v_t)
        g = np.full(np.broadcast(r, v_rstar, L).shape, self.scale)
        if self.vN_power:
            c = chi(r, params)
            D = delta(r, params.M)
            vN = 2.0 * c * np.abs(v_u) / D + 8.0 * c * D * E + E
            g = g * vN ** self.vN_power
        if self.vt_power:
            g = g * E ** self.vt_power
        if self.W_p:
            g = g * r ** self.W_p
        if self.W_q:
            g = g * (np.abs(v_ubar) / E) ** self.W_q
        if self.bracket_power:
            g = g * (1.0 + E * E) ** (self.bracket_power / 2.0)
        if self.indicator == "r<=R0":
            g = np.where(r <= params.R0, g, 0.0)
        elif self.indicator == "|r*|<=1":
            g = np.where(np.abs(r_star_of_r(r, params.M)) <= 1.0, g, 0.0)
        return g


# --- pushed ensembles and fluxes -------------------------------------------------------


@dataclass
class PushResult:
    """An ensemble pushed along the flow with a ladder of foliation levels registered."""

    taus: np.ndarray
    weight: np.ndarray
    L: np.ndarray
    cross: np.ndarray  # (N, K, 6): r, v_rstar, acc, s, t*, phi at each upward crossing
    info: np.ndarray  # (N, 6): exit kind, s, acc, tau, steps, drift
    exit_state: np.ndarray  # (N, 4)
    acc_kind: int = K.ACC_NONE

    def exit_counts(self) -> dict:
        kinds = self.info[:, 0].astype(int)
        return {name: int(np.sum(kinds == code)) for name, code in
                (("alive", K.ALIVE), ("horizon", K.HORIZON), ("escape", K.ESCAPE),
                 ("stopped", K.STOPPED), ("budget", K.BUDGET), ("failed", K.FAILED))}


def push_ensemble(
    ensemble: ParticleEnsemble,
    params: BlackHoleParams,
    taus,
    acc_kind: int = K.ACC_NONE,
    r_lo: float = 0.0,
    r_hi: float = 0.0,
    stop_tau: float = math.inf,
    budget: Budget = Budget(),
    tol: Tolerances = Tolerances(),
) -> PushResult:
    Y0, L = ensemble.reduced(params)
    taus = np.sort(np.asarray(taus, dtype=float))
    spec = PushSpec(taus=taus, stop_kind=0, stop_level=stop_tau, direction=1, acc_kind=acc_kind, r_lo=r_lo, r_hi=r_hi)
    cross, info, ex = push_reduced(Y0, L, params, spec, budget, tol)
    if np.any(info[:, 0] == K.FAILED):
        raise RuntimeError(f"push_ensemble: {int(np.sum(info[:, 0] == K.FAILED))} trajectories failed")
    return PushResult(taus, ensemble.weight.copy(), L, cross, info, ex, acc_kind)


@dataclass
class FluxRecord:
    surface: SurfaceSpec
    value: float
    weight_id: str
    crossings: int
    err_est: float

    def row(self) -> list:
        return [self.surface.value, self.surface.kind, self.weight_id, self.value, self.crossings, self.err_est]


FLUX_CSV_HEADER = ["tau_or_wbar", "surface_kind", "weight_id", "value", "crossings", "err_est"]


def write_flux_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FLUX_CSV_HEADER)
        for rec in records:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in rec.row()])


def _tree_sum(x: np.ndarray) -> float:
    # numpy's pairwise summation has a fixed order for a given length: reproducible
    return float(np.sum(x)) if len(x) else 0.0


def _split_err(contrib: np.ndarray) -> float:
    # even/odd half-ensemble disagreement: a crude discretisation error scale
    if len(contrib) < 2:
        return math.nan
    return abs(_tree_sum(contrib[0::2]) - _tree_sum(contrib[1::2]))


def hypersurface_flux(result: PushResult, surface: SurfaceSpec, spec: MomentSpec, params: BlackHoleParams) -> FluxRecord:
    """sum_i w_i g(crossing_i) over the particles crossing the surface."""
    kind = surface.kind
    if kind in ("sigma", "outgoing_null"):
        idx = np.nonzero(np.isclose(result.taus, surface.value, rtol=0, atol=1e-12))[0]
        if len(idx) == 0:
            raise ValueError(f"hypersurface_flux: tau={surface.value} was not registered as an event")
        c = result.cross[:, idx[0], :]
        hit = np.isfinite(c[:, 0])
        r, vr = c[hit, 0], c[hit, 1]
        w, L = result.weight[hit], result.L[hit]
        g = spec(r, vr, L, params)
        if surface.value < 0 or kind == "outgoing_null":
            # on the null piece |v.n| = |v_ubar|; exactly tangent rays carry no flux
            _, _, vub = null_components(r, vr, L**2, params.M)
            g = np.where(vub == 0.0, 0.0, g)
        else:
            outside = r >= params.R0
            if np.any(outside):
                _, _, vub = null_components(r, vr, L**2, params.M)
                g = np.where(outside & (vub == 0.0), 0.0, g)
    elif kind in ("horizon", "cylinder"):
        code = K.HORIZON if kind == "horizon" else K.ESCAPE
        hit = result.info[:, 0].astype(int) == code
        r, vr = result.exit_state[hit, 1], result.exit_state[hit, 3]
        w, L = result.weight[hit], result.L[hit]
        g = spec(r, vr, L, params)
    else:
        raise ValueError(f"hypersurface_flux: unsupported surface kind {kind!r} for ensembles")
    contrib = w * g
    return FluxRecord(surface, _tree_sum(contrib), spec.weight_id, int(np.sum(hit)), _split_err(contrib))


def number_flux_balance(result: PushResult, tau: float, params: BlackHoleParams) -> dict:
    """Initial flux against the partition at tau: crossing + absorbed + escaped earlier."""
    k = int(np.nonzero(np.isclose(result.taus, tau, rtol=0, atol=1e-12))[0][0])
    crossed = np.isfinite(result.cross[:, k, 0])
    kinds = result.info[:, 0].astype(int)
    absorbed = ~crossed & (kinds == K.HORIZON)
    escaped = ~crossed & (kinds == K.ESCAPE)
    unresolved = ~crossed & ~absorbed & ~escaped
    w = result.weight
    return {
        "initial": _tree_sum(w),
        "sigma": _tree_sum(w[crossed]),
        "horizon": _tree_sum(w[absorbed]),
        "escape": _tree_sum(w[escaped]),
        "unresolved": _tree_sum(w[unresolved]),
        "n_unresolved": int(np.sum(unresolved)),
    }


def bulk_integral(result: PushResult, tau_hi: float | None = None) -> float:
    """sum_i w_i int g along the flow, for the accumulator chosen at push time.

    tau_hi selects a registered ladder level: particles crossing it contribute their
    running integral there, the others their integral up to exit.
    """
    if result.acc_kind == K.ACC_NONE:
        return 0.0
    if tau_hi is None:
        acc = result.info[:, 2]
    else:
        k = int(np.nonzero(np.isclose(result.taus, tau_hi, rtol=0, atol=1e-12))[0][0])
        at = result.cross[:, k, 2]
        acc = np.where(np.isfinite(at), at, result.info[:, 2])
    return _tree_sum(result.weight * acc)


def bulk_series(result: PushResult) -> np.ndarray:
    """Cumulative bulk integral up to each ladder level."""
    return np.array([bulk_integral(result, t) for t in result.taus])


# --- pointwise moments ------------------------------------------------------------------


@dataclass(frozen=True)
class QuadSpec:
    """Gauss levels on the support box, and the uniform probe grid that locates the box.

    At late times the momentum support at a point is a thin sliver (characteristics that
    lingered near the photon sphere), so the box is found on a dense cell-centred grid of
    yes/no evaluations before any Gauss level runs.
    """

    levels: tuple = (12, 16, 24)
    rel_tol: float = 0.1
    probe: tuple = (64, 32, 32)


@dataclass
class MomentResult:
    value: float
    err_est: float
    level_values: list
    evaluations: int
    resolved: bool
    box: list = field(default_factory=list)


def _gauss_box(box, n):
    x, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = [], []
    for lo, hi in box:
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return nodes, weights


def pointwise_moment(
    x,
    spec: MomentSpec,
    f,
    params: BlackHoleParams,
    quad: QuadSpec = QuadSpec(),
    budget: Budget = Budget(),
    tol: Tolerances = Tolerances(),
) -> MomentResult:
    """int_P f g dmu_P at the spacetime point x = (t, r*, theta, phi).

    Tensor Gauss quadrature in (v_rstar, v_theta, v_phi) over a box fixed by the conserved
    |v_t|, L and v_phi of the data's support, shrunk to where a probe grid sees f != 0.
    The difference of the two finest levels is the error estimate.
    """
    return pointwise_moments(x, (spec,), f, params, quad, budget, tol)[0]


def _probe_support(x, box, f, params, counts, budget, tol, E_max, L_max):
    """Bounding box (padded by one probe cell) of the probe cells where f is nonzero."""
    t, r_star, theta, phi = (float(v) for v in x)
    M = params.M
    r = float(r_of_r_star(r_star, M))
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for (lo, hi), n in zip(box, counts)]
    VR, VT, VP = np.meshgrid(*axes, indexing="ij")
    vr, vth, vph = VR.ravel(), VT.ravel(), VP.ravel()
    L2 = angular_momentum_sq(theta, vth, vph)
    E = np.sqrt(vr**2 + delta(r, M) * L2 / r**2)
    inside = (E <= E_max) & (L2 <= L_max**2) & (E > 0)
    nz = np.zeros(vr.size, dtype=bool)
    if np.any(inside):
        idx = np.nonzero(inside)[0]
        nz[idx] = evaluate_f(t, r_star, theta, phi, vr[idx], vth[idx], vph[idx], f, params, budget, tol) != 0.0
    evals = int(np.sum(inside))
    if not np.any(nz):
        return None, evals
    nz = nz.reshape(VR.shape)
    new_box = []
    for ax, ((lo, hi), n) in enumerate(zip(box, counts)):
        hit = np.nonzero(np.any(nz, axis=tuple(a for a in range(3) if a != ax)))[0]
        h = (hi - lo) / n
        new_box.append((max(lo, lo + hit[0] * h - h), min(hi, lo + (hit[-1] + 1) * h + h)))
    return new_box, evals


def pointwise_moments(x, specs, f, params: BlackHoleParams, quad: QuadSpec = QuadSpec(),
                      budget: Budget = Budget(), tol: Tolerances = Tolerances()) -> list:
    """pointwise_moment for several weights sharing one set of f evaluations."""
    t, r_star, theta, phi = (float(v) for v in x)
    M = params.M
    r = float(r_of_r_star(r_star, M))
    nspec = len(specs)
    if getattr(f, "amplitude", 1.0) == 0.0:
        return [MomentResult(0.0, 0.0, [0.0], 0, True) for _ in specs]
    b = momentum_bounds(f, M)
    if not math.isfinite(b["L_max"]):
        raise ValueError("pointwise_moment: data support has unbounded angular momentum")
    E_max, L_max = b["E_max"], b["L_max"]
    st = math.sin(theta)
    box = [(-E_max, E_max), (-L_max, L_max),
           (max(b["v_phi"][0], -L_max * st), min(b["v_phi"][1], L_max * st))]
    if not box[2][1] > box[2][0]:
        return [MomentResult(0.0, 0.0, [0.0], 0, True, box) for _ in specs]
    values, evals = [[] for _ in specs], 0
    box, evals = _probe_support(x, box, f, params, quad.probe, budget, tol, E_max, L_max)
    if box is None:
        return [MomentResult(0.0, 0.0, [0.0], evals, True, []) for _ in specs]
    for n in quad.levels:
        nodes, weights = _gauss_box(box, n)
        VR, VT, VP = np.meshgrid(*nodes, indexing="ij")
        Wq = np.einsum("i,j,k->ijk", *weights).ravel()
        vr, vth, vph = VR.ravel(), VT.ravel(), VP.ravel()
        L2 = angular_momentum_sq(theta, vth, vph)
        E = np.sqrt(vr**2 + delta(r, M) * L2 / r**2)
        inside = (E <= E_max) & (L2 <= L_max**2) & (E > 0)
        vals = np.zeros((nspec, vr.size))
        if np.any(inside):
            idx = np.nonzero(inside)[0]
            fv = evaluate_f(t, r_star, theta, phi, vr[idx], vth[idx], vph[idx], f, params, budget, tol)
            evals += len(idx)
            dens = fv * fiber_measure_density(r, theta, -E[idx])
            for j, spec in enumerate(specs):
                vals[j, idx] = dens * spec(np.full(len(idx), r), vr[idx], np.sqrt(L2[idx]), params)
        for j in range(nspec):
            values[j].append(float(np.sum(Wq * vals[j])))
    out = []
    for v in values:
        err = abs(v[-1] - v[-2]) if len(v) > 1 else math.nan
        resolved = err <= quad.rel_tol * abs(v[-1]) or v[-1] == 0.0
        if not resolved:
            warnings.warn(f"pointwise_moment: unresolved support at x={x} (rel err {err / abs(v[-1]):.2g})",
                          RuntimeWarning, stacklevel=2)
        out.append(MomentResult(v[-1], err, v, evals, resolved, box))
    return out


def direct_moment_on_S(x, spec: MomentSpec, f, params: BlackHoleParams, n: int = 80) -> float:
    """Midpoint-rule int_P f0 g dmu_P at a point of S: no characteristics are traced."""
    t, r_star, theta, phi = (float(v) for v in x)
    M = params.M
    r = float(r_of_r_star(r_star, M))
    box = f.support()[3:]
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi in box]
    cell = float(np.prod([(hi - lo) / n for lo, hi in box]))
    total = 0.0
    for vr in axes[0]:
        VT, VP = np.meshgrid(axes[1], axes[2], indexing="ij")
        fv = f.f0(r_star, theta, phi, vr, VT, VP)
        L2 = angular_momentum_sq(theta, VT, VP)
        E = np.sqrt(vr**2 + delta(r, M) * L2 / r**2)
        g = spec(np.full(VT.shape, r), np.full(VT.shape, vr), np.sqrt(L2), params)
        total += float(np.sum(fv * g / (r * r * math.sin(theta) * E)))
    return total * cell


def direct_bulk_slab(f, params: BlackHoleParams, tau1: float, tau2: float, spec: MomentSpec = MomentSpec(),
                     r_star_range=None, n_rstar: int = 24, n_theta: int = 12,
                     quad: QuadSpec = QuadSpec(probe=(16, 16, 16))) -> float:
    """int over {tau1 <= tau <= tau2} of int_P f g dmu_P dmu_R by direct quadrature in (x, v).

    Independent of the particle path: the spacetime integral is taken over (tau, r*, theta)
    with Gauss nodes, using that (tau, r*) -> (t, r*) has unit Jacobian on both pieces of the
    foliation, so dmu_R = Delta r^2 sin(theta) dtau dr* dtheta dphi. The slab is treated as
    thin (midpoint in tau). Data must not depend on phi.
    """
    if "phi" not in getattr(f, "constant_axes", ()):
        raise ValueError("direct_bulk_slab: data must be independent of phi")
    M = params.M
    box = f.support()
    if r_star_range is None:
        r_star_range = (box[0][0] - 1.2, box[0][1] + 1.6)
    a, b = r_star_range
    x, w = np.polynomial.legendre.leggauss(n_rstar)
    rs_nodes, rs_w = 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w
    th_lo, th_hi = box[1]
    x, w = np.polynomial.legendre.leggauss(n_theta)
    th_nodes, th_w = 0.5 * (th_lo + th_hi) + 0.5 * (th_hi - th_lo) * x, 0.5 * (th_hi - th_lo) * w
    tm = 0.5 * (tau1 + tau2)
    total = 0.0
    for rs, wr in zip(rs_nodes, rs_w):
        r = float(r_of_r_star(rs, M))
        t = tm - 2.0 * M * math.log(r - 2.0 * M) if r < params.R0 else tm + params.u0 + rs
        for th, wt in zip(th_nodes, th_w):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                m = pointwise_moment((t, rs, th, 0.0), spec, f, params, quad).value
            total += wr * wt * (1.0 - 2.0 * M / r) * r * r * math.sin(th) * 2.0 * math.pi * m
    return (tau2 - tau1) * total


# --- initial energy norm --------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    a: float = 0.0
    q: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.q < 0 or self.s < 1:
            raise ValueError("WeightSpec: need a >= 0, q >= 0, s >= 1")


def initial_energy_norm(f, weight: WeightSpec, params: BlackHoleParams, n_target: int = 100_000,
                        ensemble: ParticleEnsemble | None = None) -> dict:
    """Both summands of the initial energy norm over S, and their sum.

    The radial factor r^q (|v_ubar|/|v_t|)^{q/2} + (1 + u_-)^q equals 2 at q = 0, so the
    first summand is then twice the weighted number flux (times |v_N|^a).
    """
    from .vlasov import build_ensemble

    if getattr(f, "amplitude", 1.0) == 0.0:
        return {"first": 0.0, "second": 0.0, "total": 0.0, "number_flux": 0.0}
    ens = ensemble if ensemble is not None else build_ensemble(f, n_target, params)
    if ens.metadata.get("surface") != "S":
        raise ValueError("initial_energy_norm: ensemble must be sampled on S")
    M = params.M
    r = ens.r(M)
    L = ens.L()
    v_t, v_u, v_ubar = null_components(r, ens.v_rstar, L**2, M)
    E = np.abs(v_t)
    u = ens.t - ens.r_star
    u_minus = np.maximum(0.0, -u)
    q, a = weight.q, weight.a
    radial = r**q * (np.abs(v_ubar) / E) ** (q / 2.0) + (1.0 + u_minus) ** q
    vN = MomentSpec.vN(1.0)(r, ens.v_rstar, L, params)
    first = _tree_sum(ens.weight * radial * vN**a)
    sigma = weight.s ** math.ceil(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        measure = np.where(ens.f > 0, ens.weight / ens.f, 0.0)
    second_int = _tree_sum(measure * radial * np.abs(ens.f) ** sigma * (1.0 + E * E) ** (2.0 * (sigma - 1.0)) * E ** (sigma * a))
    second = abs(second_int) ** (1.0 / sigma)
    return {"first": first, "second": second, "total": first + second,
            "number_flux": ens.total_number_flux, "sigma": sigma}
