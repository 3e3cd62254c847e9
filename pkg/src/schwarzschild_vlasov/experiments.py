"""Desk-scale experiments: conservation, energy boundedness, decay, ILED, trapping,
pointwise envelopes and the exterior region.

Each run_* is a pure function of its arguments (data, parameters, sizes, seed) and
returns a report carrying the measured series, the recorded constants and a pass flag.
Bounds are one-sided. Where a statement only says "bounded by a constant", the constant
is recorded and the check is that the scaled series stops growing: its value on the
last rung of the ladder must not exceed the maximum over the earlier rungs.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .geodesic_flow import Budget, GeodesicState, PushSpec, Tolerances, integrate, push_reduced
from .geometry import BlackHoleParams, SurfaceSpec, r_of_r_star, r_star_of_r
from .moments_fluxes import (
    MomentSpec,
    PushResult,
    QuadSpec,
    WeightSpec,
    hypersurface_flux,
    initial_energy_norm,
    number_flux_balance,
    pointwise_moments,
)
from .phase_space import admissible_exponents, null_components
from .vlasov import ParticleEnsemble, SeparableBump, TrappingFamily, build_ensemble, default_t_anchor

DYADIC = tuple(2.0**k for k in range(9))
# slow escapers (|v_t| ~ 0.1) need affine time ~ r_max / |v_t| to reach the escape radius
PUSH_BUDGET = Budget(s_max=1e6)
STAT_FLOOR = 100  # crossings below which a flux value is flagged as under-resolved


# --- helpers ------------------------------------------------------------------------------


def bounded_rule(scaled) -> bool:
    """The last rung does not exceed the maximum of the earlier ones."""
    scaled = np.asarray(scaled, dtype=float)
    if len(scaled) < 2:
        return bool(np.all(np.isfinite(scaled)))
    if not np.all(np.isfinite(scaled)):
        return False
    return bool(scaled[-1] <= np.max(scaled[:-1]))


def loglog_slope(taus, values) -> float:
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = (taus > 0) & (values > 0)
    if np.sum(ok) < 2:
        return math.nan
    return float(np.polyfit(np.log(taus[ok]), np.log(values[ok]), 1)[0])


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _initial_values(ens: ParticleEnsemble, specs, params: BlackHoleParams) -> dict:
    """sum_i w_i g(initial state): the flux of each weight through the data surface."""
    if len(ens) == 0:
        return {s.weight_id: 0.0 for s in specs}
    r = ens.r(params.M)
    L = ens.L()
    return {s.weight_id: float(np.sum(ens.weight * s(r, ens.v_rstar, L, params))) for s in specs}


@dataclass
class StreamResult:
    """Chunk-reduced output of a forward push: only the sums survive."""

    taus: np.ndarray
    fluxes: dict  # weight_id -> values over taus
    crossings: np.ndarray
    bulk: np.ndarray
    exits: dict
    balance: list  # per tau: number and |v_t| partitions
    max_drift: float


def stream_push(
    ens: ParticleEnsemble,
    params: BlackHoleParams,
    taus,
    specs=(),
    acc_kind: int = K.ACC_NONE,
    r_lo: float = 0.0,
    r_hi: float = 0.0,
    stop_tau: float | None = None,
    budget: Budget = PUSH_BUDGET,
    tol: Tolerances = Tolerances(),
    chunk: int = 50_000,
    balance: bool = False,
) -> StreamResult:
    """Push an ensemble forward and reduce fluxes, bulk integrals and balances per chunk.

    Chunks are processed in a fixed order, so the sums are reproducible bit for bit.
    """
    taus = np.sort(np.asarray(taus, dtype=float))
    stop = float(taus[-1]) if stop_tau is None else float(stop_tau)
    nt = len(taus)
    fluxes = {s.weight_id: np.zeros(nt) for s in specs}
    crossings = np.zeros(nt, dtype=np.int64)
    bulk = np.zeros(nt)
    exits = {k: 0 for k in ("alive", "horizon", "escape", "stopped", "budget", "failed")}
    keys = ("initial", "sigma", "horizon", "escape", "unresolved")
    bal = [{"tau": float(t), "number": dict.fromkeys(keys, 0.0), "vt": dict.fromkeys(keys, 0.0),
            "n_unresolved": 0} for t in taus]
    drift = [0.0]
    if len(ens) == 0:
        return StreamResult(taus, fluxes, crossings, bulk, exits, bal, 0.0)
    Y0, L = ens.reduced(params)
    weight = ens.weight
    spec = PushSpec(taus=taus, stop_kind=0, stop_level=stop, direction=1, acc_kind=acc_kind, r_lo=r_lo, r_hi=r_hi)
    E0 = np.sqrt(np.maximum(Y0[:, 3] ** 2 + (1.0 - 2.0 * params.M / Y0[:, 1]) * L**2 / Y0[:, 1] ** 2, 0.0))

    def reducer(sl, cross, info, ex):
        if np.any(info[:, 0] == K.FAILED):
            raise RuntimeError(f"stream_push: {int(np.sum(info[:, 0] == K.FAILED))} trajectories failed")
        res = PushResult(taus, weight[sl], L[sl], cross, info, ex, acc_kind)
        for name, n in res.exit_counts().items():
            exits[name] += n
        drift[0] = max(drift[0], float(np.max(info[:, 5])) if len(info) else 0.0)
        for k, tau in enumerate(taus):
            crossings[k] += int(np.sum(np.isfinite(cross[:, k, 0])))
            for s in specs:
                fluxes[s.weight_id][k] += hypersurface_flux(res, SurfaceSpec.sigma(tau), s, params).value
            if acc_kind != K.ACC_NONE:
                at = cross[:, k, 2]
                bulk[k] += float(np.sum(res.weight * np.where(np.isfinite(at), at, info[:, 2])))
            if balance:
                nb = number_flux_balance(res, tau, params)
                for key in keys:
                    bal[k]["number"][key] += nb[key]
                bal[k]["n_unresolved"] += nb["n_unresolved"]
                crossed = np.isfinite(cross[:, k, 0])
                kinds = info[:, 0].astype(int)
                w = res.weight
                E_cross = np.sqrt(np.maximum(cross[:, k, 1] ** 2 + (1 - 2 * params.M / cross[:, k, 0])
                                             * res.L**2 / cross[:, k, 0] ** 2, 0.0))
                E_exit = np.sqrt(np.maximum(ex[:, 3] ** 2 + (1 - 2 * params.M / ex[:, 1]) * res.L**2 / ex[:, 1] ** 2, 0.0))
                absorbed = ~crossed & (kinds == K.HORIZON)
                escaped = ~crossed & (kinds == K.ESCAPE)
                unres = ~crossed & ~absorbed & ~escaped
                vt = bal[k]["vt"]
                vt["initial"] += float(np.sum(w * E0[sl]))
                vt["sigma"] += float(np.sum(w[crossed] * E_cross[crossed]))
                vt["horizon"] += float(np.sum(w[absorbed] * E_exit[absorbed]))
                vt["escape"] += float(np.sum(w[escaped] * E_exit[escaped]))
                vt["unresolved"] += float(np.sum(w[unres] * E0[sl][unres]))

    push_reduced(Y0, L, params, spec, budget, tol, chunk=chunk, reducer=reducer)
    return StreamResult(taus, fluxes, crossings, bulk, exits, bal, drift[0])


# --- reports ------------------------------------------------------------------------------


@dataclass
class Table:
    name: str
    header: list
    rows: list


@dataclass
class ExperimentReport:
    name: str
    passed: bool
    constants: dict = field(default_factory=dict)
    tables: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    runtime_s: float = 0.0

    def summary(self) -> dict:
        return {"name": self.name, "passed": self.passed, "constants": self.constants,
                "details": self.details, "warnings": self.warnings, "runtime_s": self.runtime_s}


@dataclass
class DecaySeries:
    """A flux series on a tau ladder, scaled by (1 + tau)^p and an initial-norm anchor."""

    taus: np.ndarray
    values: np.ndarray
    weight_id: str
    window: tuple
    slope: float
    anchors: dict
    crossings: np.ndarray
    p: float = 0.0

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("DecaySeries: taus must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("DecaySeries: values must be >= 0")

    @property
    def in_window(self) -> np.ndarray:
        lo, hi = self.window
        return (self.taus >= lo) & (self.taus <= hi)

    def scaled(self, anchor_key: str = "total") -> np.ndarray:
        a = self.anchors.get(anchor_key, 0.0)
        raw = self.values * (1.0 + np.abs(self.taus)) ** self.p
        return np.array([_ratio(v, a) for v in raw])

    def table(self, name: str) -> Table:
        sc = self.scaled()
        rows = [[float(t), float(v), float(s), int(c)] for t, v, s, c in zip(self.taus, self.values, sc, self.crossings)]
        return Table(name, ["tau", "value", "scaled", "crossings"], rows)


@dataclass
class TrappingReport:
    epsilons: list
    E0: list
    taus: list
    bulk: list  # per epsilon, cumulative bulk over the ladder
    ratio: list  # sup over the ladder of bulk / E0

    def __post_init__(self):
        if any(v < 0 for v in self.E0) or any(v < 0 for v in self.ratio):
            raise ValueError("TrappingReport: entries must be >= 0")


# --- conservation ---------------------------------------------------------------------------


def run_conservation(
    f=None,
    taus=(4.0, 16.0, 64.0),
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 100_000,
    sampling: str = "gauss",
    seed: int = 0,
    tol_number: float = 1e-9,
    tol_vt: float = 1e-6,
    budget: Budget = PUSH_BUDGET,
    tol: Tolerances = Tolerances(),
) -> ExperimentReport:
    """Number and |v_t| balance across {Sigma_tau, horizon proxy, outer escape}."""
    t0 = time.perf_counter()
    f = f if f is not None else SeparableBump()
    ens = build_ensemble(f, n_particles, params, sampling=sampling, seed=seed)
    res = stream_push(ens, params, taus, specs=(MomentSpec.number(), MomentSpec.vt(1.0)),
                      budget=budget, tol=tol, balance=True)
    rows, worst_n, worst_v = [], 0.0, 0.0
    warn = []
    for b in res.balance:
        nb, vb = b["number"], b["vt"]
        if b["n_unresolved"]:
            warn.append(f"tau={b['tau']:g}: {b['n_unresolved']} particles neither crossed nor left (budget)")
        out_n = nb["sigma"] + nb["horizon"] + nb["escape"] + nb["unresolved"]
        out_v = vb["sigma"] + vb["horizon"] + vb["escape"] + vb["unresolved"]
        rn = _ratio(abs(out_n - nb["initial"]), nb["initial"])
        rv = _ratio(abs(out_v - vb["initial"]), vb["initial"])
        worst_n, worst_v = max(worst_n, rn), max(worst_v, rv)
        rows.append([b["tau"], nb["initial"], nb["sigma"], nb["horizon"], nb["escape"], nb["unresolved"], rn,
                     vb["initial"], vb["sigma"], vb["horizon"], vb["escape"], rv])
    sigma_flux = [b["number"]["sigma"] for b in res.balance]
    monotone = bool(np.all(np.diff(sigma_flux) <= 0.0))
    passed = worst_n <= tol_number and worst_v <= tol_vt and monotone and res.exits["budget"] == 0
    header = ["tau", "number_initial", "number_sigma", "number_horizon", "number_escape", "number_unresolved",
              "number_residual", "vt_initial", "vt_sigma", "vt_horizon", "vt_escape", "vt_residual"]
    return ExperimentReport(
        "conservation", passed,
        constants={"number_residual_max": worst_n, "vt_residual_max": worst_v},
        tables=[Table("conservation", header, rows)],
        details={"particles": len(ens), "exits": res.exits, "sigma_flux_monotone": monotone,
                 "tol_number": tol_number, "tol_vt": tol_vt, "max_energy_drift": res.max_drift},
        warnings=warn, runtime_s=time.perf_counter() - t0,
    )


# --- energy boundedness and decay -----------------------------------------------------------


def run_energy_boundedness(
    f=None,
    p: float = 1.9,
    a: float = 1.0,
    taus=DYADIC,
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 100_000,
    sampling: str = "gauss",
    seed: int = 0,
    factor: float = 2.0,
    ensemble: ParticleEnsemble | None = None,
    stream: StreamResult | None = None,
) -> ExperimentReport:
    """Flux of r^p (|v_ubar|/|v_t|)^{p/2} |v_N|^a through Sigma_tau against its Sigma_0 value."""
    t0 = time.perf_counter()
    f = f if f is not None else SeparableBump()
    spec = MomentSpec.W(p, p / 2.0, a)
    ens = ensemble if ensemble is not None else build_ensemble(f, n_particles, params, sampling=sampling, seed=seed)
    res = stream if stream is not None else stream_push(ens, params, taus, specs=(spec,))
    initial = _initial_values(ens, (spec,), params)[spec.weight_id]
    series = res.fluxes[spec.weight_id]
    sup = float(np.max(series)) if len(series) else 0.0
    C = _ratio(sup, initial)
    passed = C <= factor
    rows = [[0.0, initial, _ratio(initial, initial), len(ens)]]
    rows += [[float(t), float(v), _ratio(float(v), initial), int(c)] for t, v, c in zip(res.taus, series, res.crossings)]
    return ExperimentReport(
        "energy_boundedness", passed,
        constants={"sup_over_initial": C, "initial": initial, "factor": factor},
        tables=[Table("energy_boundedness", ["tau", "value", "over_initial", "crossings"], rows)],
        details={"weight_id": spec.weight_id, "p": p, "a": a},
        runtime_s=time.perf_counter() - t0,
    )


def decay_anchor(ens: ParticleEnsemble, f, p: float, s: float, params: BlackHoleParams) -> dict:
    """Both summands of the initial norm with a = 1, q = p (the decay statement's right side)."""
    if len(ens) == 0:
        return {"first": 0.0, "second": 0.0, "total": 0.0, "number_flux": 0.0}
    return initial_energy_norm(f, WeightSpec(a=1.0, q=p, s=s), params, ensemble=ens)


def decay_series(
    ens: ParticleEnsemble,
    f,
    p: float,
    s: float,
    taus,
    window,
    params: BlackHoleParams,
    stream: StreamResult | None = None,
    anchors: dict | None = None,
) -> DecaySeries:
    spec = MomentSpec.vN(1.0)
    res = stream if stream is not None else stream_push(ens, params, taus, specs=(spec,))
    vals = res.fluxes[spec.weight_id]
    anchors = anchors if anchors is not None else decay_anchor(ens, f, p, s, params)
    lo, hi = window
    m = (res.taus >= lo) & (res.taus <= hi)
    return DecaySeries(res.taus, vals, spec.weight_id, tuple(window), loglog_slope(res.taus[m], vals[m]),
                       anchors, res.crossings, p)


def circular_orbit_ensemble(params: BlackHoleParams = BlackHoleParams()) -> ParticleEnsemble:
    """One particle on the circular photon orbit, placed on S at phi = 0: the trapped negative control."""
    M = params.M
    r = 3.0 * M
    t = -2.0 * M * math.log(r - 2.0 * M)
    one = np.ones(1)
    return ParticleEnsemble(t * one, 0.0 * one, (math.pi / 2) * one, 0.0 * one, 0.0 * one, 0.0 * one,
                            math.sqrt(3.0) * M * one, one.copy(), one.copy(), {"surface": "S", "sampling": "single"})


def run_decay(
    f=None,
    p: float = 1.9,
    s: float = 1.02,
    taus=DYADIC,
    window=(16.0, 256.0),
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 1_000_000,
    sampling: str = "sobol",
    seeds=(0, 1),
    seed_spread: float = 0.2,
    boundedness_factor: float = 2.0,
    negative_control: bool = True,
) -> ExperimentReport:
    """E(tau) (1 + tau)^p bounded over the window, stable across seeds; the trapped control must fail.

    The r^p-weighted boundedness series is measured on the same pushes.
    """
    t0 = time.perf_counter()
    adm = admissible_exponents(p, s)
    if not adm["ok"]:
        raise ValueError(f"run_decay: (p={p}, s={s}) is not admissible: need p not an integer, ceil(p) even "
                         f"and zeta_ceil(p)(s) >= p; got {adm}")
    f = f if f is not None else SeparableBump()
    wspec = MomentSpec.W(p, p / 2.0, 1.0)
    specs = (MomentSpec.vN(1.0), wspec)
    per_seed, tables, warn = [], [], []
    bound_reports = []
    for sd in (seeds if sampling == "sobol" else seeds[:1]):
        ens = build_ensemble(f, n_particles, params, sampling=sampling, seed=sd)
        res = stream_push(ens, params, taus, specs=specs)
        ser = decay_series(ens, f, p, s, taus, window, params, stream=res)
        sc = ser.scaled()
        win = ser.in_window
        C = float(np.max(sc[win])) if np.any(win) else 0.0
        low = [float(t) for t, c, w in zip(ser.taus, ser.crossings, win) if w and 0 < c < STAT_FLOOR]
        empty = [float(t) for t, c, w in zip(ser.taus, ser.crossings, win) if w and c == 0]
        if low and len(ens):
            warn.append(f"seed {sd}: fewer than {STAT_FLOOR} crossings at tau in {low} (under-resolved)")
        if empty and len(ens):
            warn.append(f"seed {sd}: no crossings at tau in {empty}; flux below the ensemble's floor")
        per_seed.append({"seed": sd, "constant": C, "bounded": bounded_rule(sc[win]), "slope": ser.slope,
                         "anchor_total": ser.anchors.get("total", 0.0), "particles": len(ens)})
        tables.append(ser.table(f"decay_seed{sd}"))
        b = run_energy_boundedness(f, p, 1.0, taus, params, ensemble=ens, stream=res, factor=boundedness_factor)
        bound_reports.append(b)
        tables.append(Table(f"energy_boundedness_seed{sd}", b.tables[0].header, b.tables[0].rows))
    consts = [d["constant"] for d in per_seed]
    spread = _ratio(max(consts) - min(consts), max(consts)) if consts else 0.0
    stable = spread <= seed_spread
    bounded = all(d["bounded"] for d in per_seed)
    bounded_energy = all(b.passed for b in bound_reports)
    control = None
    if negative_control:
        cen = circular_orbit_ensemble(params)
        cres = stream_push(cen, params, taus, specs=(MomentSpec.vN(1.0),))
        cser = decay_series(cen, None, p, s, taus, window, params, stream=cres,
                            anchors={"total": float(np.sum(cen.weight))})
        csc = cser.scaled()
        control = {"bounded": bounded_rule(csc[cser.in_window]), "values": cser.values.tolist(),
                   "must_fail": True}
        tables.append(cser.table("decay_negative_control"))
    passed = bounded and stable and bounded_energy and (control is None or not control["bounded"])
    return ExperimentReport(
        "decay", passed,
        constants={"C_per_seed": consts, "seed_spread": spread,
                   "boundedness_sup_over_initial": [b.constants["sup_over_initial"] for b in bound_reports]},
        tables=tables,
        details={"p": p, "s": s, "window": list(window), "admissibility": adm, "per_seed": per_seed,
                 "negative_control": control, "bounded": bounded, "seed_stable": stable,
                 "energy_bounded": bounded_energy, "sampling": sampling},
        warnings=warn, runtime_s=time.perf_counter() - t0,
    )


# --- integrated local energy decay ---------------------------------------------------------


def iled_anchors(ens: ParticleEnsemble, s: float, params: BlackHoleParams) -> dict:
    """Initial rho[|f||v_N|] and |rho[<v_t>^{4(s-1)} |f|^s |v_t|^s]|^{1/s} over S."""
    if len(ens) == 0:
        return {"energy": 0.0, "ls": 0.0}
    r = ens.r(params.M)
    L = ens.L()
    E = np.abs(null_components(r, ens.v_rstar, L**2, params.M)[0])
    vN = MomentSpec.vN(1.0)(r, ens.v_rstar, L, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        measure = np.where(ens.f > 0, ens.weight / ens.f, 0.0)
    ls = float(np.sum(measure * np.abs(ens.f) ** s * (1.0 + E * E) ** (2.0 * (s - 1.0)) * E**s)) ** (1.0 / s)
    return {"energy": float(np.sum(ens.weight * vN)), "ls": ls}


def run_iled(
    f=None,
    s: float = 1.02,
    taus=DYADIC,
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 100_000,
    sampling: str = "gauss",
    seed: int = 0,
    ratio_max: float = 0.7,
) -> ExperimentReport:
    """Bulk int_0^T int 1_{r <= R0} rho[|f||v_N|] along a ladder of T; increments must shrink."""
    t0 = time.perf_counter()
    f = f if f is not None else SeparableBump()
    ens = build_ensemble(f, n_particles, params, sampling=sampling, seed=seed)
    res = stream_push(ens, params, taus, acc_kind=K.ACC_VN_DTAU, r_lo=0.0, r_hi=params.R0)
    bulk = res.bulk
    inc = np.diff(np.concatenate([[0.0], bulk]))
    if len(inc) >= 2:
        last, prev = float(inc[-1]), float(inc[-2])
        ratio = 0.0 if last == 0.0 else _ratio(last, prev)
    else:
        last = prev = ratio = math.nan
    anchors = iled_anchors(ens, s, params)
    rhs = anchors["energy"] + res.taus ** ((s - 1.0) / s) * anchors["ls"]
    C = float(max((_ratio(b, h) for b, h in zip(bulk, rhs)), default=0.0))
    converged = bool(np.isfinite(ratio) and ratio <= ratio_max)
    rows = [[float(t), float(b), float(i), float(h)] for t, b, i, h in zip(res.taus, bulk, inc, rhs)]
    return ExperimentReport(
        "iled", converged,
        constants={"bulk_over_rhs_max": C, "last_increment_ratio": ratio},
        tables=[Table("iled", ["T", "bulk", "increment", "rhs_anchor"], rows)],
        details={"s": s, "anchors": anchors, "last_increment": last, "previous_increment": prev,
                 "ratio_max": ratio_max, "particles": len(ens), "exits": res.exits},
        warnings=[] if converged else ["bulk increments did not shrink geometrically (non-convergence)"],
        runtime_s=time.perf_counter() - t0,
    )


# --- trapping obstruction ------------------------------------------------------------------


def _pull_back_to_sigma0(ens: ParticleEnsemble, params: BlackHoleParams, budget: Budget, tol: Tolerances):
    Y0, L = ens.reduced(params)
    spec = PushSpec(stop_kind=0, stop_level=0.0, direction=-1)
    _, info, ex = push_reduced(Y0, L, params, spec, budget, tol)
    kinds = info[:, 0].astype(int)
    if np.any(kinds != K.STOPPED):
        bad = int(np.sum(kinds != K.STOPPED))
        raise RuntimeError(f"run_trapping: {bad} characteristics did not reach Sigma_0 backwards")
    return ex, L


def run_trapping(
    epsilons=(0.2, 0.1, 0.05, 0.025),
    taus=DYADIC,
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 50_000,
    t_anchor: float | None = None,
    min_gain: float = 2.0,
    budget: Budget = PUSH_BUDGET,
    tol: Tolerances = Tolerances(),
) -> ExperimentReport:
    """Ratio of the bulk over {|r*| <= 1} to the initial energy for data squeezed onto the photon orbit."""
    t0 = time.perf_counter()
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError(f"run_trapping: epsilons must be strictly decreasing, got {eps}")
    if any(not 0 < e <= 0.2 for e in eps):
        raise ValueError("run_trapping: each epsilon must lie in (0, 0.2]")
    ta = default_t_anchor(params) if t_anchor is None else float(t_anchor)
    M = params.M
    r_lo, r_hi = float(r_of_r_star(-1.0, M)), float(r_of_r_star(1.0, M))
    E0s, bulks, ratios, warn = [], [], [], []
    for e in eps:
        fam = TrappingFamily(e, ta, M)
        lo, hi = fam.support()[0]
        if lo < -1.0 or hi > 1.0:
            warn.append(f"epsilon={e}: support leaks out of |r*| <= 1")
        ens = build_ensemble(fam, n_particles, params)
        E = np.abs(null_components(ens.r(M), ens.v_rstar, ens.L() ** 2, M)[0])
        E0 = float(np.sum(ens.weight * E))
        ex, L = _pull_back_to_sigma0(ens, params, budget, tol)
        spec = PushSpec(taus=np.asarray(taus, dtype=float), stop_kind=0, stop_level=float(max(taus)), direction=1,
                        acc_kind=K.ACC_VT_GAMMA0_DTAU, r_lo=r_lo, r_hi=r_hi)
        cross, info, _ = push_reduced(ex, L, params, spec, budget, tol)
        at = cross[:, :, 2]
        acc = np.where(np.isfinite(at), at, info[:, 2][:, None])
        bulk = (ens.weight[:, None] * acc).sum(axis=0)
        E0s.append(E0)
        bulks.append(bulk.tolist())
        ratios.append(float(np.max(bulk)) / E0 if E0 > 0 else 0.0)
    report = TrappingReport(eps, E0s, [float(t) for t in taus], bulks, ratios)
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    gain = _ratio(ratios[-1], ratios[0]) if ratios else 0.0
    passed = increasing and gain >= min_gain
    rows = []
    for e, E0, bl in zip(eps, E0s, bulks):
        for t, b in zip(taus, bl):
            rows.append([e, float(t), E0, b, b / E0 if E0 > 0 else 0.0])
    return ExperimentReport(
        "trapping", passed,
        constants={"ratio": dict(zip([str(e) for e in eps], ratios)), "gain_last_over_first": gain},
        tables=[Table("trapping", ["epsilon", "T", "E0", "bulk", "ratio"], rows)],
        details={"report": asdict(report), "strictly_increasing": increasing, "min_gain": min_gain,
                 "t_anchor": ta, "r_window": [r_lo, r_hi]},
        warnings=warn, runtime_s=time.perf_counter() - t0,
    )


# --- pointwise envelopes ---------------------------------------------------------------------


def point_on_leaf(tau: float, r_star: float, params: BlackHoleParams) -> float:
    """t of the point with foliation time tau and tortoise radius r_star."""
    M = params.M
    r = float(r_of_r_star(r_star, M))
    if r < params.R0:
        return tau - 2.0 * M * math.log(r - 2.0 * M)
    return tau + params.u0 + r_star


def pointwise_admissible(p: float, s: float) -> dict:
    """Hypotheses of the pointwise statement: (2+s)p not an integer, 1 < s <= 2, its ceiling even,
    zeta_{ceil((2+s)p) + 4}(s) >= (2+s)p + 4."""
    from .phase_space import zeta

    x = (2.0 + s) * p
    k = math.ceil(x)
    z = zeta(k + 4, s)
    ok = (not float(x).is_integer()) and 1.0 < s <= 2.0 and k % 2 == 0 and z >= x + 4.0
    return {"ok": ok, "x": x, "ceil": k, "zeta": z}


def run_pointwise(
    f=None,
    p: float = 1.9,
    s: float = 1.004,
    taus=(1.0, 2.0, 4.0, 8.0, 16.0),
    r_stars=(-2.0, 0.0, 3.0, 10.0, 30.0),
    params: BlackHoleParams = BlackHoleParams(),
    quad: QuadSpec = QuadSpec(),
    theta: float = math.pi / 2,
    phi: float = 0.0,
) -> ExperimentReport:
    """r^2 (1+|tau|)^p int |f||v_N|^2 dmu_P and r^2 (1+|t+r*|)^p times its (|v_ubar|/|v_t|)^{p/2} variant."""
    t0 = time.perf_counter()
    adm = pointwise_admissible(p, s)
    if not adm["ok"]:
        raise ValueError(f"run_pointwise: (p={p}, s={s}) violates the pointwise hypotheses: {adm}")
    f = f if f is not None else SeparableBump()
    M = params.M
    specs = (MomentSpec.vN(2.0), MomentSpec(vN_power=2.0, W_q=p / 2.0))
    taus = [float(t) for t in taus]
    r_stars = [float(x) for x in r_stars]
    Q1 = np.zeros((len(taus), len(r_stars)))
    Q2 = np.zeros_like(Q1)
    E1 = np.zeros_like(Q1)  # scaled quadrature error estimates
    E2 = np.zeros_like(Q1)
    rows = []
    for i, tau in enumerate(taus):
        for j, rs in enumerate(r_stars):
            t = point_on_leaf(tau, rs, params)
            r = float(r_of_r_star(rs, M))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                m1, m2 = pointwise_moments((t, rs, theta, phi), specs, f, params, quad)
            s1 = r * r * (1.0 + abs(tau)) ** p
            s2 = r * r * (1.0 + abs(t + rs)) ** p
            Q1[i, j], E1[i, j] = s1 * m1.value, s1 * m1.err_est
            Q2[i, j], E2[i, j] = s2 * m2.value, s2 * m2.err_est
            rows.append([tau, rs, t, r, m1.value, m1.err_est, Q1[i, j], m2.value, m2.err_est, Q2[i, j]])
    # a cell counts as resolved when its error is small against its own value or against the
    # recorded constant: an error far below the constant cannot move it
    C1, C2 = float(np.max(Q1)), float(np.max(Q2))
    ok1 = (E1 <= quad.rel_tol * np.abs(Q1)) | (E1 <= quad.rel_tol * C1)
    ok2 = (E2 <= quad.rel_tol * np.abs(Q2)) | (E2 <= quad.rel_tol * C2)
    unresolved = []
    for k, row in enumerate(rows):
        i, j = divmod(k, len(r_stars))
        good = bool(ok1[i, j] and ok2[i, j])
        row.append(int(good))
        if not good:
            unresolved.append([row[0], row[1]])
    finite = bool(np.all(np.isfinite(Q1)) and np.all(np.isfinite(Q2)) and np.all(Q1 >= 0) and np.all(Q2 >= 0))
    cols_ok = all(bounded_rule(Q1[:, j]) and bounded_rule(Q2[:, j]) for j in range(len(r_stars)))
    passed = finite and cols_ok and not unresolved
    warn = [f"quadrature unresolved at (tau, r*) = {u}" for u in unresolved]
    return ExperimentReport(
        "pointwise", passed,
        constants={"C_vN2": C1, "C_weighted": C2},
        tables=[Table("pointwise", ["tau", "r_star", "t", "r", "moment", "moment_err", "scaled",
                                    "weighted_moment", "weighted_err", "weighted_scaled", "resolved"], rows)],
        details={"p": p, "s": s, "admissibility": adm, "columns_bounded": cols_ok, "theta": theta, "phi": phi},
        warnings=warn, runtime_s=time.perf_counter() - t0,
    )


# --- exterior region -----------------------------------------------------------------------


def exterior_bump(params: BlackHoleParams = BlackHoleParams(), width: float = 40.0) -> SeparableBump:
    """Bump on S supported in r* >= R0* + 2, with mixed radial directions and L bounded away from 0."""
    lo = params.R0_star + 2.0
    return SeparableBump(r_star_center=lo + width, r_star_width=width, v_center=(0.0, 1.2, 0.0),
                         v_width=(0.9, 0.5, 1.0))


def run_exterior(
    f=None,
    d: float = 2.0,
    taus=(-64.0, -32.0, -16.0, -8.0, -4.0),
    params: BlackHoleParams = BlackHoleParams(),
    n_particles: int = 100_000,
    sampling: str = "gauss",
    seed: int = 0,
    c_max: float = 1.0,
) -> ExperimentReport:
    """N_tau energy flux for tau < 0 against the (1 + |u|)^d-weighted initial energy."""
    t0 = time.perf_counter()
    if any(t >= 0 for t in taus):
        raise ValueError("run_exterior: the ladder must lie in tau < 0")
    f = f if f is not None else exterior_bump(params)
    lo = f.support()[0][0]
    if lo < params.R0_star + 2.0 - 1e-12:
        raise ValueError("run_exterior: data must be supported in r* >= R0* + 2")
    ens = build_ensemble(f, n_particles, params, sampling=sampling, seed=seed)
    spec = MomentSpec.vN(1.0)
    res = stream_push(ens, params, taus, specs=(spec,))
    if len(ens):
        u = ens.t - ens.r_star
        vN = spec(ens.r(params.M), ens.v_rstar, ens.L(), params)
        anchor = float(np.sum(ens.weight * (1.0 + np.abs(u)) ** d * vN))
        norm = initial_energy_norm(f, WeightSpec(a=1.0, q=d, s=1.0), params, ensemble=ens)["total"]
    else:
        anchor = norm = 0.0
    flux = res.fluxes[spec.weight_id]
    scaled = flux * (1.0 + np.abs(res.taus)) ** d
    C = max((_ratio(v, anchor) for v in scaled), default=0.0)
    passed = C <= c_max
    rows = [[float(t), float(v), float(sv), _ratio(float(sv), anchor), int(c)]
            for t, v, sv, c in zip(res.taus, flux, scaled, res.crossings)]
    return ExperimentReport(
        "exterior", passed,
        constants={"C": C, "anchor_u_weighted": anchor, "initial_norm": norm, "c_max": c_max},
        tables=[Table("exterior", ["tau", "flux", "scaled", "scaled_over_anchor", "crossings"], rows)],
        details={"d": d, "particles": len(ens), "exits": res.exits},
        runtime_s=time.perf_counter() - t0,
    )


# --- geodesic fidelity -----------------------------------------------------------------------


def run_geodesic(
    params: BlackHoleParams = BlackHoleParams(),
    n_random: int = 1000,
    s_max: float = 1000.0,
    t_circular: float = 100.0,
    seed: int = 0,
    r_tol: float = 1e-6,
    drift_tol: float = 1e-7,
    tol: Tolerances = Tolerances(),
) -> ExperimentReport:
    """Circular photon orbit over a fixed time span, and conserved-quantity drift on random geodesics."""
    t0 = time.perf_counter()
    M = params.M
    r = 3.0 * M
    # dt/ds = |v_t| / Delta = 1 on the orbit, so s and t advance together
    state = GeodesicState(0.0, 0.0, float(r_star_of_r(r, M)), math.pi / 2, 0.0, 0.0, 0.0, math.sqrt(3.0) * M)
    traj = integrate(state, params, budget=Budget(s_max=t_circular), tol=tol)
    ss = np.linspace(0.0, traj.exit_s, 2001)
    rr = np.array([traj.reduced_at(x)[1] for x in ss] + [traj.exit_y[1]])
    r_dev = float(np.max(np.abs(rr - r)))
    t_end = traj.state_at(traj.exit_s).t
    E_circ = traj.E0
    rng = np.random.default_rng(seed)
    x = np.exp(rng.uniform(math.log(0.05), math.log(50.0), n_random))
    r0 = 2.0 * M + x * M
    t_star = rng.uniform(-10.0, 10.0, n_random)
    vr = rng.standard_normal(n_random)
    Ls = np.abs(rng.standard_normal(n_random)) * 4.0 * M
    Y0 = np.column_stack([t_star, r0, np.zeros(n_random), vr])
    _, info, ex = push_reduced(Y0, Ls, params, PushSpec(stop_kind=1, stop_level=math.inf),
                               Budget(s_max=s_max), tol)
    drift = info[:, 5]
    E_end = np.sqrt(np.maximum(ex[:, 3] ** 2 + (1 - 2 * M / ex[:, 1]) * Ls**2 / ex[:, 1] ** 2, 0.0))
    E_start = np.sqrt(Y0[:, 3] ** 2 + (1 - 2 * M / Y0[:, 1]) * Ls**2 / Y0[:, 1] ** 2)
    end_drift = np.abs(E_end - E_start) / E_start
    max_drift = float(max(np.max(drift), np.max(end_drift)))
    kinds = info[:, 0].astype(int)
    passed = r_dev <= r_tol * M and max_drift <= drift_tol and abs(t_end - t_circular) < 1e-6 * t_circular \
        and not np.any(kinds == K.FAILED)
    exits = {name: int(np.sum(kinds == code)) for name, code in
             (("horizon", K.HORIZON), ("escape", K.ESCAPE), ("budget", K.BUDGET), ("failed", K.FAILED))}
    rows = [[float(a), float(b)] for a, b in zip(ss[::100], rr[:-1][::100])]
    return ExperimentReport(
        "geodesic", passed,
        constants={"circular_max_r_deviation": r_dev, "max_relative_drift": max_drift},
        tables=[Table("circular_orbit", ["s", "r"], rows)],
        details={"t_end": t_end, "v_t_circular": -E_circ, "random_exits": exits, "n_random": n_random,
                 "s_max": s_max, "r_tol": r_tol, "drift_tol": drift_tol},
        runtime_s=time.perf_counter() - t0,
    )
