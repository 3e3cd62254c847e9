"""Pointwise identities and inequalities of the Liouville flow, checked by two routes.

Each check evaluates the flow derivative with forward-mode dual numbers on every
sample, and again with central finite differences (step 1e-6 times the local scale)
on a 1% subsample. Errors are relative to the sum of absolute values of the terms
that make up the identity, so they are invariant under rescaling the momentum.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dual as dm
from .dual import Dual
from .geodesic_flow import liouville_rhs
from .geometry import BlackHoleParams, delta, delta_of_r_star, r_of_r_star, r_star_of_r
from .phase_space import angular_momentum_sq, chi, null_components, rotation_field

DUAL_TOL = 1e-9
FD_TOL = 1e-5


@dataclass
class IdentityReport:
    identity: str
    samples: int
    max_rel_err: float
    max_rel_err_fd: float
    tolerance: float
    tolerance_fd: float
    passed: bool
    worst_margin: float | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=float)


# --- sampling ---------------------------------------------------------------------


def sample_phase_points(rng: np.random.Generator, n: int, params: BlackHoleParams,
                        r_range: tuple | None = None, pole_margin: float = 0.1) -> list:
    """Random points of the 7-dim phase space; r - 2M log-uniform unless r_range is given."""
    M = params.M
    if r_range is None:
        r = 2.0 * M + np.exp(rng.uniform(math.log(1e-3 * M), math.log(40.0 * M), n))
    else:
        lo, hi = r_range
        r = 2.0 * M + np.exp(rng.uniform(math.log(lo - 2.0 * M), math.log(hi - 2.0 * M), n))
    t = rng.uniform(-10.0, 10.0, n) * M
    theta = rng.uniform(pole_margin, math.pi - pole_margin, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    scale = 10.0 ** rng.uniform(-1.0, 1.0, n)
    v = rng.standard_normal((3, n)) * scale
    return [t, r_star_of_r(r, M), theta, phi, v[0], v[1] * M, v[2] * M]


def _subsample(y: list, rng: np.random.Generator, frac: float = 0.01, minimum: int = 10) -> list:
    n = len(y[0])
    k = min(n, max(minimum, int(round(frac * n))))
    idx = np.sort(rng.choice(n, k, replace=False))
    return [np.asarray(c)[idx] for c in y]


def _flow(params):
    return lambda y: liouville_rhs(y, params)


def flow_derivative(g, y, params):
    """T(g) at y by dual numbers."""
    return dm.derivative(g, y, liouville_rhs(y, params))


def _chain_terms(g, y, direction):
    n = len(y)
    zero = 0.0 * np.asarray(dm.real(y[0]), dtype=float)
    out = []
    for k in range(n):
        dk = [direction[j] * (1.0 + zero) if j == k else zero for j in range(n)]
        out.append(np.abs(np.asarray(dm.derivative(g, y, dk))) * np.ones_like(zero))
    return out


def term_scale(g, y, direction):
    """sum_k |d_k g * direction_k|: the magnitude of the chain-rule terms."""
    return np.sum(_chain_terms(g, y, direction), axis=0)


def fd_directional(g, y, direction, rel_step: float = 1e-6):
    """Central difference of g along y + h * direction, with the step picked per sample.

    The base step is rel_step times the time over which the coordinates g depends on
    change by their own size,
    raised to 1e-3 of the time over which g changes by its own size when g barely moves
    (at most a thousandfold).
    Around it a ladder of steps (factors of 4) is tried; each rung gives a Richardson
    combination of the h and 2h differences, and the rung that agrees best with the next
    one up is kept.
    """
    direction = [np.asarray(d, dtype=float) * np.ones_like(y[0]) for d in direction]
    terms = _chain_terms(g, y, direction)
    # only coordinates g actually depends on limit the step
    size = np.max([np.where(tk > 0, np.abs(d) / np.maximum(1.0, np.abs(c)), 0.0)
                   for d, c, tk in zip(direction, y, terms)], axis=0)
    g0 = np.abs(np.asarray(g(y), dtype=float)) * np.ones_like(y[0])
    S = np.sum(terms, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_g = np.where(S > 0, g0 / np.where(S > 0, S, 1.0), 0.0)
        t_y = np.where(size > 0, 1.0 / np.where(size > 0, size, 1.0), 1.0)
    h0 = rel_step * np.clip(1e-3 * t_g, t_y, 1e3 * t_y)

    # differences are taken in long double so cancellation inside g does not swamp them
    yl = [np.asarray(c, dtype=np.longdouble) for c in y]
    dl = [np.asarray(d, dtype=np.longdouble) for d in direction]

    def central(step):
        step = np.asarray(step, dtype=np.longdouble)
        yp = [c + step * d for c, d in zip(yl, dl)]
        ym = [c - step * d for c, d in zip(yl, dl)]
        return ((np.asarray(g(yp)) - np.asarray(g(ym))) / (2.0 * step)).astype(float)

    ests = []
    for factor in (1.0 / 16.0, 0.25, 1.0, 4.0, 16.0, 64.0):
        ests.append((4.0 * central(h0 * factor) - central(2.0 * h0 * factor)) / 3.0)
    best, best_gap = ests[0], None
    for lo, hi in zip(ests[:-1], ests[1:]):
        gap = np.abs(hi - lo)
        gap = np.where(np.isfinite(gap), gap, np.inf)
        if best_gap is None:
            best, best_gap = lo, gap
        else:
            take = gap < best_gap
            best = np.where(take, lo, best)
            best_gap = np.where(take, gap, best_gap)
    return best


def flow_derivative_fd(g, y, params, rel_step: float = 1e-6):
    """T(g) at y by a central difference along the straight line y + h X(y)."""
    return fd_directional(g, y, liouville_rhs(y, params), rel_step)


def _rel(err, scale):
    scale = np.asarray(scale, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(scale > 0, err / np.where(scale > 0, scale, 1.0), np.where(err > 0, np.inf, 0.0))
    return out


def _max(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(a)) if a.size else 0.0


# --- phase-space functions written once for floats and duals ---------------------------


def _r(y, params):
    return r_of_r_star(y[1], params.M)


def _L2(y):
    return angular_momentum_sq(y[2], y[5], y[6])


def _frame(y, params):
    r = _r(y, params)
    return r, null_components(r, y[4], _L2(y), params.M)


def f_vt(params):
    return lambda y: _frame(y, params)[1][0]


def f_L2(y):
    return _L2(y)


def f_vphi(y):
    return y[6]


def f_vrstar(y):
    return y[4]


def f_L(y):
    return dm.sqrt(_L2(y))


def f_abs_vN(params):
    def g(y):
        r, (v_t, v_u, _) = _frame(y, params)
        c = chi(r, params)
        D = delta(r, params.M)
        return -(2.0 * c * v_u / D + 8.0 * c * D * v_t + v_t)

    return g


def f_vN(params):
    g = f_abs_vN(params)
    return lambda y: -g(y)


def f_two_vu_over_delta(params):
    def g(y):
        r, (_, v_u, _) = _frame(y, params)
        return -2.0 * v_u / delta(r, params.M)

    return g


def f_delta_vt(params):
    def g(y):
        r, (v_t, _, _) = _frame(y, params)
        return -delta(r, params.M) * v_t

    return g


def f_weight(params, p, q):
    def g(y):
        r, (v_t, _, v_ubar) = _frame(y, params)
        return r ** p * (dm.fabs(v_ubar) / dm.fabs(v_t)) ** q

    return g


# --- checks -----------------------------------------------------------------------------


def _finish(identity, n, errs, errs_fd, tol=DUAL_TOL, tol_fd=FD_TOL, details=None, margin=None, extra_ok=True):
    e, efd = _max(errs), _max(errs_fd)
    ok = bool(e <= tol and efd <= tol_fd and extra_ok and (margin is None or margin >= 0.0))
    return IdentityReport(identity, n, e, efd, tol, tol_fd, ok, margin, details or {})


def _hamiltonian(y8, M):
    """(1/2) g^{-1}(v, v) on the 8-dim cotangent chart (t, r*, theta, phi, v_t, v_rstar, v_theta, v_phi)."""
    r = r_of_r_star(y8[1], M)
    D = delta_of_r_star(y8[1], M)
    return 0.5 * ((y8[5] * y8[5] - y8[4] * y8[4]) / D + angular_momentum_sq(y8[2], y8[6], y8[7]) / (r * r))


def _hamilton_field(y8, M):
    """Hamiltonian vector field, derivatives of H taken with dual numbers."""
    n = len(y8)
    zero = 0.0 * np.asarray(dm.real(y8[0]))
    grad = []
    for k in range(n):
        e = [zero + (1.0 if j == k else 0.0) for j in range(n)]
        grad.append(dm.derivative(lambda z: _hamiltonian(z, M), y8, e))
    dq = grad[:4]
    dp = grad[4:]
    return list(dp) + [-g for g in dq]


def check_conserved_quantities(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(),
                               seed: int = 0) -> IdentityReport:
    """T(v_t) = T(L^2) = T(v_phi) = 0 on shell, and X_H(H) = 0 off shell."""
    rng = np.random.default_rng(seed)
    y = sample_phase_points(rng, n_samples, params)
    ysub = _subsample(y, rng)
    X = liouville_rhs(y, params)
    errs, errs_fd, det = [], [], {}
    for name, g in (("v_t", f_vt(params)), ("L2", f_L2), ("v_phi", f_vphi)):
        val = flow_derivative(g, y, params)
        sc = term_scale(g, y, X)
        e = _rel(val, sc)
        efd = _rel(flow_derivative_fd(g, ysub, params), term_scale(g, ysub, liouville_rhs(ysub, params)))
        errs.append(e)
        errs_fd.append(efd)
        det[name] = {"dual": _max(e), "fd": _max(efd)}
    # off-shell: v_t is an independent coordinate
    M = params.M
    vt = -np.abs(rng.standard_normal(n_samples)) * 10.0 ** rng.uniform(-1, 1, n_samples)
    y8 = y[:4] + [vt] + y[4:]
    XH = _hamilton_field(y8, M)
    H = lambda z: _hamiltonian(z, M)
    val = dm.derivative(H, y8, XH)
    e = _rel(val, term_scale(H, y8, XH))
    # finite-difference route for the off-shell case
    k = len(ysub[0])
    y8s = [c[:k] for c in y8]
    XHs = _hamilton_field(y8s, M)
    fd = fd_directional(H, y8s, XHs)
    efd = _rel(fd, term_scale(H, y8s, XHs))
    errs.append(e)
    errs_fd.append(efd)
    det["hamiltonian_off_shell"] = {"dual": _max(e), "fd": _max(efd)}
    return _finish("conserved_quantities", n_samples, np.concatenate(errs), np.concatenate(errs_fd), details=det)


def _default_test_functions():
    return {
        "v_rstar": lambda y: y[4],
        "t_vphi": lambda y: y[0] * y[6],
        "constant": lambda y: 0.0 * y[0] + 1.0,
        "poly_mixed": lambda y: y[0] * y[1] * dm.cos(y[2]) + y[5] * y[5] * dm.sin(y[3])
        + y[4] * y[6] * dm.cos(2.0 * y[3]) + y[1] * y[5] * dm.sin(y[2]),
    }


def _commutator_nested(g, y, i, params):
    """(T(Omega_i g), Omega_i(T g)) by nesting dual numbers."""
    X = liouville_rhs(y, params)
    outer = dm.seed(y, X)
    R_outer = rotation_field(i, outer)
    inner = [Dual(a, b) for a, b in zip(outer, R_outer)]
    A = g(inner)
    A = A.du.du if isinstance(A.du, Dual) else 0.0 * y[0]
    R = rotation_field(i, y)
    outer2 = dm.seed(y, R)
    X2 = liouville_rhs(outer2, params)
    inner2 = [Dual(a, b) for a, b in zip(outer2, X2)]
    B = g(inner2)
    B = B.du.du if isinstance(B, Dual) and isinstance(B.du, Dual) else 0.0 * y[0]
    return np.asarray(A) * np.ones_like(y[0]), np.asarray(B) * np.ones_like(y[0])


def _commutator_scale(g, y, i, params):
    """sum_k |d_k g| (sum_j |d_j R_k X_j| + sum_j |d_j X_k R_j|): sizes of the cancelling terms."""
    X = [np.asarray(x) * np.ones_like(y[0]) for x in liouville_rhs(y, params)]
    R = [np.asarray(x) * np.ones_like(y[0]) for x in rotation_field(i, y)]
    n = len(y)
    comp = [np.zeros_like(y[0]) for _ in range(n)]
    zero = np.zeros_like(y[0])
    for j in range(n):
        ej_X = [X[j] if m == j else zero for m in range(n)]
        ej_R = [R[j] if m == j else zero for m in range(n)]
        dRj = [np.asarray(c.du) if isinstance(c, Dual) else 0.0 for c in rotation_field(i, dm.seed(y, ej_X))]
        dXj = [np.asarray(c.du) if isinstance(c, Dual) else 0.0 for c in liouville_rhs(dm.seed(y, ej_R), params)]
        for k in range(n):
            comp[k] = comp[k] + np.abs(dRj[k]) + np.abs(dXj[k])
    total = np.zeros_like(y[0])
    for k in range(n):
        ek = [np.ones_like(y[0]) if m == k else zero for m in range(n)]
        total = total + np.abs(np.asarray(dm.derivative(g, y, ek))) * comp[k]
    return total


def check_commutation(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0,
                      test_functions: dict | None = None) -> IdentityReport:
    """[T, Omega-hat_i] g = 0 for i = 1, 2, 3 and a family of test functions g."""
    rng = np.random.default_rng(seed)
    y = sample_phase_points(rng, n_samples, params)
    ysub = _subsample(y, rng)
    funcs = test_functions or _default_test_functions()
    errs, errs_fd, det = [], [], {}
    for name, g in funcs.items():
        for i in (1, 2, 3):
            A, B = _commutator_nested(g, y, i, params)
            sc = _commutator_scale(g, y, i, params) + np.abs(A) + np.abs(B)
            e = _rel(A - B, sc)
            # second route: outer flow derivative by finite differences, inner rotation by duals
            rot_g = lambda z, i=i, g=g: np.asarray(dm.derivative(g, z, rotation_field(i, z))) * np.ones_like(z[0])
            Afd = flow_derivative_fd(rot_g, ysub, params)
            Tg = lambda z, g=g: np.asarray(flow_derivative(g, z, params)) * np.ones_like(z[0])
            Bfd = fd_directional(Tg, ysub, rotation_field(i, ysub))
            scs = _commutator_scale(g, ysub, i, params) + np.abs(Afd) + np.abs(Bfd)
            efd = _rel(Afd - Bfd, scs)
            errs.append(e)
            errs_fd.append(efd)
            det[f"{name}/Omega{i}"] = {"dual": _max(e), "fd": _max(efd)}
    return _finish("commutation", n_samples, np.concatenate(errs), np.concatenate(errs_fd), details=det)


def ty_closed_forms(r, v_u, v_ubar, M: float = 1.0):
    """Closed forms of T(2|v_u|/Delta) and T(Delta |v_t|), with their separate terms."""
    D = delta(r, M)
    a1 = -4.0 * M * v_u**2 / (r * r * D * D)
    a2 = 4.0 * np.abs(v_ubar) * np.abs(v_u) / (r * D)
    b1 = 2.0 * M * v_u**2 / (r * r)
    b2 = -2.0 * M * v_ubar**2 / (r * r)
    return (a1 + a2, np.abs(a1) + np.abs(a2)), (b1 + b2, np.abs(b1) + np.abs(b2))


def check_Ty(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0) -> IdentityReport:
    rng = np.random.default_rng(seed)
    y = sample_phase_points(rng, n_samples, params)
    ysub = _subsample(y, rng)
    M = params.M
    out_e, out_fd, det = [], [], {}
    for yy, store in ((y, out_e), (ysub, out_fd)):
        r = r_of_r_star(yy[1], M)
        _, v_u, v_ubar = null_components(r, yy[4], _L2(yy), M)
        (A, sA), (B, sB) = ty_closed_forms(r, v_u, v_ubar, M)
        for name, g, ref, sc in (("T(2|v_u|/Delta)", f_two_vu_over_delta(params), A, sA),
                                 ("T(Delta|v_t|)", f_delta_vt(params), B, sB)):
            val = flow_derivative(g, yy, params) if store is out_e else flow_derivative_fd(g, yy, params)
            e = _rel(val - ref, sc)
            store.append(e)
            det.setdefault(name, {})["dual" if store is out_e else "fd"] = _max(e)
    return _finish("Ty", n_samples, np.concatenate(out_e), np.concatenate(out_fd), tol=1e-10, details=det)


def _vanishing_scale(g, y, params):
    X = liouville_rhs(y, params)
    rate = np.max([np.abs(np.asarray(d) * np.ones_like(y[0])) / np.maximum(1.0, np.abs(c)) for d, c in zip(X, y)], axis=0)
    return np.asarray(term_scale(g, y, X), dtype=float) + np.abs(np.asarray(g(y), dtype=float)) * rate


def check_redshift(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0,
                   r_min_offset: float = 1e-6) -> IdentityReport:
    """Red-shift lower bound near the horizon and exact vanishing for r >= r1."""
    rng = np.random.default_rng(seed)
    M = params.M
    g = f_abs_vN(params)
    # (i) near the horizon
    y = sample_phase_points(rng, n_samples, params, r_range=(2.0 * M + r_min_offset, params.r0))
    r = r_of_r_star(y[1], M)
    # keep r within range after the tortoise round trip
    r = np.minimum(r, params.r0)
    y[1] = r_star_of_r(r, M)
    _, v_u, v_ubar = null_components(r, y[4], _L2(y), M)
    D = delta(r, M)
    lower = (v_u**2 / D**2 + 4.0 * v_ubar**2) / (9.0 * M)
    TvN = np.asarray(flow_derivative(g, y, params))
    margin = -TvN - lower
    rel_margin = margin / np.maximum(np.abs(TvN), 1e-300)
    ysub = _subsample(y, rng)
    rs = r_of_r_star(ysub[1], M)
    _, su, sub = null_components(rs, ysub[4], _L2(ysub), M)
    lower_s = (su**2 / delta(rs, M) ** 2 + 4.0 * sub**2) / (9.0 * M)
    Tfd = flow_derivative_fd(g, ysub, params)
    margin_fd = (-Tfd - lower_s) / np.maximum(np.abs(Tfd), 1e-300)
    # (ii) beyond r1
    y2 = sample_phase_points(rng, n_samples, params, r_range=(params.r1, 40.0 * M))
    # the chain-rule terms all vanish at r = 3M, so the scale also carries |g| times the
    # relative rate at which the state moves
    T2 = np.asarray(flow_derivative(g, y2, params))
    e2 = _rel(T2, _vanishing_scale(g, y2, params))
    ysub2 = _subsample(y2, rng)
    e2fd = _rel(flow_derivative_fd(g, ysub2, params), _vanishing_scale(g, ysub2, params))
    # (iii) transition region: record B with |T|v_N|| <= B v_t^2
    y3 = sample_phase_points(rng, n_samples, params, r_range=(params.r0, params.r1))
    r3 = r_of_r_star(y3[1], M)
    vt3 = null_components(r3, y3[4], _L2(y3), M)[0]
    B = float(np.max(np.abs(np.asarray(flow_derivative(g, y3, params))) / vt3**2))
    worst = float(np.min(rel_margin))
    det = {
        "near_horizon_min_margin_relative": worst,
        "near_horizon_min_margin_relative_fd": float(np.min(margin_fd)),
        "outer_zero_max_rel": _max(e2),
        "transition_B": B,
    }
    ok_outer = _max(e2) <= 1e-12
    return _finish("redshift", n_samples, e2, e2fd, tol=1e-12, details=det,
                   margin=min(worst, float(np.min(margin_fd))), extra_ok=ok_outer)


def hierarchy_closed_form(r, v_t, v_ubar, L2, p, q, M: float = 1.0):
    E = np.abs(v_t)
    ub = np.abs(v_ubar)
    base = ub ** (q - 1) / E**q * L2 / (r * r)
    t1 = p * r ** (p - 1) * ub ** (q + 1) / E**q
    t2 = 0.25 * (2 * q - p) * r ** (p - 1) * base
    t3 = -(3 * q - p) * 0.5 * M * r ** (p - 2) * base
    return t1 + t2 + t3, np.abs(t1) + np.abs(t2) + np.abs(t3)


def check_weight_hierarchy(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0,
                           pq_pairs=((0.0, 1.0), (2.0, 1.0), (1.9, 0.95), (1.0, 2.0), (0.5, 0.5))) -> IdentityReport:
    """-T(r^p (|v_ubar|/|v_t|)^q) against its three-term closed form."""
    rng = np.random.default_rng(seed)
    M = params.M
    y = sample_phase_points(rng, n_samples, params)
    ysub = _subsample(y, rng)
    errs, errs_fd, det = [], [], {}
    for p, q in pq_pairs:
        if not 0 <= p <= 2 * q:
            raise ValueError(f"check_weight_hierarchy: need 0 <= p <= 2q, got p={p}, q={q}")
        g = f_weight(params, p, q)
        for yy, store in ((y, errs), (ysub, errs_fd)):
            r = r_of_r_star(yy[1], M)
            L2 = _L2(yy)
            v_t, _, v_ubar = null_components(r, yy[4], L2, M)
            keep = np.abs(v_ubar) > 0
            if q < 1:
                keep &= np.abs(v_ubar) > 1e-6 * np.abs(v_t)
            yk = [c[keep] for c in yy]
            ref, sc = hierarchy_closed_form(r[keep], v_t[keep], v_ubar[keep], L2[keep], p, q, M)
            val = -np.asarray(flow_derivative(g, yk, params) if store is errs else flow_derivative_fd(g, yk, params))
            e = _rel(val - ref, sc)
            store.append(e)
            det.setdefault(f"p={p:g},q={q:g}", {})["dual" if store is errs else "fd"] = _max(e)
    return _finish("weight_hierarchy", n_samples, np.concatenate(errs), np.concatenate(errs_fd), tol=1e-10, details=det)


def check_lift_annihilation(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(),
                            seed: int = 0) -> IdentityReport:
    """Omega-hat_i kills v_rstar, L, v_t and v_N."""
    rng = np.random.default_rng(seed)
    y = sample_phase_points(rng, n_samples, params)
    ysub = _subsample(y, rng)
    errs, errs_fd, det = [], [], {}
    for name, g in (("v_rstar", f_vrstar), ("L", f_L), ("v_t", f_vt(params)), ("v_N", f_vN(params))):
        for i in (1, 2, 3):
            R = rotation_field(i, y)
            val = np.asarray(dm.derivative(g, y, R)) * np.ones_like(y[0])
            e = _rel(val, term_scale(g, y, R) + 1e-300)
            Rs = [np.asarray(x) * np.ones_like(ysub[0]) for x in rotation_field(i, ysub)]
            fd = fd_directional(g, ysub, Rs)
            efd = _rel(fd, term_scale(g, ysub, Rs) + 1e-300)
            errs.append(e)
            errs_fd.append(efd)
            det[f"Omega{i}({name})"] = {"dual": _max(e), "fd": _max(efd)}
    return _finish("lift_annihilation", n_samples, np.concatenate(errs), np.concatenate(errs_fd), tol=1e-10, details=det)


def check_convention(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0) -> IdentityReport:
    """The radial force -d_{r*} H equals (r - 3M) L^2/r^4 only with L^2 = v_theta^2 + v_phi^2/sin^2 theta."""
    rng = np.random.default_rng(seed)
    M = params.M
    y = sample_phase_points(rng, n_samples, params)

    def force_pair(yy, fd: bool):
        r = r_of_r_star(yy[1], M)
        L2 = _L2(yy)
        v_t = null_components(r, yy[4], L2, M)[0]
        y8 = yy[:4] + [v_t] + yy[4:]
        H = lambda z: _hamiltonian(z, M)
        e = [np.zeros_like(yy[0]) for _ in range(8)]
        e[1] = np.ones_like(yy[0])
        dH = fd_directional(H, y8, e) if fd else dm.derivative(H, y8, e)
        force = -np.asarray(dH)
        adopted = (r - 3.0 * M) * L2 / r**4
        alt = (r - 3.0 * M) * (yy[5] ** 2 + np.sin(yy[2]) ** 2 * yy[6] ** 2) / r**4
        # terms of -d_{r*}H: (Delta'/2Delta)(v_rstar^2 - v_t^2), which cancel to leading order, and Delta L^2/r^3
        D = delta(r, M)
        sc = 0.5 * (2.0 * M / r**2) / D * (yy[4] ** 2 + v_t**2) + D * L2 / r**3
        return force, adopted, alt, sc

    f, a, alt, sc = force_pair(y, False)
    e = _rel(f - a, sc)
    ysub = _subsample(y, rng)
    ffd, afd, _, scfd = force_pair(ysub, True)
    efd = _rel(ffd - afd, scfd)
    alt_err = _rel(f - alt, sc)
    generic = (np.abs(np.cos(y[2])) > 0.2) & (np.abs(y[6]) > 0.1 * np.abs(y[5]) + 1e-3)
    alt_median = float(np.median(alt_err[generic])) if np.any(generic) else 0.0
    det = {"adopted_max_rel": _max(e), "alternative_median_rel_generic": alt_median}
    return _finish("convention", n_samples, e, efd, tol=1e-12, details=det, extra_ok=alt_median > 1e-3)


ALL_CHECKS = {
    "conserved_quantities": check_conserved_quantities,
    "commutation": check_commutation,
    "Ty": check_Ty,
    "redshift": check_redshift,
    "weight_hierarchy": check_weight_hierarchy,
    "lift_annihilation": check_lift_annihilation,
    "convention": check_convention,
}


def run_all(n_samples: int = 10_000, params: BlackHoleParams = BlackHoleParams(), seed: int = 0) -> list:
    return [fn(n_samples, params, seed) for fn in ALL_CHECKS.values()]
