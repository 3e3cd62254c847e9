"""Acceptance criteria 1-10 at their stated sizes and tolerances.

Each test records one line "criterion N: PASS|FAIL ..." which is also printed in the
terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import CRITERIA
from schwarzschild_vlasov import _kernels as K
from schwarzschild_vlasov.experiments import (
    run_conservation,
    run_decay,
    run_exterior,
    run_geodesic,
    run_iled,
    run_pointwise,
    run_trapping,
)
from schwarzschild_vlasov.geometry import BlackHoleParams
from schwarzschild_vlasov.moments_fluxes import bulk_integral, direct_bulk_slab, push_ensemble
from schwarzschild_vlasov.verifier import ALL_CHECKS, check_redshift
from schwarzschild_vlasov.vlasov import SeparableBump, build_ensemble, mixed_bump

P = BlackHoleParams()


def record(n, ok, text):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
    CRITERIA.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    # compile the kernels once so runtimes below measure the work, not the JIT
    ens = build_ensemble(SeparableBump(), 64, P)
    push_ensemble(ens, P, [1.0], acc_kind=K.ACC_ONE, r_lo=0.0, r_hi=math.inf)
    check_redshift(n_samples=20)


def test_criterion_01_identity_suite():
    t0 = time.perf_counter()
    reps = [fn(n_samples=10_000) for name, fn in ALL_CHECKS.items() if name != "redshift"]
    dt = time.perf_counter() - t0
    worst = max(r.max_rel_err for r in reps)
    worst_fd = max(r.max_rel_err_fd for r in reps)
    ok = all(r.passed for r in reps) and worst <= 1e-9 and worst_fd <= 1e-5 and dt <= 10.0
    failed = [r.identity for r in reps if not r.passed]
    assert record(1, ok, f"{len(reps)} identities, dual {worst:.2e}, fd {worst_fd:.2e}, {dt:.1f} s {failed or ''}")


def test_criterion_02_redshift():
    t0 = time.perf_counter()
    rep = check_redshift(n_samples=10_000, r_min_offset=1e-6)
    dt = time.perf_counter() - t0
    margin = rep.worst_margin
    outer = rep.details["outer_zero_max_rel"]
    ok = rep.passed and margin >= 0.0 and outer <= 1e-12 and dt <= 5.0
    assert record(2, ok, f"min relative margin {margin:.3e}, outer T|v_N| {outer:.1e}, {dt:.1f} s")


def test_criterion_03_geodesic_fidelity():
    rep = run_geodesic(n_random=1000, s_max=1000.0, t_circular=100.0)
    c = rep.constants
    ok = (rep.passed and c["circular_max_r_deviation"] <= 1e-6 and c["max_relative_drift"] <= 1e-7
          and rep.runtime_s <= 30.0)
    assert record(3, ok, f"|r - 3M| {c['circular_max_r_deviation']:.1e}, drift {c['max_relative_drift']:.1e}, "
                         f"{rep.runtime_s:.1f} s")


def test_criterion_04_conservation():
    rep = run_conservation(SeparableBump(), taus=(4.0, 16.0, 64.0), n_particles=100_000)
    c = rep.constants
    ok = (rep.passed and c["number_residual_max"] <= 1e-9 and c["vt_residual_max"] <= 1e-6
          and rep.runtime_s <= 180.0)
    assert record(4, ok, f"number {c['number_residual_max']:.1e}, |v_t| {c['vt_residual_max']:.1e}, "
                         f"{rep.details['particles']} particles, {rep.runtime_s:.1f} s")


def test_criterion_05_bulk_coarea_oracle():
    t0 = time.perf_counter()
    f = SeparableBump()
    tau1, tau2 = 0.5, 0.6
    direct = direct_bulk_slab(f, P, tau1, tau2)
    ens = build_ensemble(f, 100_000, P)
    res = push_ensemble(ens, P, [tau1, tau2], acc_kind=K.ACC_ONE, r_lo=0.0, r_hi=math.inf, stop_tau=tau2 + 1e-9)
    particles = bulk_integral(res, tau2) - bulk_integral(res, tau1)
    dt = time.perf_counter() - t0
    rel = abs(particles - direct) / abs(direct)
    ok = direct > 0 and rel <= 0.01 and dt <= 60.0
    assert record(5, ok, f"slab [{tau1}, {tau2}]: particles {particles:.6g}, direct {direct:.6g}, "
                         f"rel {rel:.2e}, {dt:.1f} s")


def test_criterion_06_iled_convergence():
    rep = run_iled(SeparableBump(), s=1.02, n_particles=100_000, ratio_max=0.7)
    ratio = rep.constants["last_increment_ratio"]
    ok = rep.passed and ratio <= 0.7 and rep.runtime_s <= 300.0
    assert record(6, ok, f"last increment ratio {ratio:.3g}, bulk/RHS {rep.constants['bulk_over_rhs_max']:.3g}, "
                         f"{rep.runtime_s:.1f} s")


def _decay_ok(rep):
    c = rep.constants
    ctl = rep.details["negative_control"]
    return (rep.passed and max(c["boundedness_sup_over_initial"]) <= 2.0 and c["seed_spread"] <= 0.2
            and ctl is not None and not ctl["bounded"] and rep.runtime_s <= 600.0)


def test_criterion_07_weighted_energy_decay():
    generic = run_decay(SeparableBump(), p=1.9, s=1.02, n_particles=1_000_000, seeds=(0, 1))
    mixed = run_decay(mixed_bump(), p=1.9, s=1.02, n_particles=1_000_000, seeds=(0, 1))
    ok = _decay_ok(generic) and _decay_ok(mixed)

    def desc(rep):
        c = rep.constants
        return (f"C {[f'{x:.4g}' for x in c['C_per_seed']]}, spread {c['seed_spread']:.3f}, "
                f"sup/initial {max(c['boundedness_sup_over_initial']):.3f}, {rep.runtime_s:.0f} s")

    assert record(7, ok, f"generic: {desc(generic)}; mixed: {desc(mixed)}; circular control violates")


def test_criterion_08_trapping_obstruction():
    rep = run_trapping(epsilons=(0.2, 0.1, 0.05, 0.025))
    ratios = list(rep.constants["ratio"].values())
    gain = rep.constants["gain_last_over_first"]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    ok = rep.passed and increasing and gain >= 2.0 and rep.runtime_s <= 600.0
    assert record(8, ok, f"ratios {[f'{r:.3g}' for r in ratios]}, gain {gain:.3f}, {rep.runtime_s:.0f} s")


def test_criterion_09_pointwise_envelope():
    rep = run_pointwise(SeparableBump(), p=1.9)
    c = rep.constants
    ok = rep.passed and np.isfinite(c["C_vN2"]) and np.isfinite(c["C_weighted"]) and rep.runtime_s <= 600.0
    assert record(9, ok, f"C_vN2 {c['C_vN2']:.4g}, C_weighted {c['C_weighted']:.4g}, s {rep.details['s']}, "
                         f"{rep.runtime_s:.0f} s {rep.warnings or ''}")


def test_criterion_10_exterior_region():
    rep = run_exterior(d=2.0, taus=(-64.0, -32.0, -16.0, -8.0, -4.0), n_particles=100_000)
    c = rep.constants
    ok = rep.passed and c["C"] <= c["c_max"] and rep.runtime_s <= 180.0
    assert record(10, ok, f"sup flux (1+|tau|)^2 / anchor = {c['C']:.4g}, {rep.runtime_s:.1f} s")
