"""Acceptance criteria 1 to 10, one test per criterion.

Every test records a single summary line (printed at the end of the session)
and then asserts each of its checks.  Tolerances are fixed here; nothing is
relaxed to make a check pass.
"""
import time

import numpy as np
import pytest

from blowuplab.cli import build_sim_config, validate_config
from blowuplab.coefficient import CoefficientK
from blowuplab.groundstate import (
    compute_moments,
    ground_state_residual,
    solve_ground_state,
)
from blowuplab.linop import compute_rho
from blowuplab.lyapunov import (
    antisymmetry_residuals,
    append_lyapunov_columns,
    fit_coercivity,
    monotonicity_report,
    sample_decompositions,
)
from blowuplab.nlssim import (
    SimConfig,
    ansatz_field,
    blowup_rate_fit,
    measured_eps_exponent,
    modulation_residuals,
    run,
    structure_constants_for,
    virial_series,
)
from blowuplab.numerics import CartesianGrid, RadialGrid
from blowuplab.profile import ModParams, read_field_dump
from blowuplab.suites import (
    golden_comparison,
    loglog_slope,
    profile_sweep,
    strictly_decreasing,
    suite_ode,
    suite_profile,
    suite_spectral,
)

MONOTONICITY_T0 = (-0.02, -0.01, -0.005)
MONOTONICITY_C = 1.0


def conclude(log, number, checks, elapsed, budget):
    """Record one line for the criterion and assert every check.

    ``checks`` is a list of ``(label, ok)``; the runtime budget is one more check.
    """
    checks = list(checks) + [(f"runtime {elapsed:.1f}s <= {budget:g}s", elapsed <= budget)]
    passed = all(ok for _, ok in checks)
    failed = [label for label, ok in checks if not ok]
    detail = "; ".join(label for label, _ in checks)
    if failed:
        detail += "  | failing: " + "; ".join(failed)
    log.append((number, passed, detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    for label, ok in checks:
        assert ok, label


# ---------------------------------------------------------------------------
# shared PDE runs
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def inhomogeneous_runs(bundle):
    """Default runs (k1 = k2 = 1, C0 = 0.5) with Lyapunov tracking, one per t0."""
    out = {}
    for t0 in MONOTONICITY_T0:
        cfg = validate_config({"t0": t0, "lyapunov": {"enabled": True}})
        start = time.time()
        traj, _ = run(build_sim_config(cfg), bundle)
        append_lyapunov_columns(traj)
        out[t0] = (traj, time.time() - start)
    return out


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_ground_state(acceptance_log):
    start = time.time()
    grid = RadialGrid(25.0, 4096)
    Q = solve_ground_state(grid)
    moments = compute_moments(Q, compute_rho(Q))
    elapsed = time.time() - start

    class Fresh:  # the same shape as a bundle, built without the cache
        pass

    fresh = Fresh()
    fresh.Q, fresh.moments = Q, moments
    res = float(np.max(np.abs(ground_state_residual(grid, Q.full))))
    gaps = golden_comparison(fresh)
    checks = [(f"residual {res:.2e} <= 1e-8", res <= 1e-8)]
    for key in ("Q0", "mass", "variance", "quartic"):
        checks.append((f"{key} gap {gaps[key]:.1e} <= 1e-6", gaps[key] <= 1e-6))
    conclude(acceptance_log, 1, checks, elapsed, 10)


def test_criterion_02_spectral_identities(acceptance_log, bundle):
    start = time.time()
    checks = suite_spectral()
    elapsed = time.time() - start
    sup = [c for c in checks if "(sup, |y|<=12)" in c.name]
    order = [c for c in checks if c.name.endswith("refinement order")]
    assert len(sup) == 5 and len(order) == 5
    worst = max(c.value for c in sup)
    low = min(c.value for c in order)
    conclude(
        acceptance_log,
        2,
        [
            (f"max sup residual {worst:.2e} <= 1e-6", all(c.passed for c in sup)),
            (f"min refinement order {low:.2f} >= 2", all(c.passed for c in order)),
        ],
        elapsed,
        30,
    )


def test_criterion_03_profile_algebra(acceptance_log, bundle):
    start = time.time()
    checks = {c.name: c for c in suite_profile()}
    elapsed = time.time() - start
    pair = checks["<T2, Q> (relative)"]
    with_c0 = checks["compatibility defect with c0"]
    without = checks["compatibility defect without c0"]
    conclude(
        acceptance_log,
        3,
        [
            (f"<T2,Q> {pair.value:.1e} <= 1e-8", pair.passed),
            (f"defect with c0 {with_c0.value:.1e} <= 1e-10", with_c0.passed),
            (f"defect without c0 {without.value:.3f} > 0.1", without.value > 0.1),
        ],
        elapsed,
        30,
    )


@pytest.fixture(scope="module")
def sweeps():
    start = time.time()
    grid = CartesianGrid(16.0, 256)
    out = {fam: profile_sweep(fam, grid) for fam in ("quadratic_gaussian", "pure_quadratic_capped", "rough_c2")}
    return out, time.time() - start


def _col(rows, key):
    return np.array([r[key] for r in rows])


def test_criterion_04_mass_expansion(acceptance_log, sweeps):
    data, elapsed = sweeps
    rows = data["quadratic_gaussian"]
    slope = loglog_slope(_col(rows, "size"), _col(rows, "mass_defect"))
    conclude(acceptance_log, 4, [(f"mass defect slope {slope:.3f} >= 3.7", slope >= 3.7)], elapsed, 60)


def test_criterion_05_energy_expansion(acceptance_log, sweeps):
    data, elapsed = sweeps
    checks = []
    for fam, rows in data.items():
        ratio = _col(rows, "energy_residual") / _col(rows, "size") ** 2
        checks.append((f"{fam} residual/|P|^2 decreasing", strictly_decreasing(ratio)))
    rows = data["quadratic_gaussian"]
    slope = loglog_slope(_col(rows, "size"), _col(rows, "energy_residual"))
    checks.append((f"smooth family residual slope {slope:.3f} >= 2.7", slope >= 2.7))
    conclude(acceptance_log, 5, checks, elapsed, 60)


def test_criterion_06_residual_scaling(acceptance_log, sweeps):
    data, elapsed = sweeps
    rough = data["rough_c2"]
    rough_ratio = _col(rough, "psi_sup") / _col(rough, "size") ** 2
    smooth = data["quadratic_gaussian"]
    size = _col(smooth, "size")
    smooth_slope = loglog_slope(size, _col(smooth, "psi_sup") / size ** 2)
    weighted = np.concatenate([_col(rows, "psi_weighted_sup") for rows in data.values()])
    conclude(
        acceptance_log,
        6,
        [
            ("rough_c2 |Psi~|/|P|^2 decreasing", strictly_decreasing(rough_ratio)),
            (f"quadratic_gaussian |Psi~|/|P|^2 slope {smooth_slope:.2f} >= 1", smooth_slope >= 1.0),
            ("weighted sup e^(|y|/2)|Psi~| finite", bool(np.all(np.isfinite(weighted)))),
        ],
        elapsed,
        60,
    )


def test_criterion_07_formal_ode(acceptance_log, bundle):
    start = time.time()
    checks = {c.name: c for c in suite_ode()}
    elapsed = time.time() - start
    cons = checks["b/lambda - 1/C0 (sup)"]
    lam = checks["lambda vs -t/C0 on [10 t0, t0] (relative)"]
    bounded = checks["ODE lemma k1=1: spread across t0"]
    sup = checks["ODE lemma k1=1: sup ratio"]
    growth = checks["ODE lemma k1=0: ratio grows like ln(T/t0)"]
    conclude(
        acceptance_log,
        7,
        [
            (f"b/lambda drift {cons.value:.1e} <= 1e-10", cons.passed),
            (f"lambda vs -t/C0 {lam.value:.1e} <= 1%", lam.passed),
            (f"k1=1 ratio bounded ({sup.note.split(': ')[1]})", sup.passed and bounded.passed),
            (f"k1=0 expected-failure channel, ln growth observed ({growth.note})", growth.passed),
        ],
        elapsed,
        30,
    )


def test_criterion_08_homogeneous_validation(acceptance_log, bundle, tmp_path):
    start = time.time()
    k = CoefficientK("constant", 0.0, 0.0)
    grid = CartesianGrid(16.0, 512)
    fields = tmp_path / "fields"
    cfg = SimConfig(
        grid, k, -1.0, -0.49, dt=1e-4, decompose_stride=50, C0=1.0, stepping="fixed",
        scheme="strang", collapse_floor=8.0, fields_dir=str(fields), snapshot_every=5,
    )
    traj, _ = run(cfg, bundle)
    t = traj.column("t")
    lam_cells = traj.column("lambda") / grid.h
    # S(t) is tracked while lambda spans at least 8 cells; the run stops at
    # the first sample past that floor, which is excluded from the comparison
    tracked = [i for i in range(0, len(traj), 5) if lam_cells[i] >= 8.0]
    errors = []
    for i in tracked:
        u = read_field_dump(fields / f"u_{i:05d}.bin")
        ti = t[i]
        exact = ansatz_field(bundle, k, ModParams(-ti, -ti, (0, 0), (0, 0), -1.0 / ti), grid)
        errors.append(np.linalg.norm(u.values - exact.values) / np.linalg.norm(exact.values))
    reach = lam_cells[tracked[-1]]
    energy = traj.column("energy")
    virial = np.max(np.abs(virial_series(t, traj.column("variance"), energy))) / (16 * np.max(np.abs(energy)))
    mass = traj.column("mass")
    drift = float(np.ptp(mass) / mass[0])
    elapsed = time.time() - start
    conclude(
        acceptance_log,
        8,
        [
            (f"max L2 error vs S(t) {max(errors):.1e} <= 1e-3 over {len(errors)} snapshots", max(errors) <= 1e-3),
            (f"tracked window reaches lambda = {reach:.2f} cells <= 9", reach <= 9.0),
            (f"virial defect {virial:.1e} <= 1%", virial <= 0.01),
            (f"mass drift {drift:.1e} <= 1e-10", drift <= 1e-10),
        ],
        elapsed,
        300,
    )


def test_criterion_09_inhomogeneous_bootstrap(acceptance_log, bundle, k_smooth, inhomogeneous_runs):
    traj, elapsed = inhomogeneous_runs[-0.01]
    ortho = float(np.max(traj.column("ortho_max")))
    boot = bool(np.all(traj.column("boot_all") == 1.0))
    fit = blowup_rate_fit(traj)
    rate_err = abs(fit["C0_fit"] - 0.5) / 0.5
    rep = modulation_residuals(traj, structure_constants_for(bundle, k_smooth, 0.5), C=10.0)
    worst = max(rep.fitted_C.values())
    conclude(
        acceptance_log,
        9,
        [
            (f"decomposition residual {ortho:.1e} <= 1e-8", ortho <= 1e-8),
            (f"bootstrap flags hold at all {len(traj)} samples until '{traj.status}'",
             boot and traj.status == "collapse floor reached"),
            (f"C0 fit {fit['C0_fit']:.4f} within 10% of 0.5", rate_err <= 0.10),
            (f"modulation envelope fitted C {worst:.2f} <= 10", rep.passed),
        ],
        elapsed,
        600,
    )


def test_criterion_10_lyapunov(acceptance_log, bundle, k_smooth, inhomogeneous_runs):
    start = time.time()
    anti = antisymmetry_residuals(CartesianGrid(16.0, 256), 4.0, seed=0)
    worst_anti = max(abs(v) for v in anti.values())
    rows = [
        (d.params.lam ** 2 * s.I1_value, d.eps_h1, d.params.size)
        for d, s in sample_decompositions(bundle, k_smooth, 100, seed=0)
    ]
    delta0, C_fit = fit_coercivity(*zip(*rows))
    needed = {}
    passed_mono = True
    for t0, (traj, run_time) in inhomogeneous_runs.items():
        rep = monotonicity_report(traj.column("t"), traj.column("I1"), MONOTONICITY_C)
        needed[t0] = max(0.0, -rep.min_rate)
        passed_mono &= rep.passed
    exponent = measured_eps_exponent(inhomogeneous_runs[-0.01][0])
    elapsed = time.time() - start + sum(rt for _, rt in inhomogeneous_runs.values())
    spread = ", ".join(f"t0={t0:g}: {c:.1e}" for t0, c in needed.items())
    conclude(
        acceptance_log,
        10,
        [
            (f"anti-symmetry defects {worst_anti:.1e} <= 1e-10", worst_anti <= 1e-10),
            (f"coercivity fit over {len(rows)} decompositions: delta0 {delta0:.3f} > 0 (C {C_fit:.2g})",
             len(rows) >= 100 and delta0 > 0),
            (f"min dI1/dt >= -{MONOTONICITY_C:g} for every t0 (needed C: {spread})", passed_mono),
            (f"measured eps exponent {exponent:.2f} >= 1", exponent >= 1.0),
        ],
        elapsed,
        600,
    )
