"""Verification suites: named checks of computed residuals against tolerances.

Each suite returns a list of :class:`Check`.  A check either compares a
value with a bound (``<=`` or ``>=``) or records a boolean.  Checks flagged
``expected_fail`` document a known failure mode (they pass when the failure
is observed).
"""
import math
from dataclasses import dataclass

import numpy as np

from .coefficient import CoefficientK
from .groundstate import GOLDEN_KEYS, ground_state_residual, read_goldens
from .linop import apply_L, coercivity_form
from .modulation import (
    alpha_beta_linear_system,
    derive_structure_constants,
    integrate_formal,
    recomputed_C0,
    verify_ode_lemma,
)
from .numerics import CartesianGrid, Field2D, h1_norm_array, scaling_array
from .profile import (
    ModParams,
    assemble_QP,
    compatibility_defect,
    ground_state_bundle,
    mass_energy_of_QP,
    pairing_T2_Q,
    residual_Psi,
    residual_Psi_tilde,
    sweep_params,
)

SWEEP = (0.1, 0.05, 0.025, 0.0125)
SUITES = ("spectral", "profile", "energy", "ode", "lyapunov")


@dataclass
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="
    expected_fail: bool = False
    note: str = ""

    @property
    def passed(self):
        v = self.value
        if self.relation == "bool":
            return bool(v)
        if not np.isfinite(v):
            return False
        return v <= self.bound if self.relation == "<=" else v >= self.bound


def format_table(checks):
    """Fixed-width table: name, value, relation, bound, status."""
    width = max([len(c.name) for c in checks] + [10])
    lines = [f"{'check':<{width}}  {'value':>12}  rel  {'bound':>10}  status"]
    for c in checks:
        if c.relation == "bool":
            value, bound = str(bool(c.value)), "-"
        else:
            value, bound = f"{c.value:.4e}", f"{c.bound:.3g}"
        status = "PASS" if c.passed else "FAIL"
        if c.expected_fail:
            status += " (expected failure observed)" if c.passed else " (expected failure NOT observed)"
        lines.append(f"{c.name:<{width}}  {value:>12}  {c.relation:>3}  {bound:>10}  {status}")
        if c.note:
            lines.append(f"{'':<{width}}    {c.note}")
    return "\n".join(lines)


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


# ---------------------------------------------------------------------------
# ground state and spectral identities
# ---------------------------------------------------------------------------

def golden_comparison(bundle=None, path=None):
    """Relative gaps between computed moments and the stored golden constants."""
    bundle = bundle or ground_state_bundle()
    gold = read_goldens(path)
    mom = bundle.moments
    computed = {
        "Q0": bundle.Q.value_at_zero,
        "mass": mom.mass,
        "variance": mom.variance,
        "quartic": mom.quartic,
        "quartic_r2": 2.0 * mom.quartic_tensor[0, 0],
        "rho_y2Q": mom.rho_pairings[0],
        "rho_Q": mom.rho_pairings[1],
    }
    return {key: abs(computed[key] - gold[key]) / abs(gold[key]) for key in GOLDEN_KEYS}


def spectral_residuals(bundle, grid, interior):
    """Sup over ``|y| <= interior`` of the five linearised identities.

    ``L+ d1Q = 0``, ``L+ Lambda Q = -2Q``, ``L+ rho = |y|^2 Q``, ``L- Q = 0``,
    ``L- y1 Q = -2 d1 Q``.
    """
    Q = bundle.Q
    Y1, Y2 = grid.mesh
    r = grid.radius
    qi = Q.interpolant()
    q = qi(r)
    dq = qi(r, 1)
    dq_r = qi.derivative_over_r(r)
    rho = bundle.rho.interpolant()(r)
    inside = r <= interior

    def field(v):
        return Field2D(grid, v.astype(complex))

    res = {
        "L+ d1Q": apply_L(Q, field(dq_r * Y1), "plus").values,
        "L+ Lambda Q + 2Q": apply_L(Q, field(q + r * dq), "plus").values + 2 * q,
        "L+ rho - |y|^2 Q": apply_L(Q, field(rho), "plus").values - r ** 2 * q,
        "L- Q": apply_L(Q, field(q), "minus").values,
        "L- y1Q + 2 d1Q": apply_L(Q, field(Y1 * q), "minus").values + 2 * dq_r * Y1,
    }
    return {name: float(np.max(np.abs(v[inside]))) for name, v in res.items()}


def suite_spectral(golden_path=None):
    bundle = ground_state_bundle()
    out = []
    resid = ground_state_residual(bundle.Q.grid, bundle.Q.full)
    out.append(Check("ground state residual (sup)", float(np.max(np.abs(resid))), 1e-8))
    for key, gap in golden_comparison(bundle, golden_path).items():
        out.append(Check(f"golden {key} (relative gap)", gap, 1e-6))
    mom = bundle.moments
    out.append(Check("E(Q) = |grad Q|^2/2 - Q^4/4", abs(0.5 * mom.gradient - 0.25 * mom.quartic), 1e-8))
    fine = spectral_residuals(bundle, CartesianGrid(16.0, 512), interior=12.0)
    for name, v in fine.items():
        out.append(Check(f"{name} (sup, |y|<=12)", v, 1e-6))
    coarse = spectral_residuals(ground_state_bundle(25.0, 1024), CartesianGrid(24.0, 512), 10.0)
    finer = spectral_residuals(ground_state_bundle(25.0, 2048), CartesianGrid(24.0, 512), 10.0)
    for name in coarse:
        order = math.log2(coarse[name] / finer[name])
        out.append(Check(f"{name} refinement order", order, 2.0, ">="))
    return out


# ---------------------------------------------------------------------------
# profile algebra, mass and energy expansions, residual scaling
# ---------------------------------------------------------------------------

def decay_rate(values, radius, r_lo=3.0, r_hi=10.0, shells=14):
    """Empirical exponential decay rate of ``|values|`` in ``r_lo <= |y| <= r_hi``.

    The maximum over each of ``shells`` annuli is fitted by
    ``log max = const - c r``; returns ``c``.
    """
    edges = np.linspace(r_lo, r_hi, shells + 1)
    mids, peaks = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (radius >= lo) & (radius < hi)
        if np.any(sel):
            peak = float(np.max(np.abs(values[sel])))
            if peak > 0:
                mids.append(0.5 * (lo + hi))
                peaks.append(math.log(peak))
    if len(mids) < 2:
        return math.nan
    return float(-np.polyfit(mids, peaks, 1)[0])


def profile_sweep(family, grid=None, scales=SWEEP, k1=1.0, k2=2.0):
    """Mass defect, energy residual and ``Psi~`` sizes along ``sweep_params``."""
    bundle = ground_state_bundle()
    grid = grid or CartesianGrid(16.0, 256)
    k = CoefficientK(family, k1, k2)
    q = bundle.Q.interpolant()(grid.radius)
    mass0 = grid.h ** 2 * float(np.sum(q * q))
    rows = []
    weight = np.exp(grid.radius / 2.0)
    for scale in scales:
        P = sweep_params(scale)
        prof = assemble_QP(bundle, k, P, grid)
        mass, energy, predicted = mass_energy_of_QP(prof, k, bundle.moments)
        psi = np.abs(residual_Psi_tilde(prof, k).values)
        rows.append(
            {
                "size": P.size,
                "mass_defect": abs(mass - mass0),
                "energy_residual": abs(energy - predicted),
                "psi_sup": float(psi.max()),
                "psi_weighted_sup": float((psi * weight).max()),
                "psi_decay_rate": decay_rate(psi, grid.radius),
            }
        )
    return rows


def suite_profile():
    bundle = ground_state_bundle()
    out = [
        Check("<T2, Q> (relative)", pairing_T2_Q(bundle), 1e-8),
        Check("compatibility defect with c0", compatibility_defect(bundle, True), 1e-10),
        Check("compatibility defect without c0", compatibility_defect(bundle, False), 0.1, ">="),
    ]
    grid = CartesianGrid(16.0, 256)
    const = CoefficientK("constant", 0.0, 0.0)
    pseudo = assemble_QP(bundle, const, ModParams(0.5, 0.3, (0.0, 0.0), (0.2, -0.1)), grid)
    inside = grid.radius <= 12.0
    psi = np.abs(residual_Psi(pseudo, const).values[inside]).max()
    out.append(Check("Psi for k = 1 (sup, |y|<=12)", float(psi), 1e-8))
    rows = profile_sweep("quadratic_gaussian", grid)
    slope = loglog_slope([r["size"] for r in rows], [r["mass_defect"] for r in rows])
    out.append(Check("mass defect log-log slope", slope, 3.7, ">="))
    return out


def suite_energy():
    out = []
    grid = CartesianGrid(16.0, 256)
    for family in ("quadratic_gaussian", "pure_quadratic_capped", "rough_c2"):
        rows = profile_sweep(family, grid)
        size = np.array([r["size"] for r in rows])
        eres = np.array([r["energy_residual"] for r in rows])
        out.append(Check(f"{family}: energy residual / |P|^2 decreasing", strictly_decreasing(eres / size ** 2), 1, "bool"))
        psi = np.array([r["psi_sup"] for r in rows])
        weighted = np.array([r["psi_weighted_sup"] for r in rows])
        out.append(Check(f"{family}: weighted sup e^(|y|/2)|Psi~| finite", bool(np.all(np.isfinite(weighted))), 1, "bool"))
        rate = min(r["psi_decay_rate"] for r in rows)
        out.append(Check(f"{family}: empirical decay rate of |Psi~| (reported)", rate, 0.0, ">="))
        if family == "quadratic_gaussian":
            out.append(Check(f"{family}: energy residual slope", loglog_slope(size, eres), 2.7, ">="))
            out.append(Check(f"{family}: slope of |Psi~|/|P|^2", loglog_slope(size, psi / size ** 2), 1.0, ">="))
        if family == "rough_c2":
            out.append(Check(f"{family}: |Psi~|/|P|^2 decreasing", strictly_decreasing(psi / size ** 2), 1, "bool"))
    # the recomputed C0 approaches the prescribed one as t0 -> 0
    bundle = ground_state_bundle()
    k = CoefficientK("quadratic_gaussian", 1.0, 1.0)
    gaps = []
    for t0 in (-0.04, -0.02, -0.01):
        C0 = 0.5
        P0 = ModParams(-t0 / C0, -t0 / C0 ** 2, (0.0, 0.0), (0.0, 0.0), -C0 ** 2 / t0)
        sc = derive_structure_constants(bundle, k, P0, grid=CartesianGrid(16.0, 256), C0=C0)
        gaps.append(abs(recomputed_C0(sc, bundle.moments) - C0))
    out.append(Check("|C0(recomputed) - C0| decreasing as t0 -> 0", strictly_decreasing(gaps), 1, "bool",
                     note="gaps " + ", ".join(f"{g:.2e}" for g in gaps)))
    return out


# ---------------------------------------------------------------------------
# formal ODE system
# ---------------------------------------------------------------------------

def formal_constants(C0=0.5, t0=-0.01, k=None):
    bundle = ground_state_bundle()
    k = k or CoefficientK("quadratic_gaussian", 1.0, 1.0)
    P0 = ModParams(-t0 / C0, -t0 / C0 ** 2, (0.0, 0.0), (0.0, 0.0), -C0 ** 2 / t0)
    sc = derive_structure_constants(bundle, k, P0, grid=CartesianGrid(16.0, 256), C0=C0)
    return sc, P0


def suite_ode():
    sc, P0 = formal_constants()
    t0 = -0.01
    traj = integrate_formal(P0, sc, t0, 10 * t0, 1e-3 * abs(t0))
    out = [
        Check("b/lambda - 1/C0 (sup)", float(np.max(np.abs(traj.column("b_over_lambda_minus_inv_C0")))), 1e-10),
    ]
    lam = traj.column("lambda")
    t = traj.column("t")
    rel = np.max(np.abs(lam - (-t / sc.C0)) / (-t / sc.C0))
    out.append(Check("lambda vs -t/C0 on [10 t0, t0] (relative)", float(rel), 0.01))
    ratios = [verify_ode_lemma(0.1, s, -1.0, sc, 1.0).ratio_sup for s in (-0.1, -0.01, -0.001)]
    spread = max(ratios) / min(ratios)
    out.append(Check("ODE lemma k1=1: sup ratio", max(ratios), 10.0, note="per t0: " + ", ".join(f"{r:.3g}" for r in ratios)))
    out.append(Check("ODE lemma k1=1: spread across t0", spread, 1.5))
    ratios0 = [verify_ode_lemma(0.1, s, -1.0, sc, 0.0).ratio_sup for s in (-0.1, -0.01, -0.001)]
    logs = [math.log(-1.0 / s) for s in (-0.1, -0.01, -0.001)]
    slope = float(np.polyfit(logs, ratios0, 1)[0])
    lin_fit = np.polyval(np.polyfit(logs, ratios0, 1), logs)
    r2 = 1.0 - np.sum((np.array(ratios0) - lin_fit) ** 2) / np.sum((np.array(ratios0) - np.mean(ratios0)) ** 2)
    out.append(Check("ODE lemma k1=0: ratio grows like ln(T/t0)", bool(slope > 0 and r2 > 0.99), 1, "bool",
                     expected_fail=True, note=f"slope {slope:.3g} per unit ln, R^2 {r2:.6f}"))
    sysrep = alpha_beta_linear_system(sc, 1.0)
    prod = sysrep.eigenvalues[0] * sysrep.eigenvalues[1]
    out.append(Check("eigenvalue product = 2 k1", float(abs(prod - 2.0)), 1e-12))
    return out


# ---------------------------------------------------------------------------
# Lyapunov machinery
# ---------------------------------------------------------------------------

def suite_lyapunov(samples=100, seed=0):
    from .lyapunov import (
        antisymmetry_residuals,
        fit_coercivity,
        lambda_A_array,
        sample_decompositions,
    )

    out = []
    grid = CartesianGrid(16.0, 256)
    for name, v in antisymmetry_residuals(grid, 4.0, seed).items():
        out.append(Check(f"{name} (relative)", abs(v), 1e-10))
    Y1, Y2 = grid.mesh
    f = np.exp(-grid.radius ** 2) * (1 + 1j * Y1)
    gap = np.abs(lambda_A_array(f, grid, 8.0) - scaling_array(f, grid)).max()
    out.append(Check("Lambda_A = Lambda inside |y| <= A (sup)", float(gap), 1e-12))
    out.extend(coercivity_form_checks(samples, seed))
    bundle = ground_state_bundle()
    k = CoefficientK("quadratic_gaussian", 1.0, 1.0)
    rows = [(d.params.lam ** 2 * s.I1_value, d.eps_h1, d.params.size) for d, s in sample_decompositions(bundle, k, samples, seed)]
    delta0, C = fit_coercivity(*zip(*rows))
    ratios = [r[0] / r[1] ** 2 for r in rows]
    out.append(Check(f"fitted delta0 over {samples} decompositions", delta0, 0.0, ">=",
                     note=f"C = {C:.3g}; min lam^2 I1/||eps||^2 = {min(ratios):.3g}"))
    return out


def coercivity_form_checks(samples=100, seed=0):
    """``<L+e1,e1> + <L-e2,e2> >= 0.05 ||e||_{H1}^2`` for random ``e`` off the four directions."""
    bundle = ground_state_bundle()
    grid = CartesianGrid(16.0, 256)
    rng = np.random.default_rng(seed)
    q = bundle.Q.interpolant()(grid.radius)
    Y1, Y2 = grid.mesh
    r2 = grid.radius ** 2
    h2 = grid.h ** 2
    real_dirs = [q, r2 * q, Y1 * q, Y2 * q]
    # Gram-Schmidt on the real directions
    basis = []
    for d in real_dirs:
        v = d.copy()
        for b in basis:
            v = v - h2 * np.sum(v * b) * b
        basis.append(v / math.sqrt(h2 * np.sum(v * v)))
    qn = q / math.sqrt(h2 * np.sum(q * q))
    worst = np.inf
    for _ in range(samples):
        width = rng.uniform(1.0, 4.0)
        env = np.exp(-r2 / width ** 2)
        c = rng.standard_normal(12)
        e1 = env * (c[0] + c[1] * Y1 + c[2] * Y2 + c[3] * Y1 * Y2 + c[4] * (Y1 ** 2 - Y2 ** 2) + c[5] * r2)
        e2 = env * (c[6] + c[7] * Y1 + c[8] * Y2 + c[9] * Y1 * Y2 + c[10] * (Y1 ** 2 - Y2 ** 2) + c[11] * r2)
        for b in basis:
            e1 = e1 - h2 * np.sum(e1 * b) * b
        e2 = e2 - h2 * np.sum(e2 * qn) * qn
        eps = Field2D(grid, e1 + 1j * e2)
        value, _ = coercivity_form(bundle.Q, bundle.rho, eps)
        worst = min(worst, value / h1_norm_array(eps.values, grid) ** 2)
    return [Check(f"coercivity form / ||eps||_H1^2 (min over {samples})", float(worst), 0.05, ">=")]


def run_suite(name, **kwargs):
    table = {
        "spectral": suite_spectral,
        "profile": suite_profile,
        "energy": suite_energy,
        "ode": suite_ode,
        "lyapunov": suite_lyapunov,
    }
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    fn = table[name]
    accepted = {key: v for key, v in kwargs.items() if key in fn.__code__.co_varnames}
    return fn(**accepted)
