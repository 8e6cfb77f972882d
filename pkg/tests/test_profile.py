import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blowuplab.coefficient import CoefficientK
from blowuplab.linop import IncompatibleRHS, apply_L, sample_Q
from blowuplab.numerics import CartesianGrid, Field2D
from blowuplab.profile import (
    ModParams,
    assemble_QP,
    build_T2,
    compatibility_defect,
    mass_energy_of_QP,
    pairing_T2_Q,
    read_field_dump,
    residual_Psi,
    residual_Psi_tilde,
    sweep_params,
    write_field_dump,
)
from blowuplab.suites import decay_rate, loglog_slope, profile_sweep


def test_mod_params_basics():
    P = ModParams(0.3, 0.4, (0.0, 0.3), (0.4, 0.0), 1.0)
    assert_allclose(P.size, 0.3 + 0.4 + 0.3 + 0.4)
    assert ModParams.from_vector(P.as_vector()) == P
    assert P.with_(b=0.0).b == 0.0
    with pytest.raises(ValueError):
        ModParams(0.0)


@pytest.mark.parametrize("scale", [0.1, 0.0125])
def test_sweep_params_has_requested_size(scale):
    assert_allclose(sweep_params(scale).size, scale, rtol=1e-14)


def test_constant_k_gives_bare_ground_state(bundle, grid, k_const):
    prof = assemble_QP(bundle, k_const, ModParams(0.3), grid)
    assert np.max(np.abs(prof.T2.values)) == 0.0
    assert_allclose(prof.QP.values, sample_Q(bundle.Q, grid), atol=1e-15)


def test_T2_is_orthogonal_to_Q(bundle, grid, k_smooth):
    assert pairing_T2_Q(bundle) <= 1e-8
    T2 = assemble_QP(bundle, CoefficientK("quadratic_gaussian", 1.0, 2.0), ModParams(0.1, 0, (0.05, 0.02)), grid).T2.values.real
    q = sample_Q(bundle.Q, grid)
    assert abs(np.sum(T2 * q)) <= 1e-8 * np.linalg.norm(T2) * np.linalg.norm(q)


def test_T2_solves_its_linear_equation(bundle, grid):
    k = CoefficientK("quadratic_gaussian", 1.0, 2.0)
    lam, alpha = 0.1, (0.05, 0.02)
    T2, c0, rep = build_T2(bundle, k, lam, alpha, grid)
    q = sample_Q(bundle.Q, grid)
    Y1, Y2 = grid.mesh
    H = k.hessian
    Ha = H @ np.asarray(alpha)
    hyy = H[0, 0] * Y1 ** 2 + H[1, 1] * Y2 ** 2
    rhs = lam * (Ha[0] * Y1 + Ha[1] * Y2) * q ** 3 + 0.5 * lam ** 2 * hyy * q ** 3 - lam * (c0[0] * Y1 + c0[1] * Y2) * q
    lhs = apply_L(bundle.Q, T2, "plus").values.real
    inside = grid.radius <= 10
    assert np.max(np.abs(lhs - rhs)[inside]) <= 1e-6 * np.max(np.abs(rhs))
    assert rep.compatibility_defect <= 1e-10
    assert_allclose(c0, bundle.moments.kappa * Ha, rtol=1e-14)


def test_fredholm_obstruction_without_c0(bundle, grid, k_smooth):
    assert compatibility_defect(bundle, True) <= 1e-10
    assert compatibility_defect(bundle, False) > 0.1
    with pytest.raises(IncompatibleRHS):
        build_T2(bundle, k_smooth, 0.1, (0.1, 0.0), grid, include_c0=False)


def test_pseudo_conformal_profile_is_exact_for_constant_k(bundle, grid, k_const):
    prof = assemble_QP(bundle, k_const, ModParams(0.5, 0.3, (0.0, 0.0), (0.2, -0.1)), grid)
    psi = residual_Psi(prof, k_const).values
    assert np.max(np.abs(psi[grid.radius <= 12])) <= 1e-8


def test_residual_requires_second_derivatives(bundle, grid, k_smooth):
    prof = assemble_QP(bundle, k_smooth, ModParams(0.1), grid, need_lap=False)
    with pytest.raises(ValueError):
        residual_Psi(prof, k_smooth)


def test_dephased_residual_has_same_modulus(bundle, grid, k_smooth):
    prof = assemble_QP(bundle, k_smooth, sweep_params(0.05), grid)
    assert_allclose(np.abs(residual_Psi_tilde(prof, k_smooth).values), np.abs(residual_Psi(prof, k_smooth).values), rtol=1e-13)


def test_mass_and_energy_expansions(grid):
    rows = profile_sweep("quadratic_gaussian", grid)
    size = np.array([r["size"] for r in rows])
    assert loglog_slope(size, [r["mass_defect"] for r in rows]) >= 3.7
    assert loglog_slope(size, [r["energy_residual"] for r in rows]) >= 2.7
    assert all(math.isfinite(r["psi_weighted_sup"]) for r in rows)
    assert all(r["psi_decay_rate"] > 0 for r in rows)


def test_decay_rate_of_exponential():
    r = np.linspace(0.0, 12.0, 400)
    assert_allclose(decay_rate(3.0 * np.exp(-1.7 * r), r), 1.7, rtol=2e-2)
    assert math.isnan(decay_rate(np.zeros_like(r), r))


def test_energy_prediction_exact_for_pure_phase(bundle, grid, k_const):
    # with k = 1 and lam-only T2 = 0 the energy is exactly b^2/8 |yQ|^2 + |beta|^2/2 |Q|^2
    P = ModParams(0.2, 0.3, (0.0, 0.0), (0.1, 0.05))
    prof = assemble_QP(bundle, k_const, P, grid)
    mass, energy, predicted = mass_energy_of_QP(prof, k_const, bundle.moments)
    assert_allclose(energy, predicted, rtol=1e-6)
    assert_allclose(mass, bundle.moments.mass, rtol=1e-6)


def test_field_dump_round_trip(tmp_path):
    grid = CartesianGrid(3.0, 16)
    rng = np.random.default_rng(0)
    f = Field2D(grid, rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16)))
    path = tmp_path / "u.bin"
    write_field_dump(path, f)
    back = read_field_dump(path)
    assert back.grid.L == 3.0 and back.grid.m == 16
    assert np.array_equal(back.values, f.values)
    assert path.stat().st_size == 16 + 16 * 16 * 16
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="expected"):
        read_field_dump(path)
    path.write_bytes(b"abc")
    with pytest.raises(ValueError, match="truncated header"):
        read_field_dump(path)
