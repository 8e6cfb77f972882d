import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from blowuplab.modulation import (
    PARAM_COLUMNS,
    EnergyShiftError,
    StructureConstants,
    Trajectory,
    alpha_beta_linear_system,
    derive_structure_constants,
    formal_rhs,
    integrate_formal,
    structure_matrices,
    tau_of_t,
    verify_ode_lemma,
)
from blowuplab.profile import ModParams


def constants(C0=0.5, k1=1.0, k2=1.0):
    H = np.diag([-k1, -k2])
    return StructureConstants(C0, 1.0, 2.0 * H, 0.3, 1.0 * H)


def test_structure_matrices_from_moments(bundle, k_smooth):
    d0, d1s, c0 = structure_matrices(bundle.moments, k_smooth)
    m = bundle.moments
    assert_allclose(d0, 2 * m.mass / m.variance * k_smooth.hessian)
    assert_allclose(c0, m.kappa * k_smooth.hessian)
    assert_allclose(d1s, m.rho_pairings[0] / (4 * m.rho_pairings[1]))


def test_exact_law_when_centre_and_velocity_vanish():
    sc = constants()
    t0 = -0.01
    P0 = ModParams(-t0 / sc.C0, -t0 / sc.C0 ** 2)
    traj = integrate_formal(P0, sc, t0, 10 * t0, 1e-3 * abs(t0))
    t = traj.column("t")
    assert_allclose(traj.column("lambda"), -t / sc.C0, rtol=1e-12)
    assert np.max(np.abs(traj.column("b_over_lambda_minus_inv_C0"))) <= 1e-10
    # s = int dt / lam^2 = C0^2 (1/(-t) - 1/(-t0))
    assert_allclose(traj.column("s"), sc.C0 ** 2 * (1 / -t - 1 / -t0), rtol=1e-9)


def test_rk4_is_fourth_order():
    sc = constants()
    P0 = ModParams(0.02, 0.04, (0.01, -0.02), (0.05, 0.01))
    finals = []
    for dt in (4e-5, 2e-5, 1e-5):
        traj = integrate_formal(P0, sc, -0.01, -0.006, dt)
        finals.append(traj.samples[-1].params.as_vector())
    e1 = np.linalg.norm(finals[0] - finals[2])
    e2 = np.linalg.norm(finals[1] - finals[2])
    # fourth order: (256 - 1) / (16 - 1) = 17
    assert 14 <= e1 / e2 <= 20


def test_formal_rhs_components():
    sc = constants()
    P = ModParams(0.1, 0.2, (0.01, 0.02), (0.3, -0.1), 0.0)
    out = formal_rhs(P, sc)
    alpha = np.array(P.alpha)
    assert_allclose(out[0], -0.2 * 0.1)
    assert_allclose(out[1], -0.04 + sc.d0(alpha))
    assert_allclose(out[2:4], 2 * np.array(P.beta) * 0.1)
    assert_allclose(out[4:6], -0.2 * np.array(P.beta) + sc.c0(alpha) * 0.1)
    bare = formal_rhs(P, sc, bare_phase=True)
    assert_allclose(bare[6] - out[6], sc.d1(alpha))


def test_integrate_formal_validation():
    sc = constants()
    P0 = ModParams(0.02, 0.04)
    with pytest.raises(ValueError):
        integrate_formal(P0, sc, -0.01, -0.01, 1e-4)
    with pytest.raises(ValueError):
        integrate_formal(P0, sc, -0.01, -0.1, -1e-4)


def test_collapse_status():
    sc = constants()
    P0 = ModParams(0.02, 0.04)
    traj = integrate_formal(P0, sc, -0.01, 0.01, 1e-4, lam_floor=1e-4)
    assert traj.status == "collapse reached"


def test_csv_round_trip(tmp_path):
    sc = constants()
    traj = integrate_formal(ModParams(0.02, 0.04, (0.01, 0.0), (0.0, 0.01)), sc, -0.01, -0.02, 1e-4, record_every=10)
    path = tmp_path / "traj.csv"
    cols = traj.to_csv(path)
    assert tuple(cols[: len(PARAM_COLUMNS)]) == PARAM_COLUMNS
    back = Trajectory.from_csv(path)
    assert len(back) == len(traj)
    for name in cols:
        assert np.array_equal(back.column(name), traj.column(name)), name
    path.write_text("t,lambda\n1,2\n")
    with pytest.raises(ValueError, match="missing columns"):
        Trajectory.from_csv(path)


def test_trajectory_rejects_non_monotone_times():
    traj = Trajectory()
    P = ModParams(0.1)
    traj.append(0.0, 0.0, P)
    with pytest.raises(ValueError):
        traj.append(0.0, 0.0, P)
    traj.append(1.0, 1.0, P)
    with pytest.raises(ValueError):
        traj.append(0.5, 1.0, P)
    assert math.isnan(traj.column("missing")[0])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.0, 10.0))
def test_alpha_beta_eigen_structure(C0, k1):
    rep = alpha_beta_linear_system(constants(C0), k1)
    l1, l2 = rep.eigenvalues
    assert_allclose(l1 + l2, 1 / C0, rtol=1e-12, atol=1e-12)
    assert_allclose(l1 * l2, 2 * k1, rtol=1e-10, atol=1e-12)
    assert rep.complex_pair == (1 / C0 ** 2 < 8 * k1)
    assert rep.degenerate == (k1 == 0)
    if 1 / C0 ** 2 != 8 * k1:
        V = rep.rotation
        assert_allclose(V @ np.diag(rep.eigenvalues) @ np.linalg.inv(V), rep.matrix, atol=1e-9)


def test_alpha_beta_rejects_negative_k1():
    with pytest.raises(ValueError):
        alpha_beta_linear_system(constants(), -1.0)


def test_tau_of_t():
    assert_allclose(tau_of_t(-0.001, -0.01, 0.5), 0.5 * math.log(0.1))
    assert tau_of_t(-0.01, -0.01, 0.5) == 0.0


def test_ode_lemma_bounded_for_positive_k1_and_growing_for_zero():
    sc = constants(0.5)
    bounded = [verify_ode_lemma(0.1, t0, -1.0, sc, 1.0).ratio_sup for t0 in (-0.1, -0.01, -0.001)]
    assert max(bounded) / min(bounded) <= 1.5
    growing = [verify_ode_lemma(0.1, t0, -1.0, sc, 0.0).ratio_sup for t0 in (-0.1, -0.01, -0.001)]
    assert growing[0] < growing[1] < growing[2]
    with pytest.raises(ValueError):
        verify_ode_lemma(0.1, -1.0, -0.1, sc, 1.0)


def test_energy_shift_must_be_positive(bundle, k_smooth):
    P0 = ModParams(0.02, 0.04)
    with pytest.raises(EnergyShiftError):
        derive_structure_constants(bundle, k_smooth, P0, E_in=-100.0)
    sc = derive_structure_constants(bundle, k_smooth, P0, E_in=50.0)
    assert_allclose(sc.C0, bundle.moments.yQ_norm / math.sqrt(8 * sc.E0_tilde))
