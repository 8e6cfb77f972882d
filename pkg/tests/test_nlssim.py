import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blowuplab.modulation import Trajectory
from blowuplab.nlssim import (
    BOOTSTRAP_KEYS,
    SimConfig,
    SplitStepper,
    ansatz_field,
    blowup_rate_fit,
    bootstrap_flags,
    conserved_and_virial,
    cutoff_chi,
    decompose,
    initial_params,
    local_mass,
    make_initial_data,
    measured_eps_exponent,
    run,
    step,
    virial_series,
)
from blowuplab.numerics import CartesianGrid, Field2D
from blowuplab.profile import ModParams


@pytest.fixture(scope="module")
def small():
    grid = CartesianGrid(8.0, 64)
    u0 = 1.2 * np.exp(-grid.radius ** 2) * np.exp(0.3j * grid.mesh[0])
    return grid, u0


def test_mass_is_conserved_by_every_scheme(small):
    grid, u0 = small
    kv = np.exp(-0.5 * grid.radius ** 2)
    m0 = np.sum(np.abs(u0) ** 2)
    for scheme in ("strang", "yoshida", "suzuki"):
        u = SplitStepper(grid, kv, scheme).advance(u0, 1e-2, 50)
        assert abs(np.sum(np.abs(u) ** 2) - m0) <= 1e-12 * m0


@pytest.mark.parametrize("scheme,order", [("strang", 2), ("yoshida", 4), ("suzuki", 4)])
def test_temporal_order(small, scheme, order):
    grid, u0 = small
    kv = np.ones((grid.m, grid.m))
    T = 0.2
    ref = SplitStepper(grid, kv, "suzuki").advance(u0, T / 640, 640)
    errs = []
    for n in (10, 20):
        u = SplitStepper(grid, kv, scheme).advance(u0, T / n, n)
        errs.append(np.max(np.abs(u - ref)))
    observed = math.log2(errs[0] / errs[1])
    assert abs(observed - order) <= 0.3


def test_strang_energy_drift_over_1000_steps():
    grid = CartesianGrid(16.0, 256)
    kv = np.exp(-0.5 * grid.radius ** 2)
    u = 1.5 * np.exp(-grid.radius ** 2 / 2) * np.exp(0.2j * grid.mesh[0])
    e0 = conserved_and_virial(Field2D(grid, u), kv)["energy"]
    u = SplitStepper(grid, kv, "strang").advance(u, 1e-4, 1000)
    e1 = conserved_and_virial(Field2D(grid, u), kv)["energy"]
    assert abs(e1 - e0) <= 1e-6 * abs(e0)


def test_linear_flow_is_exact_for_gaussian():
    grid = CartesianGrid(10.0, 128)
    r2 = grid.radius ** 2
    u0 = np.exp(-r2 / 2)
    t = 0.3
    # i u_t + Delta u = 0: u = exp(-r^2 / (2 (1 + 2 i t))) / (1 + 2 i t)
    exact = np.exp(-r2 / (2 * (1 + 2j * t))) / (1 + 2j * t)
    u = SplitStepper(grid, np.zeros((128, 128)), "strang").advance(u0, t / 3, 3)
    assert np.max(np.abs(u - exact)) <= 1e-10


def test_time_reversal_by_conjugation(small):
    grid, u0 = small
    kv = np.ones((grid.m, grid.m))
    st = SplitStepper(grid, kv, "suzuki")
    back = np.conj(st.advance(np.conj(st.advance(u0, 1e-2, 7)), 1e-2, 7))
    assert np.max(np.abs(back - u0)) <= 1e-12


def test_step_wrapper(small):
    grid, u0 = small
    f = step(Field2D(grid, u0), 1e-3, 1.0)
    g = SplitStepper(grid, np.ones((grid.m, grid.m))).advance(u0, 1e-3)
    assert_allclose(f.values, g, atol=1e-15)


def test_conserved_quantities_of_gaussian():
    grid = CartesianGrid(8.0, 128)
    u = Field2D(grid, np.exp(-grid.radius ** 2 / 2))
    out = conserved_and_virial(u, 1.0)
    assert_allclose(out["mass"], math.pi, rtol=1e-12)
    # E = (1/2) pi - (1/4) pi / 2
    assert_allclose(out["energy"], 0.5 * math.pi - 0.125 * math.pi, rtol=1e-12)
    assert_allclose(out["variance"], math.pi, rtol=1e-12)


def test_virial_series_on_exact_quadratic():
    t = np.linspace(0, 1, 11) ** 1.3
    E = 0.25
    V = 8 * E * t ** 2 + 3 * t + 1
    assert np.max(np.abs(virial_series(t, V, np.full_like(t, E)))) <= 1e-11
    with pytest.raises(ValueError):
        virial_series(t[:2], V[:2], V[:2])


def test_cutoff_and_local_mass():
    r = np.linspace(0, 3, 301)
    chi = cutoff_chi(r)
    assert np.all(chi[r <= 1] == 0) and np.all(chi[r >= 2] == 1)
    assert np.all(np.diff(chi) >= 0)
    grid = CartesianGrid(8.0, 128)
    u = Field2D(grid, np.ones((128, 128)))
    h2 = grid.h ** 2
    lm = local_mass(u, 2.0)
    # chi(|x|/2) is 0 inside radius 2 and 1 outside radius 4
    assert h2 * np.sum(grid.radius >= 4.0) <= lm <= h2 * np.sum(grid.radius > 2.0)
    with pytest.raises(ValueError):
        local_mass(u, 0.5)


def test_initial_data_resolution_check(bundle, k_smooth):
    with pytest.raises(ValueError, match="use m >="):
        make_initial_data(0.5, -0.01, bundle, k_smooth, CartesianGrid(1.0, 64))
    with pytest.raises(ValueError):
        initial_params(0.5, 0.01)
    P = initial_params(0.5, -0.01)
    assert_allclose([P.lam, P.b, P.gamma], [0.02, 0.04, 25.0])


def test_decomposition_recovers_parameters(bundle, k_smooth):
    P = ModParams(0.02, 0.041, (4e-4, -2e-4), (3e-3, 1e-3), 0.7)
    grid = CartesianGrid(16 * 0.02, 256)
    u = ansatz_field(bundle, k_smooth, P, grid)
    guess = ModParams(0.0201, 0.04, (3e-4, -1e-4), (2e-3, 2e-3), 0.69)
    dec = decompose(u, guess, bundle, k_smooth)
    assert_allclose(dec.params.as_vector(), P.as_vector(), atol=1e-9)
    assert dec.eps_h1 <= 1e-8
    assert np.max(np.abs(dec.ortho_residuals)) <= 1e-10 * bundle.moments.mass


def test_decomposition_with_perturbation_satisfies_conditions(bundle, k_smooth):
    P = ModParams(0.02, 0.04, (0.0, 0.0), (0.0, 0.0), 0.0)
    grid = CartesianGrid(16 * 0.02, 256)
    yg = grid.scaled(P.lam, P.alpha)
    Y1, Y2 = yg.mesh
    eps = 1e-3 * np.exp(-(Y1 ** 2 + Y2 ** 2) / 3) * (Y1 + 1j * Y1 * Y2 + 0.5)
    u = ansatz_field(bundle, k_smooth, P, grid, eps)
    dec = decompose(u, P, bundle, k_smooth)
    assert np.max(np.abs(dec.ortho_residuals)) <= 1e-10 * bundle.moments.mass
    assert 1e-4 < dec.eps_h1 < 1e-2


def test_sim_config_validation(k_smooth):
    g = CartesianGrid(0.32, 256)
    with pytest.raises(ValueError):
        SimConfig(g, k_smooth, 0.01, 0.02)
    with pytest.raises(ValueError):
        SimConfig(g, k_smooth, -0.01, -0.02)
    with pytest.raises(ValueError):
        SimConfig(g, k_smooth, -0.01, -0.005, direction="backward")
    with pytest.raises(ValueError):
        SimConfig(g, k_smooth, -0.01, -0.005, collapse_floor=2)
    with pytest.raises(ValueError):
        SimConfig(g, k_smooth, -0.01, -0.005, scheme="euler")
    assert SimConfig(g, k_smooth, -0.01, -0.005).lam0 == 0.02


@pytest.fixture(scope="module")
def short_run(bundle, k_smooth):
    cfg = SimConfig(CartesianGrid(0.32, 256), k_smooth, -0.01, -0.0098, decompose_stride=10, lyapunov=True)
    return run(cfg, bundle)


def test_short_run_conserves_mass_and_tracks_bootstrap(short_run):
    traj, u = short_run
    assert traj.status == "reached t_end"
    mass = traj.column("mass")
    assert np.ptp(mass) <= 1e-12 * mass[0]
    assert np.all(traj.column("boot_all") == 1.0)
    assert np.all(traj.column("ortho_max") <= 1e-8 * 11.7)
    assert np.all(np.diff(traj.column("lambda")) < 0)
    assert traj.s_reconstruction_drift() <= 1e-12
    assert np.all(np.isfinite(traj.column("I1")))
    assert_allclose(traj.samples[-1].t, -0.0098, rtol=1e-12)


def test_max_steps_status(bundle, k_smooth):
    cfg = SimConfig(CartesianGrid(0.32, 256), k_smooth, -0.01, -0.005, decompose_stride=5, max_steps=5)
    traj, _ = run(cfg, bundle)
    assert traj.status == "max_steps reached"
    assert len(traj) == 2


def test_bootstrap_flags():
    P = ModParams(0.02, 0.04)
    flags = bootstrap_flags(-0.01, P, 1e-4, 0.5, 0.1)
    assert set(flags) == set(BOOTSTRAP_KEYS) and all(flags.values())
    flags = bootstrap_flags(-0.01, P.with_(b=0.06), 0.05, 0.5, 0.1)
    assert not flags["boot_b"] and not flags["boot_eps"]


def test_rate_fit_and_eps_exponent_on_synthetic_trajectory():
    traj = Trajectory()
    for t in np.linspace(-0.01, -0.002, 9):
        lam = -t / 0.5
        traj.append(t, 0.0, ModParams(lam, lam / 0.5), eps_h1=lam ** 1.5)
    fit = blowup_rate_fit(traj)
    assert_allclose(fit["C0_fit"], 0.5, rtol=1e-10)
    assert_allclose(measured_eps_exponent(traj), 1.5, rtol=1e-10)
    assert measured_eps_exponent(Trajectory()) == math.inf
