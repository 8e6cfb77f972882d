import numpy as np
import pytest
from numpy.testing import assert_allclose

from blowuplab.linop import (
    IncompatibleRHS,
    apply_L,
    apply_M,
    apply_M_array,
    coercivity_form,
    kernel_fields,
    nonlinear_map_array,
    sample_Q,
    solve_Lplus,
    solve_radial,
)
from blowuplab.numerics import CartesianGrid, Field2D
from blowuplab.suites import spectral_residuals


def rnd_field(grid, seed, width=2.0):
    rng = np.random.default_rng(seed)
    Y1, Y2 = grid.mesh
    env = np.exp(-grid.radius ** 2 / width ** 2)
    c = rng.standard_normal(8)
    re = env * (c[0] + c[1] * Y1 + c[2] * Y2 + c[3] * Y1 * Y2)
    im = env * (c[4] + c[5] * Y1 ** 2 + c[6] * Y2 + c[7] * Y1 * Y2)
    return Field2D(grid, re + 1j * im)


def real_pair(f, g, h):
    return h * h * float(np.sum(f.real * g.real + f.imag * g.imag))


def test_five_identities_inside_the_box(bundle):
    res = spectral_residuals(bundle, CartesianGrid(16.0, 256), interior=10.0)
    assert len(res) == 5
    for name, v in res.items():
        assert v <= 1e-6, name


def test_kernel_of_Lplus(bundle, grid):
    d1, _ = kernel_fields(bundle.Q, grid)
    out = apply_L(bundle.Q, Field2D(grid, d1), "plus").values
    assert np.max(np.abs(out[grid.radius <= 10])) <= 1e-6
    with pytest.raises(ValueError):
        apply_L(bundle.Q, Field2D(grid, d1), "middle")


def test_solve_Lplus_recovers_rho(bundle, grid):
    q = sample_Q(bundle.Q, grid)
    rhs = Field2D(grid, grid.radius ** 2 * q)
    rep = solve_Lplus(bundle.Q, rhs, tol=1e-10)
    rho = bundle.rho.interpolant()(grid.radius)
    inside = grid.radius <= 8
    scale = np.max(np.abs(rho))
    assert np.max(np.abs(rep.solution.values[inside] - rho[inside])) <= 1e-6 * scale
    assert rep.residual <= 1e-10
    assert np.isrealobj(rep.solution.values) or np.all(rep.solution.values.imag == 0)


def test_solve_Lplus_solution_is_orthogonal_to_kernel(bundle, grid):
    Y1, Y2 = grid.mesh
    rhs = Field2D(grid, (Y1 * Y2) * np.exp(-grid.radius ** 2))
    u = solve_Lplus(bundle.Q, rhs, tol=1e-10).solution
    d1, d2 = kernel_fields(bundle.Q, grid)
    h2 = grid.h ** 2
    for d in (d1, d2):
        assert abs(h2 * np.sum(u.values.real * d)) <= 1e-10 * np.linalg.norm(d) * np.linalg.norm(u.values) * h2
    back = apply_L(bundle.Q, u, "plus").values
    assert np.max(np.abs(back - rhs.values)) <= 1e-6


def test_solve_Lplus_rejects_kernel_rhs(bundle, grid):
    d1, _ = kernel_fields(bundle.Q, grid)
    with pytest.raises(IncompatibleRHS) as info:
        solve_Lplus(bundle.Q, Field2D(grid, d1))
    assert info.value.defect > 0


def test_radial_solver_bordered_kernel(bundle):
    grid = bundle.Q.grid
    r = grid.nodes_with_zero
    kern = bundle.Q.interpolant().derivative_over_r(r)
    rep = solve_radial(bundle.Q, kern, m=1)
    assert rep.compatibility_defect > 0.5
    rep = solve_radial(bundle.Q, np.exp(-r ** 2) * (1 - r ** 2), m=2, which="minus")
    assert rep.residual <= 1e-10
    with pytest.raises(ValueError):
        solve_radial(bundle.Q, r[:-1])


def test_coercivity_form_vanishes_on_kernel_directions(bundle, grid):
    q = sample_Q(bundle.Q, grid)
    val, proj = coercivity_form(bundle.Q, bundle.rho, Field2D(grid, 1j * q))
    assert abs(val) <= 1e-8
    assert proj[3] > 0
    d1, _ = kernel_fields(bundle.Q, grid)
    val, proj = coercivity_form(bundle.Q, bundle.rho, Field2D(grid, d1))
    assert abs(val) <= 1e-8
    assert proj[2] > 0


def test_coercivity_form_matches_operator_pairing(bundle, grid):
    eps = rnd_field(grid, 1)
    val, _ = coercivity_form(bundle.Q, bundle.rho, eps)
    lp = apply_L(bundle.Q, Field2D(grid, eps.real), "plus").values.real
    lm = apply_L(bundle.Q, Field2D(grid, eps.imag), "minus").values.real
    h2 = grid.h ** 2
    direct = h2 * np.sum(lp * eps.real + lm * eps.imag)
    assert_allclose(val, direct, rtol=1e-10)


def test_M_reduces_to_L_pm_at_Q(bundle, grid):
    q = Field2D(grid, sample_Q(bundle.Q, grid))
    one = Field2D(grid, np.ones((grid.m, grid.m)))
    eps = rnd_field(grid, 2)
    m_out = apply_M(q, one, eps).values
    lp = apply_L(bundle.Q, Field2D(grid, eps.real), "plus").values.real
    lm = apply_L(bundle.Q, Field2D(grid, eps.imag), "minus").values.real
    assert_allclose(m_out.real, lp, atol=1e-12)
    assert_allclose(m_out.imag, lm, atol=1e-12)
    with pytest.raises(ValueError):
        apply_M(q, Field2D(CartesianGrid(8.0, 256), one.values), eps)


def test_M_is_symmetric_for_the_real_pairing(bundle, grid, k_smooth):
    qp = rnd_field(grid, 3).values + sample_Q(bundle.Q, grid)
    kv = k_smooth.rescaled(grid, 0.1, (0.0, 0.0))
    f = rnd_field(grid, 4).values
    g = rnd_field(grid, 5).values
    h = grid.h
    a = real_pair(apply_M_array(qp, kv, f, grid), g, h)
    b = real_pair(f, apply_M_array(qp, kv, g, grid), h)
    assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


def test_M_is_the_derivative_of_the_nonlinear_map(bundle, grid, k_smooth):
    qp = sample_Q(bundle.Q, grid) * np.exp(0.1j * grid.radius ** 2 / 4)
    kv = k_smooth.rescaled(grid, 0.1, (0.0, 0.0))
    e = rnd_field(grid, 6).values
    tau = 1e-5
    fd = (nonlinear_map_array(qp + tau * e, kv, grid) - nonlinear_map_array(qp - tau * e, kv, grid)) / (2 * tau)
    exact = apply_M_array(qp, kv, e, grid)
    assert np.max(np.abs(fd - exact)) <= 1e-8 * np.max(np.abs(exact))
