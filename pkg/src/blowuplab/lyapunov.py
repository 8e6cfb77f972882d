"""Truncated scaling generator and the Lyapunov functionals ``I`` and ``I1``.

``Lambda_A f = (1/2)(Delta phi)(y/A) f + A (grad phi)(y/A) . grad f`` with a
radial ``phi`` whose derivative is ``r`` on ``r <= 1`` and ``3 - e^{-r}`` on
``r >= 2``; on ``[1, 2]`` it is joined by the quintic Hermite interpolant
matching value, slope and curvature at both ends.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BPoly

from .linop import apply_M_array
from .numerics import Field2D, grad_array, transport_array
from .profile import residual_Psi

_E2 = math.exp(-2.0)
_BRIDGE = BPoly.from_derivatives([1.0, 2.0], [[1.0, 1.0, 0.0], [3.0 - _E2, _E2, -_E2]])
_BRIDGE_D = _BRIDGE.derivative()


def phi_prime(r):
    """``phi'(r)``."""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 1.0, r, 3.0 - np.exp(-r))
    mid = (r > 1.0) & (r < 2.0)
    if np.any(mid):
        out = np.where(mid, _BRIDGE(np.clip(r, 1.0, 2.0)), out)
    return out


def phi_second(r):
    """``phi''(r)``."""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 1.0, 1.0, np.exp(-r))
    mid = (r > 1.0) & (r < 2.0)
    if np.any(mid):
        out = np.where(mid, _BRIDGE_D(np.clip(r, 1.0, 2.0)), out)
    return out


def _coefficients(grid, A):
    """``a = A grad phi(y/A)`` and ``div a = (Delta phi)(y/A)``."""
    Y1, Y2 = grid.mesh
    r = np.hypot(Y1, Y2) / A
    fp = phi_prime(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        over_r = np.where(r > 0, fp / np.where(r > 0, r, 1.0), 1.0)
    a1 = over_r * Y1
    a2 = over_r * Y2
    lap = phi_second(r) + over_r
    return a1, a2, lap


def lambda_A_array(values, grid, A):
    """``Lambda_A`` in the skew form ``(1/2)(a . D f + D . (a f))``."""
    if A < 1:
        raise ValueError("A must be >= 1")
    a1, a2, _ = _coefficients(grid, A)
    return transport_array(values, a1, a2, grid)


def lambda_A(f, A):
    """``Lambda_A f`` for a :class:`Field2D`."""
    return Field2D(f.grid, lambda_A_array(f.values, f.grid, A))


def lambda_A_pointwise(f, A):
    """``(1/2)(Delta phi)(y/A) f + A grad phi(y/A) . grad f`` (non-skew form)."""
    grid = f.grid
    a1, a2, lap = _coefficients(grid, A)
    g1, g2 = grad_array(f.values, grid)
    return Field2D(grid, 0.5 * lap * f.values + a1 * g1 + a2 * g2)


def real_pairing(f, g, h):
    """``Re <f, g> = Re int f conj(g)``."""
    return float(h * h * np.sum((f * np.conj(g)).real))


def quartic_remainder(qp, eps):
    """Terms of order 3 and 4 in ``eps`` of ``(1/4)|QP + eps|^4``.

    ``F = Re(QP conj(eps)) |eps|^2 + |eps|^4 / 4``.
    """
    e2 = np.abs(eps) ** 2
    return (qp * np.conj(eps)).real * e2 + 0.25 * e2 ** 2


@dataclass
class LyapunovSample:
    t: float
    I_value: float
    I1_value: float
    coercivity_gap: float
    correction_term: float
    quadratic: float = float("nan")
    eps_h1: float = float("nan")
    size: float = float("nan")


def default_A(grid):
    return max(1.0, min(10.0, grid.L / 4.0))


def evaluate_I1(dec, bundle, k, A=None, delta0=None, t=float("nan")):
    """``I`` and ``I1`` at one decomposition.

    ``I = lam^{-2} Re<M eps - i b Lambda_A eps + 2 i beta . grad eps, eps>
    - int k~ F(QP, eps)`` and ``I1 = I + lam^{-2} Re<eps, Psi_P>``, where
    ``M`` is the linearisation at ``QP`` with the rescaled coefficient
    ``k~ = k(lam y + alpha)/k(alpha)``.
    """
    from .nlssim import profile_on_grid

    P = dec.params
    grid = dec.eps.grid
    A = A or default_A(grid)
    h = grid.h
    e = dec.eps.values
    prof = profile_on_grid(bundle, k, P, grid, need_lap=True)
    kt = k.rescaled(grid, P.lam, P.alpha)
    qp = prof.QP.values
    Me = apply_M_array(qp, kt, e, grid)
    g1, g2 = grad_array(e, grid)
    beta = P.beta
    op = Me - 1j * P.b * lambda_A_array(e, grid, A) + 2j * (beta[0] * g1 + beta[1] * g2)
    quad = real_pairing(op, e, h)
    F = h * h * float(np.sum(kt * quartic_remainder(qp, e)))
    lam2 = P.lam ** 2
    I_val = quad / lam2 - F
    psi = residual_Psi(prof, k).values
    corr = real_pairing(e, psi, h) / lam2
    bound = math.sqrt(real_pairing(e, e, h) * real_pairing(psi, psi, h)) / lam2
    if abs(corr) > bound * (1 + 1e-9) + 1e-300:
        raise AssertionError("Cauchy-Schwarz violated by the correction term")
    I1 = I_val + corr
    gap = lam2 * I1 - delta0 * dec.eps_h1 ** 2 if delta0 is not None else float("nan")
    return LyapunovSample(float(t), float(I_val), float(I1), float(gap), float(corr), quad, dec.eps_h1, P.size)


def fit_coercivity(lam2_I1, eps_h1, size):
    """Fit ``lam^2 I1 ~ delta0 ||eps||^2 + c |P|^3`` by relative least squares.

    Each sample is weighted by ``1/||eps||^2`` so that small and large
    perturbations count equally.  Returns ``(delta0, C)`` where ``C`` is the
    smallest constant with ``lam^2 I1 >= delta0 ||eps||^2 - C |P|^3`` at every
    sample.
    """
    y = np.asarray(lam2_I1, dtype=float)
    e2 = np.asarray(eps_h1, dtype=float) ** 2
    p3 = np.asarray(size, dtype=float) ** 3
    if y.size < 2:
        raise ValueError("need at least two samples")
    design = np.stack([np.ones_like(e2), p3 / e2], axis=1)
    coef, *_ = np.linalg.lstsq(design, y / e2, rcond=None)
    delta0 = float(coef[0])
    C = float(max(0.0, np.max((delta0 * e2 - y) / p3)))
    return delta0, C


def append_lyapunov_columns(traj, delta0=None):
    """Add ``coercivity_gap`` and ``dI1_dt`` to every sample of a trajectory run with Lyapunov tracking."""
    t = traj.column("t")
    I1 = traj.column("I1")
    if np.all(np.isnan(I1)):
        raise ValueError("trajectory carries no I1 column")
    rate = np.gradient(I1, t, edge_order=2) if len(t) >= 3 else np.full_like(t, np.nan)
    lam = traj.column("lambda")
    eps = traj.column("eps_h1")
    gap = lam ** 2 * I1 - delta0 * eps ** 2 if delta0 is not None else np.full_like(t, np.nan)
    for sample, g, r in zip(traj.samples, gap, rate):
        sample.diagnostics["coercivity_gap"] = float(g)
        sample.diagnostics["dI1_dt"] = float(r)
    return traj


def sample_decompositions(bundle, k, count, seed=0, C0=0.5, m=256, box=16.0):
    """Decompositions of randomly perturbed ansatz fields in the collapse regime.

    Each sample draws ``lam`` in ``[0.005, 0.025]`` with ``b ~ lam/C0`` and
    small ``alpha, beta``, sets up the grid ``[-box lam, box lam)^2``, adds a
    random smooth ``eps`` (its real part made orthogonal to ``Q``, the
    direction that mass conservation controls along true solutions) and
    decomposes the result.  Yields ``(decomposition, LyapunovSample)``.
    """
    from .nlssim import ansatz_field, decompose
    from .numerics import CartesianGrid
    from .profile import ModParams

    rng = np.random.default_rng(seed)
    q_interp = bundle.Q.interpolant()
    for _ in range(count):
        lam = rng.uniform(0.005, 0.025)
        b = lam / C0 * rng.uniform(0.9, 1.1)
        P = ModParams(
            lam,
            b,
            tuple(1e-3 * rng.standard_normal(2)),
            tuple(1e-3 * rng.standard_normal(2)),
            rng.uniform(0.0, 2.0 * np.pi),
        )
        grid = CartesianGrid(box * lam, m)
        ygrid = grid.scaled(lam, P.alpha)
        Y1, Y2 = ygrid.mesh
        c = rng.standard_normal(4)
        amp = 10.0 ** rng.uniform(-3.0, -1.5)
        eps = amp * np.exp(-(Y1 ** 2 + Y2 ** 2) / 3.0) * (
            c[0] * Y1 + 1j * c[1] * Y2 + c[2] * (Y1 ** 2 - Y2 ** 2) + 1j * c[3]
        )
        q = q_interp(ygrid.radius)
        eps = eps - (np.sum(eps.real * q) / np.sum(q * q)) * q
        dec = decompose(ansatz_field(bundle, k, P, grid, eps), P, bundle, k)
        yield dec, evaluate_I1(dec, bundle, k)


def antisymmetry_residuals(grid, A, seed=0):
    """Quadrature-level symmetry defects of ``Lambda_A`` and ``grad`` on random complex fields.

    ``Lambda_A`` (skew form) and ``grad`` are antisymmetric for the real
    pairing, so ``i Lambda_A`` and ``i grad`` are symmetric.  Returned values
    are normalised by ``||f|| ||g||_{H^1}`` scales and should be at roundoff.
    """
    rng = np.random.default_rng(seed)
    shape = (grid.m, grid.m)
    f = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    h = grid.h
    Lf = lambda_A_array(f, grid, A)
    Lg = lambda_A_array(g, grid, A)
    f1, f2 = grad_array(f, grid)
    g1, g2 = grad_array(g, grid)
    scale = math.sqrt(real_pairing(f, f, h) * real_pairing(Lf, Lf, h))
    gscale = math.sqrt(real_pairing(f, f, h) * real_pairing(f1, f1, h))
    fr = f.real.astype(complex)
    Lfr = lambda_A_array(fr, grid, A)
    return {
        "Re<Lambda_A f, f>": real_pairing(Lf, f, h) / scale,
        "Re<i Lambda_A f, g> - Re<f, i Lambda_A g>": (real_pairing(1j * Lf, g, h) - real_pairing(f, 1j * Lg, h)) / scale,
        "Re<i Lambda_A f, f>, f real": real_pairing(1j * Lfr, fr, h) / scale,
        "Re<d1 f, f>": real_pairing(f1, f, h) / gscale,
        "Re<i d1 f, g> - Re<f, i d1 g>": (real_pairing(1j * f1, g, h) - real_pairing(f, 1j * g1, h)) / gscale,
        "Re<i d2 f, g> - Re<f, i d2 g>": (real_pairing(1j * f2, g, h) - real_pairing(f, 1j * g2, h)) / gscale,
    }


@dataclass
class MonotonicityReport:
    dI1_dt: np.ndarray
    min_rate: float
    C: float
    passed: bool
    integrated_violation: float


def monotonicity_report(t, I1, C):
    """Centered ``dI1/dt`` and the almost-monotonicity test ``min dI1/dt >= -C``.

    Also returns the largest violation of the integrated form
    ``(I1(t) - I1(t0) + C (t - t0)) sign(t - t0) >= 0`` (zero when it holds
    at every sample, for either time direction).
    """
    t = np.asarray(t, dtype=float)
    I1 = np.asarray(I1, dtype=float)
    if len(t) < 10:
        raise ValueError("need at least 10 samples")
    rate = np.gradient(I1, t, edge_order=2)
    m = float(np.min(rate))
    dt = t - t[0]
    viol = float(max(0.0, np.max(-(I1 - I1[0] + C * dt) * np.sign(dt))))
    return MonotonicityReport(rate, m, C, bool(m >= -C), viol)
