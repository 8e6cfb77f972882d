"""Linearised operators around the ground state and their inversion.

``L_+ = -Delta + 1 - 3 Q^2`` and ``L_- = -Delta + 1 - Q^2`` act on real
fields.  ``L_+`` has the two-dimensional kernel ``span{d_1 Q, d_2 Q}``, so
:func:`solve_Lplus` solves on its orthogonal complement and reports the
projection of the right-hand side onto the kernel.

Right-hand sides that are a single angular harmonic ``g(r) Y_m(theta)`` are
handled by :func:`solve_radial`, a banded fourth-order finite-difference
solve on the radial grid (bordered by the kernel for ``m = 1``).
"""
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .groundstate import BANDS, banded_matvec, k0_tail_ratio, radial_operator_bands
from .numerics import Field2D, RadialProfile, inner_array, laplacian_array


class IncompatibleRHS(ValueError):
    """The right-hand side has a component along the kernel of ``L_+``."""

    def __init__(self, defect, message=None):
        super().__init__(message or f"incompatible RHS: kernel projection {defect:.3e}")
        self.defect = defect


@dataclass
class FredholmReport:
    solution: object
    compatibility_defect: float
    iterations: int
    residual: float


def _potential(Q, which):
    q2 = Q.full ** 2
    if which == "plus":
        return -3.0 * q2
    if which == "minus":
        return -q2
    raise ValueError(f"which must be 'plus' or 'minus', not {which!r}")


def sample_Q(Q, grid):
    """Values of ``Q`` and its radial derivative data on a Cartesian grid."""
    interp = Q.interpolant()
    return interp(grid.radius)


def kernel_fields(Q, grid):
    """``(d_1 Q, d_2 Q)`` evaluated pointwise from the radial interpolant."""
    interp = Q.interpolant()
    Y1, Y2 = grid.mesh
    dq_r = interp.derivative_over_r(grid.radius)
    return dq_r * Y1, dq_r * Y2


def apply_L(Q, f, which="plus"):
    """``(-Delta + 1 - 3 Q^2) f`` (``plus``) or ``(-Delta + 1 - Q^2) f`` (``minus``)."""
    q2 = sample_Q(Q, f.grid) ** 2
    c = 3.0 if which == "plus" else 1.0
    if which not in ("plus", "minus"):
        raise ValueError(f"which must be 'plus' or 'minus', not {which!r}")
    v = f.values
    return Field2D(f.grid, -laplacian_array(v, f.grid) + v - c * q2 * v)


# ---------------------------------------------------------------------------
# radial / harmonic fast path
# ---------------------------------------------------------------------------

def radial_weights(grid, m=0):
    """Quadrature weights for the planar pairing of ``f P_m`` with ``g P_m``.

    ``P_0 = 1``, ``P_1 = y_1`` and ``P_2 = y_1^2 - y_2^2``; the pairing is
    ``sum(w * f * g)``.  Simpson in ``r`` with the origin correction of
    :func:`~blowuplab.numerics.integrate_radial` for odd integrands.
    """
    r = grid.nodes_with_zero
    if grid.n % 2:
        raise ValueError("Simpson weights need an even number of intervals")
    w = np.ones(r.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w = w * (grid.h / 3.0) * r ** (2 * m + 1)
    # r^(2m+1) f g is odd in r: subtract Simpson's endpoint error at 0
    w[1] -= 2.0 * grid.h * r[1] ** (2 * m + 1) / 180.0
    w[2] += grid.h * r[2] ** (2 * m + 1) / 180.0
    angular = 2.0 * np.pi if m == 0 else np.pi
    return angular * w


def solve_radial(Q, rhs_full, m=0, which="plus"):
    """Solve ``L g P_m = f P_m`` for the radial amplitude ``g``.

    Writing a field as ``g(r) P_m(y)`` with ``P_m`` a harmonic polynomial of
    degree ``m`` (``1``, ``y_j``, ``y_1^2 - y_2^2``), the operator
    ``-Delta + 1 - c Q^2`` acts on the amplitude as
    ``-g'' - (2m + 1) g'/r + (1 - c Q^2) g``, an even problem on ``r >= 0``.

    For ``m = 1`` and ``which = "plus"`` the kernel ``d_j Q = (Q'/r) y_j`` is
    handled by a bordered system: the returned amplitude is orthogonal to
    ``Q'/r`` and the right-hand side's kernel pairing, computed by direct
    quadrature, is reported as ``compatibility_defect`` (relative to
    ``||f P_1|| ||d_1 Q||``).

    Returns
    -------
    FredholmReport
        ``solution`` is the nodal amplitude including ``r = 0``.
    """
    grid = Q.grid
    f = np.array(rhs_full, dtype=float)
    if f.shape != (grid.n + 1,):
        raise ValueError("rhs must include the r = 0 node")
    ratio = k0_tail_ratio(grid, m)
    ab = radial_operator_bands(grid, _potential(Q, which), 2 * m + 1, ratio)
    defect = 0.0
    if m == 1 and which == "plus":
        kern = Q.interpolant().derivative_over_r(grid.nodes_with_zero)
        w = radial_weights(grid, 1)
        N = grid.n + 1
        offsets = list(range(BANDS, -BANDS - 1, -1))
        diags = [ab[i, max(o, 0): N + min(o, 0)] for i, o in enumerate(offsets)]
        A = sp.diags(diags, offsets, shape=(N, N), format="csc")
        col = sp.csc_matrix(kern[:, None])
        row = sp.csc_matrix((w * kern)[None, :])
        B = sp.bmat([[A, col], [row, None]], format="csc")
        sol = spla.spsolve(B, np.concatenate((f, [0.0])))
        u, mu = sol[:-1], sol[-1]
        knorm = np.sqrt(np.sum(w * kern ** 2))
        fnorm = np.sqrt(np.sum(w * f ** 2))
        # mu only absorbs discretisation error; the defect is the direct pairing
        defect = abs(np.sum(w * f * kern)) / max(fnorm * knorm, 1e-300)
        resid_vec = banded_matvec(ab, u) + mu * kern - f
    else:
        u = solve_banded((BANDS, BANDS), ab, f)
        resid_vec = banded_matvec(ab, u) - f
    residual = float(np.max(np.abs(resid_vec)))
    return FredholmReport(u, float(defect), 1, residual)


def compute_rho(Q):
    """``rho`` with ``L_+ rho = |y|^2 Q`` (radial, hence orthogonal to the kernel)."""
    r = Q.grid.nodes_with_zero
    rep = solve_radial(Q, r ** 2 * Q.full, 0, "plus")
    return RadialProfile.from_full(Q.grid, rep.solution)


# ---------------------------------------------------------------------------
# 2D path: projected, preconditioned CG on the normal equations
# ---------------------------------------------------------------------------

def _orthonormal_kernel(Q, grid):
    d1, d2 = kernel_fields(Q, grid)
    h = grid.h
    basis = []
    for d in (d1, d2):
        v = d.astype(complex)
        for b in basis:
            v = v - inner_array(v, b, h) * b
        v = v / np.sqrt(inner_array(v, v, h).real)
        basis.append(v)
    return basis


def solve_Lplus(Q, rhs, tol=1e-8, max_iter=2000):
    """Solve ``L_+ u = P rhs`` with ``u`` orthogonal to ``d_1 Q, d_2 Q``.

    The right-hand side must be compatible: if its projection onto the kernel
    exceeds ``tol * ||rhs||`` an :class:`IncompatibleRHS` is raised.

    Conjugate gradients run on the normal equations of ``P L_+ S`` with the
    Fourier preconditioner ``S = (1 - Delta)^(-1/2)``.
    """
    grid = rhs.grid
    h = grid.h
    basis = _orthonormal_kernel(Q, grid)
    f = rhs.values.astype(complex)
    fnorm = np.sqrt(inner_array(f, f, h).real)
    coeffs = [inner_array(f, b, h) for b in basis]
    defect = float(np.sqrt(sum(abs(c) ** 2 for c in coeffs)))
    if defect > tol * max(fnorm, 1e-300):
        raise IncompatibleRHS(defect)

    def project(v):
        for b in basis:
            v = v - inner_array(v, b, h) * b
        return v

    g = project(f)
    q2 = sample_Q(Q, grid) ** 2
    ksq = grid.k_squared
    s_hat = 1.0 / np.sqrt(1.0 + ksq)

    def S(v):
        return sfft.ifft2(s_hat * sfft.fft2(v))

    def Lp(v):
        return sfft.ifft2((1.0 + ksq) * sfft.fft2(v)) - 3.0 * q2 * v

    def Aop(w):  # P L S
        return project(Lp(S(w)))

    def ATop(v):  # S L P
        return S(Lp(project(v)))

    # CG on A^T A w = A^T g
    w = np.zeros_like(g)
    r = ATop(g)
    p = r.copy()
    rr = inner_array(r, r, h).real
    gnorm = np.sqrt(inner_array(g, g, h).real)
    it = 0
    residual = 1.0
    for it in range(1, max_iter + 1):
        Ap = ATop(Aop(p))
        alpha = rr / inner_array(Ap, p, h).real
        w = w + alpha * p
        r = r - alpha * Ap
        rr_new = inner_array(r, r, h).real
        if it % 10 == 0 or rr_new < (0.1 * tol * gnorm) ** 2:
            res = Aop(w) - g
            residual = np.sqrt(inner_array(res, res, h).real) / max(gnorm, 1e-300)
            if residual <= tol:
                break
        p = r + (rr_new / rr) * p
        rr = rr_new
    u = project(S(w))
    res = project(Lp(u)) - g
    residual = float(np.sqrt(inner_array(res, res, h).real) / max(gnorm, 1e-300))
    if residual > tol:
        raise RuntimeError(f"projected CG did not converge: residual {residual:.3e}")
    if np.all(np.abs(rhs.values.imag) == 0):
        u = u.real
    return FredholmReport(Field2D(grid, u), defect / max(fnorm, 1e-300), it, residual)


# ---------------------------------------------------------------------------
# quadratic forms
# ---------------------------------------------------------------------------

def coercivity_form(Q, rho, eps):
    """``<L_+ e1, e1> + <L_- e2, e2>`` and the four controlling projections.

    Returns
    -------
    value : float
    projections : tuple
        ``(<e1, Q>, <e1, |y|^2 Q>, |<e1, y Q>|, <e2, Q>)``.
    """
    del rho  # the quadratic form does not involve rho; kept for call symmetry
    grid = eps.grid
    h = grid.h
    q = sample_Q(Q, grid)
    e = eps.values
    eh = sfft.fft2(e)
    k1, k2 = grid.k_derivative
    grad_sq = (h * h / e.size) * np.sum((k1 ** 2 + k2 ** 2) * np.abs(eh) ** 2)
    e1, e2 = e.real, e.imag
    value = grad_sq + h * h * np.sum(e1 ** 2 + e2 ** 2 - 3 * q ** 2 * e1 ** 2 - q ** 2 * e2 ** 2)
    Y1, Y2 = grid.mesh
    r2 = grid.radius ** 2
    proj = (
        h * h * np.sum(e1 * q),
        h * h * np.sum(e1 * r2 * q),
        float(np.hypot(h * h * np.sum(e1 * Y1 * q), h * h * np.sum(e1 * Y2 * q))),
        h * h * np.sum(e2 * q),
    )
    return float(value), tuple(float(p) for p in proj)


def apply_M(QP, k_resc, eps):
    """Linearisation of ``u -> -Delta u + u - k |u|^2 u`` at ``QP`` applied to ``eps``.

    ``M eps = -Delta eps + eps - k (2 |QP|^2 eps + QP^2 conj(eps))``.
    """
    for other in (k_resc, eps):
        if not QP.grid.same_nodes(other.grid):
            raise ValueError("fields live on different grids")
    return Field2D(eps.grid, apply_M_array(QP.values, k_resc.values.real, eps.values, eps.grid))


def apply_M_array(qp, k, e, grid):
    return (
        -laplacian_array(e, grid)
        + e
        - k * (2.0 * np.abs(qp) ** 2 * e + qp * qp * np.conj(e))
    )


def nonlinear_map_array(u, k, grid):
    """``-Delta u + u - k |u|^2 u`` (the map whose derivative is ``M``)."""
    return -laplacian_array(u, grid) + u - k * np.abs(u) ** 2 * u


__all__ = [
    "FredholmReport",
    "IncompatibleRHS",
    "apply_L",
    "apply_M",
    "coercivity_form",
    "compute_rho",
    "kernel_fields",
    "solve_Lplus",
    "solve_radial",
]
