"""The approximate blow-up profile ``Q_P = (Q + T2) exp(-i b |y|^2/4 + i beta.y)``.

``T2`` is assembled from three radial amplitudes that depend only on ``Q``
(computed once by :func:`ground_state_bundle`)::

    T2 = lam (H alpha).y A(r) + lam^2/2 [ -(k1+k2)/2 B0(r) - (k1-k2)/2 (y1^2-y2^2) B2(r) ]

with ``H = diag(-k1, -k2)`` and

* ``L_+ (y_j A) = y_j (Q^3 - kappa Q)``, ``A`` orthogonal to ``Q'/r``;
* ``L_+ B0 = r^2 Q^3``;
* ``L_+ ((y1^2 - y2^2) B2) = (y1^2 - y2^2) Q^3``;

where ``kappa = int Q^4 / (2 int Q^2)``.  The ``-kappa Q`` term is what makes
the first-harmonic problem solvable.

All profile fields and their first and second derivatives are evaluated
pointwise from the radial interpolants, so no FFT (and no periodic
wrap-around) is involved.
"""
import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .groundstate import compute_moments, solve_ground_state
from .linop import (
    FredholmReport,
    IncompatibleRHS,
    compute_rho,
    radial_weights,
    solve_radial,
)
from .numerics import CartesianGrid, Field2D, RadialGrid, RadialProfile, inner_array

# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModParams:
    """Modulation parameters ``(lam, b, alpha, beta)`` and the phase ``gamma``."""

    lam: float
    b: float = 0.0
    alpha: tuple = (0.0, 0.0)
    beta: tuple = (0.0, 0.0)
    gamma: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(a) for a in self.beta))

    @property
    def size(self):
        """``|P| = |lam| + |b| + |alpha| + |beta|``."""
        return abs(self.lam) + abs(self.b) + math.hypot(*self.alpha) + math.hypot(*self.beta)

    def as_vector(self):
        return np.array([self.lam, self.b, *self.alpha, *self.beta, self.gamma])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1], (v[2], v[3]), (v[4], v[5]), v[6])

    def with_(self, **changes):
        return replace(self, **changes)


def sweep_params(scale, family_direction=(0.4, 0.3, (0.1, 0.05), (0.1, -0.05))):
    """Parameters along a fixed direction with ``|P| = scale``."""
    lam, b, alpha, beta = family_direction
    p = ModParams(lam, b, alpha, beta)
    f = scale / p.size
    return ModParams(lam * f, b * f, (alpha[0] * f, alpha[1] * f), (beta[0] * f, beta[1] * f))


# ---------------------------------------------------------------------------
# ground state bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroundStateBundle:
    """``Q``, ``rho``, their moments and the radial amplitudes of ``T2``."""

    Q: RadialProfile
    rho: RadialProfile
    moments: object
    A: RadialProfile
    B0: RadialProfile
    B2: RadialProfile
    reports: dict = field(default_factory=dict)


@lru_cache(maxsize=4)
def ground_state_bundle(r_max=25.0, n=4096):
    """Solve for ``Q`` and every radial ingredient once per radial grid."""
    grid = RadialGrid(r_max, n)
    Q = solve_ground_state(grid)
    rho = compute_rho(Q)
    moments = compute_moments(Q, rho)
    q = Q.full
    r = grid.nodes_with_zero
    rep_a = solve_radial(Q, q ** 3 - moments.kappa * q, 1)
    rep_b0 = solve_radial(Q, r ** 2 * q ** 3, 0)
    rep_b2 = solve_radial(Q, q ** 3, 2)
    return GroundStateBundle(
        Q,
        rho,
        moments,
        RadialProfile.from_full(grid, rep_a.solution),
        RadialProfile.from_full(grid, rep_b0.solution),
        RadialProfile.from_full(grid, rep_b2.solution),
        {"A": rep_a, "B0": rep_b0, "B2": rep_b2},
    )


def c0_of_alpha(moments, k, alpha):
    """``c0(alpha)_j = (int Q^4 / (2 int Q^2)) Hess k(0)(e_j, alpha)``."""
    return moments.kappa * (k.hessian @ np.asarray(alpha, dtype=float))


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

def _radial_parts(profile, r, need_lap, loc=None):
    f = profile.interpolant()
    loc = f.locate(r) if loc is None else loc
    v = f(r, 0, loc)
    d_over_r = f.derivative_over_r(r, loc)
    d2 = f(r, 2, loc) if need_lap else None
    return v, d_over_r, d2


@dataclass
class ProfileQP:
    """A profile sampled on a y-grid, with its derivatives.

    ``P_P = Q + T2`` is real; ``QP = P_P exp(i phi)`` with
    ``phi = -b |y|^2/4 + beta.y``.
    """

    P_P: Field2D
    QP: Field2D
    T2: Field2D
    c0: np.ndarray
    params: ModParams
    grad_QP: tuple = None
    lap_QP: Field2D = None
    phase: np.ndarray = None

    @property
    def grid(self):
        return self.QP.grid


def profile_at(bundle, k, params, Y1, Y2, need_lap=True, need_param_derivs=False):
    """Pointwise evaluation of the profile at arbitrary points ``(Y1, Y2)``.

    Returns a dict with the real carrier ``P``, ``T2``, the phase ``phi``,
    ``QP``, its gradient ``grad`` (pair), its Laplacian ``lap`` (when
    ``need_lap``) and, when ``need_param_derivs``, the derivatives
    ``dlam`` and ``dalpha`` (pair) of ``QP`` with respect to ``lam`` and
    ``alpha`` (the ``b`` and ``beta`` derivatives are exact phase factors).
    """
    lam = params.lam
    alpha = np.asarray(params.alpha)
    H = k.hessian
    r = np.hypot(Y1, Y2)
    loc = bundle.Q.interpolant().locate(r)
    q, q_r, q2 = _radial_parts(bundle.Q, r, need_lap, loc)
    c = lam * (H @ alpha)
    s_coef = -0.5 * lam ** 2 * 0.5 * (k.k1 + k.k2)
    d_coef = -0.5 * lam ** 2 * 0.5 * (k.k1 - k.k2)

    T2 = np.zeros_like(q)
    g1 = np.zeros_like(q)
    g2 = np.zeros_like(q)
    lap = np.zeros_like(q) if need_lap else None
    quad = np.zeros_like(q)
    a = None
    if (c[0] or c[1]) or (need_param_derivs and (H[0, 0] or H[1, 1])):
        a, a_r, a2 = _radial_parts(bundle.A, r, need_lap, loc)
        cy = c[0] * Y1 + c[1] * Y2
        T2 += cy * a
        g1 += c[0] * a + cy * a_r * Y1
        g2 += c[1] * a + cy * a_r * Y2
        if need_lap:
            lap += cy * (a2 + 3.0 * a_r)
    if s_coef:
        b0, b0_r, b02 = _radial_parts(bundle.B0, r, need_lap, loc)
        quad += s_coef * b0
        g1 += s_coef * b0_r * Y1
        g2 += s_coef * b0_r * Y2
        if need_lap:
            lap += s_coef * (b02 + b0_r)
    if d_coef:
        b2, b2_r, b22 = _radial_parts(bundle.B2, r, need_lap, loc)
        p2 = Y1 ** 2 - Y2 ** 2
        quad += d_coef * p2 * b2
        g1 += d_coef * (2.0 * Y1 * b2 + p2 * b2_r * Y1)
        g2 += d_coef * (-2.0 * Y2 * b2 + p2 * b2_r * Y2)
        if need_lap:
            lap += d_coef * p2 * (b22 + 5.0 * b2_r)
    T2 += quad

    P = q + T2
    P1 = q_r * Y1 + g1
    P2 = q_r * Y2 + g2
    b = params.b
    beta = params.beta
    phi = -0.25 * b * r ** 2 + beta[0] * Y1 + beta[1] * Y2
    e = np.exp(1j * phi)
    f1 = -0.5 * b * Y1 + beta[0]
    f2 = -0.5 * b * Y2 + beta[1]
    out = {
        "P": P,
        "T2": T2,
        "phi": phi,
        "phase": e,
        "QP": P * e,
        "grad": ((P1 + 1j * P * f1) * e, (P2 + 1j * P * f2) * e),
        "c0": c0_of_alpha(bundle.moments, k, alpha),
        "loc": loc,
        "r": r,
    }
    if need_lap:
        lapP = q2 + q_r + lap
        out["lap"] = (lapP + 2j * (P1 * f1 + P2 * f2) - 1j * b * P - P * (f1 ** 2 + f2 ** 2)) * e
    if need_param_derivs:
        lin = T2 - quad
        out["dlam"] = (lin + 2.0 * quad) / lam * e
        if a is None:
            zero = np.zeros_like(q, dtype=complex)
            out["dalpha"] = (zero, zero.copy())
        else:
            out["dalpha"] = tuple(
                lam * (H[0, j] * Y1 + H[1, j] * Y2) * a * e for j in range(2)
            )
    return out


def profile_fields(bundle, k, params, grid, need_lap=True):
    """Evaluate ``P``, ``grad P``, ``Delta P`` and the phased ``QP`` on ``grid``.

    Returns a :class:`ProfileQP`.
    """
    Y1, Y2 = grid.mesh
    d = profile_at(bundle, k, params, Y1, Y2, need_lap)
    return ProfileQP(
        Field2D(grid, d["P"]),
        Field2D(grid, d["QP"]),
        Field2D(grid, d["T2"]),
        d["c0"],
        params,
        (Field2D(grid, d["grad"][0]), Field2D(grid, d["grad"][1])),
        Field2D(grid, d["lap"]) if need_lap else None,
        d["phi"],
    )


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def build_T2(bundle, k, lam, alpha, grid=None, tol=1e-10, include_c0=True):
    """``T2`` on ``grid`` together with ``c0(alpha)`` and a Fredholm report.

    The report's ``compatibility_defect`` is the relative pairing of the
    first-harmonic right-hand side with ``d_j Q``; with ``include_c0=False``
    the ``-lam c0(alpha).y Q`` term is dropped to expose the obstruction.
    """
    grid = grid or CartesianGrid()
    Q = bundle.Q
    q = Q.full
    kappa = bundle.moments.kappa if include_c0 else 0.0
    w = radial_weights(Q.grid, 1)
    kern = Q.interpolant().derivative_over_r(Q.grid.nodes_with_zero)
    rhs = q ** 3 - kappa * q
    defect = abs(np.sum(w * rhs * kern)) / math.sqrt(np.sum(w * rhs ** 2) * np.sum(w * kern ** 2))
    if defect > tol:
        raise IncompatibleRHS(defect)
    prof = profile_fields(bundle, k, ModParams(lam, 0.0, alpha, (0.0, 0.0)), grid, need_lap=False)
    rep_a = bundle.reports["A"]
    report = FredholmReport(
        prof.T2,
        float(defect),
        rep_a.iterations,
        max(r.residual for r in bundle.reports.values()),
    )
    return prof.T2, prof.c0, report


def compatibility_defect(bundle, include_c0=True):
    """Relative size of ``<rhs, d_j Q>`` for the ``T2`` right-hand side."""
    Q = bundle.Q
    q = Q.full
    kappa = bundle.moments.kappa if include_c0 else 0.0
    w = radial_weights(Q.grid, 1)
    kern = Q.interpolant().derivative_over_r(Q.grid.nodes_with_zero)
    rhs = q ** 3 - kappa * q
    return abs(np.sum(w * rhs * kern)) / math.sqrt(np.sum(w * rhs ** 2) * np.sum(w * kern ** 2))


def assemble_QP(bundle, k, params, grid=None, need_lap=True):
    """``QP = (Q + T2) exp(-i b |y|^2/4 + i beta.y)`` on ``grid``."""
    return profile_fields(bundle, k, params, grid or CartesianGrid(), need_lap)


def residual_Psi(prof, k):
    """Residual ``Psi_P`` of the profile equation, evaluated pointwise.

    ``-Psi = -i b^2 d_b QP + i(-b beta + lam c0).d_beta QP + Delta QP - QP
    + k~ |QP|^2 QP + i b Lambda QP - 2 i beta.grad QP - |beta|^2 QP`` with
    ``k~ = k(lam y + alpha)/k(alpha)``, ``d_b QP = -i |y|^2/4 QP`` and
    ``d_beta QP = i y QP``.
    """
    P = prof.params
    grid = prof.grid
    if prof.lap_QP is None:
        raise ValueError("profile was built without second derivatives")
    kt = k.rescaled(grid, P.lam, P.alpha)
    Y1, Y2 = grid.mesh
    r2 = grid.radius ** 2
    qp = prof.QP.values
    g1, g2 = prof.grad_QP[0].values, prof.grad_QP[1].values
    b = P.b
    beta = np.asarray(P.beta)
    v = -b * beta + P.lam * prof.c0
    lam_qp = qp + Y1 * g1 + Y2 * g2
    expr = (
        -(b * b) * 0.25 * r2 * qp
        - (v[0] * Y1 + v[1] * Y2) * qp
        + prof.lap_QP.values
        - qp
        + kt * np.abs(qp) ** 2 * qp
        + 1j * b * lam_qp
        - 2j * (beta[0] * g1 + beta[1] * g2)
        - (beta @ beta) * qp
    )
    return Field2D(grid, -expr)


def residual_Psi_tilde(prof, k):
    """``exp(i b |y|^2/4 - i beta.y) Psi_P`` (the de-phased residual)."""
    psi = residual_Psi(prof, k)
    return Field2D(prof.grid, psi.values * np.exp(-1j * prof.phase))


def mass_energy_of_QP(prof, k, moments):
    """Mass, rescaled energy and the quadratic prediction of the energy.

    Returns
    -------
    mass : float
        ``||QP||^2``.
    energy_tilde : float
        ``(1/2) int |grad QP|^2 - (1/4) int k~ |QP|^4``.
    predicted : float
        ``b^2/8 int |y|^2 Q^2 + |beta|^2/2 int Q^2 - lam^2/8 int Hess k(0)(y,y) Q^4``.
    """
    P = prof.params
    grid = prof.grid
    h = grid.h
    qp = prof.QP.values
    g1, g2 = prof.grad_QP[0].values, prof.grad_QP[1].values
    kt = k.rescaled(grid, P.lam, P.alpha)
    mass = h * h * np.sum(np.abs(qp) ** 2)
    energy = h * h * (0.5 * np.sum(np.abs(g1) ** 2 + np.abs(g2) ** 2) - 0.25 * np.sum(kt * np.abs(qp) ** 4))
    hess_q4 = -(k.k1 + k.k2) * moments.quartic_tensor[0, 0]
    beta2 = P.beta[0] ** 2 + P.beta[1] ** 2
    predicted = P.b ** 2 / 8.0 * moments.variance + beta2 / 2.0 * moments.mass - P.lam ** 2 / 8.0 * hess_q4
    return float(mass), float(energy), float(predicted)


def hessian_quartic(k, moments):
    """``int Hess k(0)(y, y) Q^4``."""
    return -(k.k1 + k.k2) * moments.quartic_tensor[0, 0]


def pairing_T2_Q(bundle):
    """Relative ``<T2, Q>``: only the ``B0`` part can contribute (angular symmetry)."""
    Q = bundle.Q
    w = radial_weights(Q.grid, 0)
    b0 = bundle.B0.full
    q = Q.full
    return abs(np.sum(w * b0 * q)) / math.sqrt(np.sum(w * b0 ** 2) * np.sum(w * q ** 2))


# ---------------------------------------------------------------------------
# binary field dumps
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<dq")


def write_field_dump(path, f):
    """Write ``L`` (float64), ``m`` (int64), then row-major (re, im) float64 pairs."""
    data = np.empty((f.grid.m, f.grid.m, 2), dtype="<f8")
    data[..., 0] = f.values.real
    data[..., 1] = f.values.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(float(f.grid.L), int(f.grid.m)))
        fh.write(data.tobytes(order="C"))


def read_field_dump(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    L, m = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 16 * m * m
    if m <= 0 or len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for m={m}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(m, m, 2)
    return Field2D(CartesianGrid(L, m), data[..., 0] + 1j * data[..., 1])


def radial_inner(f, g, grid, m=0):
    """Planar pairing of two ``m``-harmonic amplitudes on a radial grid."""
    return float(np.sum(radial_weights(grid, m) * f * g))


def field_inner(f, g):
    return inner_array(f.values, g.values, f.grid.h)
