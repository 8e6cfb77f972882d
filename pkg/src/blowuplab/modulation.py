"""Formal modulation dynamics of the parameters ``(lam, b, alpha, beta, gamma)``.

In the rescaled time ``s`` (``ds/dt = 1/lam^2``) the formal laws are::

    lam_s = -b lam
    b_s = -b^2 + d0(alpha, alpha)
    alpha_s = 2 beta lam
    beta_s = -b beta + c0(alpha) lam
    gamma_s = 1 + |beta|^2 - d1(alpha, alpha)

with ``d0(a, a) = 2 ||Q||^2 / ||yQ||^2 Hess k(0)(a, a)``,
``d1 = (|y|^2 Q, rho) / (4 (rho, Q)) d0`` and ``c0(a) = kappa Hess k(0) a``.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .profile import ModParams, assemble_QP, hessian_quartic, mass_energy_of_QP

PARAM_COLUMNS = ("t", "s", "lambda", "b", "alpha1", "alpha2", "beta1", "beta2", "gamma")


class EnergyShiftError(ValueError):
    """Raised when the shifted energy of the initial data is not positive."""


@dataclass(frozen=True)
class StructureConstants:
    """Constants of the formal system.

    ``d0_matrix`` and ``c0_matrix`` act on ``alpha``:
    ``d0(alpha, alpha) = alpha @ d0_matrix @ alpha`` and
    ``c0(alpha) = c0_matrix @ alpha``.
    """

    C0: float
    E0_tilde: float
    d0_matrix: np.ndarray
    d1_scale: float
    c0_matrix: np.ndarray

    def d0(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return float(a @ self.d0_matrix @ a)

    def d1(self, alpha):
        return self.d1_scale * self.d0(alpha)

    def c0(self, alpha):
        return self.c0_matrix @ np.asarray(alpha, dtype=float)


def structure_matrices(moments, k):
    """``(d0_matrix, d1_scale, c0_matrix)`` from the moments of ``Q`` and ``Hess k(0)``."""
    H = k.hessian
    d0 = 2.0 * moments.mass / moments.variance * H
    d1_scale = moments.rho_pairings[0] / (4.0 * moments.rho_pairings[1])
    return d0, float(d1_scale), moments.kappa * H


def derive_structure_constants(bundle, k, initial, E_in=None, grid=None, C0=None):
    """Structure constants for the initial parameters ``initial``.

    Parameters
    ----------
    bundle : GroundStateBundle
    k : CoefficientK
    initial : ModParams
        Parameters of the initial profile (``alpha = beta = 0`` in the
        standard construction).
    E_in : float, optional
        Energy of the initial datum.  When omitted it is computed from the
        profile ``QP`` on ``grid`` as ``E~(QP) / lam0^2``.
    C0 : float, optional
        A prescribed blow-up constant.  When omitted, ``C0`` is recomputed as
        ``||yQ|| / sqrt(8 E0~)``.
    """
    moments = bundle.moments
    if E_in is None:
        prof = assemble_QP(bundle, k, initial, grid, need_lap=False)
        _, e_tilde, _ = mass_energy_of_QP(prof, k, moments)
        E_in = e_tilde / initial.lam ** 2
    E0 = E_in + hessian_quartic(k, moments) / 8.0
    if not E0 > 0:
        raise EnergyShiftError(f"energy shift violated: E0~ = {E0:.6g} <= 0")
    d0, d1s, c0 = structure_matrices(moments, k)
    if C0 is None:
        C0 = moments.yQ_norm / math.sqrt(8.0 * E0)
    return StructureConstants(float(C0), float(E0), d0, d1s, c0)


def recomputed_C0(sc, moments):
    """``||yQ|| / sqrt(8 E0~)``."""
    return moments.yQ_norm / math.sqrt(8.0 * sc.E0_tilde)


def formal_rhs(P, sc, bare_phase=False):
    """s-derivatives ``(lam_s, b_s, alpha_s, beta_s, gamma_s)`` as a 7-vector.

    ``bare_phase=True`` drops the ``-d1(alpha, alpha)`` correction of the
    phase law.
    """
    if not P.lam > 0:
        raise ValueError("lambda must be positive")
    lam, b = P.lam, P.b
    alpha = np.asarray(P.alpha)
    beta = np.asarray(P.beta)
    d0 = sc.d0(alpha)
    gs = 1.0 + beta @ beta - (0.0 if bare_phase else sc.d1_scale * d0)
    a_s = 2.0 * beta * lam
    b_s = -b * beta + sc.c0(alpha) * lam
    return np.array([-b * lam, -b * b + d0, a_s[0], a_s[1], b_s[0], b_s[1], gs])


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    t: float
    s: float
    params: ModParams
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    """Ordered samples ``(t, s, params, diagnostics)`` with a status string."""

    samples: list = field(default_factory=list)
    status: str = "ok"

    def append(self, t, s, params, **diagnostics):
        if self.samples:
            t_prev = self.samples[-1].t
            if len(self.samples) > 1:
                forward = self.samples[1].t > self.samples[0].t
                if (t > t_prev) != forward or t == t_prev:
                    raise ValueError("sample times must be strictly monotone")
            elif t == t_prev:
                raise ValueError("sample times must be strictly monotone")
        self.samples.append(Sample(float(t), float(s), params, dict(diagnostics)))

    def __len__(self):
        return len(self.samples)

    def column(self, name):
        """One column as an array; parameter names or diagnostic keys."""
        getters = {
            "t": lambda x: x.t,
            "s": lambda x: x.s,
            "lambda": lambda x: x.params.lam,
            "b": lambda x: x.params.b,
            "alpha1": lambda x: x.params.alpha[0],
            "alpha2": lambda x: x.params.alpha[1],
            "beta1": lambda x: x.params.beta[0],
            "beta2": lambda x: x.params.beta[1],
            "gamma": lambda x: x.params.gamma,
        }
        get = getters.get(name, lambda x: x.diagnostics.get(name, math.nan))
        return np.array([get(x) for x in self.samples], dtype=float)

    @property
    def diagnostic_names(self):
        names = []
        for x in self.samples:
            for key in x.diagnostics:
                if key not in names:
                    names.append(key)
        return names

    def s_reconstruction_drift(self):
        """Max relative gap between recorded ``s`` and the trapezoid integral of ``1/lam^2``."""
        t = self.column("t")
        s = self.column("s")
        rate = 1.0 / self.column("lambda") ** 2
        rebuilt = s[0] + np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
        scale = np.maximum(np.abs(s - s[0]), 1e-300)
        return float(np.max(np.abs(rebuilt - s)[1:] / scale[1:])) if len(t) > 1 else 0.0

    def to_csv(self, path, extra_columns=()):
        """Write the trajectory with 17 significant digits; a header row is always present."""
        names = list(PARAM_COLUMNS) + [n for n in list(extra_columns) + self.diagnostic_names if n not in PARAM_COLUMNS]
        seen = []
        for n in names:
            if n not in seen:
                seen.append(n)
        cols = [self.column(n) for n in seen]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(seen)
            for i in range(len(self.samples)):
                w.writerow([format_float(c[i]) for c in cols])
        return seen

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        missing = [c for c in PARAM_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        traj = cls()
        idx = {name: i for i, name in enumerate(header)}
        for row in body:
            v = {name: float(row[i]) for name, i in idx.items()}
            P = ModParams(v["lambda"], v["b"], (v["alpha1"], v["alpha2"]), (v["beta1"], v["beta2"]), v["gamma"])
            diag = {n: v[n] for n in header if n not in PARAM_COLUMNS}
            traj.samples.append(Sample(v["t"], v["s"], P, diag))
        return traj


def format_float(x):
    return "%.17g" % x


def _rhs_t(y, sc, bare_phase):
    P = ModParams.from_vector(y[:7])
    lam2 = P.lam ** 2
    out = np.empty(8)
    out[:7] = formal_rhs(P, sc, bare_phase) / lam2
    out[7] = 1.0 / lam2
    return out


def integrate_formal(P0, sc, t0, T, dt, bare_phase=False, lam_floor=1e-6, s0=0.0, record_every=1):
    """Integrate the formal system in ``t`` from ``t0`` to ``T`` with RK4.

    The step is ``dt * min(1, lam / lam0)``: constant while ``lam`` is of
    size ``lam0`` and shrinking proportionally to ``lam`` near collapse, so
    that ``ds * b`` stays bounded.  Halving ``dt`` halves every step.

    Returns a :class:`Trajectory` with diagnostics ``lambda_plus_t_over_C0``
    and ``b_over_lambda_minus_inv_C0``.  ``status`` is ``"collapse reached"``
    when ``lam`` drops below ``lam_floor``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T == t0:
        raise ValueError("empty time window")
    direction = 1.0 if T > t0 else -1.0
    y = np.concatenate([P0.as_vector(), [s0]])
    lam0 = P0.lam
    traj = Trajectory()
    t = float(t0)

    def record(t, y):
        P = ModParams.from_vector(y[:7])
        traj.append(
            t,
            y[7],
            P,
            lambda_plus_t_over_C0=P.lam + t / sc.C0,
            b_over_lambda_minus_inv_C0=P.b / P.lam - 1.0 / sc.C0,
        )

    record(t, y)
    n = 0
    while direction * (T - t) > 0:
        h = dt * min(1.0, y[0] / lam0)
        last = direction * (T - t) <= h * (1 + 1e-12)
        if last:
            h = direction * (T - t)
        h *= direction
        k1 = _rhs_t(y, sc, bare_phase)
        k2 = _rhs_t(y + 0.5 * h * k1, sc, bare_phase)
        k3 = _rhs_t(y + 0.5 * h * k2, sc, bare_phase)
        k4 = _rhs_t(y + h * k3, sc, bare_phase)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = T if last else t + h
        n += 1
        if not y[0] > lam_floor:
            traj.status = "collapse reached"
            break
        if last or n % record_every == 0:
            record(t, y)
    return traj


# ---------------------------------------------------------------------------
# the linear (alpha, beta) system and the ODE lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearSystemReport:
    eigenvalues: np.ndarray
    rotation: np.ndarray
    matrix: np.ndarray
    complex_pair: bool
    degenerate: bool


def alpha_beta_matrix(C0, k1):
    return np.array([[0.0, -2.0], [k1, 1.0 / C0]])


def alpha_beta_linear_system(sc, k1):
    """Eigen-decomposition of ``[[0, -2], [k1, 1/C0]]``.

    The eigenvalues satisfy ``l1 + l2 = 1/C0`` and ``l1 l2 = 2 k1``;
    ``rotation`` holds the eigenvectors as columns, so
    ``rotation @ diag(eigenvalues) @ inv(rotation)`` is the matrix.  When
    ``1/C0^2 < 8 k1`` the pair is complex conjugate (``complex_pair``).
    ``k1 = 0`` is the degenerate case with eigenvalues ``(0, 1/C0)``.
    """
    if k1 < 0:
        raise ValueError("k1 must be non-negative")
    M = alpha_beta_matrix(sc.C0, k1)
    disc = 1.0 / sc.C0 ** 2 - 8.0 * k1
    tr = 1.0 / sc.C0
    if disc >= 0:
        root = math.sqrt(disc)
        # the small root from the product avoids cancellation
        l2 = 0.5 * (tr + root)
        l1 = 2.0 * k1 / l2
        vals = np.array([l1, l2])
    else:
        root = math.sqrt(-disc)
        vals = np.array([0.5 * (tr - 1j * root), 0.5 * (tr + 1j * root)])
    # eigenvector for eigenvalue l: (-2, l) solves the first row l*x = -2*y
    V = np.array([[-2.0, -2.0], [vals[0], vals[1]]], dtype=complex if disc < 0 else float)
    if disc == 0:
        V[:, 1] = [0.0, 1.0]  # generalized eigenvector; the matrix is not diagonalizable
    V = V / np.linalg.norm(V, axis=0)
    return LinearSystemReport(vals, V, M, bool(disc < 0), bool(k1 == 0))


def tau_of_t(t, t0, C0):
    """``tau(t) = int_t^t0 C0 / (-z) dz = C0 ln(t / t0)``."""
    return C0 * np.log(np.asarray(t, dtype=float) / t0)


@dataclass
class OdeLemmaReport:
    ratio_sup: float
    ratio: np.ndarray
    t: np.ndarray
    constant: float
    passed: bool


def verify_ode_lemma(delta, t0, T, sc, k1, constant=10.0, steps_per_unit_tau=400, sign=None):
    """Integrate the forced ``(alpha_1, beta_1)`` system with saturating forcing.

    The forcing is ``|F| = delta^2 exp(tau/C0) (-t0)`` (in the l1 sense),
    aligned with the eigenvector of largest real part of the matrix (the
    worst case) unless ``sign`` gives a fixed direction.  The system is
    integrated from ``tau = 0`` with zero data by RK4; the report holds
    ``(|alpha_1| + |beta_1|) / (delta^2 lam(t))`` with ``lam(t) = -t/C0``.
    """
    if not T < t0 < 0:
        raise ValueError("need T < t0 < 0")
    C0 = sc.C0
    M = alpha_beta_matrix(C0, k1)
    if sign is None:
        vals, vecs = np.linalg.eig(M)
        v = np.real(vecs[:, int(np.argmax(vals.real))])
        if np.allclose(v, 0):
            v = np.array([1.0, 1.0])
    else:
        v = np.asarray(sign, dtype=float)
    v = v / np.sum(np.abs(v))
    tau_end = float(tau_of_t(T, t0, C0))
    n = max(16, int(math.ceil(tau_end * steps_per_unit_tau)))
    h = tau_end / n
    amp = delta ** 2 * (-t0)

    def f(tau, x):
        return M @ x + amp * math.exp(tau / C0) * v

    x = np.zeros(2)
    taus = np.linspace(0.0, tau_end, n + 1)
    out = np.zeros(n + 1)
    for i in range(n):
        tau = taus[i]
        k1_ = f(tau, x)
        k2_ = f(tau + h / 2, x + h / 2 * k1_)
        k3_ = f(tau + h / 2, x + h / 2 * k2_)
        k4_ = f(tau + h, x + h * k3_)
        x = x + h / 6 * (k1_ + 2 * k2_ + 2 * k3_ + k4_)
        out[i + 1] = abs(x[0]) + abs(x[1])
    t = t0 * np.exp(taus / C0)
    lam = -t / C0
    ratio = out / (delta ** 2 * lam) if delta else np.zeros_like(out)
    sup = float(np.max(ratio))
    return OdeLemmaReport(sup, ratio, t, constant, bool(sup <= constant))
