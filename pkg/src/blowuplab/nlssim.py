"""Split-step evolution of ``i u_t + Delta u = -k(x) |u|^2 u`` with modulation tracking.

The solution is followed on a periodic box.  Every few steps it is
decomposed as ``u = k(alpha)^{-1/2} lam^{-1} (QP + eps)((x - alpha)/lam) e^{i gamma}``
with ``eps`` satisfying seven orthogonality conditions.  The decomposition
works on the *pulled-back* grid: the nodes ``y_j = (x_j - alpha)/lam`` of the
simulation grid itself, so no interpolation of ``u`` is needed.
"""
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .coefficient import CoefficientK
from .modulation import Trajectory, structure_matrices
from .numerics import CartesianGrid, Field2D, h1_norm_array
from .profile import ModParams, profile_at, write_field_dump

YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = -(2.0 ** (1.0 / 3.0)) * YOSHIDA_W1
SUZUKI_P = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
SCHEMES = ("strang", "yoshida", "suzuki")
BOOTSTRAP_KEYS = ("boot_eps", "boot_center", "boot_lambda", "boot_b")


class DecompositionError(RuntimeError):
    """Newton on the orthogonality conditions did not converge."""

    def __init__(self, residuals, message="decomposition did not converge"):
        self.residuals = np.asarray(residuals)
        super().__init__(f"{message}; residuals {self.residuals}")


# ---------------------------------------------------------------------------
# configuration and initial data
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    """Settings of one PDE run.

    ``dt`` is the physical time step at the initial scale; with
    ``stepping="s_uniform"`` it is rescaled by ``(lam/lam0)^2`` as the
    solution concentrates.  ``collapse_floor`` is the smallest admissible
    ``lam`` measured in grid cells.
    """

    grid: CartesianGrid
    k: CoefficientK
    t0: float
    t_end: float
    dt: float = None
    direction: str = "forward"
    decompose_stride: int = 10
    newton_tol: float = 1e-10
    delta: float = 0.1
    collapse_floor: float = 4.0
    C0: float = 0.5
    stepping: str = "s_uniform"
    scheme: str = "suzuki"
    lyapunov: bool = False
    lyapunov_A: float = None
    fields_dir: str = None
    snapshot_every: int = 0
    max_steps: int = 10 ** 7

    def __post_init__(self):
        if not self.t0 < 0:
            raise ValueError("t0 must be negative")
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        if self.direction == "forward" and not self.t_end > self.t0:
            raise ValueError("forward runs need t_end > t0")
        if self.direction == "backward" and not self.t_end < self.t0:
            raise ValueError("backward runs need t_end < t0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.decompose_stride < 1:
            raise ValueError("decompose_stride must be >= 1")
        if self.collapse_floor < 4:
            raise ValueError("collapse_floor must be at least 4 grid cells")
        if self.stepping not in ("s_uniform", "fixed"):
            raise ValueError("stepping must be 's_uniform' or 'fixed'")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def lam0(self):
        return -self.t0 / self.C0


def initial_params(C0, t0):
    """``lam0 = -t0/C0``, ``b0 = -t0/C0^2``, ``alpha0 = beta0 = 0``, ``gamma0 = -C0^2/t0``."""
    if not t0 < 0 or not C0 > 0:
        raise ValueError("need t0 < 0 and C0 > 0")
    return ModParams(-t0 / C0, -t0 / C0 ** 2, (0.0, 0.0), (0.0, 0.0), -C0 ** 2 / t0)


def ansatz_field(bundle, k, params, grid, eps=None):
    """``k(alpha)^{-1/2} lam^{-1} (QP + eps)((x - alpha)/lam) e^{i gamma}`` on ``grid``.

    ``eps`` (an array on the pulled-back nodes) defaults to zero.
    """
    ygrid = grid.scaled(params.lam, params.alpha)
    mask, d = masked_profile(bundle, k, params, ygrid)
    w = np.zeros((grid.m, grid.m), dtype=complex)
    w[mask] = d["QP"]
    if eps is not None:
        w = w + eps
    return Field2D(grid, w * np.exp(1j * params.gamma) / (params.lam * math.sqrt(k.at(params.alpha))))


def make_initial_data(C0, t0, bundle, k, grid, collapse_floor=4.0):
    """Initial datum ``lam0^{-1} QP0(x/lam0) e^{i gamma0}`` with ``eps0 = 0``."""
    P0 = initial_params(C0, t0)
    if P0.lam < collapse_floor * grid.h:
        need = int(2 ** math.ceil(math.log2(collapse_floor * 2 * grid.L / P0.lam)))
        raise ValueError(
            f"lambda0 = {P0.lam:.3g} spans fewer than {collapse_floor} cells; use m >= {need}"
        )
    return ansatz_field(bundle, k, P0, grid), P0


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

class SplitStepper:
    """Strang split-step, optionally composed to fourth order (Yoshida or Suzuki).

    Consecutive linear half-steps are merged, so one step costs one FFT pair
    per Strang sub-step.
    """

    def __init__(self, grid, k_values, scheme="strang"):
        self.grid = grid
        self.k = np.asarray(k_values, dtype=float)
        self.ksq = grid.k_squared
        self.scheme = scheme
        self._cache = {}

    def _linear(self, tau):
        mult = self._cache.get(tau)
        if mult is None:
            if len(self._cache) > 16:
                self._cache.clear()
            mult = np.exp(-1j * self.ksq * tau)
            self._cache[tau] = mult
        return mult

    def substeps(self, dt):
        if self.scheme == "yoshida":
            return [YOSHIDA_W1 * dt, YOSHIDA_W0 * dt, YOSHIDA_W1 * dt]
        if self.scheme == "suzuki":
            p = SUZUKI_P
            return [p * dt, p * dt, (1.0 - 4.0 * p) * dt, p * dt, p * dt]
        return [dt]

    def advance(self, u, dt, nsteps=1):
        """Take ``nsteps`` steps of size ``dt``."""
        pieces = self.substeps(dt) * nsteps
        uh = sfft.fft2(u)
        pending = 0.0
        for d in pieces:
            uh *= self._linear(pending + 0.5 * d)
            u = sfft.ifft2(uh)
            theta = d * self.k * (u.real ** 2 + u.imag ** 2)
            u *= np.cos(theta) + 1j * np.sin(theta)
            uh = sfft.fft2(u)
            pending = 0.5 * d
        uh *= self._linear(pending)
        return sfft.ifft2(uh)


def step(state, dt, k, scheme="strang"):
    """One split step of size ``dt`` for a :class:`Field2D`."""
    grid = state.grid
    kv = _k_values(k, grid)
    return Field2D(grid, SplitStepper(grid, kv, scheme).advance(state.values, dt))


def _k_values(k, grid):
    if isinstance(k, CoefficientK):
        return k(*grid.mesh)
    if np.isscalar(k):
        return np.full((grid.m, grid.m), float(k))
    return np.asarray(k, dtype=float)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def conserved_and_virial(u, k, prev_samples=(), t=None):
    """Mass, energy, variance and (with two earlier samples) the virial defect.

    Parameters
    ----------
    u : Field2D
    k : CoefficientK, float or array
    prev_samples : sequence of ``(t, V)``
        Earlier variance samples; with at least two of them and ``t`` given,
        the second difference of ``V`` at the middle sample is compared with
        ``16 E`` (meaningful for constant ``k`` only).
    """
    grid = u.grid
    h = grid.h
    v = u.values
    kv = _k_values(k, grid)
    dens = np.abs(v) ** 2
    mass = h * h * np.sum(dens)
    vh = sfft.fft2(v)
    k1, k2 = grid.k_derivative
    grad_sq = (h * h / v.size) * np.sum((k1 ** 2 + k2 ** 2) * np.abs(vh) ** 2)
    energy = 0.5 * grad_sq - 0.25 * h * h * np.sum(kv * dens ** 2)
    X1, X2 = grid.mesh
    variance = h * h * np.sum((X1 ** 2 + X2 ** 2) * dens)
    out = {"mass": float(mass), "energy": float(energy), "variance": float(variance)}
    if t is not None and len(prev_samples) >= 2:
        (ta, Va), (tb, Vb) = prev_samples[-2], prev_samples[-1]
        d2 = _second_difference(ta, Va, tb, Vb, t, variance)
        out["virial_defect"] = float(d2 - 16.0 * energy)
    return out


def _second_difference(t0, v0, t1, v1, t2, v2):
    h0 = t1 - t0
    h1 = t2 - t1
    return 2.0 * (h0 * v2 - (h0 + h1) * v1 + h1 * v0) / (h0 * h1 * (h0 + h1))


def virial_series(t, V, E):
    """Centered ``V'' - 16 E`` at the interior samples of a variance series."""
    t, V, E = (np.asarray(a, dtype=float) for a in (t, V, E))
    if len(t) < 3:
        raise ValueError("need at least three samples")
    d2 = np.array([_second_difference(t[i - 1], V[i - 1], t[i], V[i], t[i + 1], V[i + 1]) for i in range(1, len(t) - 1)])
    return d2 - 16.0 * E[1:-1]


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return f / (f + g)


def cutoff_chi(r):
    """Smooth ``chi``: 0 on ``r <= 1``, 1 on ``r >= 2``."""
    return _smoothstep(np.asarray(r, dtype=float) - 1.0)


def local_mass(u, R, chi=cutoff_chi):
    """``int chi(|x|/R) |u|^2`` (mass away from the concentration point at 0)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    grid = u.grid
    X1, X2 = grid.mesh
    w = chi(np.hypot(X1, X2) / R)
    return float(grid.h ** 2 * np.sum(w * np.abs(u.values) ** 2))


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    """Result of :func:`decompose`."""

    params: ModParams
    eps: Field2D
    ortho_residuals: np.ndarray
    eps_h1: float
    eps_l2: float
    iterations: int
    jacobian_condition: float = float("nan")
    jacobian: np.ndarray = field(default=None, repr=False)


def masked_profile(bundle, k, params, ygrid, need_lap=False, need_param_derivs=False):
    """Profile values on the nodes of ``ygrid`` inside the radial support of ``Q``."""
    Y1, Y2 = ygrid.mesh
    mask = np.hypot(Y1, Y2) < bundle.Q.grid.r_max
    d = profile_at(bundle, k, params, Y1[mask], Y2[mask], need_lap, need_param_derivs)
    d["Y1"] = Y1[mask]
    d["Y2"] = Y2[mask]
    return mask, d


def _directions(bundle, d):
    """The seven fields ``A_i`` and the kind (real or imaginary part) of each pairing."""
    qp = d["QP"]
    g1, g2 = d["grad"]
    Y1, Y2 = d["Y1"], d["Y2"]
    lam_qp = qp + Y1 * g1 + Y2 * g2
    rho = bundle.rho.interpolant()(d["r"], 0, d["loc"]) * d["phase"]
    fields = [g1, g2, Y1 * qp, Y2 * qp, lam_qp, (Y1 ** 2 + Y2 ** 2) * qp, rho]
    imag = np.array([True, True, False, False, True, False, True])
    return fields, imag


def _pairings(fields, imag, e, h2):
    out = np.empty(len(fields))
    for i, a in enumerate(fields):
        z = h2 * np.sum(np.conj(a) * e)
        out[i] = z.imag if imag[i] else z.real
    return out


def _approx_jacobian(bundle, k, P, d, fields, imag, h2):
    """Derivatives of the conditions with ``eps``-proportional terms dropped."""
    qp = d["QP"]
    g1, g2 = d["grad"]
    Y1, Y2 = d["Y1"], d["Y2"]
    lam = P.lam
    ka = k.at(P.alpha)
    gk = k.gradient(*P.alpha)
    lam_qp = qp + Y1 * g1 + Y2 * g2
    deps = [
        lam_qp / lam - d["dlam"],
        0.25j * (Y1 ** 2 + Y2 ** 2) * qp,
        g1 / lam + float(gk[0]) / (2 * ka) * qp - d["dalpha"][0],
        g2 / lam + float(gk[1]) / (2 * ka) * qp - d["dalpha"][1],
        -1j * Y1 * qp,
        -1j * Y2 * qp,
        -1j * qp,
    ]
    J = np.empty((7, 7))
    for j, de in enumerate(deps):
        J[:, j] = _pairings(fields, imag, de, h2)
    return J


def _residual(u, bundle, k, P, need_jac):
    grid = u.grid
    ygrid = grid.scaled(P.lam, P.alpha)
    ka = k.at(P.alpha)
    if not ka > 0:
        raise DecompositionError(np.full(7, np.nan), "k(alpha) <= 0")
    mask, d = masked_profile(bundle, k, P, ygrid, need_param_derivs=need_jac)
    w = (math.sqrt(ka) * P.lam * np.exp(-1j * P.gamma)) * u.values
    e_in = w[mask] - d["QP"]
    fields, imag = _directions(bundle, d)
    h2 = ygrid.h ** 2
    G = _pairings(fields, imag, e_in, h2)
    J = _approx_jacobian(bundle, k, P, d, fields, imag, h2) if need_jac else None
    return G, J, ygrid, mask, d, w


def decompose(u, guess, bundle, k, tol=1e-10, max_iter=40, jacobian=None):
    """Newton solve of the seven orthogonality conditions.

    Parameters
    ----------
    u : Field2D
    guess : ModParams
    bundle : GroundStateBundle
    k : CoefficientK
    tol : float
        Stop when every residual is below ``tol * ||Q||^2``.
    jacobian : ndarray, optional
        A Jacobian to reuse (chord iteration); rebuilt when convergence stalls.
    """
    P = guess
    scale = bundle.moments.mass
    J = jacobian
    prev = math.inf
    it = 0
    for it in range(max_iter + 1):
        need_jac = J is None
        G, Jnew, ygrid, mask, d, w = _residual(u, bundle, k, P, need_jac)
        if Jnew is not None:
            J = Jnew
        err = float(np.max(np.abs(G)))
        if not np.isfinite(err):
            raise DecompositionError(G)
        if err <= tol * scale:
            break
        if it == max_iter:
            raise DecompositionError(G)
        if err > 0.5 * prev and not need_jac:
            J = None  # stalled chord: refresh the Jacobian next round
            G, J, ygrid, mask, d, w = _residual(u, bundle, k, P, True)
        prev = err
        try:
            dp = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(G, "singular decomposition Jacobian") from exc
        v = P.as_vector() + dp
        if not v[0] > 0:
            raise DecompositionError(G, "Newton produced lambda <= 0")
        P = ModParams.from_vector(v)
    cond = float(np.linalg.cond(J))
    if cond > 1e8:
        warnings.warn(f"near-degenerate decomposition Jacobian (condition {cond:.3g})", RuntimeWarning)
    eps = w.copy()
    eps[mask] -= d["QP"]
    return Decomposition(
        P,
        Field2D(ygrid, eps),
        G,
        h1_norm_array(eps, ygrid),
        float(math.sqrt(ygrid.h ** 2 * np.sum(np.abs(eps) ** 2))),
        it,
        cond,
        J,
    )


def profile_on_grid(bundle, k, params, ygrid, need_lap=True):
    """Full-grid profile fields (zero outside the support of ``Q``) as a ProfileQP."""
    from .profile import ProfileQP

    mask, d = masked_profile(bundle, k, params, ygrid, need_lap)

    def scatter(vals):
        out = np.zeros((ygrid.m, ygrid.m), dtype=complex)
        out[mask] = vals
        return Field2D(ygrid, out)

    phi = np.zeros((ygrid.m, ygrid.m))
    phi[mask] = d["phi"]
    return ProfileQP(
        scatter(d["P"]),
        scatter(d["QP"]),
        scatter(d["T2"]),
        d["c0"],
        params,
        (scatter(d["grad"][0]), scatter(d["grad"][1])),
        scatter(d["lap"]) if need_lap else None,
        phi,
    )


# ---------------------------------------------------------------------------
# the run driver
# ---------------------------------------------------------------------------

def bootstrap_flags(t, P, eps_h1, C0, delta):
    """The four bootstrap hypotheses at one sample."""
    lam = P.lam
    return {
        "boot_eps": eps_h1 <= lam,
        "boot_center": (math.hypot(*P.beta) + math.hypot(*P.alpha)) / lam <= delta,
        "boot_lambda": abs(lam + t / C0) <= delta * lam,
        "boot_b": abs(P.b / lam - 1.0 / C0) <= delta,
    }


def run(config, bundle=None, u0=None, P0=None, progress=None):
    """Evolve from ``t0`` toward ``t_end``, decomposing every ``decompose_stride`` steps.

    Backward runs evolve ``v(t) = conj(u(-t))`` forward, which solves the same
    equation because ``k`` is real.

    Returns
    -------
    trajectory : Trajectory
    u : Field2D
        The final state.
    """
    from .profile import ground_state_bundle

    bundle = bundle or ground_state_bundle()
    grid = config.grid
    k = config.k
    if u0 is None:
        u0, P0 = make_initial_data(config.C0, config.t0, bundle, k, grid, config.collapse_floor)
    elif P0 is None:
        raise ValueError("an explicit u0 needs its parameter guess P0")
    lam0 = P0.lam
    dt0 = config.dt if config.dt is not None else 1e-2 * lam0 ** 2
    sign = 1.0 if config.direction == "forward" else -1.0
    stepper = SplitStepper(grid, k(*grid.mesh), config.scheme)
    lyap = None
    if config.lyapunov:
        from . import lyapunov as lyap
    if config.fields_dir:
        os.makedirs(config.fields_dir, exist_ok=True)

    traj = Trajectory()
    w = u0.values if sign > 0 else np.conj(u0.values)
    t = config.t0
    s = 0.0
    P = P0
    history = []
    J = None
    nstep = 0
    prev_lam = None
    prev_t = None

    def record(t, w, P, J):
        u = Field2D(grid, w if sign > 0 else np.conj(w))
        dec = decompose(u, P, bundle, k, config.newton_tol)
        cons = conserved_and_virial(u, k)
        diag = {
            "eps_l2": dec.eps_l2,
            "eps_h1": dec.eps_h1,
            "mass": cons["mass"],
            "energy": cons["energy"],
            "variance": cons["variance"],
            "ortho_max": float(np.max(np.abs(dec.ortho_residuals))),
            "newton_iterations": dec.iterations,
        }
        flags = bootstrap_flags(t, dec.params, dec.eps_h1, config.C0, config.delta)
        diag.update({key: float(v) for key, v in flags.items()})
        diag["boot_all"] = float(all(flags.values()))
        if lyap is not None:
            sample = lyap.evaluate_I1(dec, bundle, k, config.lyapunov_A)
            diag.update(I=sample.I_value, I1=sample.I1_value, correction=sample.correction_term)
        return dec, u, diag

    status = "reached t_end"
    while True:
        try:
            dec, u, diag = record(t, w, P, J)
        except DecompositionError as exc:
            status = f"decomposition failed: {exc}"
            break
        J = dec.jacobian
        if prev_lam is not None:
            s += 0.5 * (1.0 / prev_lam ** 2 + 1.0 / dec.params.lam ** 2) * abs(t - prev_t)
        traj.append(t, s * sign, dec.params, **diag)
        history.append(dec.params)
        prev_lam, prev_t = dec.params.lam, t
        if progress:
            progress(t, dec)
        if config.fields_dir and config.snapshot_every and (len(traj) - 1) % config.snapshot_every == 0:
            write_field_dump(os.path.join(config.fields_dir, f"u_{len(traj) - 1:05d}.bin"), u)
        if dec.params.lam < config.collapse_floor * grid.h:
            status = "collapse floor reached"
            break
        if 12.0 * dec.params.lam > grid.L:
            status = "profile no longer fits the box"
            break
        if sign * (config.t_end - t) <= 1e-14 * abs(config.t_end):
            break
        if nstep >= config.max_steps:
            status = "max_steps reached"
            break
        # guess for the next decomposition: linear extrapolation in parameter space
        if len(history) >= 2:
            v = 2 * history[-1].as_vector() - history[-2].as_vector()
            P = ModParams.from_vector(v) if v[0] > 0 else history[-1]
        else:
            P = dec.params
        dt = dt0 if config.stepping == "fixed" else dt0 * (dec.params.lam / lam0) ** 2
        remaining = sign * (config.t_end - t)
        n = config.decompose_stride
        if n * dt >= remaining:
            n = max(1, int(math.ceil(remaining / dt - 1e-9)))
            dt = remaining / n
        w = stepper.advance(w, dt, n)
        t = t + sign * n * dt
        nstep += n
    traj.status = status
    final = Field2D(grid, w if sign > 0 else np.conj(w))
    return traj, final


# ---------------------------------------------------------------------------
# modulation residuals
# ---------------------------------------------------------------------------

@dataclass
class ModulationReport:
    residuals: dict
    envelope: np.ndarray
    fitted_C: dict
    C: float
    passed: bool
    t: np.ndarray


def _dt_derivative(t, x):
    return np.gradient(x, t, edge_order=2)


def modulation_residuals(traj, sc, C=10.0, omega=None, trim=2):
    """Deviations from the formal laws along a trajectory, with the envelope test.

    Derivatives are taken in ``t`` by second-order differences on the
    (possibly non-uniform) sample times and converted with
    ``d/ds = lam^2 d/dt``.  The envelope is
    ``eps_h1^2 + |P|^2 eps_h1 + omega(|P|) |P|^2`` with ``omega(p) = p``
    unless given.  ``trim`` samples are dropped at each end.
    """
    if len(traj) < 2 * trim + 3:
        raise ValueError("not enough samples for centered differences")
    t = traj.column("t")
    lam = traj.column("lambda")
    b = traj.column("b")
    a = np.stack([traj.column("alpha1"), traj.column("alpha2")], axis=1)
    be = np.stack([traj.column("beta1"), traj.column("beta2")], axis=1)
    g = traj.column("gamma")
    eps = traj.column("eps_h1")
    eps = np.where(np.isfinite(eps), eps, 0.0)

    def ds(x):
        return lam ** 2 * _dt_derivative(t, x)

    d0 = np.einsum("ni,ij,nj->n", a, sc.d0_matrix, a)
    d1 = sc.d1_scale * d0
    c0 = a @ sc.c0_matrix.T
    a_s = np.stack([ds(a[:, 0]), ds(a[:, 1])], axis=1)
    b_s = np.stack([ds(be[:, 0]), ds(be[:, 1])], axis=1)
    res = {
        "lambda": np.abs(ds(lam) / lam + b),
        "b": np.abs(ds(b) + b ** 2 - d0),
        "alpha": np.linalg.norm(a_s / lam[:, None] - 2 * be, axis=1),
        "beta": np.linalg.norm(b_s + b[:, None] * be - c0 * lam[:, None], axis=1),
        "gamma": np.abs(ds(g) - 1.0 - np.sum(be ** 2, axis=1) + d1),
    }
    Psize = lam + np.abs(b) + np.linalg.norm(a, axis=1) + np.linalg.norm(be, axis=1)
    om = Psize if omega is None else omega(Psize)
    env = eps ** 2 + Psize ** 2 * eps + om * Psize ** 2
    sl = slice(trim, len(t) - trim)
    fitted = {key: float(np.max(r[sl] / env[sl])) for key, r in res.items()}
    passed = all(v <= C for v in fitted.values())
    return ModulationReport({key: r[sl] for key, r in res.items()}, env[sl], fitted, C, passed, t[sl])


def blowup_rate_fit(traj):
    """Least-squares slope of ``lam`` against ``t`` and the implied ``C0``."""
    t = traj.column("t")
    lam = traj.column("lambda")
    slope, intercept = np.polyfit(t, lam, 1)
    return {"slope": float(slope), "intercept": float(intercept), "C0_fit": float(-1.0 / slope)}


def measured_eps_exponent(traj):
    """``min log(eps_h1) / log(lam)`` over samples with ``eps_h1 > 0``."""
    eps = traj.column("eps_h1")
    lam = traj.column("lambda")
    ok = (eps > 0) & (lam < 1)
    if not np.any(ok):
        return math.inf
    return float(np.min(np.log(eps[ok]) / np.log(lam[ok])))


def structure_constants_for(bundle, k, C0, E0_tilde=float("nan")):
    """StructureConstants with a prescribed ``C0``."""
    from .modulation import StructureConstants

    d0, d1s, c0 = structure_matrices(bundle.moments, k)
    return StructureConstants(C0, E0_tilde, d0, d1s, c0)
