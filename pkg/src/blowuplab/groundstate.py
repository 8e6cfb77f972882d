"""The 2D cubic ground state ``-Q'' - Q'/r + Q = Q^3`` and its moments.

Two independent routes are provided:

* :func:`solve_ground_state` -- bisection shooting for a starting guess, then
  Newton on a fourth-order finite-difference discretisation of the radial
  equation on the nodes of a :class:`~blowuplab.numerics.RadialGrid`;
* :func:`shooting_oracle` -- plain RK4 shooting with the moments carried as
  extra ODE components, Richardson-extrapolated over two step sizes and closed
  with an analytic ``K_0`` tail.  It shares no code with the first route and
  is what the stored golden constants come from.
"""
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import k0, k1, kve

from .numerics import RadialGrid, RadialProfile, integrate_radial

GOLDEN_KEYS = ("Q0", "mass", "variance", "quartic", "quartic_r2", "rho_y2Q", "rho_Q")


class ShootingBracketError(RuntimeError):
    def __init__(self, lo, hi):
        super().__init__(f"shooting bracket [{lo}, {hi}] does not enclose a decaying solution")
        self.lo, self.hi = lo, hi


@dataclass(frozen=True)
class Moments:
    """Scalar integrals of ``Q`` (and ``rho``) used by the profile formulas.

    Attributes
    ----------
    mass, variance, quartic : float
        ``int Q^2``, ``int |y|^2 Q^2`` and ``int Q^4``.
    quartic_tensor : ndarray
        ``int y_i y_j Q^4`` (diagonal by radial symmetry).
    rho_pairings : tuple
        ``(<|y|^2 Q, rho>, <rho, Q>)``.
    """

    mass: float
    variance: float
    quartic: float
    quartic_tensor: np.ndarray
    rho_pairings: tuple
    gradient: float = float("nan")

    @property
    def kappa(self):
        """``int Q^4 / (2 int Q^2)``; equals 1 for the exact ground state."""
        return self.quartic / (2.0 * self.mass)

    @property
    def yQ_norm(self):
        return math.sqrt(self.variance)


# ---------------------------------------------------------------------------
# finite-difference machinery shared with the radial linear solves
# ---------------------------------------------------------------------------

_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
BANDS = 3  # half bandwidth of the sixth-order stencils


def radial_operator_bands(grid, potential, drift=1.0, tail_ratio=None):
    """Banded matrix of ``-u'' - (drift / r) u' + (1 + potential) u``.

    ``drift = 1`` is the planar radial Laplacian; ``drift = 2m + 1`` is the
    operator seen by the amplitude ``g`` of ``g(r) P_m(y)`` with ``P_m`` a
    harmonic polynomial of degree ``m``.  Sixth-order central differences act
    on the unknowns ``u(r_j)``, ``j = 0..n``, with even ghosts at ``r < 0`` (at
    ``r = 0`` the operator reads ``-(1 + drift) u''(0)``).  Beyond ``r_max`` the
    ghosts are ``tail_ratio[i] * u_n`` (decaying asymptotics), or zero.

    Returns ``ab`` in the layout of :func:`scipy.linalg.solve_banded` with
    ``(l, u) = (BANDS, BANDS)``.
    """
    n = grid.n
    h = grid.h
    r = grid.nodes_with_zero
    N = n + 1
    B = BANDS
    inv_r = np.zeros(N)
    inv_r[1:] = 1.0 / r[1:]
    full = -_D2[None, :] / h ** 2 - drift * (inv_r[:, None] * _D1[None, :]) / h
    full[0] = -(1.0 + drift) * _D2 / h ** 2
    full[:, B] += 1.0 + np.asarray(potential, dtype=float)
    ab = np.zeros((2 * B + 1, N))
    rows = np.arange(N)
    for o in range(-B, B + 1):
        cols = rows + o
        vals = full[:, o + B]
        inside = (cols >= 0) & (cols <= n)
        ab[B - o, cols[inside]] += vals[inside]
        # even reflection at the origin and decaying ghosts past r_max
        for rr in rows[cols < 0]:
            cc = -(rr + o)
            ab[B + rr - cc, cc] += vals[rr]
        for rr in rows[cols > n]:
            ratio = 0.0 if tail_ratio is None else tail_ratio[rr + o - n - 1]
            ab[B + rr - n, n] += ratio * vals[rr]
    return ab


def banded_matvec(ab, x):
    """Product of a matrix in ``solve_banded`` storage with a vector."""
    B = (ab.shape[0] - 1) // 2
    y = ab[B] * x
    for k in range(1, B + 1):
        y[:-k] += ab[B - k, k:] * x[k:]
        y[k:] += ab[B + k, :-k] * x[:-k]
    return y


def k0_tail_ratio(grid, order=0):
    """Ratios ``g(r_{n+i}) / g(r_n)`` for ``g = K_m(r) / r^m`` at the outer ghosts."""
    r = grid.r_max
    h = grid.h
    base = kve(order, r)
    return np.array(
        [kve(order, r + i * h) * math.exp(-i * h) / base * (r / (r + i * h)) ** order
         for i in range(1, BANDS + 1)]
    )


# ---------------------------------------------------------------------------
# shooting (initial guess)
# ---------------------------------------------------------------------------

def _rk4_shoot(a, r_end, steps):
    """Integrate the radial ODE from ``r = 0``; return (status, r, Q, Q')."""
    h = r_end / steps
    c2 = (a - a ** 3) / 4.0

    def rhs(r, q, p):
        if r == 0.0:
            return p, 2.0 * c2
        return p, -p / r + q - q * q * q

    r, q, p = 0.0, a, 0.0
    rs = [0.0]
    qs = [q]
    ps = [p]
    for i in range(steps):
        k1q, k1p = rhs(r, q, p)
        k2q, k2p = rhs(r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p)
        k3q, k3p = rhs(r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p)
        k4q, k4p = rhs(r + h, q + h * k3q, p + h * k3p)
        q += h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        p += h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0
        r = (i + 1) * h
        rs.append(r)
        qs.append(q)
        ps.append(p)
        if q < 0.0:
            return 1, rs, qs, ps  # overshoot: amplitude too large
        if p > 0.0:
            return -1, rs, qs, ps  # undershoot: amplitude too small
    return 0, rs, qs, ps


def shoot_amplitude(lo=2.0, hi=2.4, r_end=12.0, steps=4096, xtol=1e-14):
    """Bisection on ``Q(0)`` between an undershooting and an overshooting value."""
    s_lo = _rk4_shoot(lo, r_end, steps)[0]
    s_hi = _rk4_shoot(hi, r_end, steps)[0]
    if s_lo != -1 or s_hi != 1:
        raise ShootingBracketError(lo, hi)
    while hi - lo > xtol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        status = _rk4_shoot(mid, r_end, steps)[0]
        if status == 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Newton polish
# ---------------------------------------------------------------------------

def ground_state_residual(grid, full):
    """Discrete residual of ``-Q'' - Q'/r + Q - Q^3`` at every node (incl. 0)."""
    ratio = k0_tail_ratio(grid)
    ab = radial_operator_bands(grid, np.zeros(grid.n + 1), 1.0, ratio)
    return banded_matvec(ab, full) - full ** 3


def solve_ground_state(grid=None, tol=1e-9, max_iter=30):
    """Positive radial solution of ``-Q'' - Q'/r + Q = Q^3``.

    Parameters
    ----------
    grid : RadialGrid, optional
        Defaults to ``RadialGrid()`` (``r_max = 25``, ``n = 4096``).
    tol : float
        Target sup-norm of the discrete residual, in ``(1e-14, 1e-4)``.

    Returns
    -------
    RadialProfile
    """
    grid = grid or RadialGrid()
    if not 1e-14 < tol < 1e-4:
        raise ValueError("tol must lie in (1e-14, 1e-4)")
    a = shoot_amplitude()
    # initial guess: shooting solution where trustworthy, K0 tail after
    r_match = 8.0
    status, rs, qs, _ = _rk4_shoot(a, r_match, int(r_match / 0.01))
    rs, qs = np.asarray(rs), np.asarray(qs)
    r = grid.nodes_with_zero
    guess = np.interp(r, rs, qs)
    outer = r > rs[-1]
    guess[outer] = qs[-1] * k0(r[outer]) / k0(rs[-1])

    ratio = k0_tail_ratio(grid)
    lin = radial_operator_bands(grid, np.zeros(grid.n + 1), 1.0, ratio)
    full = guess
    for _ in range(max_iter):
        res = banded_matvec(lin, full) - full ** 3
        jac = lin.copy()
        jac[BANDS] -= 3.0 * full ** 2
        full = full - solve_banded((BANDS, BANDS), jac, res)
        if np.max(np.abs(res)) < 1e-3 * tol:
            break
    res = banded_matvec(lin, full) - full ** 3
    if np.max(np.abs(res)) > tol:
        raise RuntimeError(f"Newton polish stalled at residual {np.max(np.abs(res)):.3e}")
    full = _clamp_tail(r, full)
    return RadialProfile.from_full(grid, full)


def _clamp_tail(r, full, floor=1e-12):
    """Replace values below ``floor`` by a ``K_0`` fit through the last good node."""
    below = np.flatnonzero(full < floor)
    if below.size == 0:
        return full
    j = below[0] - 1
    if j < 1:
        raise RuntimeError("ground state fell below the tail floor near the origin")
    out = full.copy()
    out[j + 1:] = full[j] * k0(r[j + 1:]) / k0(r[j])
    return out


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def compute_moments(Q, rho):
    """All scalar moments consumed downstream, by radial quadrature."""
    if Q.grid != rho.grid:
        raise ValueError("Q and rho must share a radial grid")
    mass = integrate_radial(_sq(Q))
    if not mass > 0:
        raise ValueError("non-positive mass: corrupted ground state")
    variance = integrate_radial(_sq(Q), 2)
    q4 = RadialProfile(Q.grid, Q.values ** 4, Q.value_at_zero ** 4)
    quartic = integrate_radial(q4)
    diag = 0.5 * integrate_radial(q4, 2)
    tensor = np.array([[diag, 0.0], [0.0, diag]])
    rhoQ = RadialProfile(Q.grid, rho.values * Q.values, rho.value_at_zero * Q.value_at_zero)
    pair_y2 = integrate_radial(rhoQ, 2)
    pair_q = integrate_radial(rhoQ)
    interp = Q.interpolant()
    dq = interp(Q.grid.nodes_with_zero, 1)
    grad = integrate_radial(RadialProfile.from_full(Q.grid, dq ** 2))
    return Moments(mass, variance, quartic, tensor, (pair_y2, pair_q), grad)


def _sq(f):
    return RadialProfile(f.grid, f.values ** 2, f.value_at_zero ** 2)


# ---------------------------------------------------------------------------
# independent oracle
# ---------------------------------------------------------------------------

def _oracle_pass(a, r_end, steps):
    """RK4 for Q together with the radial moments and the two rho shots."""
    h = r_end / steps
    c2 = (a - a ** 3) / 4.0

    # y = [Q, Q', m0, m2, m4, m4r2, P, P', H, H', A1, A2, A3, A4, A5, A6]
    # P: particular solution of L+ P = r^2 Q with P(0)=0
    # H: homogeneous solution with H(0)=1
    # A1..A6: int r^2 Q P, int Q P, int r^2 Q H, int Q H (times 2 pi r) and spare
    def f(r, y):
        q, p, _, _, _, _, rp, rpp, hh, hp = y[:10]
        q2 = q * q
        if r == 0.0:
            qpp = 2.0 * c2
            # P'' (0): from 2 P''(0) = (1 - 3 Q^2) P(0) - 0 -> with P(0)=0 gives 0
            rppp = 0.5 * ((1.0 - 3.0 * q2) * rp)
            hpp = 0.5 * ((1.0 - 3.0 * q2) * hh)
        else:
            qpp = -p / r + q - q2 * q
            rppp = -rpp / r + (1.0 - 3.0 * q2) * rp - r * r * q
            hpp = -hp / r + (1.0 - 3.0 * q2) * hh
        w = 2.0 * math.pi * r
        return (
            p, qpp,
            w * q2, w * r * r * q2, w * q2 * q2, w * r * r * q2 * q2,
            rpp, rppp, hp, hpp,
            w * r * r * q * rp, w * q * rp, w * r * r * q * hh, w * q * hh,
        )

    y = [a, 0.0, 0, 0, 0, 0, 0.0, 0.0, 1.0, 0.0, 0, 0, 0, 0]
    n = len(y)
    r = 0.0
    for i in range(steps):
        k1_ = f(r, y)
        y2 = [y[j] + 0.5 * h * k1_[j] for j in range(n)]
        k2_ = f(r + 0.5 * h, y2)
        y3 = [y[j] + 0.5 * h * k2_[j] for j in range(n)]
        k3_ = f(r + 0.5 * h, y3)
        y4 = [y[j] + h * k3_[j] for j in range(n)]
        k4_ = f(r + h, y4)
        y = [y[j] + h * (k1_[j] + 2 * k2_[j] + 2 * k3_[j] + k4_[j]) / 6.0 for j in range(n)]
        r = (i + 1) * h
    return y


def _k0_tail_moments(c, R):
    """Tail integrals of ``(c K_0(r))^2`` beyond ``R`` by adaptive quadrature."""
    from scipy.integrate import quad

    def integ(p, power):
        return quad(lambda r: 2 * math.pi * r ** (1 + p) * (c * k0(r)) ** power,
                    R, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]

    return integ(0, 2), integ(2, 2), integ(0, 4), integ(2, 4)


def shooting_oracle(steps=2 ** 16, r_end=14.0, r_shoot=20.0):
    """High-accuracy reference values by RK4 shooting and Richardson extrapolation.

    Returns a dict with the golden keys: ``Q0``, ``mass``, ``variance``,
    ``quartic``, ``quartic_r2`` (``int |y|^2 Q^4``), ``rho_y2Q`` and ``rho_Q``.
    """
    results = []
    for nsteps in (steps // 2, steps):
        # classify far beyond r_end so the bisected amplitude is not biased by
        # the growing mode inside the integration window
        h = r_end / nsteps
        a = shoot_amplitude(r_end=r_shoot, steps=int(round(r_shoot / h)), xtol=1e-16)
        y = _oracle_pass(a, r_end, nsteps)
        q, qp = y[0], y[1]
        # K0 tail through the endpoint (cubic term is below 1e-15 there)
        c = q / k0(r_end)
        tails = _k0_tail_moments(c, r_end)
        # rho: remove the growing homogeneous mode at r_end by requiring a
        # vanishing Wronskian with the decaying solution K_0
        kk, dk = k0(r_end), -k1(r_end)
        t = -(y[6] * dk - y[7] * kk) / (y[8] * dk - y[9] * kk)
        vals = {
            "Q0": a,
            "mass": y[2] + tails[0],
            "variance": y[3] + tails[1],
            "quartic": y[4] + tails[2],
            "quartic_r2": y[5] + tails[3],
            "rho_y2Q": y[10] + t * y[12],
            "rho_Q": y[11] + t * y[13],
        }
        del qp
        results.append(vals)
    coarse, fine = results
    return {k: (16.0 * fine[k] - coarse[k]) / 15.0 for k in GOLDEN_KEYS}


# ---------------------------------------------------------------------------
# golden constants file
# ---------------------------------------------------------------------------

def golden_path():
    return resources.files("blowuplab") / "data" / "goldens.txt"


def read_goldens(path=None):
    """Parse a ``key=value`` golden file; raise on missing or malformed keys."""
    path = path or golden_path()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise FileNotFoundError(
            f"golden constants missing at {path}; run 'blowuplab regen-goldens'"
        ) from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        try:
            out[key.strip()] = float(value)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key.strip()!r}") from exc
    missing = [k for k in GOLDEN_KEYS if k not in out]
    if missing:
        raise ValueError(f"golden file {path} lacks keys {missing}")
    return out


def write_goldens(values, path=None):
    path = path or golden_path()
    lines = ["# reference values from RK4 shooting with Richardson extrapolation"]
    lines += [f"{k}={values[k]:.17g}" for k in GOLDEN_KEYS]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
