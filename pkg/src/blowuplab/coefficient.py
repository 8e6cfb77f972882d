"""The inhomogeneity ``k(x)`` of the focusing coefficient.

Every family satisfies ``k(0) = 1``, ``0 <= k <= 1``, ``grad k(0) = 0`` and
``Hess k(0) = diag(-k1, -k2)``; they differ in smoothness away from the
quadratic regime.
"""
from dataclasses import dataclass

import numpy as np

FAMILIES = ("quadratic_gaussian", "pure_quadratic_capped", "rough_c2", "constant")


def _bridge(t):
    # p(0)=0, p'(0)=1, p''(0)=0, p'(1)=p''(1)=0, p(1)=1/2; p' = (1-t)^2 (1+2t) >= 0
    return t - t ** 3 + 0.5 * t ** 4


def _bridge_d1(t):
    return 1.0 - 3.0 * t ** 2 + 2.0 * t ** 3


@dataclass(frozen=True)
class CoefficientK:
    """Evaluator for ``k(x)``.

    Parameters
    ----------
    family : str
        ``quadratic_gaussian``: ``exp(-q)`` with ``q = (k1 x1^2 + k2 x2^2)/2``.
        ``pure_quadratic_capped``: ``1 - s(q)`` where ``s(q) = q`` up to
        ``cap_start`` and then bends over in a C^2 way to ``1 - floor``.
        ``rough_c2``: ``exp(-q - c |x|^2 / log(e + 1/|x|))``, C^2 at the origin
        with a second derivative whose modulus of continuity is only
        logarithmic.
        ``constant``: ``k = 1`` (the homogeneous equation, ``k1 = k2 = 0``).
    k1, k2 : float
        Minus the Hessian eigenvalues at 0.
    rough_modulus : float
        The constant ``c`` of ``rough_c2``.
    """

    family: str = "quadratic_gaussian"
    k1: float = 1.0
    k2: float = 1.0
    rough_modulus: float = 1.0
    floor: float = 0.1
    cap_start: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown k family {self.family!r}; choose from {FAMILIES}")
        if self.family == "constant":
            if self.k1 or self.k2:
                raise ValueError("the constant family has k1 = k2 = 0")
        elif not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("k1 and k2 must be positive")
        if self.family == "pure_quadratic_capped":
            if not 0 < self.floor < 1 or not 0 < self.cap_start < 1 - self.floor:
                raise ValueError("need 0 < cap_start < 1 - floor < 1")

    @property
    def hessian(self):
        return np.diag([-self.k1, -self.k2])

    def _q(self, x1, x2):
        return 0.5 * (self.k1 * x1 ** 2 + self.k2 * x2 ** 2)

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.family == "constant":
            return np.ones(np.broadcast(x1, x2).shape)
        q = self._q(x1, x2)
        if self.family == "quadratic_gaussian":
            return np.exp(-q)
        if self.family == "pure_quadratic_capped":
            smax = 1.0 - self.floor
            q0 = self.cap_start
            width = 2.0 * (smax - q0)
            t = np.clip((q - q0) / width, 0.0, 1.0)
            s = np.where(q <= q0, q, q0 + width * _bridge(t))
            return 1.0 - s
        r2 = x1 ** 2 + x2 ** 2
        r = np.sqrt(r2)
        with np.errstate(divide="ignore"):
            w = np.where(r > 0, self.rough_modulus / np.log(np.e + 1.0 / np.where(r > 0, r, 1.0)), 0.0)
        return np.exp(-q - r2 * w)

    def at(self, alpha):
        return float(self(alpha[0], alpha[1]))

    def gradient(self, x1, x2, step=1e-6):
        """Gradient; closed form for the smooth families, central differences otherwise."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.family == "constant":
            z = np.zeros(np.broadcast(x1, x2).shape)
            return z, z.copy()
        if self.family == "quadratic_gaussian":
            k = self(x1, x2)
            return -self.k1 * x1 * k, -self.k2 * x2 * k
        if self.family == "pure_quadratic_capped":
            smax = 1.0 - self.floor
            q0 = self.cap_start
            width = 2.0 * (smax - q0)
            q = self._q(x1, x2)
            t = np.clip((q - q0) / width, 0.0, 1.0)
            ds = np.where(q <= q0, 1.0, _bridge_d1(t))
            return -ds * self.k1 * x1, -ds * self.k2 * x2
        g1 = (self(x1 + step, x2) - self(x1 - step, x2)) / (2 * step)
        g2 = (self(x1, x2 + step) - self(x1, x2 - step)) / (2 * step)
        return g1, g2

    def rescaled(self, grid, lam, alpha):
        """``k(lam y + alpha) / k(alpha)`` on the nodes of a y-grid."""
        ka = self.at(alpha)
        if not ka > 0:
            raise ValueError("k(alpha) <= 0: outside the admissible region")
        Y1, Y2 = grid.mesh
        return self(lam * Y1 + alpha[0], lam * Y2 + alpha[1]) / ka


def diagonalize_hessian(hessian):
    """Rotate a negative definite Hessian to ``diag(-k1, -k2)``.

    Returns ``(k1, k2, R)`` with ``R^T H R = diag(-k1, -k2)``; use ``x = R x'``
    to express a coefficient in the rotated frame.
    """
    H = np.asarray(hessian, dtype=float)
    if H.shape != (2, 2) or not np.allclose(H, H.T):
        raise ValueError("Hessian must be a symmetric 2x2 matrix")
    vals, vecs = np.linalg.eigh(H)
    if np.any(vals >= 0):
        raise ValueError("Hessian must be negative definite")
    return float(-vals[0]), float(-vals[1]), vecs
