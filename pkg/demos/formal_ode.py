"""Formal modulation laws: the exact collapse law and the (alpha, beta) lemma.

For alpha = beta = 0 the formal system collapses exactly like lam = -t/C0.
The forced (alpha_1, beta_1) system stays O(delta^2 lam) when k1 > 0 and
picks up a ln(t/t0) factor when k1 = 0.

Usage: python demos/formal_ode.py [out_dir]
"""
import math
import os
import sys

import numpy as np

from blowuplab.modulation import (
    alpha_beta_linear_system,
    integrate_formal,
    verify_ode_lemma,
)
from blowuplab.suites import formal_constants
from blowuplab.svg import line_plot


def main(out_dir="demo_output"):
    os.makedirs(out_dir, exist_ok=True)
    sc, P0 = formal_constants(C0=0.5, t0=-0.01)
    traj = integrate_formal(P0, sc, -0.01, -0.1, 1e-5)
    t = traj.column("t")
    lam = traj.column("lambda")
    print(f"max |lam + t/C0| / |t/C0| = {np.max(np.abs(lam + t / sc.C0) / (-t / sc.C0)):.2e}")
    print(f"max |b/lam - 1/C0|        = {np.max(np.abs(traj.column('b_over_lambda_minus_inv_C0'))):.2e}")
    for k1 in (1.0, 0.0):
        rep = alpha_beta_linear_system(sc, k1)
        print(f"k1 = {k1}: eigenvalues {np.round(rep.eigenvalues, 6)}")
        for t0 in (-0.1, -0.01, -0.001):
            ratio = verify_ode_lemma(0.1, t0, -1.0, sc, k1).ratio_sup
            print(f"   t0 = {t0:<7} sup ratio = {ratio:.4f}   ln(1/|t0|) = {math.log(-1 / t0):.3f}")
    lemma = verify_ode_lemma(0.1, -0.001, -1.0, sc, 1.0)
    flat = verify_ode_lemma(0.1, -0.001, -1.0, sc, 0.0)
    path = line_plot(
        os.path.join(out_dir, "formal_ode.svg"),
        np.log10(-lemma.t),
        [("(|alpha1| + |beta1|) / (delta^2 lam)", [("k1 = 1", lemma.ratio), ("k1 = 0", flat.ratio)])],
        xlabel="log10(-t)",
    )
    print(f"wrote {path}")


if __name__ == "__main__":
    main(*sys.argv[1:])
