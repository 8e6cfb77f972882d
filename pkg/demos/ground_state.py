"""Solve for the ground state, print its moments and plot Q and rho.

Usage: python demos/ground_state.py [out_dir]
"""
import os
import sys

import numpy as np

from blowuplab.groundstate import ground_state_residual, read_goldens
from blowuplab.profile import ground_state_bundle
from blowuplab.suites import golden_comparison
from blowuplab.svg import line_plot


def main(out_dir="demo_output"):
    os.makedirs(out_dir, exist_ok=True)
    bundle = ground_state_bundle()
    Q, rho, mom = bundle.Q, bundle.rho, bundle.moments
    res = np.max(np.abs(ground_state_residual(Q.grid, Q.full)))
    print(f"Q(0)            = {Q.value_at_zero:.12f}")
    print(f"||Q||^2         = {mom.mass:.12f}")
    print(f"||yQ||^2        = {mom.variance:.12f}")
    print(f"int Q^4         = {mom.quartic:.12f}  (twice the mass: {mom.quartic / mom.mass:.12f})")
    print(f"sup residual    = {res:.2e}")
    gold = read_goldens()
    for key, gap in golden_comparison(bundle).items():
        print(f"  {key:<11} golden {gold[key]:.12f}  relative gap {gap:.1e}")
    r = Q.grid.nodes_with_zero
    keep = r <= 8.0
    path = line_plot(
        os.path.join(out_dir, "ground_state.svg"),
        r[keep],
        [("Q(r)", [("Q", Q.full[keep])]), ("rho(r), L+ rho = r^2 Q", [("rho", rho.full[keep])])],
        xlabel="r",
    )
    print(f"wrote {path}")


if __name__ == "__main__":
    main(*sys.argv[1:])
