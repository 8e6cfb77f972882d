"""Mass, energy and residual of the approximate profile along a parameter sweep.

Usage: python demos/profile_scaling.py
"""
from blowuplab.suites import SWEEP, loglog_slope, profile_sweep


def main():
    for family in ("quadratic_gaussian", "pure_quadratic_capped", "rough_c2"):
        rows = profile_sweep(family)
        print(family)
        print(f"  {'|P|':>8} {'mass defect':>12} {'energy res':>12} {'sup|Psi~|':>12}")
        for r in rows:
            print(f"  {r['size']:8.4f} {r['mass_defect']:12.3e} {r['energy_residual']:12.3e} {r['psi_sup']:12.3e}")
        size = [r["size"] for r in rows]
        for key in ("mass_defect", "energy_residual", "psi_sup"):
            print(f"  log-log slope of {key}: {loglog_slope(size, [r[key] for r in rows]):.3f}")
    print(f"sweep scales: {SWEEP}")


if __name__ == "__main__":
    main()
