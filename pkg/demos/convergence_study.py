"""Manufactured-solution convergence of the primal and mixed formulations."""
import sys

from micromorph2d import experiments as ex

lc = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
mu_c = float(sys.argv[2]) if len(sys.argv) > 2 else 0.0
tiers = (4, 8, 12)

for form in ("PrimalSplit", "MixedSplit"):
    rows, slopes = ex.run_e3(tiers, form, lc, mu_c, check=form == "MixedSplit")
    print(form)
    keys = [k for k in rows[0] if k.startswith("error_")]
    print("  dofs   " + "  ".join(f"{k[6:]:>10}" for k in keys))
    for r in rows:
        print(f"  {r['dofs']:<6} " + "  ".join(f"{r[k]:10.3e}" for k in keys))
    print("  slopes " + "  ".join(f"{slopes.get('slope_' + k[6:], float('nan')):10.2f}" for k in keys))
