"""Stored energy of the sine-loaded square over a range of length scales,
next to the energy of linear elasticity with the macroscopic law."""
import numpy as np

from micromorph2d import experiments as ex

res = ex.run_e4(tuple(10.0 ** np.arange(3, -4, -1)), n=8)
print(f"macro elasticity: {res['macro_elasticity_energy']:.4f}")
for r in res["rows"]:
    print(f"Lc = {r['lc']:8.0e}   energy = {r['energy']:.4f}")
