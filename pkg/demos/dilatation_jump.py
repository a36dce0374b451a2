"""Uniform expansion of the two-material disc: the split model carries the
dilatation jump exactly, the unsplit one leaks into the deviatoric part."""
import sys
from pathlib import Path

from micromorph2d import experiments as ex
from micromorph2d.vtk import emit_fields

tier = int(sys.argv[1]) if len(sys.argv) > 1 else 168
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("demo_output")

row = ex.run_e1((tier,), keep_solutions=True)[0]
print(f"cells {row['cells']}")
print(f"split      |I| = {row['norm_I']:.8f}   |D| = {row['norm_D']:.2e}")
print(f"full curl  |sph P| = {row['norm_sph_P']:.6f}   |dev P| = {row['norm_dev_P']:.4f}")
for tag in ("split", "fullcurl"):
    print(emit_fields(row[f"solution_{tag}"], out / f"disc_{tag}_{tier}.vtk"))
