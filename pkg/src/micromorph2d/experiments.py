"""Benchmark drivers: dilatation and shear on a two-material disc, convergence,
length-scale sweep, stability in the large-Lc limit, and element checks."""
from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from .fields import linear_field, sine_field
from .mesh import disc_two_material, square_mesh
from .solver import solve
from .system import (ProblemSpec, apply_dirichlet, assemble, build_spaces, elasticity_energy, energy,
                     error_norms, field_norms, manufactured_loads, weak_trace_residual)
from .tensorops import IsotropicLaw, MaterialRegion, dev, homogenize_meso

MU_MACRO = 76.9
LAMBDA_MACRO = 115.4
DISC_RADII = (5.0, 10.0)
DISC_TIERS = (54, 168, 602, 2636)
SQUARE_TIERS = (4, 8, 12, 14, 16)
SQUARE_HALF_WIDTH = 2 * np.pi
E4_LENGTHS = (1e3, 1e2, 1e1, 1.0, 1e-1, 1e-2, 1e-3)
CSV_SCHEMA = 1


def macro_law() -> IsotropicLaw:
    return IsotropicLaw(MU_MACRO, LAMBDA_MACRO)


def scaled_region(factor: float, mu_c: float = 0.0, lc: float = 1.0) -> MaterialRegion:
    """Micro moduli ``factor`` times the macro ones; meso moduli from homogenization."""
    cm = macro_law().scaled(factor)
    ce = homogenize_meso(cm.mu, cm.lam, MU_MACRO, LAMBDA_MACRO)
    return MaterialRegion(ce, cm, mu_c, MU_MACRO, lc)


def disc_materials() -> dict:
    """Region 0 is the soft annulus, region 1 the stiff core."""
    return {0: scaled_region(10.0), 1: scaled_region(1000.0)}


# --- CSV -----------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_csv(path, rows: list, experiment: str) -> Path:
    """Comma separated, dot decimal, 17 significant digits, schema comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0]) if rows else []
    for r in rows[1:]:
        cols += [k for k in r if k not in cols]
    with path.open("w", newline="") as fh:
        fh.write(f"# micromorph2d {experiment} schema {CSV_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in cols])
    return path


def read_csv(path) -> list:
    """Rows as dicts; numeric cells converted to float."""
    with Path(path).open() as fh:
        lines = [l for l in fh if not l.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        row = {}
        for k, v in r.items():
            try:
                row[k] = float(v)
            except (TypeError, ValueError):
                row[k] = v
        out.append(row)
    return out


def fitted_slope(h, err, last: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the last tiers."""
    h = np.asarray(h, float)[-last:]
    e = np.asarray(err, float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def is_monotone_decreasing(values) -> bool:
    v = np.asarray(values, float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def _solve(spec: ProblemSpec, mesh, check: bool = True):
    spaces = build_spaces(mesh, spec)
    system = apply_dirichlet(assemble(spec, spaces), spec)
    return solve(system, check=check, spec=spec)


# --- E1 / E2: two-material disc -------------------------------------------------

def dilatation_problem(formulation: str, degree: int = 4) -> ProblemSpec:
    return ProblemSpec(formulation, disc_materials(), linear_field(0.1 * np.eye(2)), "NeumannFree",
                       degree=degree)


def run_e1(tiers=DISC_TIERS, degree: int = 4, keep_solutions: bool = False) -> list:
    """Norms of the microdistortion parts under uniform expansion of the disc."""
    rows = []
    for target in tiers:
        mesh = disc_two_material(*DISC_RADII, target)
        row = {"target_cells": target, "cells": mesh.n_cells}
        for form, tag in (("PrimalSplit", "split"), ("FullCurl", "fullcurl")):
            t0 = time.perf_counter()
            sol = _solve(dilatation_problem(form, degree), mesh)
            nrm = field_norms(sol)
            row[f"dofs_{tag}"] = sol.spaces.ndofs
            if tag == "split":
                row["norm_I"] = nrm["I"]
                row["norm_D"] = nrm["D"]
            else:
                row["norm_sph_P"] = nrm["sph_P"]
                row["norm_dev_P"] = nrm["dev_P"]
            row[f"residual_{tag}"] = sol.residual
            row[f"seconds_{tag}"] = time.perf_counter() - t0
            if keep_solutions:
                row[f"solution_{tag}"] = sol
        rows.append(row)
    return rows


def shear_problem(formulation: str, degree: int = 4) -> ProblemSpec:
    return ProblemSpec(formulation, disc_materials(), linear_field([[0.1, 0.0], [0.1, 0.1]]),
                       "ZeroTangentialD", degree=degree)


def interface_jump(sol, samples: int = 64) -> dict:
    """Mean |dev D| and mean spherical trace on both sides of the material interface."""
    from .system import evaluate_fields
    from .quadrature import triangle_rule

    mesh = sol.spaces.mesh
    edges = mesh.interface_edges()
    cells = np.unique(mesh.edge_cells[edges].ravel())
    cells = cells[cells >= 0]
    rule = triangle_rule(4)
    ev = evaluate_fields(sol, cells, rule.xi)
    m = sol.spaces.micro_name
    d = dev(ev[m])
    sph = ev[m] - d + ev.get("I", 0.0)
    dn = np.sqrt((d**2).sum(axis=(-1, -2))) @ rule.weights / rule.weights.sum()
    tr = (sph[..., 0, 0] + sph[..., 1, 1]) @ rule.weights / rule.weights.sum()
    reg = mesh.cell_regions[cells]
    out = {}
    for r in (0, 1):
        out[f"dev_norm_region{r}"] = float(dn[reg == r].mean())
        out[f"trace_region{r}"] = float(tr[reg == r].mean())
    out["dev_jump"] = abs(out["dev_norm_region0"] - out["dev_norm_region1"])
    out["trace_jump"] = abs(out["trace_region0"] - out["trace_region1"])
    return out


def run_e2(tiers=(168,), degree: int = 4, keep_solutions: bool = False) -> list:
    """Shear loading of the disc with strongly and weakly trace-free microdistortion."""
    rows = []
    for target in tiers:
        mesh = disc_two_material(*DISC_RADII, target)
        for form in ("PrimalSplit", "WeakDeviatoric"):
            sol = _solve(shear_problem(form, degree), mesh)
            nrm = field_norms(sol)
            row = {"formulation": form, "cells": mesh.n_cells, "dofs": sol.spaces.ndofs,
                   "norm_D": nrm["D"], "norm_dev_D": nrm["dev_D"], "norm_I": nrm["I"],
                   "residual": sol.residual}
            if form == "WeakDeviatoric":
                row["weak_trace_residual"] = weak_trace_residual(sol)
            row.update(interface_jump(sol))
            if keep_solutions:
                row["solution"] = sol
            rows.append(row)
    return rows


# --- E3 / E5: manufactured convergence ---------------------------------------------

def convergence_problem(formulation: str, lc: float = 1.0, mu_c: float = 0.0, degree: int = 4) -> ProblemSpec:
    region = scaled_region(10.0, mu_c, lc)
    u_exact = sine_field()
    f, M = manufactured_loads(u_exact, region.ce, mu_c)
    return ProblemSpec(formulation, {0: region}, u_exact, "ZeroTangentialD", f, M, degree)


def run_e3(tiers=SQUARE_TIERS, formulation: str = "PrimalSplit", lc: float = 1.0, mu_c: float = 0.0,
           degree: int = 4, check: bool = True) -> tuple:
    """Errors against the manufactured solution; returns ``(rows, slopes)``.

    ``check=False`` keeps going when pivots vanish or the residual stays
    large, which is how an unstable discretization is observed.
    """
    spec = convergence_problem(formulation, lc, mu_c, degree)
    rows = []
    for n in tiers:
        mesh = square_mesh(SQUARE_HALF_WIDTH, n)
        t0 = time.perf_counter()
        sol = _solve(spec, mesh, check)
        err = error_norms(sol, {"u": spec.dirichlet_u.value})
        row = {"formulation": formulation, "n": n, "cells": mesh.n_cells, "dofs": sol.spaces.ndofs,
               "h": 2 * SQUARE_HALF_WIDTH / n}
        row.update({f"error_{k}": v for k, v in err.items()})
        if formulation == "MixedSplit":
            nrm = field_norms(sol)
            row["curl_ratio_D"] = nrm["curl"] / max(nrm["D"], 1e-300)
        row["residual"] = sol.residual
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    slopes = {}
    if len(rows) >= 2:
        h = [r["h"] for r in rows]
        for k in rows[0]:
            if k.startswith("error_"):
                vals = [r[k] for r in rows]
                if all(v > 0 and np.isfinite(v) for v in vals):
                    slopes[k.replace("error_", "slope_")] = fitted_slope(h, vals)
    return rows, slopes


def run_e5(tiers=SQUARE_TIERS, degree: int = 4, lc: float = 1e10, mu_c: float = 1.0) -> dict:
    """Mixed and primal error sequences at a very large length scale."""
    mixed, _ = run_e3(tiers, "MixedSplit", lc, mu_c, degree)
    primal, _ = run_e3(tiers, "PrimalSplit", lc, mu_c, degree, check=False)
    return {"mixed": mixed, "primal": primal,
            "mixed_monotone": all(is_monotone_decreasing([r[k] for r in mixed])
                                  for k in ("error_u", "error_I", "error_h")),
            "primal_monotone": is_monotone_decreasing([r["error_u"] for r in primal])}


# --- E4: length-scale sweep ---------------------------------------------------------

def run_e4(lcs=E4_LENGTHS, n: int = 16, degree: int = 4) -> dict:
    """Energies of the micromorphic model per Lc and of elasticity with the macro law."""
    mesh = square_mesh(SQUARE_HALF_WIDTH, n)
    u_bc = sine_field()
    rows = []
    for lc in lcs:
        spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0, 0.0, lc)}, u_bc, "ZeroTangentialD",
                           degree=degree)
        sol = _solve(spec, mesh)
        rows.append({"lc": lc, "energy": energy(sol, spec), "dofs": sol.spaces.ndofs,
                     "residual": sol.residual})
    reference = elasticity_energy(mesh, macro_law(), u_bc, degree)
    for r in rows:
        r["macro_elasticity_energy"] = reference
    return {"rows": rows, "macro_elasticity_energy": reference, "cells": mesh.n_cells}


# --- element and macro element checks -------------------------------------------------

def run_macro_check(samples: int = 100, seed: int = 0) -> list:
    from .macroelement import condition_survey

    return condition_survey(samples, seed)


def run_element_check(degrees=(1, 2, 3, 4), patches: int = 100, seed: int = 0) -> list:
    """Dimension, rank, trace, continuity and interpolation checks per degree."""
    from . import checks

    rows = []
    rng = np.random.default_rng(seed)
    for p in degrees:
        row = {"degree": p}
        row.update(checks.dimension_report(p))
        row.update(checks.rank_report(p, rng))
        row["trace_max"] = checks.trace_max(p, rng)
        row["continuity_deviatoric"] = checks.tangential_continuity("DeviatoricY", p, patches, rng)
        row["continuity_nedelec"] = checks.tangential_continuity("NedelecII", p, patches, rng)
        rates = checks.interpolation_rates(p)
        row.update(rates)
        rows.append(row)
    return rows
