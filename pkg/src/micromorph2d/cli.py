"""Command line entry point: ``micromorph2d <experiment> [options]``.

Each experiment writes one or more CSV files into ``--out``; with ``--vtk``
the solved fields are also written as legacy VTK.  Exit status is 0 on
success, 2 for usage or configuration errors and 1 when a run fails.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, dump_config, load_config
from .system import FORMULATIONS

FAMILIES_FOR_DUMP = ("DeviatoricY", "NedelecII", "LagrangeCG", "LagrangeDG")


def _int_tuple(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_tuple(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="micromorph2d", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", nargs="?", choices=EXPERIMENTS, help="experiment to run")
    ap.add_argument("--mesh-tier", type=int, help="single tier: target cells (disc) or n (square)")
    ap.add_argument("--tiers", type=_int_tuple,
                    help="comma separated tier list (element degrees for element-check)")
    ap.add_argument("--degree", type=int, help="displacement degree (default 4)")
    ap.add_argument("--formulation", choices=FORMULATIONS)
    ap.add_argument("--out", help="output directory (default results)")
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--lc", type=float, help="characteristic length")
    ap.add_argument("--lcs", type=_float_tuple, help="comma separated length scales for e4-lcsweep")
    ap.add_argument("--mu-c", dest="mu_c", type=float, help="Cosserat couple modulus")
    ap.add_argument("--samples", type=int, help="random triangles or patches for the checks")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--vtk", action="store_true", default=None, help="also write VTK fields")
    ap.add_argument("--dump-tabulation", choices=FAMILIES_FOR_DUMP,
                    help="element-check: write reference basis tabulations of this family as CSV")
    return ap


def resolve_config(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else None
    if base is None:
        if args.experiment is None:
            raise ConfigError("no experiment given")
        base = ExperimentConfig(args.experiment)
    elif args.experiment is not None and args.experiment != base.experiment:
        raise ConfigError(f"command line experiment {args.experiment!r} conflicts with "
                          f"config experiment {base.experiment!r}")
    return base.with_overrides(mesh_tier=args.mesh_tier, tiers=args.tiers, degree=args.degree,
                               formulation=args.formulation, out=args.out, lc=args.lc, lcs=args.lcs,
                               mu_c=args.mu_c, samples=args.samples, seed=args.seed, vtk=args.vtk)


def _emit(sol, path: Path, written: list):
    from .vtk import emit_fields

    written.append(emit_fields(sol, path))


def _strip(rows: list) -> list:
    return [{k: v for k, v in r.items() if not k.startswith("solution")} for r in rows]


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run one experiment and return the written paths."""
    out = Path(cfg.out)
    written: list = []
    name = cfg.experiment
    if cfg.formulation is not None and name not in ("e3-convergence",):
        raise ConfigError(f"--formulation applies to e3-convergence only, not {name}")
    if name == "e1-dilatation":
        rows = ex.run_e1(cfg.tier_list(ex.DISC_TIERS), cfg.degree, keep_solutions=cfg.vtk)
        for r in rows:
            for tag in ("split", "fullcurl"):
                if cfg.vtk:
                    _emit(r[f"solution_{tag}"], out / f"e1_{tag}_{r['target_cells']}.vtk", written)
        written.append(ex.write_csv(out / "e1_dilatation.csv", _strip(rows), name))
    elif name == "e2-shear":
        rows = ex.run_e2(cfg.tier_list((168,)), cfg.degree, keep_solutions=cfg.vtk)
        for r in rows:
            if cfg.vtk:
                _emit(r["solution"], out / f"e2_{r['formulation']}_{r['cells']}.vtk", written)
        written.append(ex.write_csv(out / "e2_shear.csv", _strip(rows), name))
    elif name == "e3-convergence":
        form = cfg.formulation or "PrimalSplit"
        rows, slopes = ex.run_e3(cfg.tier_list(ex.SQUARE_TIERS), form,
                                 1.0 if cfg.lc is None else cfg.lc,
                                 0.0 if cfg.mu_c is None else cfg.mu_c, cfg.degree)
        written.append(ex.write_csv(out / "e3_convergence.csv", rows, name))
        if slopes:
            written.append(ex.write_csv(out / "e3_slopes.csv", [dict(formulation=form, **slopes)], name))
    elif name == "e4-lcsweep":
        n = cfg.mesh_tier or 16
        res = ex.run_e4(cfg.lcs or ex.E4_LENGTHS, n, cfg.degree)
        written.append(ex.write_csv(out / "e4_lcsweep.csv", res["rows"], name))
    elif name == "e5-mixed-stability":
        res = ex.run_e5(cfg.tier_list(ex.SQUARE_TIERS), cfg.degree,
                        1e10 if cfg.lc is None else cfg.lc, 1.0 if cfg.mu_c is None else cfg.mu_c)
        written.append(ex.write_csv(out / "e5_mixed.csv", res["mixed"], name))
        written.append(ex.write_csv(out / "e5_primal.csv", res["primal"], name))
        written.append(ex.write_csv(out / "e5_summary.csv",
                                    [{"mixed_monotone": res["mixed_monotone"],
                                      "primal_monotone": res["primal_monotone"]}], name))
    elif name == "macro-check":
        rows = ex.run_macro_check(cfg.samples, cfg.seed)
        written.append(ex.write_csv(out / "macro_check.csv", rows, name))
    elif name == "element-check":
        degrees = cfg.tier_list((1, 2, 3, 4))
        rows = ex.run_element_check(degrees, cfg.samples, cfg.seed)
        written.append(ex.write_csv(out / "element_check.csv", rows, name))
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ConfigError(f"no driver for {name!r}")
    return written


def tabulation_rows(family: str, p: int, points: np.ndarray) -> list:
    """One CSV row per (basis function, point): values flattened, curls if present."""
    from .elements import deviatoric_basis, lagrange_basis, nedelec2_basis

    if family == "DeviatoricY":
        tab = deviatoric_basis(p, points)
    elif family == "NedelecII":
        tab = nedelec2_basis(p, points)
    else:
        tab = lagrange_basis(p, family == "LagrangeCG", points)
    rows = []
    for b in range(tab.ndofs):
        for q, (x, y) in enumerate(tab.points):
            row = {"family": family, "degree": p, "basis": b, "point": q, "xi": x, "eta": y}
            for k, v in enumerate(np.atleast_1d(tab.values[b, q]).ravel()):
                row[f"value_{k}"] = float(v)
            if tab.curls is not None:
                for k, v in enumerate(np.atleast_1d(tab.curls[b, q]).ravel()):
                    row[f"curl_{k}"] = float(v)
            rows.append(row)
    return rows


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    label = args.experiment or "run"
    try:
        cfg = resolve_config(args)
        label = cfg.experiment
        if args.dump_tabulation and cfg.experiment != "element-check":
            raise ConfigError("--dump-tabulation belongs to element-check")
        out = Path(cfg.out)
        written = run_experiment(cfg)
        if args.dump_tabulation:
            from .quadrature import triangle_rule

            pts = triangle_rule(2 * cfg.degree).xi
            rows = tabulation_rows(args.dump_tabulation, cfg.degree, pts)
            written.append(ex.write_csv(out / f"tabulation_{args.dump_tabulation}_p{cfg.degree}.csv",
                                        rows, cfg.experiment))
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.experiment}.cfg").write_text(dump_config(cfg))
    except ConfigError as exc:
        print(f"micromorph2d: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # report and fail without a traceback wall
        print(f"micromorph2d: {label} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
