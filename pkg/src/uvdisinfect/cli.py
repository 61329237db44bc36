"""Command-line entry point: ``uvdisinfect {simulate,plan,segment,report}``.

Exit status 0 on success, 1 for invalid input (a JSON error record with the
offending field goes to stderr), 2 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import formats
from .dose import SurfaceGrid, conservation_check, report, report_from_values, simulate_dose
from .motsp import brute_force_pareto, decomposition_solve, plan_cells
from .scenario import Scenario, ScenarioError, load_scenario
from .segmentation import PipelineConfig, extract_polygons
from .waypoints import MissionError, ScanPattern, assemble_mission
from .world_model import PolygonDictionary, dictionary_update

log = logging.getLogger("uvdisinfect")

SCENARIO_SUFFIXES = (".scn", ".yaml", ".yml")


class InputError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


def bundled_path(name: str) -> Path | None:
    p = resources.files("uvdisinfect") / "data" / name
    return Path(str(p)) if p.is_file() else None


def resolve_input(arg: str) -> Path:
    """A filesystem path, or the name of a bundled data file."""
    p = Path(arg)
    if p.exists():
        return p
    b = bundled_path(arg)
    if b is None:
        raise InputError("input", f"no such file or bundled data: {arg}")
    return b


def _scenario_polygons(sc: Scenario):
    if sc.surfaces:
        return sc.polygons()
    cloud = formats.read_point_cloud(sc.resolve(sc.point_cloud))
    d = PolygonDictionary()
    for poly in extract_polygons(cloud, PipelineConfig()):
        d = dictionary_update(d, poly)
    if len(d) == 0:
        raise InputError("point_cloud", "no surfaces found in the point cloud")
    return list(d.entries.values())


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    sc = load_scenario(resolve_input(args.scenario))
    if args.dt is not None:
        if not args.dt > 0 or args.dt > sc.exposure:
            raise InputError("dt", "must be > 0 and not exceed the exposure")
        sc = replace(sc, dt=args.dt)
    if args.cell_size is not None:
        if not args.cell_size > 0:
            raise InputError("cell_size", "must be > 0")
        sc = replace(sc, cell_size=args.cell_size)
    out = Path(args.out_dir)
    entries = []
    for poly in _scenario_polygons(sc):
        grid = SurfaceGrid.from_polygon(poly, sc.cell_size)
        traj = sc.trajectory_for(poly)
        dm = simulate_dose(sc.sources, traj, grid, sc.dt)
        rep = report(dm, sc.sources, sc.exposure, sc.pathogens)
        formats.write_dose_csv(dm, out / f"dose_{poly.id}.csv")
        formats.write_heatmap(dm, out / f"heatmap_{poly.id}.pgm")
        entries.append({"id": poly.id, "cells": [grid.nx, grid.ny],
                        "conservation_ratio": conservation_check(dm, sc.sources, sc.exposure),
                        "report": formats.report_to_dict(rep)})
        sys.stdout.write(formats.report_table(rep, f"{sc.name} / surface {poly.id}"))
    formats.write_report({"scenario": sc.name, "dt": sc.dt, "cell_size": sc.cell_size, "surfaces": entries},
                         out / "report.json")
    return 0


def cmd_plan(args) -> int:
    path = resolve_input(args.input)
    out = Path(args.out_dir)
    if path.suffix in SCENARIO_SUFFIXES:
        return _plan_scenario(load_scenario(path), args, out)
    inst = formats.read_instance(path)
    if args.exact:
        if inst.n > 10:
            raise InputError("input", f"--exact enumerates tours and is limited to 10 cities, got {inst.n}")
        front = brute_force_pareto(inst)
    else:
        if inst.n < 2:
            raise InputError("input", "decomposition needs at least two cities")
        front = decomposition_solve(inst, args.n_weights or 101, 0 if args.seed is None else args.seed)
    formats.write_front(front, out / "front.csv")
    print(f"front: {len(front)} members -> {out / 'front.csv'}")
    return 0


def _plan_scenario(sc: Scenario, args, out: Path) -> int:
    if sc.plan is None:
        raise InputError("plan", "scenario has no plan section")
    if sc.generator is None or sc.generator.type != "boustrophedon":
        raise InputError("generator.type", "missions scan table tops and need a boustrophedon generator")
    grid = formats.read_occupancy(sc.resolve(sc.plan.map))
    polys = _scenario_polygons(sc)
    d = PolygonDictionary({p.id: p for p in polys})
    seed = sc.seed if args.seed is None else args.seed
    order, front = plan_cells(d, grid, sc.plan.start, args.n_weights or sc.plan.n_weights, seed)
    pattern = ScanPattern(sc.generator.standoff, sc.generator.lane_spacing)
    mission = assemble_mission(order, d, grid, pattern, sc.exposure, sc.plan.start)
    formats.write_front(front, out / "front.csv")
    formats.write_mission(mission, out / "mission.json")
    print("order: " + " ".join(map(str, order)))
    return 0


def cmd_segment(args) -> int:
    cloud = formats.read_point_cloud(resolve_input(args.cloud))
    d = PolygonDictionary()
    for poly in extract_polygons(cloud, PipelineConfig()):
        d = dictionary_update(d, poly)
    out = Path(args.out_dir)
    formats.write_dictionary(d, out / "polygons.json")
    print(f"{len(d)} polygon(s) -> {out / 'polygons.json'}")
    return 0


def cmd_report(args) -> int:
    table = formats.read_dose_csv(resolve_input(args.dose_csv))
    if table.dose.size == 0:
        raise InputError("dose_csv", "dose table has no cells")
    sc = load_scenario(resolve_input(args.scenario))
    rep = report_from_values(table.dose, sc.sources, sc.exposure, sc.pathogens)
    formats.write_report({"scenario": sc.name, "report": formats.report_to_dict(rep)},
                         Path(args.out_dir) / "report.json")
    sys.stdout.write(formats.report_table(rep, sc.name))
    return 0


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uvdisinfect", description="UV surface disinfection planning and dose simulation")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dose maps, heatmaps and report for a scenario")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.add_argument("--dt", type=float, help="time step override, seconds")
    p.add_argument("--cell-size", type=float, help="surface cell size override, metres")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="Pareto front for a MOTSP instance, or a mission for a scenario")
    p.add_argument("input", help="instance text file or scenario with a plan section")
    p.add_argument("--n-weights", type=int, help="number of scalarization weights (>= 2)")
    p.add_argument("--seed", type=int, help="seed for nearest-neighbour start cities")
    p.add_argument("--exact", action="store_true", help="exhaustive front (instances of up to 10 cities)")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("segment", help="extract surface polygons from a point cloud")
    p.add_argument("cloud")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("report", help="report for a dose CSV under a scenario's sources and exposure")
    p.add_argument("dose_csv")
    p.add_argument("scenario")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_report)
    return ap


def _emit_error(kind: str, errors: list[dict]) -> None:
    sys.stderr.write(json.dumps({"error": kind, "errors": errors}, sort_keys=True) + "\n")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n_weights", None) is not None and args.n_weights < 2:
        _emit_error("invalid_input", [{"field": "n_weights", "message": "must be >= 2"}])
        return 1
    try:
        return args.func(args)
    except ScenarioError as exc:
        _emit_error("invalid_input", exc.records())
        return 1
    except InputError as exc:
        _emit_error("invalid_input", [{"field": exc.field, "message": exc.message}])
        return 1
    except formats.FormatError as exc:
        _emit_error("invalid_input", [{"field": "input", "message": str(exc)}])
        return 1
    except MissionError as exc:
        _emit_error("runtime_failure", [{"field": "plan", "message": str(exc)}])
        return 2
    except Exception as exc:  # noqa: BLE001 - every other failure maps to exit 2
        log.debug("runtime failure", exc_info=True)
        _emit_error("runtime_failure", [{"field": "", "message": f"{type(exc).__name__}: {exc}"}])
        return 2


if __name__ == "__main__":
    sys.exit(main())
