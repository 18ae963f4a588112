"""Command-line entry point. Exit codes: 0 ok, 1 config error, 2 stage failure."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from noc3d.common import ConfigError, InputError, SolverError, StageError
from noc3d.config import load_config

log = logging.getLogger("noc3d")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2


def _cfg(args):
    overrides = {"seed": getattr(args, "seed", None)}
    return load_config(args.config, overrides)


def cmd_traffic(args) -> int:
    from noc3d.pipeline import load_traffic
    from noc3d.traffic import write_trace

    cfg = _cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for b in cfg.benchmarks:
        write_trace(load_traffic(cfg, b), out / f"{b.name}.trace.csv")
    return EXIT_OK


def cmd_power(args) -> int:
    from noc3d.pipeline import load_traffic
    from noc3d.power import power_map, write_power_csv
    from noc3d.traffic import ingest_trace

    cfg = _cfg(args)
    mesh = cfg.mesh_spec()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        summaries = [ingest_trace(t, mesh) for t in args.trace]
    else:
        summaries = [load_traffic(cfg, b) for b in cfg.benchmarks]
    for s in summaries:
        pm = power_map(s, cfg.power_profile(), mesh.operating_point, mesh)
        write_power_csv(pm, out / f"{s.benchmark_name}.power.csv")
    return EXIT_OK


def cmd_thermal(args) -> int:
    from noc3d.pipeline import build_model, write_heatmaps
    from noc3d.power import read_power_csv
    from noc3d.thermal import region_temps, solve_steady, write_layer_csvs, write_router_csv

    cfg = _cfg(args)
    stack, grid = build_model(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pm = read_power_csv(args.power)
    fld = solve_steady(grid, pm, cfg.thermal.solver, cfg.thermal.rtol)
    write_layer_csvs(fld, out)
    write_router_csv(region_temps(fld, kind="logic"), out / "routers.csv")
    if stack.technology == "tsv":
        write_router_csv(region_temps(fld, kind="tsv"), out / "tsvs.csv")
    write_heatmaps(fld, out)
    return EXIT_OK


def cmd_reliability(args) -> int:
    from noc3d.pipeline import reliability_for
    from noc3d.reliability import write_defect_csv, write_reliability_csv
    from noc3d.thermal import read_router_csv

    cfg = _cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    routers = read_router_csv(args.temps, kind="logic")
    tsvs = read_router_csv(args.tsv_temps, kind="tsv") if args.tsv_temps else []
    rel, defects = reliability_for(cfg, routers, tsvs)
    write_reliability_csv(rel, out / "reliability.csv")
    write_defect_csv(defects, out / "defects.csv")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from noc3d.pipeline import run_pipeline

    cfg = _cfg(args)
    out = args.out or cfg.output_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set output_dir")
    bundle = run_pipeline(cfg, out, args.threads)
    for st in bundle.manifest["stages"]:
        log.info("%-12s %8.3f s", st["stage"], st["seconds"])
    return EXIT_OK


def cmd_compare(args) -> int:
    from noc3d.pipeline import compare

    compare(args.baseline, args.runs, args.out)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    from noc3d.heatmap import emit_heatmap
    from noc3d.thermal import read_layer_csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in args.temps:
        t = Path(t)
        emit_heatmap(read_layer_csv(t), out / f"{t.stem}.svg", palette=args.palette, title=t.stem)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noc3d", description="Thermal and reliability prediction for 3D NoCs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, helptext, config=True):
        sp = sub.add_parser(name, help=helptext)
        if config:
            sp.add_argument("--config", required=True, help="YAML pipeline config")
            sp.add_argument("--seed", type=int, help="override the config seed (u64)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("traffic", cmd_traffic, "generate or ingest per-router traffic")
    sp.add_argument("--out", required=True)
    sp = add("power", cmd_power, "per-router power from traffic")
    sp.add_argument("--trace", nargs="*", help="trace CSVs (default: benchmarks from the config)")
    sp.add_argument("--out", required=True)
    sp = add("thermal", cmd_thermal, "steady-state temperatures from a power CSV")
    sp.add_argument("--power", required=True)
    sp.add_argument("--out", required=True)
    sp = add("reliability", cmd_reliability, "normalised MTTF from router temperatures")
    sp.add_argument("--temps", required=True, help="routers.csv")
    sp.add_argument("--tsv-temps", help="tsvs.csv (copper regions)")
    sp.add_argument("--out", required=True)
    sp = add("pipeline", cmd_pipeline, "run every stage for every benchmark")
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int, default=1)
    sp = add("compare", cmd_compare, "deltas of pipeline runs against a baseline run", config=False)
    sp.add_argument("--baseline", required=True)
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--out", required=True)
    sp = add("heatmap", cmd_heatmap, "SVG heatmaps from per-layer temperature CSVs", config=False)
    sp.add_argument("temps", nargs="+")
    sp.add_argument("--palette", default="thermal")
    sp.add_argument("--out", required=True)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"stage '{e.stage}' failed: {e.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (InputError, SolverError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
