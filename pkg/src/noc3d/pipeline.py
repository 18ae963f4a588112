"""End-to-end run: traffic -> power -> floorplan/stack -> thermal -> reliability.

Each benchmark writes into its own ``<out>/<name>/`` directory, staged under a
``.partial`` name and renamed only when every stage succeeded.
"""

from __future__ import annotations

import json
import platform
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy

from noc3d import __version__
from noc3d import layout as lay
from noc3d.common import InputError, StageError
from noc3d.config import PipelineConfig
from noc3d.heatmap import emit_heatmap
from noc3d.power import PowerMap, power_map, write_power_csv
from noc3d.reliability import (ReliabilityEntry, ReliabilityMap, defect_map, mttf_map,
                               read_reliability_csv, write_defect_csv, write_reliability_csv)
from noc3d.thermal import (RegionTemp, TemperatureField, ThermalGrid, discretize, read_router_csv,
                           region_temps, solve_steady, write_layer_csvs, write_router_csv)
from noc3d.traffic import TrafficSummary, gen_synthetic, ingest_trace, write_trace

STAGES = ("traffic", "power", "floorplan", "thermal", "reliability")


@dataclass
class BenchmarkResult:
    name: str
    traffic: TrafficSummary
    power: PowerMap
    field: TemperatureField
    routers: List[RegionTemp]
    tsvs: List[RegionTemp]
    reliability: ReliabilityMap
    defects: List[ReliabilityEntry]
    directory: Path
    timings: Dict[str, float]


@dataclass
class ReportBundle:
    out_dir: Path
    stack: lay.ChipStack
    grid: ThermalGrid
    benchmarks: Dict[str, BenchmarkResult]
    manifest: dict = field(default_factory=dict)


class _Timer:
    def __init__(self, sink: Dict[str, float], stage: str):
        self.sink, self.stage = sink, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, exc_type, exc, tb):
        self.sink[self.stage] = self.sink.get(self.stage, 0.0) + time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.stage, exc) from exc


def load_traffic(cfg: PipelineConfig, bench) -> TrafficSummary:
    mesh = cfg.mesh_spec()
    if bench.kind == "trace":
        return ingest_trace(bench.trace_path, mesh, bench.name)
    return gen_synthetic(cfg.pattern(bench), mesh)


def build_model(cfg: PipelineConfig):
    """Floorplan, stack and discretized grid shared by every benchmark."""
    mesh = cfg.mesh_spec()
    chip = lay.tile_chip(cfg.tile(), mesh, cfg.layout.pe_spacer_um2)
    stack = cfg.build_stack(chip)
    grid = discretize(stack, cfg.thermal.resolution, cfg.thermal.align)
    return stack, grid


def reliability_for(cfg: PipelineConfig, routers, tsvs):
    r = cfg.reliability
    rel = mttf_map(list(routers) + list(tsvs), cfg.models(), r.reference_k, statistic=r.statistic)
    return rel, defect_map(rel, r.defect_threshold)


def write_heatmaps(fld: TemperatureField, out_dir: Path, prefix: str = "heatmap") -> List[Path]:
    grid = fld.grid
    paths = []
    for li, layer in grid.stack.silicon_layers():
        p = out_dir / f"{prefix}_layer{li}.svg"
        emit_heatmap(fld.layer_map(li), p, title=f"layer {li} (tier {layer.tier}) temperature",
                     x_edges=grid.x_edges, y_edges=grid.y_edges)
        paths.append(p)
    return paths


def _run_benchmark(cfg: PipelineConfig, bench, stack, grid, out: Path) -> BenchmarkResult:
    timings: Dict[str, float] = {}
    final = out / bench.name
    stage_dir = out / f"{bench.name}.partial"
    shutil.rmtree(stage_dir, ignore_errors=True)
    stage_dir.mkdir(parents=True)
    try:
        with _Timer(timings, "traffic"):
            traffic = load_traffic(cfg, bench)
            write_trace(traffic, stage_dir / "trace.csv")
        with _Timer(timings, "power"):
            pm = power_map(traffic, cfg.power_profile(), cfg.mesh_spec().operating_point, cfg.mesh_spec())
            write_power_csv(pm, stage_dir / "power.csv")
        with _Timer(timings, "thermal"):
            fld = solve_steady(grid, pm, cfg.thermal.solver, cfg.thermal.rtol)
            routers = region_temps(fld, kind="logic")
            tsvs = region_temps(fld, kind="tsv") if stack.technology == "tsv" else []
            write_layer_csvs(fld, stage_dir)
            write_router_csv(routers, stage_dir / "routers.csv")
            if tsvs:
                write_router_csv(tsvs, stage_dir / "tsvs.csv")
            write_heatmaps(fld, stage_dir)
        with _Timer(timings, "reliability"):
            rel, defects = reliability_for(cfg, routers, tsvs)
            write_reliability_csv(rel, stage_dir / "reliability.csv")
            write_defect_csv(defects, stage_dir / "defects.csv")
    except BaseException:
        shutil.rmtree(stage_dir, ignore_errors=True)
        raise
    shutil.rmtree(final, ignore_errors=True)
    stage_dir.rename(final)
    return BenchmarkResult(bench.name, traffic, pm, fld, routers, tsvs, rel, defects, final, timings)


def run_pipeline(cfg: PipelineConfig, out_dir, threads: int = 1) -> ReportBundle:
    """Run every configured benchmark and write the report bundle under ``out_dir``."""
    if threads < 1:
        raise InputError("threads must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").unlink(missing_ok=True)  # absent manifest marks an incomplete run
    shared: Dict[str, float] = {}
    with _Timer(shared, "floorplan"):
        stack, grid = build_model(cfg)
        lay.write_floorplan(stack, out / "floorplan.txt")
    (out / "config.json").write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")

    def job(b):
        return _run_benchmark(cfg, b, stack, grid, out)

    if threads == 1 or len(cfg.benchmarks) == 1:
        results = [job(b) for b in cfg.benchmarks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, cfg.benchmarks))

    stage_totals = {s: shared.get(s, 0.0) for s in STAGES}
    for r in results:
        for s, t in r.timings.items():
            stage_totals[s] += t
    manifest = {
        "status": "complete",
        "config_sha256": cfg.digest(),
        "versions": {"noc3d": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "threads": threads,
        "grid": {"shape": list(grid.shape), "cells": grid.n_cells, "technology": stack.technology},
        "stages": [{"stage": s, "seconds": round(stage_totals[s], 6)} for s in STAGES],
        "benchmarks": {
            r.name: {
                "seconds": {s: round(t, 6) for s, t in r.timings.items()},
                "solver": {"method": r.field.info.method, "iterations": r.field.info.iterations,
                           "relative_residual": r.field.info.relative_residual},
                "total_power_w": r.power.total_power,
                "heat_to_ambient_w": r.field.heat_to_ambient(),
                "defects": len(r.defects),
            }
            for r in results
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return ReportBundle(out, stack, grid, {r.name: r for r in results}, manifest)


# comparison -----------------------------------------------------------------

def _run_config(run_dir: Path) -> dict:
    p = Path(run_dir) / "config.json"
    if not p.is_file():
        raise InputError(f"{run_dir}: not a pipeline output directory (config.json missing)")
    return json.loads(p.read_text(encoding="utf-8"))


def _by_router(rows: Sequence[RegionTemp]) -> Dict[tuple, RegionTemp]:
    return {r.router: r for r in rows}


def _mttf_by_router(entries: Sequence[ReliabilityEntry], material: str) -> Dict[tuple, float]:
    return {e.router: e.normalized_mttf for e in entries if e.material == material}


def compare(baseline_dir, run_dirs: Sequence, out_dir) -> List[Path]:
    """Per-router and per-tier deltas (run minus baseline) and MTTF ratios (run / baseline).

    Benchmarks are matched by name; runs must share mesh dims and grid resolution.
    """
    base_dir = Path(baseline_dir)
    base_cfg = _run_config(base_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    router_lines = ["run,benchmark,x,y,z,base_mean_k,run_mean_k,delta_mean_k,delta_max_k,mttf_ratio"]
    layer_lines = ["run,benchmark,z,base_mean_k,run_mean_k,delta_mean_k,delta_max_k,mttf_ratio"]
    svgs: List[Path] = []
    for rd in run_dirs:
        rd = Path(rd)
        cfg = _run_config(rd)
        for key, label in (("mesh", "mesh dims"), ("thermal", "grid resolution")):
            a = base_cfg[key]["dims" if key == "mesh" else "resolution"]
            b = cfg[key]["dims" if key == "mesh" else "resolution"]
            if a != b:
                raise InputError(f"{rd}: {label} {b} differs from baseline {a}")
        base_names = [b["name"] for b in base_cfg["benchmarks"]]
        names = [b["name"] for b in cfg["benchmarks"] if b["name"] in base_names]
        if not names:
            raise InputError(f"{rd}: no benchmark names in common with baseline")
        label = rd.name
        for name in names:
            b_rt = _by_router(read_router_csv(base_dir / name / "routers.csv"))
            r_rt = _by_router(read_router_csv(rd / name / "routers.csv"))
            b_m = _mttf_by_router(read_reliability_csv(base_dir / name / "reliability.csv"), "logic")
            r_m = _mttf_by_router(read_reliability_csv(rd / name / "reliability.csv"), "logic")
            if set(b_rt) != set(r_rt):
                raise InputError(f"{rd}/{name}: router set differs from baseline")
            X, Y, Z = cfg["mesh"]["dims"]
            delta = np.zeros((Z, Y, X))
            tiers: Dict[int, List[tuple]] = {}
            for c in sorted(b_rt, key=lambda c: (c[2], c[1], c[0])):
                b, r = b_rt[c], r_rt[c]
                ratio = r_m[c] / b_m[c]
                dm, dx = r.mean - b.mean, r.max - b.max
                delta[c[2], c[1], c[0]] = dm
                router_lines.append(f"{label},{name},{c[0]},{c[1]},{c[2]},{b.mean:.6f},{r.mean:.6f},"
                                    f"{dm:.6f},{dx:.6f},{ratio:.9e}")
                tiers.setdefault(c[2], []).append((b.mean, r.mean, b.max, r.max, b_m[c], r_m[c]))
            for z, rows in sorted(tiers.items()):
                a = np.array(rows)
                bm, rm = a[:, 0].mean(), a[:, 1].mean()
                layer_lines.append(f"{label},{name},{z},{bm:.6f},{rm:.6f},{rm - bm:.6f},"
                                   f"{a[:, 3].max() - a[:, 2].max():.6f},{a[:, 5].mean() / a[:, 4].mean():.9e}")
            lim = float(np.max(np.abs(delta))) or 1.0
            for z in range(Z):
                p = out / f"delta_{label}_{name}_z{z}.svg"
                emit_heatmap(delta[z], p, palette="diverging", title=f"{label} - baseline, {name}, tier {z}",
                             vmin=-lim, vmax=lim)
                svgs.append(p)
    paths = [out / "comparison_routers.csv", out / "comparison_layers.csv"]
    paths[0].write_text("\n".join(router_lines) + "\n", encoding="utf-8")
    paths[1].write_text("\n".join(layer_lines) + "\n", encoding="utf-8")
    return paths + svgs
