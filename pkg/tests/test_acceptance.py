"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py`` or via pytest.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).parent))

from noc3d.common import OperatingPoint
from noc3d.config import parse_config
from noc3d.layout import COPPER, TIM, StackBoundary, build_tile, composite_resistivity
from noc3d.pipeline import build_model, run_pipeline
from noc3d.power import RouterPowerProfile, energy_per_bit, router_power, scale_dynamic
from noc3d.reliability import Black, fit_activation_energy, normalized_rate
from noc3d.thermal import discretize, layer_means, solve_linear, solve_steady

from test_thermal import column_stack
from thermal_cases import UM, dense_conductance, random_grid, random_power, uniform_power

RATE_TABLE = [
    (303.15, 0.011537), (313.15, 0.039174), (323.15, 0.123317), (333.15, 0.362371),
    (343.15, 1.0), (353.15, 2.605435), (363.15, 6.439561), (373.15, 13.94691),
]


RESULTS = []  # printed in the terminal summary by conftest


def report(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} :: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def pipeline_cfg(**changes):
    raw = {"seed": 2024, "benchmarks": [{"name": "uniform", "kind": "uniform", "packets_per_source": 64}]}
    raw.update(changes)
    return parse_config(raw)


# 1 --------------------------------------------------------------------------------------------

def test_c1_calibration_round_trip():
    epb = energy_per_bit(2.9022496e-8, 31360)
    _, dyn = router_power(RouterPowerProfile(), 31360, 2.8232e-6, OperatingPoint(1.1, 500e6))
    e1 = abs(epb / 9.2546e-13 - 1)
    e2 = abs(dyn / 1.028e-2 - 1)
    report(1, "energy/bit and calibration dynamic power", e1 <= 1e-4 and e2 <= 5e-4,
           f"energy/bit {epb:.6e} (rel err {e1:.2e} <= 1e-4); dynamic {dyn:.6e} W (rel err {e2:.2e} <= 5e-4)")


# 2 --------------------------------------------------------------------------------------------

def test_c2_composite_resistivity():
    area = 290**2 - 220**2
    r = composite_resistivity(35700, 0.1016 * 35700, TIM, COPPER)
    ring = build_tile("surround").tsv_region_area
    ok = area == 35700 and abs(r - 0.0226) <= 2e-4 and abs(ring - 35700) < 1e-9
    report(2, "TSV-region resistivity", ok, f"290^2-220^2 = {area}; ring area {ring:.6f}; R = {r:.6f} (0.0226 +/- 0.0002)")


# 3 --------------------------------------------------------------------------------------------

def test_c3_fault_rate_table():
    ea = fit_activation_energy(RATE_TABLE, 343.15)
    ea_pinned = round(ea, 3)
    errs = [(t, normalized_rate(Black(ea_pinned), t, 343.15), v) for t, v in RATE_TABLE]
    bad = [(t, got, v) for t, got, v in errs if abs(got / v - 1) > 1e-3]
    detail = f"fitted Ea {ea:.6f} eV -> {ea_pinned}; " + (
        "all 8 rows within 0.1%" if not bad else
        "; ".join(f"{t} K: {got:.6f} vs {v} ({(got / v - 1) * 100:+.2f}%)" for t, got, v in bad))
    report(3, "normalised copper fault-rate table", abs(ea_pinned - 1.0) < 1e-9 and not bad, detail)


# 4 --------------------------------------------------------------------------------------------

def test_c4_dvfs_scaling():
    a, b = OperatingPoint(1.1, 500e6), OperatingPoint(1.1, 2e9)
    p = 1.028e-2
    factor = scale_dynamic(p, a, b) / p
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        x = OperatingPoint(rng.uniform(0.5, 1.5), rng.uniform(1e8, 4e9))
        y = OperatingPoint(rng.uniform(0.5, 1.5), rng.uniform(1e8, 4e9))
        q = rng.uniform(1e-4, 1.0)
        worst = max(worst, abs(scale_dynamic(scale_dynamic(q, x, y), y, x) / q - 1))
    ok = factor == 4.0 and worst <= 1e-12
    report(4, "DVFS dynamic scaling", ok, f"500 MHz -> 2 GHz factor {factor!r}; worst a->b->a rel err {worst:.2e}")


# 5 --------------------------------------------------------------------------------------------

def test_c5_solver_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    worst, cases, max_cells = 0.0, 0, 0
    for _ in range(60):
        g, dims = random_grid(rng, max_cells=1000)
        pm = random_power(dims, rng)
        p = g.power_vector(pm)
        ref = np.linalg.solve(dense_conductance(g), p)
        f = solve_steady(g, pm, "cg")
        worst = max(worst, float(np.max(np.abs(f.rise - ref))))
        cases += 1
        max_cells = max(max_cells, g.n_cells)
    # single cell, G = 2 W/K, P = 1 W
    x, _ = solve_linear(sp.csr_matrix([[2.0]]), np.array([1.0]), "cg")
    single = abs((318.15 + x[0]) / 318.65 - 1)
    # 1D rod: one-column stack, heat injected at the bottom slab
    g = discretize(column_stack(boundary=StackBoundary(300.0, 0.5)), 1)
    A = (290 * UM) ** 2
    k, dz = g.conductivity[:, 0, 0], g.slab_thickness
    pv = np.zeros(g.n_cells)
    pv[0] = 0.37
    f = solve_steady(g, pv, "cg", rtol=1e-13)
    r_top = dz[-1] / (2 * k[-1] * A) + 0.5
    r_int = [dz[s] / (2 * k[s] * A) + dz[s + 1] / (2 * k[s + 1] * A) for s in range(len(dz) - 1)]
    rod = np.array([300.0 + 0.37 * (r_top + sum(r_int[s:])) for s in range(len(dz))])
    rod_err = float(np.max(np.abs(f.temps / rod - 1)))
    elapsed = time.perf_counter() - t0
    ok = cases >= 50 and max_cells <= 1000 and worst <= 1e-6 and single <= 1e-9 and rod_err <= 1e-9 and elapsed < 30
    report(5, "sparse CG vs dense oracle", ok,
           f"{cases} cases (<= {max_cells} cells), worst |dT| {worst:.2e} K; single-cell rel {single:.1e}; "
           f"rod rel {rod_err:.1e}; {elapsed:.1f} s")


# 6 --------------------------------------------------------------------------------------------

def test_c6_conservation(tmp_path):
    benches = [
        {"name": "uniform", "kind": "uniform", "packets_per_source": 64},
        {"name": "transpose", "kind": "transpose"},
        {"name": "matrix", "kind": "matrix"},
        {"name": "hotspot5", "kind": "hotspot", "hotspot_nodes": [[1, 1, 0], [2, 2, 3]], "hotspot_fraction": 0.05},
        {"name": "hotspot10", "kind": "hotspot", "hotspot_nodes": [[1, 1, 0], [2, 2, 3]], "hotspot_fraction": 0.10},
    ]
    worst, min_margin, n = 0.0, math.inf, 0
    for tech in ("tsv", "monolithic"):
        for solver in ("cg", "direct"):
            cfg = pipeline_cfg(benchmarks=benches, stack={"technology": tech}, thermal={"solver": solver})
            bundle = run_pipeline(cfg, tmp_path / f"{tech}_{solver}")
            for r in bundle.benchmarks.values():
                worst = max(worst, abs(r.field.heat_to_ambient() / r.power.total_power - 1))
                min_margin = min(min_margin, float(r.field.temps.min() - r.field.ambient))
                n += 1
    report(6, "energy conservation and maximum principle", worst <= 1e-6 and min_margin >= 0,
           f"{n} solves; worst |Q_out/P_in - 1| {worst:.2e}; min(T - T_amb) {min_margin:.3e} K")


# 7 --------------------------------------------------------------------------------------------

def _bottom_top(cfg, out):
    b = run_pipeline(cfg, out).benchmarks["uniform"]
    lm = layer_means(b.field)
    return lm, b.power.total_power


def test_c7a_tsv_cooler_than_monolithic(tmp_path):
    tsv, p1 = _bottom_top(pipeline_cfg(), tmp_path / "tsv")
    mono, p2 = _bottom_top(pipeline_cfg(stack={"technology": "monolithic"}), tmp_path / "mono")
    gap = mono[0] - tsv[0]
    ok = p1 == p2 and 0.1 <= gap <= 5.0
    report("7a", "TSV bottom-layer mean below monolithic by 0.1..5 K", ok,
           f"bottom mean TSV {tsv[0]:.4f} K, monolithic {mono[0]:.4f} K, monolithic - TSV = {gap:+.4f} K")


def test_c7b_bottom_not_cooler_than_top():
    rows = []
    ok = True
    for tech in ("tsv", "monolithic"):
        for dims in ([2, 2, 2], [3, 3, 3], [4, 4, 4], [3, 3, 4]):
            # default stack and grid, identical power at every router
            cfg = pipeline_cfg(mesh={"dims": dims}, stack={"technology": tech})
            _, grid = build_model(cfg)
            lm = layer_means(solve_steady(grid, uniform_power(tuple(dims))))
            top = max(lm)
            ok &= lm[0] >= lm[top]
            rows.append(f"{tech} {'x'.join(map(str, dims))}: {lm[0] - lm[top]:+.3f} K")
    report("7b", "bottom layer >= top layer under uniform power", ok, "; ".join(rows))


# 8 --------------------------------------------------------------------------------------------

def test_c8_thermal_tsvs(tmp_path):
    base, _ = _bottom_top(pipeline_cfg(), tmp_path / "base")
    ttsv, _ = _bottom_top(pipeline_cfg(thermal_tsvs={"size_um": 15, "koz_um": 10}), tmp_path / "ttsv")
    top = max(base)
    d_bottom, d_top = ttsv[0] - base[0], ttsv[top] - base[top]
    ok = d_bottom < 0 and abs(d_bottom) <= 1.0 and abs(d_top) < 0.1
    report(8, "corner thermal TSVs", ok, f"bottom-layer delta {d_bottom:+.4f} K (< 0, order <= 1 K); "
                                         f"top-layer delta {d_top:+.4f} K (|.| < 0.1)")


# 9 --------------------------------------------------------------------------------------------

def test_c9_mttf_scale():
    m = Black(1.0)
    ratio = normalized_rate(m, 353.15, 343.15) / normalized_rate(m, 343.15, 343.15)
    mttf_gain = (1 / normalized_rate(m, 343.15, 343.15)) / (1 / normalized_rate(m, 353.15, 343.15))
    ok = abs(mttf_gain / 2.605 - 1) <= 1e-3 and 2.0 <= mttf_gain <= 3.0
    report(9, "10 K cooler near 343 K -> MTTF gain", ok, f"MTTF gain {mttf_gain:.6f} (2.605 within 0.1%, band 2..3); "
                                                       f"rate ratio {ratio:.6f}")


# 10 -------------------------------------------------------------------------------------------

def test_c10_end_to_end_performance(tmp_path):
    cfg = pipeline_cfg()
    assert cfg.mesh.dims == (4, 4, 4) and cfg.thermal.resolution == 8
    t0 = time.perf_counter()
    bundle = run_pipeline(cfg, tmp_path / "run")
    elapsed = time.perf_counter() - t0
    m = json.loads((tmp_path / "run" / "manifest.json").read_text())
    stages = [s["stage"] for s in m["stages"]]
    expected = ["traffic", "power", "floorplan", "thermal", "reliability"]
    ok = elapsed < 120 and stages == expected and len(set(stages)) == len(stages)
    report(10, "4x4x4 pipeline runtime", ok,
           f"{elapsed:.2f} s for {bundle.grid.n_cells} cells ({bundle.grid.shape}); manifest stages "
           + ", ".join(f"{s['stage']}={s['seconds']:.3f}s" for s in m["stages"]))


# 11 -------------------------------------------------------------------------------------------

def test_c11_determinism(tmp_path):
    cfg = pipeline_cfg(benchmarks=[
        {"name": "uniform", "kind": "uniform", "packets_per_source": 37},
        {"name": "hotspot", "kind": "hotspot", "hotspot_nodes": [[0, 0, 0]], "hotspot_fraction": 0.1},
    ], mesh={"dims": [3, 3, 3]})
    run_pipeline(cfg, tmp_path / "a")
    run_pipeline(cfg, tmp_path / "b")

    def csvs(d):
        return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*.csv"))}

    a, b = csvs(tmp_path / "a"), csvs(tmp_path / "b")
    diff = [k for k in a if a[k] != b.get(k)]
    ok = bool(a) and a.keys() == b.keys() and not diff
    report(11, "byte-identical CSVs across runs", ok, f"{len(a)} CSV files compared, {len(diff)} differ")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
