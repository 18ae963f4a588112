"""Pipeline configuration (YAML) with units spelled out in every key name.

Minimal example::

    seed: 7
    mesh: {dims: [4, 4, 4]}
    benchmarks:
      - {name: uniform, kind: uniform, packets_per_source: 64}
      - {name: canneal, kind: trace, trace_path: traces/canneal.csv}
    stack: {technology: tsv}

Everything else has defaults; see README for the full schema.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from noc3d.common import ConfigError, OperatingPoint
from noc3d import layout as lay
from noc3d.power import RouterPowerProfile
from noc3d.reliability import Black, Hrd4, TableDriven
from noc3d.traffic import MeshSpec, SyntheticPattern

Pair = Tuple[float, float]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeshConfig(_Model):
    dims: Tuple[int, int, int] = (4, 4, 4)
    flit_width: int = Field(32, ge=1)
    voltage_v: float = Field(1.1, gt=0)
    frequency_hz: float = Field(500e6, gt=0)


class PowerConfig(_Model):
    static_power_w: float = Field(7.64e-4, gt=0)
    energy_per_bit_j: float = Field(9.2546e-13, gt=0)
    calib_voltage_v: float = Field(1.1, gt=0)
    calib_frequency_hz: float = Field(500e6, gt=0)


class BenchmarkConfig(_Model):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    kind: Literal["uniform", "transpose", "matrix", "hotspot", "trace"]
    packets_per_source: int = Field(10, ge=1)
    flits_per_packet: int = Field(10, ge=1)
    hotspot_nodes: List[Tuple[int, int, int]] = []
    hotspot_fraction: float = Field(0.0, ge=0, lt=1)
    permutation: Optional[str] = None
    trace_path: Optional[str] = None


class LayoutConfig(_Model):
    style: Literal["surround", "separated", "legacy"] = "surround"
    tile_um: Pair = (290.0, 290.0)
    logic_um: Pair = (220.0, 220.0)
    tsv_unit_um: Pair = (4.06, 4.06)
    tsv_count: int = Field(220, ge=0)
    legacy_group_um: Optional[Pair] = None
    pe_spacer_um2: float = Field(0.0, ge=0)


class ThermalTSVConfig(_Model):
    size_um: float = Field(15.0, gt=0)
    koz_um: float = Field(10.0, ge=0)
    placement: List[Union[str, Pair]] = ["sw", "se", "nw", "ne"]


class MaterialConfig(_Model):
    resistivity_mk_per_w: float = Field(gt=0)
    heat_capacity_j_per_m3k: float = Field(gt=0)


def _default_materials() -> Dict[str, MaterialConfig]:
    return {
        m.name: MaterialConfig(resistivity_mk_per_w=m.thermal_resistivity,
                               heat_capacity_j_per_m3k=m.volumetric_heat_capacity)
        for m in (lay.SILICON, lay.COPPER, lay.TIM)
    }


class StackConfig(_Model):
    technology: Literal["tsv", "monolithic"] = "tsv"
    silicon_thickness_um: float = Field(100.0, gt=0)
    bonding_thickness_um: float = Field(20.0, gt=0)
    tim_thickness_um: float = Field(20.0, gt=0)
    spreader_thickness_um: float = Field(1000.0, gt=0)
    ambient_k: float = Field(318.15, gt=0)
    sink_resistance_k_per_w: float = Field(0.1, gt=0)
    materials: Dict[Literal["silicon", "copper", "tim"], MaterialConfig] = Field(default_factory=_default_materials)


class ThermalConfig(_Model):
    resolution: int = Field(8, ge=1, le=256)
    sublayers: int = Field(1, ge=1, le=16)
    solver: Literal["auto", "cg", "direct"] = "auto"
    rtol: float = Field(1e-8, gt=0, lt=1e-2)
    align: bool = True


class ModelConfig(_Model):
    kind: Literal["black", "hrd4", "table"] = "black"
    activation_energy_ev: float = Field(1.0, gt=0)
    threshold_k: float = Field(343.15, gt=0)
    points: List[Pair] = []


def _default_models() -> Dict[str, ModelConfig]:
    return {"copper": ModelConfig(activation_energy_ev=1.0), "logic": ModelConfig(activation_energy_ev=0.7)}


class ReliabilityConfig(_Model):
    reference_k: float = Field(323.15, gt=0)
    statistic: Literal["mean", "max"] = "mean"
    defect_threshold: float = Field(1.0, gt=0)
    models: Dict[str, ModelConfig] = Field(default_factory=_default_models)


class PipelineConfig(_Model):
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    mesh: MeshConfig = MeshConfig()
    power: PowerConfig = PowerConfig()
    benchmarks: List[BenchmarkConfig] = Field(min_length=1)
    layout: LayoutConfig = LayoutConfig()
    thermal_tsvs: Optional[ThermalTSVConfig] = None
    stack: StackConfig = StackConfig()
    thermal: ThermalConfig = ThermalConfig()
    reliability: ReliabilityConfig = ReliabilityConfig()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        names = [b.name for b in self.benchmarks]
        if len(set(names)) != len(names):
            raise ValueError("benchmark names must be unique")
        if any(b.kind in ("uniform", "hotspot") for b in self.benchmarks) and self.seed is None:
            raise ValueError("seed is required when a uniform or hotspot benchmark is configured")
        if min(self.mesh.dims) < 1:
            raise ValueError("mesh dims must be >= 1")
        for b in self.benchmarks:
            if b.kind == "trace" and not b.trace_path:
                raise ValueError(f"benchmark {b.name}: trace_path is required for kind 'trace'")
            if b.kind == "hotspot":
                if not b.hotspot_nodes or b.hotspot_fraction <= 0:
                    raise ValueError(f"benchmark {b.name}: hotspot needs hotspot_nodes and hotspot_fraction")
                for n in b.hotspot_nodes:
                    if not all(0 <= v < d for v, d in zip(n, self.mesh.dims)):
                        raise ValueError(f"benchmark {b.name}: hotspot node {n} outside mesh")
        if self.stack.technology == "tsv" and "copper" not in self.reliability.models:
            raise ValueError("reliability.models needs a 'copper' entry for TSV stacks")
        if "logic" not in self.reliability.models:
            raise ValueError("reliability.models needs a 'logic' entry")
        return self

    # builders -----------------------------------------------------------

    def mesh_spec(self) -> MeshSpec:
        m = self.mesh
        return MeshSpec(m.dims, m.flit_width, OperatingPoint(m.voltage_v, m.frequency_hz))

    def power_profile(self) -> RouterPowerProfile:
        p = self.power
        return RouterPowerProfile(p.static_power_w, p.energy_per_bit_j, p.calib_voltage_v, p.calib_frequency_hz)

    def pattern(self, b: BenchmarkConfig) -> SyntheticPattern:
        return SyntheticPattern(b.kind, b.packets_per_source, b.flits_per_packet, tuple(b.hotspot_nodes),
                                b.hotspot_fraction, b.permutation, self.seed, b.name)

    def tile(self) -> lay.RouterTileLayout:
        L = self.layout
        tile = lay.build_tile(L.style, L.tile_um, L.logic_um, L.tsv_unit_um, L.tsv_count, L.legacy_group_um)
        if self.thermal_tsvs is not None:
            t = self.thermal_tsvs
            tile = lay.insert_thermal_tsvs(tile, t.size_um, t.koz_um, t.placement)
        return tile

    def materials(self) -> Dict[str, lay.Material]:
        return {name: lay.Material(name, m.resistivity_mk_per_w, m.heat_capacity_j_per_m3k)
                for name, m in self.stack.materials.items()}

    def build_stack(self, floorplan: Optional[lay.ChipFloorplan] = None) -> lay.ChipStack:
        s = self.stack
        mesh = self.mesh_spec()
        floorplan = floorplan or lay.tile_chip(self.tile(), mesh, self.layout.pe_spacer_um2)
        return lay.build_stack(
            s.technology, mesh.dims[2], floorplan,
            lay.StackThickness(s.silicon_thickness_um, s.bonding_thickness_um, s.tim_thickness_um,
                               s.spreader_thickness_um),
            self.materials(),
            lay.StackBoundary(s.ambient_k, s.sink_resistance_k_per_w),
            mesh,
            self.thermal.sublayers,
        )

    def models(self):
        out = {}
        for name, m in self.reliability.models.items():
            if m.kind == "black":
                out[name] = Black(m.activation_energy_ev)
            elif m.kind == "hrd4":
                out[name] = Hrd4(m.threshold_k, m.activation_energy_ev)
            else:
                out[name] = TableDriven(name, tuple(m.points))
        return out

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read and validate a YAML config; relative trace paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = parse_config(raw, where=str(path))
    for b in cfg.benchmarks:
        if b.trace_path:
            p = Path(b.trace_path)
            if not p.is_absolute():
                p = path.parent / p
            if not p.is_file():
                raise ConfigError(f"{path}: benchmark {b.name}: trace file not found: {p}")
            b.trace_path = str(p.resolve())
    return cfg


def parse_config(raw: dict, where: str = "<config>") -> PipelineConfig:
    try:
        cfg = PipelineConfig.model_validate(raw)
        cfg.tile()  # geometry feasibility
    except ValidationError as e:
        raise ConfigError(f"{where}: {e}") from None
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None
    return cfg
