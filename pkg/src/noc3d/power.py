"""Router power from traffic volumes and a calibrated energy-per-bit profile.

Static power scales linearly with supply voltage and dynamic power with
f * V**2; both are otherwise constants measured once at the calibration point.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

from noc3d.common import Coord, InputError, OperatingPoint
from noc3d.traffic import MeshSpec, TrafficSummary

POWER_HEADER = "x,y,z,static_w,dynamic_w"


@dataclass(frozen=True)
class RouterPowerProfile:
    static_power: float = 7.64e-4  # W
    energy_per_bit: float = 9.2546e-13  # J/bit
    calib_voltage: float = 1.1  # V
    calib_frequency: float = 500e6  # Hz

    def __post_init__(self):
        for name in ("static_power", "energy_per_bit", "calib_voltage", "calib_frequency"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0")

    @property
    def calib_point(self) -> OperatingPoint:
        return OperatingPoint(self.calib_voltage, self.calib_frequency)


@dataclass
class PowerMap:
    per_router: Dict[Coord, Tuple[float, float]]  # (static W, dynamic W)
    operating_point: OperatingPoint
    benchmark_name: str

    def total(self, coord: Coord) -> float:
        s, d = self.per_router[coord]
        return s + d

    @property
    def total_static(self) -> float:
        return sum(s for s, _ in self.per_router.values())

    @property
    def total_dynamic(self) -> float:
        return sum(d for _, d in self.per_router.values())

    @property
    def total_power(self) -> float:
        return self.total_static + self.total_dynamic


def energy_per_bit(total_dynamic_energy: float, bit_count: int) -> float:
    if bit_count <= 0:
        raise InputError(f"bit_count must be > 0, got {bit_count}")
    if total_dynamic_energy < 0:
        raise InputError("energy must be >= 0")
    return total_dynamic_energy / bit_count


def scale_static(p_static: float, src: OperatingPoint, dst: OperatingPoint) -> float:
    if src.voltage <= 0 or dst.voltage <= 0:
        raise InputError("voltages must be > 0")
    return p_static * (dst.voltage / src.voltage)


def scale_dynamic(p_dyn: float, src: OperatingPoint, dst: OperatingPoint) -> float:
    if min(src.voltage, dst.voltage, src.frequency, dst.frequency) <= 0:
        raise InputError("voltages and frequencies must be > 0")
    return p_dyn * (dst.frequency * dst.voltage**2) / (src.frequency * src.voltage**2)


def router_power(profile: RouterPowerProfile, bits: int, duration: float,
                 target: OperatingPoint) -> Tuple[float, float]:
    """Return (static, dynamic) watts at ``target`` for ``bits`` moved in ``duration`` seconds."""
    if not duration > 0:
        raise InputError(f"duration must be > 0, got {duration}")
    if bits < 0:
        raise InputError(f"bit count must be >= 0, got {bits}")
    calib = profile.calib_point
    dynamic = profile.energy_per_bit * bits / duration
    return scale_static(profile.static_power, calib, target), scale_dynamic(dynamic, calib, target)


def power_map(traffic: TrafficSummary, profile: RouterPowerProfile, target: OperatingPoint,
              mesh: MeshSpec = None) -> PowerMap:
    """Per-router power for every router of the mesh.

    Counts and duration are taken as measured at ``traffic.source_operating_point``:
    the energy per bit is moved from the calibration voltage to the source
    voltage (V**2), the resulting source power is then moved to ``target`` with
    the f * V**2 factor. Routers missing from ``traffic`` dissipate static power only.
    """
    routers = mesh.routers() if mesh is not None else sorted(traffic.per_router_bits, key=lambda c: c[::-1])
    calib, src = profile.calib_point, traffic.source_operating_point
    v_ratio = (src.voltage / calib.voltage) ** 2
    per_router = {}
    for c in routers:
        static, dyn_calib = router_power(profile, traffic.per_router_bits.get(c, 0), traffic.duration, calib)
        per_router[c] = (scale_static(static, calib, target), scale_dynamic(dyn_calib * v_ratio, src, target))
    return PowerMap(per_router, target, traffic.benchmark_name)


def write_power_csv(pm: PowerMap, path) -> None:
    op = pm.operating_point
    lines = [
        POWER_HEADER,
        f"# voltage={op.voltage!r} frequency={op.frequency!r} benchmark={'_'.join(pm.benchmark_name.split())}",
    ]
    for (x, y, z), (s, d) in sorted(pm.per_router.items(), key=lambda kv: kv[0][::-1]):
        lines.append(f"{x},{y},{z},{s:.9e},{d:.9e}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_power_csv(path) -> PowerMap:
    path = Path(path)
    per_router = {}
    meta = {}
    header = False
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            continue
        if not header:
            if line != POWER_HEADER:
                raise InputError(f"{path}:{lineno}: expected header {POWER_HEADER!r}")
            header = True
            continue
        try:
            x, y, z, s, d = line.split(",")
            per_router[(int(x), int(y), int(z))] = (float(s), float(d))
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed line {line!r}") from None
    try:
        op = OperatingPoint(float(meta["voltage"]), float(meta["frequency"]))
    except KeyError:
        raise InputError(f"{path}: missing voltage/frequency metadata") from None
    return PowerMap(per_router, op, meta.get("benchmark", path.stem))
