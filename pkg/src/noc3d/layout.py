"""Router tile floorplans, chip tiling and 3D layer stacks.

Lengths are in micrometres throughout this module; the thermal grid converts
to metres. A tile is partitioned into disjoint rectangles of four kinds:

    logic   router logic (dissipates the router's power)
    tsv     signal-TSV region, modelled as a homogenised fill/copper mix
    ttsv    thermal TSV (solid copper column)
    fill    anything else inside the tile

Chip-level tiling adds ``pe`` rectangles for unpowered processing-element area.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from noc3d.common import InputError
from noc3d.traffic import MeshSpec

logger = logging.getLogger(__name__)

EPS = 1e-9

TILE_STYLES = ("legacy", "separated", "surround")
LAYER_KINDS = ("silicon", "bonding", "tim", "spreader")
TECHNOLOGIES = ("tsv", "monolithic")
CORNERS = ("sw", "se", "nw", "ne")


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise InputError(f"negative rectangle size {self}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def overlaps(self, other: "Rect") -> bool:
        """True when the intersection has positive area (shared edges don't count)."""
        return (min(self.x2, other.x2) - max(self.x, other.x) > EPS
                and min(self.y2, other.y2) - max(self.y, other.y) > EPS)

    def contains(self, other: "Rect") -> bool:
        return (other.x >= self.x - EPS and other.y >= self.y - EPS
                and other.x2 <= self.x2 + EPS and other.y2 <= self.y2 + EPS)

    def expand(self, d: float) -> "Rect":
        return Rect(self.x - d, self.y - d, self.w + 2 * d, self.h + 2 * d)

    def translate(self, dx: float, dy: float) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def subtract(self, other: "Rect") -> List["Rect"]:
        """self minus other as up to four disjoint rectangles."""
        if not self.overlaps(other):
            return [self]
        out = []
        ix1, ix2 = max(self.x, other.x), min(self.x2, other.x2)
        iy1, iy2 = max(self.y, other.y), min(self.y2, other.y2)
        if iy1 - self.y > EPS:
            out.append(Rect(self.x, self.y, self.w, iy1 - self.y))
        if self.y2 - iy2 > EPS:
            out.append(Rect(self.x, iy2, self.w, self.y2 - iy2))
        if ix1 - self.x > EPS:
            out.append(Rect(self.x, iy1, ix1 - self.x, iy2 - iy1))
        if self.x2 - ix2 > EPS:
            out.append(Rect(ix2, iy1, self.x2 - ix2, iy2 - iy1))
        return out


def subtract_all(rects: Iterable[Rect], holes: Iterable[Rect]) -> List[Rect]:
    out = list(rects)
    for hole in holes:
        out = [piece for r in out for piece in r.subtract(hole)]
    return out


@dataclass(frozen=True)
class Material:
    name: str
    thermal_resistivity: float  # m K / W
    volumetric_heat_capacity: float  # J / (m^3 K)

    def __post_init__(self):
        if not self.thermal_resistivity > 0:
            raise InputError(f"{self.name}: resistivity must be > 0")
        if not self.volumetric_heat_capacity > 0:
            raise InputError(f"{self.name}: heat capacity must be > 0")


# common compact-model defaults
SILICON = Material("silicon", 0.01, 1.75e6)
COPPER = Material("copper", 0.0025, 3.55e6)
TIM = Material("tim", 0.25, 4.0e6)


def composite_resistivity(region_area: float, tsv_area: float, fill_material: Material,
                          tsv_material: Material) -> float:
    """Area-weighted parallel resistivity of a region partly filled with TSV copper.

    R = A / ((A - A_tsv) / R_fill + A_tsv / R_tsv)
    """
    if not region_area > 0:
        raise InputError(f"region_area must be > 0, got {region_area}")
    if tsv_area < 0:
        raise InputError(f"tsv_area must be >= 0, got {tsv_area}")
    if tsv_area > region_area * (1 + 1e-12):
        raise InputError(f"tsv_area {tsv_area} exceeds region_area {region_area}")
    tsv_area = min(tsv_area, region_area)
    conductance = ((region_area - tsv_area) / fill_material.thermal_resistivity
                   + tsv_area / tsv_material.thermal_resistivity)
    return region_area / conductance


def composite_material(region_area: float, tsv_area: float, fill_material: Material,
                       tsv_material: Material) -> Material:
    frac = tsv_area / region_area
    heat_cap = ((1 - frac) * fill_material.volumetric_heat_capacity
                + frac * tsv_material.volumetric_heat_capacity)
    return Material(
        f"{fill_material.name}+{tsv_material.name}",
        composite_resistivity(region_area, tsv_area, fill_material, tsv_material),
        heat_cap,
    )


def tsv_count_for_utilization(region_area: float, utilization: float, unit_area: float) -> int:
    return round(utilization * region_area / unit_area)


@dataclass(frozen=True)
class ThermalTSV:
    rect: Rect
    koz: float

    @property
    def keep_out(self) -> Rect:
        return self.rect.expand(self.koz)


@dataclass(frozen=True)
class RouterTileLayout:
    style: str
    tile_size: Tuple[float, float]
    logic_rect: Rect
    tsv_rects: Tuple[Rect, ...]
    tsv_unit_area: float
    tsv_count: int
    thermal_tsvs: Tuple[ThermalTSV, ...] = ()

    @property
    def tile_rect(self) -> Rect:
        return Rect(0.0, 0.0, *self.tile_size)

    @property
    def tsv_region_area(self) -> float:
        return sum(r.area for r in self.tsv_rects)

    @property
    def tsv_copper_area(self) -> float:
        return self.tsv_count * self.tsv_unit_area

    @property
    def tsv_fraction(self) -> float:
        area = self.tsv_region_area
        return self.tsv_copper_area / area if area > 0 else 0.0

    def regions(self) -> List[Tuple[str, Rect]]:
        """Disjoint partition of the tile as (kind, rect) pairs."""
        ttsv = [t.rect for t in self.thermal_tsvs]
        out = [("logic", self.logic_rect)]
        out += [("tsv", r) for r in subtract_all(self.tsv_rects, ttsv)]
        out += [("ttsv", r) for r in ttsv]
        taken = [self.logic_rect, *self.tsv_rects, *ttsv]
        out += [("fill", r) for r in subtract_all([self.tile_rect], taken)]
        return out


def _pair(v) -> Tuple[float, float]:
    if isinstance(v, (int, float)):
        return (float(v), float(v))
    a, b = v
    return (float(a), float(b))


def build_tile(style: str, tile_size=(290.0, 290.0), logic_size=(220.0, 220.0),
               tsv_unit_size=(4.06, 4.06), tsv_count: int = 220,
               group_size=None) -> RouterTileLayout:
    """Build a router tile.

    surround   logic centred, TSV region is the ring around it
    separated  logic as a full-height block on the west side (same area as
               ``logic_size``), TSV region is the remaining east block
    legacy     logic centred, four TSV groups of ``group_size`` at the middle
               of each tile edge, the rest empty fill; no default geometry
    """
    style = style.lower()
    if style not in TILE_STYLES:
        raise InputError(f"unknown tile style {style!r}; expected one of {TILE_STYLES}")
    W, H = _pair(tile_size)
    lw, lh = _pair(logic_size)
    uw, uh = _pair(tsv_unit_size)
    if min(W, H, lw, lh, uw, uh) <= 0:
        raise InputError("tile, logic and TSV sizes must be > 0")
    if tsv_count < 0:
        raise InputError("tsv_count must be >= 0")
    if lw > W + EPS or lh > H + EPS:
        raise InputError(f"logic {lw}x{lh} does not fit in tile {W}x{H}")

    if style == "surround":
        logic = Rect((W - lw) / 2, (H - lh) / 2, lw, lh)
        tsv = tuple(r for r in Rect(0, 0, W, H).subtract(logic) if r.area > EPS)
    elif style == "separated":
        width = lw * lh / H
        logic = Rect(0.0, 0.0, width, H)
        tsv = (Rect(width, 0.0, W - width, H),) if W - width > EPS else ()
    else:
        if group_size is None:
            raise InputError("legacy style has no default geometry; give group_size")
        gw, gh = _pair(group_size)
        logic = Rect((W - lw) / 2, (H - lh) / 2, lw, lh)
        # west/east groups are gw wide, gh tall; north/south groups rotated
        tsv = (
            Rect(0.0, (H - gh) / 2, gw, gh),
            Rect(W - gw, (H - gh) / 2, gw, gh),
            Rect((W - gh) / 2, 0.0, gh, gw),
            Rect((W - gh) / 2, H - gw, gh, gw),
        )
        for r in tsv:
            if r.overlaps(logic) or not Rect(0, 0, W, H).contains(r):
                raise InputError(f"legacy TSV group {r} collides with logic or leaves the tile")
        for a in range(len(tsv)):
            for b in range(a + 1, len(tsv)):
                if tsv[a].overlaps(tsv[b]):
                    raise InputError("legacy TSV groups overlap")

    tile = RouterTileLayout(style, (W, H), logic, tsv, uw * uh, int(tsv_count))
    if tile.tsv_copper_area > tile.tsv_region_area * (1 + 1e-12):
        raise InputError(
            f"{tsv_count} TSVs ({tile.tsv_copper_area:.1f} um^2) do not fit in the "
            f"TSV region ({tile.tsv_region_area:.1f} um^2)"
        )
    return tile


def _corner_rect(corner: str, size: float, koz: float, W: float, H: float) -> Rect:
    x = koz if corner[1] == "w" else W - koz - size
    y = koz if corner[0] == "s" else H - koz - size
    return Rect(x, y, size, size)


def insert_thermal_tsvs(tile: RouterTileLayout, size: float = 15.0, koz: float = 10.0,
                        placement: Sequence = CORNERS) -> RouterTileLayout:
    """Add square copper thermal TSVs.

    ``placement`` items are corner names (sw, se, nw, ne), which put the
    keep-out box flush with that tile corner, or explicit (x, y) lower-left
    positions in um.
    """
    if not placement:
        return tile
    if size <= 0 or koz < 0:
        raise InputError("thermal TSV size must be > 0 and keep-out >= 0")
    W, H = tile.tile_size
    new = []
    for p in placement:
        if isinstance(p, str):
            c = p.lower()
            if c not in CORNERS:
                raise InputError(f"unknown corner {p!r}")
            rect = _corner_rect(c, size, koz, W, H)
        else:
            rect = Rect(float(p[0]), float(p[1]), size, size)
        t = ThermalTSV(rect, koz)
        if not tile.tile_rect.contains(rect):
            raise InputError(f"thermal TSV {rect} does not fit in the {W}x{H} tile")
        if t.keep_out.overlaps(tile.logic_rect):
            raise InputError(f"thermal TSV {rect} keep-out zone overlaps router logic")
        for other in (*tile.thermal_tsvs, *new):
            if other.rect.overlaps(rect):
                raise InputError(f"thermal TSV {rect} overlaps another thermal TSV")
        new.append(t)
    return replace(tile, thermal_tsvs=tile.thermal_tsvs + tuple(new))


@dataclass(frozen=True)
class Region:
    name: str
    kind: str
    rect: Rect
    router: Optional[Tuple[int, int]] = None  # (x, y) of the owning router slot


@dataclass(frozen=True)
class ChipFloorplan:
    width: float
    height: float
    regions: Tuple[Region, ...]
    tile: RouterTileLayout
    dims: Tuple[int, int]
    slot_size: Tuple[float, float]

    @property
    def area(self) -> float:
        return self.width * self.height

    def by_kind(self, kind: str) -> List[Region]:
        return [r for r in self.regions if r.kind == kind]


def tile_chip(tile: RouterTileLayout, mesh: MeshSpec, pe_spacer: float = 0.0) -> ChipFloorplan:
    """Lay out an X x Y array of router slots.

    Each slot is the tile scaled up (same aspect ratio) by ``pe_spacer`` um^2 of
    zero-power PE area, which fills the east and north margins of the slot.
    """
    if pe_spacer < 0:
        raise InputError("pe_spacer must be >= 0")
    X, Y, _ = mesh.dims
    W, H = tile.tile_size
    k = math.sqrt((W * H + pe_spacer) / (W * H))
    sw, sh = W * k, H * k
    if pe_spacer == 0:
        sw, sh = W, H
    regions = []
    for y in range(Y):
        for x in range(X):
            ox, oy = x * sw, y * sh
            counters: Dict[str, int] = {}
            for kind, r in tile.regions():
                n = counters.get(kind, 0)
                counters[kind] = n + 1
                name = f"router_{x}_{y}" if kind == "logic" else f"{kind}_{x}_{y}_{n}"
                regions.append(Region(name, kind, r.translate(ox, oy), (x, y)))
            if pe_spacer > 0:
                regions.append(Region(f"pe_{x}_{y}_0", "pe", Rect(ox + W, oy, sw - W, sh), (x, y)))
                regions.append(Region(f"pe_{x}_{y}_1", "pe", Rect(ox, oy + H, W, sh - H), (x, y)))
    return ChipFloorplan(X * sw, Y * sh, tuple(regions), tile, (X, Y), (sw, sh))


@dataclass(frozen=True)
class Layer:
    kind: str
    thickness: float  # um
    materials: Dict[str, Material]  # region kind -> material
    floorplan: ChipFloorplan
    tier: Optional[int] = None  # router z for silicon layers
    sublayers: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InputError(f"unknown layer kind {self.kind!r}")
        if not self.thickness > 0:
            raise InputError(f"layer thickness must be > 0, got {self.thickness}")
        if self.sublayers < 1:
            raise InputError("sublayers must be >= 1")

    def material_of(self, kind: str) -> Material:
        try:
            return self.materials[kind]
        except KeyError:
            raise InputError(f"{self.kind} layer has no material for region kind {kind!r}") from None


@dataclass(frozen=True)
class StackBoundary:
    ambient_temperature: float = 318.15  # K
    sink_convection_resistance: float = 0.1  # K/W

    def __post_init__(self):
        if not self.ambient_temperature > 0:
            raise InputError("ambient temperature must be > 0 K")
        if not self.sink_convection_resistance > 0:
            raise InputError("sink convection resistance must be > 0")


@dataclass(frozen=True)
class StackThickness:
    silicon: float = 100.0
    bonding: float = 20.0
    tim: float = 20.0
    spreader: float = 1000.0


@dataclass(frozen=True)
class ChipStack:
    technology: str
    layers: Tuple[Layer, ...]  # bottom to top
    boundary: StackBoundary
    mesh: MeshSpec

    @property
    def ambient_temperature(self) -> float:
        return self.boundary.ambient_temperature

    @property
    def sink_convection_resistance(self) -> float:
        return self.boundary.sink_convection_resistance

    @property
    def width(self) -> float:
        return self.layers[0].floorplan.width

    @property
    def height(self) -> float:
        return self.layers[0].floorplan.height

    def kinds(self) -> List[str]:
        return [layer.kind for layer in self.layers]

    def silicon_layers(self) -> List[Tuple[int, Layer]]:
        return [(i, layer) for i, layer in enumerate(self.layers) if layer.kind == "silicon"]

    def layer_of_tier(self, z: int) -> int:
        for i, layer in enumerate(self.layers):
            if layer.kind == "silicon" and layer.tier == z:
                return i
        raise InputError(f"no silicon layer for tier {z}")


def _layer_materials(kind: str, technology: str, tile: RouterTileLayout,
                     materials: Dict[str, Material]) -> Dict[str, Material]:
    si, cu, tim = materials["silicon"], materials["copper"], materials["tim"]
    if kind == "spreader":
        return dict.fromkeys(("logic", "tsv", "ttsv", "fill", "pe"), cu)
    if kind == "tim":
        return dict.fromkeys(("logic", "tsv", "ttsv", "fill", "pe"), tim)
    fill = si if kind == "silicon" else tim
    out = dict.fromkeys(("logic", "fill", "pe"), fill)
    if technology == "monolithic":
        out["tsv"] = fill
        out["ttsv"] = fill
    else:
        region = tile.tsv_region_area
        out["tsv"] = composite_material(region, tile.tsv_copper_area, fill, cu) if region > 0 else fill
        out["ttsv"] = cu
    return out


def build_stack(technology: str, num_layers: int,
                layer_grids: Union[ChipFloorplan, Sequence[ChipFloorplan]],
                thicknesses: StackThickness = StackThickness(),
                materials: Optional[Dict[str, Material]] = None,
                boundary: StackBoundary = StackBoundary(),
                mesh: Optional[MeshSpec] = None,
                sublayers: int = 1) -> ChipStack:
    """Assemble the layer stack, bottom die first, heat sink on top.

    TSV stacks interleave a bonding layer between consecutive dies. Monolithic
    stacks have no bonding layers and TSV/thermal-TSV footprints revert to the
    surrounding fill material. Both end with a TIM layer and a copper spreader
    coupled to ambient through the sink convection resistance.
    """
    technology = technology.lower()
    if technology not in TECHNOLOGIES:
        raise InputError(f"unknown technology {technology!r}; expected one of {TECHNOLOGIES}")
    if num_layers < 1:
        raise InputError("num_layers must be >= 1")
    grids = [layer_grids] * num_layers if isinstance(layer_grids, ChipFloorplan) else list(layer_grids)
    if len(grids) != num_layers:
        raise InputError(f"expected {num_layers} layer floorplans, got {len(grids)}")
    w0, h0 = grids[0].width, grids[0].height
    for g in grids:
        if abs(g.width - w0) > EPS or abs(g.height - h0) > EPS or g.dims != grids[0].dims:
            raise InputError("layer floorplans have inconsistent chip dimensions")
    mats = {"silicon": SILICON, "copper": COPPER, "tim": TIM}
    mats.update(materials or {})
    if mesh is None:
        X, Y = grids[0].dims
        mesh = MeshSpec((X, Y, num_layers))

    layers: List[Layer] = []
    for z, grid in enumerate(grids):
        if z > 0 and technology == "tsv":
            # bonding layer takes the footprint of the die below it
            layers.append(Layer("bonding", thicknesses.bonding,
                                _layer_materials("bonding", technology, grids[z - 1].tile, mats),
                                grids[z - 1], None, sublayers))
        layers.append(Layer("silicon", thicknesses.silicon,
                            _layer_materials("silicon", technology, grid.tile, mats), grid, z, sublayers))
    top = grids[-1]
    layers.append(Layer("tim", thicknesses.tim, _layer_materials("tim", technology, top.tile, mats), top, None, sublayers))
    layers.append(Layer("spreader", thicknesses.spreader,
                        _layer_materials("spreader", technology, top.tile, mats), top, None, sublayers))
    return ChipStack(technology, tuple(layers), boundary, mesh)


def write_floorplan(stack: ChipStack, path) -> None:
    """Layer-sectioned floorplan: ``name<TAB>width_m<TAB>height_m<TAB>left_m<TAB>bottom_m``."""
    lines = []
    for i, layer in enumerate(stack.layers):
        tier = "" if layer.tier is None else f" tier={layer.tier}"
        lines.append(f"# layer {i} {layer.kind} thickness_um={layer.thickness!r}{tier}")
        for reg in layer.floorplan.regions:
            r = reg.rect
            mat = layer.material_of(reg.kind)
            lines.append(
                f"{reg.name}\t{r.w * 1e-6:.9e}\t{r.h * 1e-6:.9e}\t{r.x * 1e-6:.9e}\t{r.y * 1e-6:.9e}"
                f"\t# {mat.name} {mat.thermal_resistivity:.6g}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_floorplan(path) -> Dict[int, List[Tuple[str, Rect]]]:
    """Parse a floorplan written by :func:`write_floorplan` back to um rectangles per layer."""
    out: Dict[int, List[Tuple[str, Rect]]] = {}
    current = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# layer"):
            current = int(line.split()[2])
            out[current] = []
            continue
        body = line.split("#", 1)[0].strip()
        parts = body.split("\t")
        if current is None or len(parts) != 5:
            raise InputError(f"{path}:{lineno}: malformed floorplan line")
        name = parts[0]
        w, h, x, y = (float(p) * 1e6 for p in parts[1:])
        out[current].append((name, Rect(x, y, w, h)))
    return out


__all__ = [
    "Rect",
    "Material",
    "SILICON",
    "COPPER",
    "TIM",
    "composite_resistivity",
    "composite_material",
    "tsv_count_for_utilization",
    "RouterTileLayout",
    "ThermalTSV",
    "build_tile",
    "insert_thermal_tsvs",
    "Region",
    "ChipFloorplan",
    "tile_chip",
    "Layer",
    "StackBoundary",
    "StackThickness",
    "ChipStack",
    "build_stack",
    "write_floorplan",
    "read_floorplan",
]
