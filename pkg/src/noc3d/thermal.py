"""Compact thermal model of a layer stack.

The stack is cut into a rectilinear grid of cells (one or more slabs per
layer). Neighbouring cells are coupled by series half-cell conductances, the
top slab is tied to ambient through the sink convection resistance, and the
resulting SPD system ``G theta = P`` is solved for the temperature rise theta
above ambient.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from noc3d.common import Coord, InputError, SolverError
from noc3d.layout import ChipFloorplan, ChipStack
from noc3d.power import PowerMap

logger = logging.getLogger(__name__)

UM = 1e-6
DIRECT_MAX_CELLS = 10_000


class UnresolvedRegionWarning(RuntimeWarning):
    """A floorplan region does not line up with grid cells; its cells are mixed."""


@dataclass(frozen=True)
class _Footprint:
    """Cell overlaps of every region of one floorplan."""
    # region index -> (flat 2D cell indices, overlap areas in um^2)
    cells: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    unresolved: Tuple[str, ...]


@dataclass
class ThermalGrid:
    stack: ChipStack
    x_edges: np.ndarray  # um
    y_edges: np.ndarray  # um
    slab_layer: np.ndarray  # slab -> layer index
    slab_thickness: np.ndarray  # m
    conductivity: np.ndarray  # (nz, ny, nx) W/(m K), area-weighted where mixed
    heat_capacity: np.ndarray  # (nz, ny, nx) J/K per cell
    G: sp.csr_matrix  # includes the ambient coupling on the diagonal
    g_ambient: np.ndarray  # (n,) W/K from each cell straight to ambient
    footprints: Dict[int, _Footprint]  # id(floorplan) -> overlaps

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.conductivity.shape

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def ambient(self) -> float:
        return self.stack.ambient_temperature

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x_edges) * UM

    @property
    def dy(self) -> np.ndarray:
        return np.diff(self.y_edges) * UM

    def slabs_of_layer(self, layer: int) -> np.ndarray:
        return np.flatnonzero(self.slab_layer == layer)

    def region_cells(self, layer: int, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """Flat 3D cell indices and weights (overlap volume, m^3) of a region in a layer."""
        fp = self.stack.layers[layer].floorplan
        for k, reg in enumerate(fp.regions):
            if reg.name == name:
                return self._expand(layer, *self.footprints[id(fp)].cells[k])
        raise InputError(f"unknown region {name!r} in layer {layer}")

    def _expand(self, layer: int, flat2d: np.ndarray, area_um2: np.ndarray):
        nz, ny, nx = self.shape
        slabs = self.slabs_of_layer(layer)
        idx = (slabs[:, None] * (ny * nx) + flat2d[None, :]).ravel()
        w = (self.slab_thickness[slabs][:, None] * (area_um2[None, :] * UM * UM)).ravel()
        return idx, w

    def power_vector(self, power: PowerMap) -> np.ndarray:
        """Spread each router's power over its logic cells, proportional to volume."""
        p = np.zeros(self.n_cells)
        for (x, y, z), (s, d) in power.per_router.items():
            try:
                layer = self.stack.layer_of_tier(z)
            except InputError:
                raise InputError(f"power given for router {(x, y, z)} but the stack has no tier {z}") from None
            idx, w = self.region_cells(layer, f"router_{x}_{y}")
            if w.sum() <= 0:
                raise InputError(f"router {(x, y, z)} maps to no cells")
            np.add.at(p, idx, (s + d) * w / w.sum())
        return p


def _grid_lines(extent: float, nominal: float, edges: Sequence[float], align: bool) -> np.ndarray:
    n = max(1, int(round(extent / nominal)))
    uniform = np.linspace(0.0, extent, n + 1)
    if not align:
        return uniform
    cand = np.sort(np.concatenate([[0.0, extent], np.asarray(edges, float)]))
    cand = cand[(cand >= -1e-9) & (cand <= extent + 1e-9)]
    fixed = [0.0]
    for v in cand:
        if v - fixed[-1] > 1e-9:
            fixed.append(float(v))
    fixed[-1] = extent
    fixed = np.asarray(fixed)
    keep = [u for u in uniform if np.min(np.abs(fixed - u)) > 0.3 * (extent / n)]
    return np.sort(np.concatenate([fixed, keep]))


def _overlap_1d(edges: np.ndarray, a: float, b: float) -> Tuple[int, np.ndarray]:
    lo = max(int(np.searchsorted(edges, a, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(edges, b, side="left")), len(edges) - 1)
    seg = np.minimum(edges[lo + 1:hi + 1], b) - np.maximum(edges[lo:hi], a)
    return lo, np.clip(seg, 0.0, None)


def _footprint(fp: ChipFloorplan, xe: np.ndarray, ye: np.ndarray) -> _Footprint:
    nx = len(xe) - 1
    dxe, dye = np.diff(xe), np.diff(ye)
    cells, unresolved = [], []
    for reg in fp.regions:
        r = reg.rect
        i0, ox = _overlap_1d(xe, r.x, r.x2)
        j0, oy = _overlap_1d(ye, r.y, r.y2)
        area = np.outer(oy, ox)
        jj, ii = np.nonzero(area > 1e-12)
        a = area[jj, ii]
        flat = (jj + j0) * nx + (ii + i0)
        cells.append((flat, a))
        full = dye[jj + j0] * dxe[ii + i0]
        if len(a) and np.any(a < full * (1 - 1e-9)):
            unresolved.append(reg.name)
    return _Footprint(tuple(cells), tuple(unresolved))


def discretize(stack: ChipStack, resolution: int = 8, align: bool = True) -> ThermalGrid:
    """Build the conductance network of ``stack``.

    ``resolution`` is the nominal number of cells along a router tile edge. With
    ``align`` (default) every region edge is also a grid line, so each cell holds
    a single material; otherwise cells straddling region boundaries get the
    area-weighted conductivity of their contents and a warning is issued.
    """
    if resolution < 1:
        raise InputError("resolution must be >= 1")
    layers = stack.layers
    fps = {id(layer.floorplan): layer.floorplan for layer in layers}
    tile_w, tile_h = layers[0].floorplan.tile.tile_size
    W, H = stack.width, stack.height
    xs = [v for fp in fps.values() for reg in fp.regions for v in (reg.rect.x, reg.rect.x2)]
    ys = [v for fp in fps.values() for reg in fp.regions for v in (reg.rect.y, reg.rect.y2)]
    xe = _grid_lines(W, tile_w / resolution, xs, align)
    ye = _grid_lines(H, tile_h / resolution, ys, align)
    nx, ny = len(xe) - 1, len(ye) - 1
    cell_area = np.outer(np.diff(ye), np.diff(xe))  # um^2

    footprints = {key: _footprint(fp, xe, ye) for key, fp in fps.items()}
    unresolved = sorted({n for f in footprints.values() for n in f.unresolved})
    if unresolved:
        warnings.warn(
            f"{len(unresolved)} regions are not resolved by the grid (e.g. {unresolved[0]}); "
            "using area-weighted material mixing",
            UnresolvedRegionWarning, stacklevel=2,
        )

    slab_layer, slab_t = [], []
    k_layers, c_layers = [], []
    for li, layer in enumerate(layers):
        fp = layer.floorplan
        cond = np.zeros(ny * nx)
        cap = np.zeros(ny * nx)
        cover = np.zeros(ny * nx)
        for reg, (flat, a) in zip(fp.regions, footprints[id(fp)].cells):
            m = layer.material_of(reg.kind)
            np.add.at(cond, flat, a / m.thermal_resistivity)
            np.add.at(cap, flat, a * m.volumetric_heat_capacity)
            np.add.at(cover, flat, a)
        if not np.allclose(cover, cell_area.ravel(), rtol=1e-9, atol=1e-9):
            raise InputError(f"layer {li} floorplan does not tile the chip exactly")
        t = layer.thickness * UM / layer.sublayers
        for _ in range(layer.sublayers):
            slab_layer.append(li)
            slab_t.append(t)
            k_layers.append((cond / cover).reshape(ny, nx))
            c_layers.append((cap / cover).reshape(ny, nx))

    k = np.stack(k_layers)
    dz = np.asarray(slab_t)
    dx, dy = np.diff(xe) * UM, np.diff(ye) * UM
    nz = len(dz)
    heat_cap = np.stack(c_layers) * dz[:, None, None] * (dy[:, None] * dx[None, :])[None]

    idx = np.arange(nz * ny * nx).reshape(nz, ny, nx)
    rows, cols, vals = [], [], []

    # x links
    half = dx[None, None, :] / (2 * k)
    area = dz[:, None, None] * dy[None, :, None]
    g = (area / (half[:, :, :-1] + half[:, :, 1:])).ravel()
    rows.append(idx[:, :, :-1].ravel()); cols.append(idx[:, :, 1:].ravel()); vals.append(g)
    # y links
    half = dy[None, :, None] / (2 * k)
    area = dz[:, None, None] * dx[None, None, :]
    g = (area / (half[:, :-1, :] + half[:, 1:, :])).ravel()
    rows.append(idx[:, :-1, :].ravel()); cols.append(idx[:, 1:, :].ravel()); vals.append(g)
    # z links
    half = dz[:, None, None] / (2 * k)
    area = (dy[:, None] * dx[None, :])[None]
    g = (area / (half[:-1] + half[1:])).ravel()
    rows.append(idx[:-1].ravel()); cols.append(idx[1:].ravel()); vals.append(g)

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    n = nz * ny * nx

    # top slab -> ambient through half a slab plus its share of the sink resistance
    chip_area = W * H * UM * UM
    top_area = (dy[:, None] * dx[None, :]).ravel()
    r_top = dz[-1] / (2 * k[-1].ravel() * top_area) + stack.sink_convection_resistance * chip_area / top_area
    g_amb = np.zeros(n)
    g_amb[idx[-1].ravel()] = 1.0 / r_top

    diag = np.bincount(r, weights=v, minlength=n) + np.bincount(c, weights=v, minlength=n) + g_amb
    G = sp.coo_matrix(
        (np.concatenate([-v, -v, diag]), (np.concatenate([r, c, np.arange(n)]), np.concatenate([c, r, np.arange(n)]))),
        shape=(n, n),
    ).tocsr()
    G.sort_indices()
    return ThermalGrid(stack, xe, ye, np.asarray(slab_layer), dz, k, heat_cap, G, g_amb, footprints)


@dataclass
class SolveInfo:
    method: str
    iterations: int
    relative_residual: float


def pcg(A: sp.csr_matrix, b: np.ndarray, rtol: float = 1e-8, maxiter: Optional[int] = None,
        x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned conjugate gradients. Returns (x, iterations, relative residual)."""
    n = len(b)
    maxiter = maxiter or 50 * n
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError(f"non-positive diagonal entry (min {diag.min():.3e}); matrix is not SPD")
    dinv = 1.0 / diag
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0, 0.0
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    if res <= rtol:
        return x, 0, res
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(f"p'Ap = {pAp:.3e} at iteration {it}; matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            true_res = np.linalg.norm(b - A @ x) / bnorm
            return x, it, true_res
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not converge in {maxiter} iterations (relative residual {res:.3e})")


def _direct(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError) as e:
            raise SolverError(f"direct solve failed: {e}") from None
    if not np.all(np.isfinite(x)):
        raise SolverError("direct solve produced non-finite values; matrix is singular")
    return np.atleast_1d(x)


def solve_linear(A: sp.csr_matrix, b: np.ndarray, method: str = "auto", rtol: float = 1e-8,
                 x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SolveInfo]:
    if method == "auto":
        method = "direct" if len(b) <= DIRECT_MAX_CELLS else "cg"
    if method == "direct":
        x = _direct(A, b)
        bnorm = np.linalg.norm(b)
        res = np.linalg.norm(b - A @ x) / bnorm if bnorm > 0 else 0.0
        return x, SolveInfo("direct", 0, res)
    if method == "cg":
        x, it, res = pcg(A, b, rtol=rtol, x0=x0)
        return x, SolveInfo("cg", it, res)
    raise InputError(f"unknown solver method {method!r}")


@dataclass
class TemperatureField:
    grid: ThermalGrid
    temps: np.ndarray  # (n,) K
    info: Optional[SolveInfo] = None

    @property
    def ambient(self) -> float:
        return self.grid.ambient

    @property
    def rise(self) -> np.ndarray:
        return self.temps - self.ambient

    def as_array(self) -> np.ndarray:
        return self.temps.reshape(self.grid.shape)

    def layer_map(self, layer: int) -> np.ndarray:
        """(ny, nx) temperatures of a layer, volume-averaged over its slabs."""
        slabs = self.grid.slabs_of_layer(layer)
        t = self.grid.slab_thickness[slabs]
        return np.tensordot(t / t.sum(), self.as_array()[slabs], axes=1)

    def heat_to_ambient(self) -> float:
        return float(self.grid.g_ambient @ self.rise)

    def region_stats(self, layer: int, name: str) -> Tuple[float, float]:
        idx, w = self.grid.region_cells(layer, name)
        vals = self.temps[idx]
        return float(np.sum(vals * w) / np.sum(w)), float(vals.max())


def solve_steady(grid: ThermalGrid, power, method: str = "auto", rtol: float = 1e-8) -> TemperatureField:
    """Steady temperatures for a PowerMap (or a raw per-cell power vector in W)."""
    p = grid.power_vector(power) if isinstance(power, PowerMap) else np.asarray(power, float)
    if p.shape != (grid.n_cells,):
        raise InputError(f"power vector has shape {p.shape}, expected ({grid.n_cells},)")
    theta, info = solve_linear(grid.G, p, method, rtol)
    logger.debug("steady solve: %s, %d iterations, residual %.2e", info.method, info.iterations,
                 info.relative_residual)
    return TemperatureField(grid, grid.ambient + theta, info)


def solve_transient(grid: ThermalGrid, power_trace: Sequence, dt: float,
                    t_init: Optional[TemperatureField] = None) -> List[TemperatureField]:
    """Backward-Euler steps ``C (T' - T)/dt + G T' = P``, one per power_trace entry."""
    if not dt > 0:
        raise InputError("dt must be > 0")
    if not power_trace:
        raise InputError("power trace is empty")
    c = grid.heat_capacity.ravel() / dt
    lhs = (grid.G + sp.diags(c)).tocsc()
    try:
        step = spla.factorized(lhs)
    except RuntimeError as e:
        raise SolverError(f"factorisation failed: {e}") from None
    theta = np.zeros(grid.n_cells) if t_init is None else t_init.temps - grid.ambient
    out = []
    for entry in power_trace:
        p = grid.power_vector(entry) if isinstance(entry, PowerMap) else np.asarray(entry, float)
        theta = step(c * theta + p)
        if not np.all(np.isfinite(theta)):
            raise SolverError("transient step produced non-finite values")
        out.append(TemperatureField(grid, grid.ambient + theta, SolveInfo("transient", 1, 0.0)))
    return out


@dataclass(frozen=True)
class RegionTemp:
    router: Coord  # (x, y, z)
    layer: int  # stack layer index
    kind: str
    mean: float
    max: float


def region_temps(field: TemperatureField, stack: Optional[ChipStack] = None,
                 kind: str = "logic") -> List[RegionTemp]:
    """Area-weighted mean and max temperature per router for regions of ``kind``.

    Regions split into several rectangles (e.g. a TSV ring) are merged per router.
    """
    grid = field.grid
    stack = stack or grid.stack
    if stack is not grid.stack:
        raise InputError("temperature field was not produced from this stack")
    out = []
    for li, layer in stack.silicon_layers():
        fp = layer.floorplan
        fpc = grid.footprints[id(fp)]
        groups: Dict[Tuple[int, int], List[int]] = {}
        for k, reg in enumerate(fp.regions):
            if reg.kind == kind and reg.router is not None:
                groups.setdefault(reg.router, []).append(k)
        for (x, y) in sorted(groups, key=lambda c: (c[1], c[0])):
            parts = [grid._expand(li, *fpc.cells[k]) for k in groups[(x, y)]]
            idx = np.concatenate([p[0] for p in parts])
            w = np.concatenate([p[1] for p in parts])
            vals = field.temps[idx]
            out.append(RegionTemp((x, y, layer.tier), li, kind, float(np.sum(vals * w) / np.sum(w)),
                                  float(vals.max())))
    return out


def layer_means(field: TemperatureField, kind: str = "logic") -> Dict[int, float]:
    """Mean router temperature per tier z."""
    acc: Dict[int, List[float]] = {}
    for rt in region_temps(field, kind=kind):
        acc.setdefault(rt.router[2], []).append(rt.mean)
    return {z: float(np.mean(v)) for z, v in sorted(acc.items())}


def write_layer_csvs(field: TemperatureField, out_dir, prefix: str = "temperature") -> List[Path]:
    """One ``layer,x,y,z,temp_k`` CSV per stack layer; x/y are cell indices, z the slab within the layer."""
    out_dir = Path(out_dir)
    grid = field.grid
    arr = field.as_array()
    paths = []
    nz, ny, nx = grid.shape
    for li in range(len(grid.stack.layers)):
        lines = ["layer,x,y,z,temp_k"]
        for sub, s in enumerate(grid.slabs_of_layer(li)):
            for j in range(ny):
                row = arr[s, j]
                lines.extend(f"{li},{i},{j},{sub},{row[i]:.6f}" for i in range(nx))
        p = out_dir / f"{prefix}_layer{li}.csv"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(p)
    return paths


ROUTER_HEADER = "x,y,z,layer,mean_k,max_k"


def write_router_csv(temps: Sequence[RegionTemp], path) -> None:
    lines = [ROUTER_HEADER]
    for rt in sorted(temps, key=lambda t: (t.router[2], t.router[1], t.router[0])):
        x, y, z = rt.router
        lines.append(f"{x},{y},{z},{rt.layer},{rt.mean:.6f},{rt.max:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_router_csv(path, kind: str = "logic") -> List[RegionTemp]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or rows[0].strip() != ROUTER_HEADER:
        raise InputError(f"{path}: expected header {ROUTER_HEADER!r}")
    out = []
    for lineno, line in enumerate(rows[1:], 2):
        if not line.strip():
            continue
        try:
            x, y, z, layer, mean, mx = line.split(",")
            out.append(RegionTemp((int(x), int(y), int(z)), int(layer), kind, float(mean), float(mx)))
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed line {line!r}") from None
    return out


def read_layer_csv(path) -> np.ndarray:
    """Load a per-layer temperature CSV back into a (ny, nx) array (first slab)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    data = data[data[:, 3] == 0]
    nx = int(data[:, 1].max()) + 1
    ny = int(data[:, 2].max()) + 1
    out = np.full((ny, nx), np.nan)
    out[data[:, 2].astype(int), data[:, 1].astype(int)] = data[:, 4]
    return out
