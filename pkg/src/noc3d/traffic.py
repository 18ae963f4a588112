"""Per-router traffic volumes for a 3D mesh.

Synthetic patterns are routed with deterministic XYZ dimension-order routing and
every router a flit passes through (source and destination included) is
charged the full packet size. External traces are read from a small CSV format:

    x,y,z,bits
    # duration_s=2.8232e-06 voltage=1.1 frequency=500000000.0
    0,0,0,31360
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from noc3d.common import Coord, InputError, OperatingPoint, TraceParseError

logger = logging.getLogger(__name__)

TRACE_HEADER = "x,y,z,bits"

PATTERN_KINDS = ("uniform", "transpose", "matrix", "hotspot")


@dataclass(frozen=True)
class MeshSpec:
    dims: Coord
    flit_width: int = 32
    operating_point: OperatingPoint = OperatingPoint(1.1, 500e6)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise InputError(f"mesh dims must be three integers >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.flit_width < 1:
            raise InputError(f"flit_width must be >= 1, got {self.flit_width}")

    @property
    def num_routers(self) -> int:
        X, Y, Z = self.dims
        return X * Y * Z

    def routers(self) -> List[Coord]:
        """All router coordinates, x fastest then y then z."""
        X, Y, Z = self.dims
        return [(x, y, z) for z in range(Z) for y in range(Y) for x in range(X)]

    def contains(self, c: Sequence[int]) -> bool:
        return len(c) == 3 and all(0 <= v < d for v, d in zip(c, self.dims))

    def check(self, c: Sequence[int]) -> Coord:
        if not self.contains(c):
            raise InputError(f"coordinate {tuple(c)} outside mesh {self.dims}")
        return tuple(int(v) for v in c)


# Destination permutations. Each takes (coord, dims) and returns a coord.
def transpose_reverse(c: Coord, dims: Coord) -> Coord:
    """(x, y, z) -> (z, y, x)."""
    x, y, z = c
    return (z, y, x)


def transpose_antidiagonal(c: Coord, dims: Coord) -> Coord:
    """(x, y, z) -> (Z-1-z, Y-1-y, X-1-x)."""
    x, y, z = c
    X, Y, Z = dims
    return (Z - 1 - z, Y - 1 - y, X - 1 - x)


def matrix_swap_xy(c: Coord, dims: Coord) -> Coord:
    """(x, y, z) -> (y, x, z)."""
    x, y, z = c
    return (y, x, z)


PERMUTATIONS: Dict[str, Callable[[Coord, Coord], Coord]] = {
    "reverse": transpose_reverse,
    "antidiagonal": transpose_antidiagonal,
    "swap_xy": matrix_swap_xy,
}

DEFAULT_PERMUTATION = {"transpose": "reverse", "matrix": "swap_xy"}


@dataclass(frozen=True)
class SyntheticPattern:
    kind: str
    packets_per_source: int = 10
    flits_per_packet: int = 10
    hotspot_nodes: Sequence[Coord] = ()
    hotspot_fraction: float = 0.0
    permutation: Optional[str] = None  # transpose/matrix only
    seed: Optional[int] = None
    name: Optional[str] = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in PATTERN_KINDS:
            raise InputError(f"unknown pattern kind {self.kind!r}; expected one of {PATTERN_KINDS}")
        if self.packets_per_source < 1 or self.flits_per_packet < 1:
            raise InputError("packets_per_source and flits_per_packet must be >= 1")
        object.__setattr__(self, "hotspot_nodes", tuple(tuple(int(v) for v in n) for n in self.hotspot_nodes))
        if kind == "hotspot":
            if not self.hotspot_nodes:
                raise InputError("hotspot pattern needs at least one hotspot node")
            if not 0 < self.hotspot_fraction < 1:
                raise InputError(f"hotspot_fraction must be in (0, 1), got {self.hotspot_fraction}")
            if self.hotspot_fraction * len(self.hotspot_nodes) >= 1:
                raise InputError("hotspot_fraction * number of hotspot nodes must be < 1")
            if len(set(self.hotspot_nodes)) != len(self.hotspot_nodes):
                raise InputError("duplicate hotspot nodes")
        if kind in ("transpose", "matrix"):
            perm = self.permutation or DEFAULT_PERMUTATION[kind]
            if perm not in PERMUTATIONS:
                raise InputError(f"unknown permutation {perm!r}")
            object.__setattr__(self, "permutation", perm)

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass
class TrafficSummary:
    benchmark_name: str
    per_router_bits: Dict[Coord, int]
    duration: float
    source_operating_point: OperatingPoint
    dims: Optional[Coord] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise InputError(f"duration must be > 0, got {self.duration}")
        for c, n in self.per_router_bits.items():
            if n < 0:
                raise InputError(f"negative bit count {n} at {c}")
            if self.dims is not None and not all(0 <= v < d for v, d in zip(c, self.dims)):
                raise InputError(f"coordinate {c} outside mesh {self.dims}")

    @property
    def total_bits(self) -> int:
        return sum(self.per_router_bits.values())


def route_xyz(src: Sequence[int], dst: Sequence[int], mesh: MeshSpec) -> List[Coord]:
    """Dimension-order path from src to dst, inclusive of both ends."""
    cur = list(mesh.check(src))
    dst = mesh.check(dst)
    path = [tuple(cur)]
    for axis in range(3):
        step = 1 if dst[axis] > cur[axis] else -1
        while cur[axis] != dst[axis]:
            cur[axis] += step
            path.append(tuple(cur))
    return path


def _uniform_destinations(n_packets: int, nodes: List[Coord], rng: np.random.Generator) -> List[Coord]:
    # Full rounds over every node, then a without-replacement draw for the remainder,
    # so per-pair counts differ by at most one.
    rounds, rem = divmod(n_packets, len(nodes))
    out = nodes * rounds
    if rem:
        pick = rng.choice(len(nodes), size=rem, replace=False)
        out.extend(nodes[i] for i in sorted(pick))
    return out


def _pair_counts(pattern: SyntheticPattern, mesh: MeshSpec) -> Counter:
    nodes = mesh.routers()
    pps = pattern.packets_per_source
    pairs: Counter = Counter()

    if pattern.kind in ("transpose", "matrix"):
        perm = PERMUTATIONS[pattern.permutation]
        for src in nodes:
            dst = perm(src, mesh.dims)
            if not mesh.contains(dst):
                raise InputError(
                    f"{pattern.kind} permutation {pattern.permutation!r} maps {src} to {dst}, "
                    f"outside mesh {mesh.dims}"
                )
            pairs[(src, tuple(dst))] += pps
        return pairs

    if pattern.seed is None:
        raise InputError(f"{pattern.kind} pattern needs a seed")
    rng = np.random.default_rng(pattern.seed)

    if pattern.kind == "uniform":
        for src in nodes:
            for dst in _uniform_destinations(pps, nodes, rng):
                pairs[(src, dst)] += 1
        return pairs

    # hotspot
    hot = [mesh.check(h) for h in pattern.hotspot_nodes]
    total = len(nodes) * pps
    per_hot = round(pattern.hotspot_fraction * total)
    if not math.isclose(per_hot, pattern.hotspot_fraction * total, rel_tol=0, abs_tol=1e-9):
        logger.warning(
            "hotspot fraction %.4g of %d packets is not integral; using %d packets per hotspot",
            pattern.hotspot_fraction, total, per_hot,
        )
    rest = [n for n in nodes if n not in set(hot)]
    n_rest = total - per_hot * len(hot)
    if n_rest and not rest:
        raise InputError("every router is a hotspot; no destinations left for background traffic")
    dests = [h for h in hot for _ in range(per_hot)]
    dests += _uniform_destinations(n_rest, rest, rng) if n_rest else []
    order = rng.permutation(total)
    for slot, k in enumerate(order):
        src = nodes[slot // pps]
        pairs[(src, dests[k])] += 1
    return pairs


def gen_synthetic(pattern: SyntheticPattern, mesh: MeshSpec) -> TrafficSummary:
    """Route every packet of ``pattern`` and count the bits seen by each router.

    Duration assumes ideal injection of one flit per cycle with no congestion.
    """
    bits_per_packet = pattern.flits_per_packet * mesh.flit_width
    counts = dict.fromkeys(mesh.routers(), 0)
    for (src, dst), n in sorted(_pair_counts(pattern, mesh).items()):
        for hop in route_xyz(src, dst, mesh):
            counts[hop] += n * bits_per_packet
    op = mesh.operating_point
    cycles = pattern.packets_per_source * pattern.flits_per_packet
    return TrafficSummary(pattern.label, counts, cycles / op.frequency, op, mesh.dims)


def destination_counts(pattern: SyntheticPattern, mesh: MeshSpec) -> Counter:
    """Number of packets addressed to each router."""
    out: Counter = Counter()
    for (_, dst), n in _pair_counts(pattern, mesh).items():
        out[dst] += n
    return out


def _parse_meta(text: str) -> Dict[str, str]:
    meta = {}
    for tok in text.split():
        if "=" not in tok:
            raise ValueError(f"bad metadata token {tok!r}")
        k, v = tok.split("=", 1)
        meta[k] = v
    return meta


def ingest_trace(path, mesh: MeshSpec, benchmark_name: Optional[str] = None) -> TrafficSummary:
    """Read a trace file; duplicate coordinates are summed, missing routers get 0."""
    path = Path(path)
    counts = dict.fromkeys(mesh.routers(), 0)
    meta = None
    seen_header = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if meta is not None:
                    raise TraceParseError(path, lineno, "duplicate metadata line")
                try:
                    meta = _parse_meta(line[1:])
                except ValueError as e:
                    raise TraceParseError(path, lineno, str(e)) from None
                continue
            if not seen_header:
                if line.replace(" ", "") != TRACE_HEADER:
                    raise TraceParseError(path, lineno, f"expected header {TRACE_HEADER!r}")
                seen_header = True
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) != 4:
                    raise ValueError(f"expected 4 fields, got {len(parts)}")
                x, y, z, n = (int(p) for p in parts)
                if n < 0:
                    raise ValueError("negative bit count")
            except ValueError as e:
                raise TraceParseError(path, lineno, f"malformed line {line!r}: {e}") from None
            counts[mesh.check((x, y, z))] += n
    if not seen_header:
        raise TraceParseError(path, 1, f"missing header {TRACE_HEADER!r}")
    if meta is None or "duration_s" not in meta:
        raise TraceParseError(path, 1, "missing '# duration_s=...' metadata line")
    try:
        duration = float(meta["duration_s"])
        op = OperatingPoint(
            float(meta.get("voltage", mesh.operating_point.voltage)),
            float(meta.get("frequency", mesh.operating_point.frequency)),
        )
    except ValueError as e:
        raise TraceParseError(path, 1, f"bad metadata: {e}") from None
    name = benchmark_name or meta.get("benchmark") or path.stem
    return TrafficSummary(name, counts, duration, op, mesh.dims)


def write_trace(summary: TrafficSummary, path) -> None:
    op = summary.source_operating_point
    lines = [
        TRACE_HEADER,
        f"# duration_s={summary.duration!r} voltage={op.voltage!r} frequency={op.frequency!r} "
        f"benchmark={'_'.join(summary.benchmark_name.split())}",
    ]
    for (x, y, z), n in sorted(summary.per_router_bits.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0])):
        lines.append(f"{x},{y},{z},{n}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


__all__ = [
    "MeshSpec",
    "SyntheticPattern",
    "TrafficSummary",
    "route_xyz",
    "gen_synthetic",
    "ingest_trace",
    "write_trace",
    "destination_counts",
    "PERMUTATIONS",
]
