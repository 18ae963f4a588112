"""Temperature-driven fault-rate acceleration and normalised MTTF.

Only ratios are reported: the prefactor and current-density term of the
Black-type law cancel whenever a rate is normalised to a reference temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from noc3d.common import Coord, InputError

BOLTZMANN_EV = 8.617333262e-5  # eV/K


@dataclass(frozen=True)
class Black:
    activation_energy: float  # eV
    prefactor: float = 1.0
    current_density_term: float = 1.0
    boltzmann: float = BOLTZMANN_EV

    def __post_init__(self):
        if not self.activation_energy > 0:
            raise InputError("activation_energy must be > 0")
        if not (self.prefactor > 0 and self.current_density_term > 0):
            raise InputError("prefactor and current_density_term must be > 0")

    def __call__(self, t: float) -> float:
        return self.prefactor * self.current_density_term * math.exp(-self.activation_energy / (self.boltzmann * t))


@dataclass(frozen=True)
class Hrd4:
    """Flat below ``threshold``, Arrhenius above it (continuous at the threshold)."""
    threshold: float = 343.15  # K
    above_threshold_ea: float = 1.0  # eV
    boltzmann: float = BOLTZMANN_EV

    def __post_init__(self):
        if not self.threshold > 0:
            raise InputError("threshold must be > 0 K")
        if not self.above_threshold_ea > 0:
            raise InputError("above_threshold_ea must be > 0")

    def __call__(self, t: float) -> float:
        return math.exp(-self.above_threshold_ea / (self.boltzmann * max(t, self.threshold)))


@dataclass(frozen=True)
class TableDriven:
    """User-supplied (K, rate) samples; log-rate interpolated linearly in T.

    Outside the sampled range the end segments are extended.
    """
    name: str
    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(r)) for t, r in self.points)
        if len(pts) < 2:
            raise InputError("TableDriven model needs at least two sample points")
        ts = [p[0] for p in pts]
        rs = [p[1] for p in pts]
        if any(r <= 0 for r in rs) or any(t <= 0 for t in ts):
            raise InputError("sample temperatures and rates must be > 0")
        if any(b <= a for a, b in zip(ts, ts[1:])) or any(b <= a for a, b in zip(rs, rs[1:])):
            raise InputError("sample points must be strictly increasing in temperature and rate")
        object.__setattr__(self, "points", pts)

    def __call__(self, t: float) -> float:
        ts = np.array([p[0] for p in self.points])
        lr = np.log([p[1] for p in self.points])
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        slope = (lr[k + 1] - lr[k]) / (ts[k + 1] - ts[k])
        return float(math.exp(lr[k] + slope * (t - ts[k])))


AccelerationModel = Union[Black, Hrd4, TableDriven]


def acceleration(model: AccelerationModel, t: float) -> float:
    if not t > 0:
        raise InputError(f"temperature must be > 0 K, got {t}")
    return model(t)


def normalized_rate(model: AccelerationModel, t: float, t_ref: float) -> float:
    if not (t > 0 and t_ref > 0):
        raise InputError("temperatures must be > 0 K")
    if isinstance(model, Black):
        # closed form; A and J^n cancel
        return math.exp(-model.activation_energy / model.boltzmann * (1.0 / t - 1.0 / t_ref))
    return acceleration(model, t) / acceleration(model, t_ref)


def fit_activation_energy(pairs: Sequence[Tuple[float, float]], t_ref: float, loss: str = "lad",
                          boltzmann: float = BOLTZMANN_EV) -> float:
    """Fit E_a to (temperature, normalised rate) pairs.

    ln(rate) = E_a / k_B * (1/t_ref - 1/t), a line through the origin.
    The default ``loss="lad"`` minimises absolute log deviations, so one bad
    sample cannot drag the estimate; ``loss="lsq"`` is ordinary least squares.
    """
    if len(pairs) < 2:
        raise InputError("need at least two (temperature, rate) pairs")
    t = np.array([p[0] for p in pairs], float)
    r = np.array([p[1] for p in pairs], float)
    if np.any(t <= 0) or np.any(r <= 0) or not t_ref > 0:
        raise InputError("temperatures and rates must be > 0")
    x = 1.0 / t_ref - 1.0 / t
    y = np.log(r)
    if len(np.unique(t)) < 2 or np.sum(x * x) < 1e-30:
        raise InputError("degenerate temperatures: need at least two distinct values away from t_ref")
    if loss == "lsq":
        slope = float(np.sum(x * y) / np.sum(x * x))
    elif loss == "lad":
        # weighted median of y/x with weights |x| minimises sum |y - s x|
        m = np.abs(x) > 0
        s, w = y[m] / x[m], np.abs(x[m])
        order = np.argsort(s)
        s, w = s[order], w[order]
        cw = np.cumsum(w)
        slope = float(s[np.searchsorted(cw, 0.5 * cw[-1])])
    else:
        raise InputError(f"unknown loss {loss!r}")
    return slope * boltzmann


@dataclass(frozen=True)
class ReliabilityEntry:
    router: Coord
    layer: int
    material: str
    temperature: float
    acceleration: float
    normalized_rate: float
    normalized_mttf: float


@dataclass
class ReliabilityMap:
    entries: List[ReliabilityEntry]
    reference_temperature: float
    models: Dict[str, AccelerationModel]

    def layer_mttf(self, material: Optional[str] = None) -> Dict[int, float]:
        """Mean normalised MTTF per tier z."""
        acc: Dict[int, List[float]] = {}
        for e in self.entries:
            if material is None or e.material == material:
                acc.setdefault(e.router[2], []).append(e.normalized_mttf)
        return {z: float(np.mean(v)) for z, v in sorted(acc.items())}


def mttf_map(temps, models: Mapping[str, AccelerationModel], t_ref: float,
             material_map: Optional[Mapping[str, str]] = None, default_material: str = "logic",
             statistic: str = "mean") -> ReliabilityMap:
    """Normalised rate and MTTF per region.

    ``temps`` is a sequence of RegionTemp (its ``kind`` is mapped to a material
    through ``material_map``) or a mapping ``{(coord, layer): kelvin}``.
    """
    if not t_ref > 0:
        raise InputError("reference temperature must be > 0 K")
    material_map = dict(material_map or {"logic": "logic", "tsv": "copper"})
    rows = []
    for item in (temps.items() if isinstance(temps, Mapping) else temps):
        if isinstance(temps, Mapping):
            (coord, layer), t = item
            kind = None
        else:
            coord, layer, kind = item.router, item.layer, item.kind
            t = item.mean if statistic == "mean" else item.max
        rows.append((tuple(coord), int(layer), kind, float(t)))
    if not rows:
        raise InputError("no temperatures given")
    entries = []
    for coord, layer, kind, t in rows:
        material = default_material if kind is None else material_map.get(kind)
        if material is None or material not in models:
            raise InputError(f"no reliability model for material {material!r} (region kind {kind!r})")
        model = models[material]
        rate = normalized_rate(model, t, t_ref)
        entries.append(ReliabilityEntry(coord, layer, material, t, acceleration(model, t), rate, 1.0 / rate))
    entries.sort(key=lambda e: (e.router[2], e.router[1], e.router[0], e.material))
    return ReliabilityMap(entries, t_ref, dict(models))


def defect_map(rel: ReliabilityMap, rate_threshold: float) -> List[ReliabilityEntry]:
    """Regions at or above ``rate_threshold``, highest rate first; ties by (x, y, z, material)."""
    if not rate_threshold > 0:
        raise InputError("rate_threshold must be > 0")
    hits = [e for e in rel.entries if e.normalized_rate >= rate_threshold]
    return sorted(hits, key=lambda e: (-e.normalized_rate, e.router, e.material))


RELIABILITY_HEADER = "x,y,z,layer,material,temp_k,norm_rate,norm_mttf"


def _row(e: ReliabilityEntry) -> str:
    x, y, z = e.router
    return (f"{x},{y},{z},{e.layer},{e.material},{e.temperature:.6f},"
            f"{e.normalized_rate:.9e},{e.normalized_mttf:.9e}")


def write_reliability_csv(rel: ReliabilityMap, path) -> None:
    lines = [RELIABILITY_HEADER, f"# reference_k={rel.reference_temperature!r}"]
    lines += [_row(e) for e in rel.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_defect_csv(defects: Sequence[ReliabilityEntry], path) -> None:
    lines = ["rank," + RELIABILITY_HEADER]
    lines += [f"{i},{_row(e)}" for i, e in enumerate(defects, 1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_reliability_csv(path) -> List[ReliabilityEntry]:
    out = []
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or rows[0].strip() != RELIABILITY_HEADER:
        raise InputError(f"{path}: expected header {RELIABILITY_HEADER!r}")
    for lineno, line in enumerate(rows[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            x, y, z, layer, mat, t, rate, mttf = line.split(",")
            out.append(ReliabilityEntry((int(x), int(y), int(z)), int(layer), mat, float(t),
                                        float("nan"), float(rate), float(mttf)))
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed line {line!r}") from None
    return out
