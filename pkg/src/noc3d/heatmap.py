"""Deterministic SVG heatmaps of 2D grids (one file per layer)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

# piecewise-linear colour ramps, stops at evenly spaced positions in [0, 1]
PALETTES = {
    "thermal": ["#000080", "#0000ff", "#00ffff", "#ffff00", "#ff0000", "#800000"],
    "gray": ["#000000", "#ffffff"],
    "diverging": ["#2166ac", "#f7f7f7", "#b2182b"],
}

CANVAS = 480  # px, longest side of the map
LEGEND_W = 70


def _hex_to_rgb(h: str) -> Tuple[int, int, int]:
    return tuple(int(h[i:i + 2], 16) for i in (1, 3, 5))


def ramp_color(pos: float, palette: str = "thermal") -> str:
    """Colour at ``pos`` in [0, 1] along a named ramp."""
    try:
        stops = PALETTES[palette]
    except KeyError:
        raise ValueError(f"unknown palette {palette!r}; choose from {sorted(PALETTES)}") from None
    pos = min(max(float(pos), 0.0), 1.0)
    seg = pos * (len(stops) - 1)
    k = min(int(seg), len(stops) - 2)
    f = seg - k
    a, b = _hex_to_rgb(stops[k]), _hex_to_rgb(stops[k + 1])
    rgb = [round(ca + (cb - ca) * f) for ca, cb in zip(a, b)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def emit_heatmap(values, out, palette: str = "thermal", title: str = "",
                 x_edges: Optional[Sequence[float]] = None, y_edges: Optional[Sequence[float]] = None,
                 unit: str = "K", vmin: Optional[float] = None, vmax: Optional[float] = None) -> Path:
    """Write ``values`` (ny, nx; row 0 at the bottom) as an SVG map with a min/max legend.

    Cell geometry follows ``x_edges``/``y_edges`` when given, otherwise unit squares.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.size == 0:
        raise ValueError("heatmap needs a non-empty 2D grid")
    ny, nx = v.shape
    xe = np.arange(nx + 1, dtype=float) if x_edges is None else np.asarray(x_edges, float)
    ye = np.arange(ny + 1, dtype=float) if y_edges is None else np.asarray(y_edges, float)
    if len(xe) != nx + 1 or len(ye) != ny + 1:
        raise ValueError("edge arrays must have one more entry than the grid")
    lo = float(np.nanmin(v)) if vmin is None else vmin
    hi = float(np.nanmax(v)) if vmax is None else vmax
    span = hi - lo
    scale = CANVAS / max(xe[-1] - xe[0], ye[-1] - ye[0])
    w = (xe[-1] - xe[0]) * scale
    h = (ye[-1] - ye[0]) * scale
    top = 24

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + LEGEND_W + 20:.0f}" '
        f'height="{h + top + 10:.0f}" font-family="sans-serif" font-size="11">',
        f'<text x="0" y="14">{title}</text>',
        f'<g id="map" transform="translate(0,{top})" shape-rendering="crispEdges">',
    ]
    for j in range(ny):
        y0 = (ye[-1] - ye[j + 1]) * scale  # flip so row 0 is at the bottom
        hh = (ye[j + 1] - ye[j]) * scale
        for i in range(nx):
            val = v[j, i]
            pos = 0.0 if span <= 0 else (val - lo) / span
            parts.append(
                f'<rect x="{(xe[i] - xe[0]) * scale:.3f}" y="{y0:.3f}" width="{(xe[i + 1] - xe[i]) * scale:.3f}" '
                f'height="{hh:.3f}" fill="{ramp_color(pos, palette)}"><title>{val:.4f}</title></rect>'
            )
    parts.append("</g>")

    lx = w + 20
    n_stops = 32
    bar_h = h
    parts.append(f'<g id="legend" transform="translate({lx:.3f},{top})">')
    for k in range(n_stops):
        pos = 1 - k / (n_stops - 1)
        parts.append(
            f'<rect x="0" y="{k * bar_h / n_stops:.3f}" width="16" height="{bar_h / n_stops + 0.5:.3f}" '
            f'fill="{ramp_color(pos, palette)}"/>'
        )
    parts.append(f'<text id="legend-max" x="20" y="10">{hi:.4f} {unit}</text>')
    parts.append(f'<text id="legend-min" x="20" y="{bar_h:.3f}">{lo:.4f} {unit}</text>')
    parts.append("</g></svg>")
    out = Path(out)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
