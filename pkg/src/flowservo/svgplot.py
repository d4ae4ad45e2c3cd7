"""Deterministic static SVG line charts for trajectory and sweep CSVs.

No external assets, no timestamps: identical input bytes yield identical SVG
bytes. Trajectory CSVs render two stacked panels (errors and twist components
per iteration); sweep CSVs render convergence ratio against offset.
"""

from __future__ import annotations

import csv
import io
import math

from .flowio import FileFormatError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_PANEL_W = 640.0
_PANEL_H = 300.0
_MARGIN_L = 64.0
_MARGIN_R = 16.0
_MARGIN_T = 28.0
_MARGIN_B = 40.0


def _parse_csv(data: bytes) -> tuple[list[str], list[list[str]]]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FileFormatError("CSV is not valid UTF-8") from exc
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise FileFormatError("CSV has no header row")
    reader = csv.reader(io.StringIO("\n".join(lines)))
    rows = list(reader)
    return rows[0], rows[1:]


def _axis_range(values: list[float]) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


class _Panel:
    """One chart panel accumulating polylines in data coordinates."""

    def __init__(self, title: str, x_label: str, y_label: str, y_offset: float):
        self.title = title
        self.x_label = x_label
        self.y_label = y_label
        self.y_offset = y_offset
        self.series: list[tuple[str, list[tuple[float, float]]]] = []

    def add(self, label: str, points: list[tuple[float, float]]) -> None:
        self.series.append((label, [(x, y) for x, y in points if math.isfinite(y)]))

    def render(self) -> list[str]:
        x0, y0 = _MARGIN_L, self.y_offset + _MARGIN_T
        iw = _PANEL_W - _MARGIN_L - _MARGIN_R
        ih = _PANEL_H - _MARGIN_T - _MARGIN_B
        all_pts = [p for _, pts in self.series for p in pts]
        x_lo, x_hi = _axis_range([p[0] for p in all_pts])
        y_lo, y_hi = _axis_range([p[1] for p in all_pts])

        def sx(x: float) -> float:
            return x0 + (x - x_lo) / (x_hi - x_lo) * iw

        def sy(y: float) -> float:
            return y0 + ih - (y - y_lo) / (y_hi - y_lo) * ih

        out = [
            f'<text x="{x0:.2f}" y="{self.y_offset + 18:.2f}" font-size="13" '
            f'font-family="monospace">{self.title}</text>',
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{iw:.2f}" height="{ih:.2f}" '
            'fill="none" stroke="#444444" stroke-width="1"/>',
        ]
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = x_lo + frac * (x_hi - x_lo)
            yv = y_lo + frac * (y_hi - y_lo)
            xt = x0 + frac * iw
            yt = y0 + ih - frac * ih
            out.append(
                f'<line x1="{xt:.2f}" y1="{y0 + ih:.2f}" x2="{xt:.2f}" '
                f'y2="{y0 + ih + 4:.2f}" stroke="#444444" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{xt:.2f}" y="{y0 + ih + 16:.2f}" font-size="10" '
                f'font-family="monospace" text-anchor="middle">{xv:.4g}</text>'
            )
            out.append(
                f'<line x1="{x0 - 4:.2f}" y1="{yt:.2f}" x2="{x0:.2f}" y2="{yt:.2f}" '
                'stroke="#444444" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{x0 - 6:.2f}" y="{yt + 3:.2f}" font-size="10" '
                f'font-family="monospace" text-anchor="end">{yv:.4g}</text>'
            )
        out.append(
            f'<text x="{x0 + iw / 2:.2f}" y="{y0 + ih + 30:.2f}" font-size="11" '
            f'font-family="monospace" text-anchor="middle">{self.x_label}</text>'
        )
        out.append(
            f'<text x="14" y="{y0 + ih / 2:.2f}" font-size="11" font-family="monospace" '
            f'text-anchor="middle" transform="rotate(-90 14 {y0 + ih / 2:.2f})">{self.y_label}</text>'
        )
        for s, (label, pts) in enumerate(self.series):
            color = PALETTE[s % len(PALETTE)]
            if pts:
                coords = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in pts)
                out.append(
                    f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
                )
            lx = x0 + iw - 150
            ly = y0 + 14 + 13 * s
            out.append(
                f'<line x1="{lx:.2f}" y1="{ly - 3:.2f}" x2="{lx + 18:.2f}" y2="{ly - 3:.2f}" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
            out.append(
                f'<text x="{lx + 24:.2f}" y="{ly:.2f}" font-size="10" '
                f'font-family="monospace">{label}</text>'
            )
        return out


def _column(rows: list[list[str]], idx: int) -> list[float]:
    return [float(row[idx]) for row in rows]


def render_plots(csv_data: bytes) -> bytes:
    """Render a trajectory or sweep CSV into an SVG document."""
    header, rows = _parse_csv(csv_data)
    panels: list[_Panel] = []
    if header[:2] == ["iter", "px"]:
        col = {name: i for i, name in enumerate(header)}
        iters = _column(rows, col["iter"])
        errors = _Panel("errors per iteration", "iteration", "error", 0.0)
        for name in ("feat_err", "photo_err", "t_err"):
            errors.add(name, list(zip(iters, _column(rows, col[name]))))
        velocity = _Panel("twist components per iteration", "iteration", "velocity", _PANEL_H)
        for name in ("v1", "v2", "v3", "v4", "v5", "v6"):
            velocity.add(name, list(zip(iters, _column(rows, col[name]))))
        panels = [errors, velocity]
    elif header[:2] == ["batch", "offset_m"]:
        offsets = _column(rows, 1)
        ratio = _Panel("convergence ratio vs per-axis offset", "offset (m)", "ratio", 0.0)
        for m, method in enumerate(header[2:]):
            ratio.add(method, list(zip(offsets, _column(rows, m + 2))))
        panels = [ratio]
    else:
        raise FileFormatError(f"unrecognized CSV header: {','.join(header[:4])}...")
    height = _PANEL_H * len(panels)
    body: list[str] = []
    for panel in panels:
        body.extend(panel.render())
    doc = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PANEL_W:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {_PANEL_W:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{_PANEL_W:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        *body,
        "</svg>",
    ]
    return ("\n".join(doc) + "\n").encode("utf-8")
