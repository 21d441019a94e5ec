"""Minimal hand-written SVG line plots.

Every data point is emitted as a marker carrying the exact decimal strings it was
drawn from (``data-x``, ``data-y``), so plotted values can be checked against the
CSV they came from.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .checkpoint import format_value

WIDTH, HEIGHT, PAD = 640, 400, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _as_strings(vals):
    return [v if isinstance(v, str) else format_value(v) for v in vals]


def line_plot(x, ys: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = False, logy: bool = False) -> str:
    """SVG text for one or more series sharing ``x``; values may be numbers or strings."""
    xs = _as_strings(x)
    if not xs:
        raise ValueError("empty series")
    series = {name: _as_strings(v) for name, v in ys.items()}
    for name, v in series.items():
        if len(v) != len(xs):
            raise ValueError(f"series {name!r} has {len(v)} values for {len(xs)} x values")

    def tr(vals, log):
        a = np.array([float(s) for s in vals])
        if log:
            if np.any(a <= 0):
                raise ValueError("log axis needs positive values")
            a = np.log10(a)
        return a

    X = tr(xs, logx)
    Ys = {n: tr(v, logy) for n, v in series.items()}
    allY = np.concatenate(list(Ys.values())) if Ys else np.zeros(1)
    allY = allY[np.isfinite(allY)]
    if allY.size == 0:
        allY = np.zeros(1)  # nothing plottable, keep the axes
    x0, x1 = float(X.min()), float(X.max())
    y0, y1 = float(allY.min()), float(allY.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return PAD + (v - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(v):
        return HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 14}" text-anchor="middle" font-size="12">'
           f'{escape(xlabel + (" (log10)" if logx else ""))}</text>',
           f'<text x="16" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 16 {HEIGHT / 2})" '
           f'text-anchor="middle">{escape(ylabel + (" (log10)" if logy else ""))}</text>']
    for v, anchor, (xx, yy) in ((x0, "start", (PAD, HEIGHT - PAD + 16)),
                                (x1, "end", (WIDTH - PAD, HEIGHT - PAD + 16))):
        out.append(f'<text x="{xx}" y="{yy}" font-size="10" text-anchor="{anchor}">{v:.4g}</text>')
    out.append(f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="10" text-anchor="end">{y0:.4g}</text>')
    out.append(f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>')
    for n, (name, Y) in enumerate(Ys.items()):
        color = COLORS[n % len(COLORS)]
        pts = " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(X, Y) if math.isfinite(b))
        out.append(f'<g class="series" data-name="{escape(name)}">')
        if len(X) > 1:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for a, b, sx, sy in zip(X, Y, xs, series[name]):
            if math.isfinite(b):
                out.append(f'<circle cx="{px(a):.3f}" cy="{py(b):.3f}" r="2" fill="{color}" '
                           f'data-x="{sx}" data-y="{sy}"/>')
        out.append("</g>")
        out.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * n}" font-size="11" fill="{color}" '
                   f'text-anchor="end">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def energy_plot(columns: dict, title: str = "energies") -> str:
    """E and E_alpha against t from CSV columns (strings or numbers)."""
    return line_plot(columns["t"], {"E": columns["E"], "E_alpha": columns["E_alpha"]},
                     title, "t", "energy")


def psi_plot(radii, psi_values, title: str = "Psi vs rho") -> str:
    return line_plot(radii, {"Psi": psi_values}, title, "rho", "Psi", logx=True, logy=True)


def alpha_energy_plot(alphas, energies, title: str = "limit energy per alpha") -> str:
    return line_plot(alphas, {"E": energies}, title, "alpha", "E")


def tree_plot(tree, title: str = "bubble tree") -> str:
    """Schematic: the body at the top, one marker per bubble node at its depth."""
    nodes = list(tree.all_nodes())
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<circle cx="{WIDTH / 2}" cy="60" r="10" fill="#888"/>',
           f'<text x="{WIDTH / 2 + 14}" y="64" font-size="11">body E={format_value(tree.body_energy)}</text>']
    levels = {}
    for n in nodes:
        levels.setdefault(n.depth, []).append(n)
    pos = {}
    for d, row in levels.items():
        for i, n in enumerate(row):
            pos[id(n)] = (WIDTH * (i + 1) / (len(row) + 1), 140 + 90 * d)
    for d, row in levels.items():
        for n in row:
            x, y = pos[id(n)]
            parents = [(WIDTH / 2, 60)] if d == 0 else [pos[id(p)] for p in nodes if n in p.children]
            for px_, py_ in parents:
                out.append(f'<line x1="{px_}" y1="{py_}" x2="{x}" y2="{y}" stroke="#aaa"/>')
            out.append(f'<circle cx="{x}" cy="{y}" r="8" fill="#1f77b4" '
                       f'data-energy="{format_value(n.bubble_energy)}" '
                       f'data-neck="{format_value(n.neck_energy)}"/>')
            out.append(f'<text x="{x + 12}" y="{y + 4}" font-size="10">'
                       f'E={n.bubble_energy:.4g} neck={n.neck_energy:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> Path:
    path = Path(path)
    path.write_text(svg)
    return path
