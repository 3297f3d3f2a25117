"""Minimal static SVG output.

Snapshots draw one ``<circle>`` per agent and one ``<line>`` per undirected
link, so element counts can be checked directly.  Plot frames and curves use
``<path>``/``<polyline>``/``<rect>`` only.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def _doc(w, h, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">\n<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def _write(path, text):
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def link_pairs(x, lo: float, hi: float):
    """Undirected pairs (i < j) with lo <= |x_i - x_j| <= hi."""
    x = np.asarray(x, float)
    d = np.sqrt(np.sum((x[:, None] - x[None]) ** 2, axis=-1))
    i, j = np.nonzero(np.triu((d >= lo) & (d <= hi), k=1))
    return list(zip(i.tolist(), j.tolist()))


def snapshot(x, edges, path, size: int = 480, margin: int = 20):
    """Agents as circles and links as line segments (planar projection)."""
    x = np.asarray(x, float)[:, :2]
    lo = x.min(axis=0) if len(x) else np.zeros(2)
    span = float(np.max(np.ptp(x, axis=0))) if len(x) > 1 else 1.0
    span = span if span > 0 else 1.0
    s = (size - 2 * margin) / span

    def P(p):
        return margin + (p[0] - lo[0]) * s, size - margin - (p[1] - lo[1]) * s

    body = []
    for i, j in edges:
        (x1, y1), (x2, y2) = P(x[i]), P(x[j])
        body.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                    f'stroke="#555" stroke-width="1"/>')
    r = max(1.5, min(5.0, 0.15 * s))
    for p in x:
        cx, cy = P(p)
        body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="#d62728"/>')
    return _write(path, _doc(size, size, body))


def _frame(x0, x1, y0, y1, W, H, m, xlabel, ylabel):
    body = [f'<path d="M{m} {m} L{m} {H - m} L{W - m} {H - m}" stroke="black" fill="none"/>',
            f'<text x="{W / 2:.0f}" y="{H - 8}" font-size="12" text-anchor="middle">{xlabel}</text>',
            f'<text x="12" y="{m - 6}" font-size="12">{ylabel}</text>',
            f'<text x="{m}" y="{H - m + 14}" font-size="10">{x0:.3g}</text>',
            f'<text x="{W - m}" y="{H - m + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
            f'<text x="{m - 4}" y="{H - m}" font-size="10" text-anchor="end">{y0:.3g}</text>',
            f'<text x="{m - 4}" y="{m + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    return body


def _scaler(x0, x1, y0, y1, W, H, m):
    sx = (W - 2 * m) / ((x1 - x0) or 1.0)
    sy = (H - 2 * m) / ((y1 - y0) or 1.0)
    return lambda x: m + (np.asarray(x) - x0) * sx, lambda y: H - m - (np.asarray(y) - y0) * sy


def _decimate(n, cap=800):
    return np.unique(np.linspace(0, n - 1, min(n, cap)).astype(int)) if n else np.array([], int)


def band_plot(t, bands: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]], path,
              xlabel: str = "t", ylabel: str = "", W: int = 640, H: int = 360, m: int = 48):
    """Mean curves with shaded [min, max] bands, one colour per series."""
    t = np.asarray(t, float)
    idx = _decimate(len(t))
    vals = np.concatenate([np.concatenate([b[0], b[2]]) for b in bands.values()])
    vals = vals[np.isfinite(vals)]
    y0, y1 = (0.0, float(vals.max())) if len(vals) else (0.0, 1.0)
    y0 = min(y0, float(vals.min())) if len(vals) else y0
    X, Y = _scaler(t[0], t[-1], y0, y1, W, H, m)
    body = _frame(t[0], t[-1], y0, y1, W, H, m, xlabel, ylabel)
    for k, (name, (lo, mean, hi)) in enumerate(bands.items()):
        c = COLORS[k % len(COLORS)]
        ok = idx[np.isfinite(mean[idx])]
        if len(ok) == 0:
            continue
        up = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(t[ok]), Y(hi[ok])))
        dn = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(t[ok][::-1]), Y(lo[ok][::-1])))
        body.append(f'<polygon points="{up} {dn}" fill="{c}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(t[ok]), Y(mean[ok])))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        body.append(f'<text x="{W - m - 4}" y="{m + 14 * (k + 1)}" font-size="11" '
                    f'text-anchor="end" fill="{c}">{name}</text>')
    return _write(path, _doc(W, H, body))


def line_plot(x, series: Dict[str, np.ndarray], path, xlabel: str = "", ylabel: str = "",
              W: int = 640, H: int = 360, m: int = 48):
    x = np.asarray(x, float)
    return band_plot(x, {k: (np.asarray(v, float),) * 3 for k, v in series.items()}, path,
                     xlabel, ylabel, W, H, m)


def heatmap(ax0: Sequence[float], ax1: Sequence[float], Z, path, mark=None,
            xlabel: str = "", ylabel: str = "", cell: int = 28, m: int = 48):
    """Cost map with cells coloured by value (clipped at 2) and C <= 1 cells outlined."""
    Z = np.asarray(Z, float)
    W = 2 * m + cell * len(ax1)
    H = 2 * m + cell * len(ax0)
    body = [f'<text x="{W / 2:.0f}" y="{H - 8}" font-size="12" text-anchor="middle">{xlabel}</text>',
            f'<text x="8" y="{m - 10}" font-size="12">{ylabel}</text>']
    for i in range(len(ax0)):
        for j in range(len(ax1)):
            z = Z[i, j]
            v = 0.0 if not np.isfinite(z) else min(z, 2.0) / 2.0
            g = int(255 * (1 - v))
            x, y = m + j * cell, H - m - (i + 1) * cell
            stroke = ' stroke="black" stroke-width="2"' if np.isfinite(z) and z <= 1 else ""
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                        f'fill="rgb(255,{g},{g})"{stroke}/>')
    if mark is not None:
        i, j = mark
        body.append(f'<path d="M{m + (j + 0.5) * cell - 4} {H - m - (i + 0.5) * cell} h8 '
                    f'M{m + (j + 0.5) * cell} {H - m - (i + 0.5) * cell - 4} v8" stroke="black"/>')
    for j, v in enumerate(ax1):
        body.append(f'<text x="{m + (j + 0.5) * cell:.1f}" y="{H - m + 14}" font-size="9" '
                    f'text-anchor="middle">{v:g}</text>')
    for i, v in enumerate(ax0):
        body.append(f'<text x="{m - 4}" y="{H - m - (i + 0.5) * cell + 3:.1f}" font-size="9" '
                    f'text-anchor="end">{v:g}</text>')
    return _write(path, _doc(W, H, body))
