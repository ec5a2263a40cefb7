"""CSV, JSON and SVG writers used by the experiment runner."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "{:.12g}"

# anchor colors of a perceptually ordered map (dark blue -> yellow)
_CMAP = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], float)
_LINE_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Write rows with a header line; floats carry 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------------ SVG

def _color(u: float) -> str:
    u = min(max(u, 0.0), 1.0) * (len(_CMAP) - 1)
    i = min(int(u), len(_CMAP) - 2)
    c = _CMAP[i] + (u - i) * (_CMAP[i + 1] - _CMAP[i])
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def _frame(title, xlabel, ylabel, W, H, m):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="{m / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
    ]


def _ticks(lo, hi, x0, x1, y, axis, n=5):
    out = []
    for i in range(n):
        v = lo + (hi - lo) * i / (n - 1)
        p = x0 + (x1 - x0) * i / (n - 1)
        if axis == "x":
            out.append(f'<text x="{p:.1f}" y="{y + 14}" text-anchor="middle" font-size="10">{v:.3g}</text>')
        else:
            out.append(f'<text x="{y - 4}" y="{p + 3:.1f}" text-anchor="end" font-size="10">{v:.3g}</text>')
    return out


def svg_heatmap(path, Z, x, y, title="", xlabel="", ylabel="", W=520, H=420) -> Path:
    """Heatmap of ``Z[i, j]`` over ``x[i]`` (horizontal) and ``y[j]`` (vertical)."""
    Z = np.asarray(Z, float)
    m = 50
    pw, ph = W - 2 * m - 40, H - 2 * m
    finite = Z[np.isfinite(Z)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo or 1.0
    nx, ny = Z.shape
    cw, chh = pw / nx, ph / ny
    parts = _frame(title, xlabel, ylabel, W, H, m)
    for i in range(nx):
        for j in range(ny):
            v = Z[i, j]
            col = "#cccccc" if not math.isfinite(v) else _color((v - lo) / span)
            parts.append(f'<rect x="{m + i * cw:.2f}" y="{m + ph - (j + 1) * chh:.2f}" '
                         f'width="{cw + 0.05:.2f}" height="{chh + 0.05:.2f}" fill="{col}"/>')
    parts += _ticks(float(x[0]), float(x[-1]), m, m + pw, m + ph, "x")
    parts += _ticks(float(y[0]), float(y[-1]), m + ph, m, m, "y")
    for i in range(20):
        parts.append(f'<rect x="{W - m - 20}" y="{m + ph - (i + 1) * ph / 20:.2f}" width="12" '
                     f'height="{ph / 20 + 0.05:.2f}" fill="{_color(i / 19)}"/>')
    parts.append(f'<text x="{W - m - 14}" y="{m - 4}" text-anchor="middle" font-size="10">{hi:.3g}</text>')
    parts.append(f'<text x="{W - m - 14}" y="{m + ph + 12}" text-anchor="middle" font-size="10">{lo:.3g}</text>')
    parts.append("</svg>")
    return _write(path, parts)


def svg_lines(path, series: dict, title="", xlabel="", ylabel="", W=520, H=380, markers=False) -> Path:
    """Line plot of ``{label: (x, y)}``."""
    m = 50
    pw, ph = W - 2 * m, H - 2 * m
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    parts = _frame(title, xlabel, ylabel, W, H, m)
    parts.append(f'<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')

    def px(v):
        return m + (v - x0) / (x1 - x0) * pw

    def py(v):
        return m + ph - (v - y0) / (y1 - y0) * ph

    for n, (label, (x, y)) in enumerate(series.items()):
        col = _LINE_COLORS[n % len(_LINE_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        if markers:
            parts += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2" fill="{col}"/>'
                      for a, b in zip(x, y) if math.isfinite(b)]
        else:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        parts.append(f'<text x="{m + pw - 4}" y="{m + 14 + 14 * n}" text-anchor="end" fill="{col}">{label}</text>')
    parts += _ticks(x0, x1, m, m + pw, m + ph, "x")
    parts += _ticks(y0, y1, m + ph, m, m, "y")
    parts.append("</svg>")
    return _write(path, parts)


def _write(path, parts) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
