"""CSV tables, JSON summaries and dependency-free SVG log-log plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


class CsvSink:
    """Append rows to a CSV file, flushing after each one so aborted runs keep their rows."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="ignore")
        self._writer.writeheader()
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._writer.writerow({k: _fmt(row.get(k)) for k in self.columns})
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def write_csv(path, rows, columns=None) -> Path:
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with CsvSink(path, columns) as sink:
        for row in rows:
            sink.write(row)
    return Path(path)


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------- svg

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _decades(lo, hi):
    return [10.0**k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)]


def svg_loglog(series: dict, title: str = "", xlabel: str = "eps", ylabel: str = "error",
               width: int = 480, height: int = 360) -> str:
    """Log-log line plot as an SVG string; ``series`` maps labels to ``(x, y)`` arrays.

    Non-positive points are skipped.
    """
    pts = {}
    for label, (x, y) in series.items():
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
        if np.any(keep):
            pts[label] = (x[keep], y[keep])
    ml, mr, mt, mb = 64, 130, 30, 46
    pw, ph = width - ml - mr, height - mt - mb
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="18" text-anchor="middle">{_esc(title)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2})">'
        f"{_esc(ylabel)}</text>"
    )
    if pts:
        xs = np.concatenate([p[0] for p in pts.values()])
        ys = np.concatenate([p[1] for p in pts.values()])
        lx0, lx1 = math.log10(xs.min()) - 0.05, math.log10(xs.max()) + 0.05
        ly0, ly1 = math.log10(ys.min()) - 0.1, math.log10(ys.max()) + 0.1

        def px(x):
            return ml + pw * (math.log10(x) - lx0) / (lx1 - lx0)

        def py(y):
            return mt + ph * (1 - (math.log10(y) - ly0) / (ly1 - ly0))

        for d in _decades(10**ly0, 10**ly1):
            if 10**ly0 <= d <= 10**ly1:
                y = py(d)
                out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + pw}" y2="{y:.1f}" stroke="#ddd"/>')
                out.append(f'<text x="{ml - 4}" y="{y + 4:.1f}" text-anchor="end">1e{round(math.log10(d))}</text>')
        for x in sorted(set(xs.tolist())):
            out.append(f'<text x="{px(x):.1f}" y="{mt + ph + 14}" text-anchor="middle">{_tick(x)}</text>')
        for k, (label, (x, y)) in enumerate(pts.items()):
            color = PALETTE[k % len(PALETTE)]
            path = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for a, b in zip(x, y):
                out.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="{color}"/>')
            ly = mt + 12 + 16 * k
            out.append(f'<line x1="{ml + pw + 8}" y1="{ly}" x2="{ml + pw + 24}" y2="{ly}" stroke="{color}"/>')
            out.append(f'<text x="{ml + pw + 28}" y="{ly + 4}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _tick(x):
    inv = 1 / x
    return f"1/{round(inv)}" if abs(inv - round(inv)) < 1e-6 * inv else f"{x:.3g}"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, series, **kw) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_loglog(series, **kw))
    return path
