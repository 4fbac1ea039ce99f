"""File emitters: JSON records, CSV time series and fixed-style SVG plots."""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"
SVG_STYLE_VERSION = "1"
SERIES_COLUMNS = ("time_s", "e_field_V_per_m", "detuning_ccw_Hz", "error_signal_V")


def load_schema() -> dict:
    text = resources.files("menr_twin").joinpath("schemas/records.schema.json").read_text("utf-8")
    return json.loads(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path, record: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(record), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, columns: dict) -> Path:
    """Column mapping to CSV with a header row, 17 significant digits, LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([v if isinstance(v, str) else f"{float(v):.17g}" for v in row])
    return path


def write_series_csv(path, series: dict) -> Path:
    return write_csv(path, {name: series[name] for name in SERIES_COLUMNS})


def read_csv(path) -> dict:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = list(zip(*rows)) if rows else [() for _ in header]
    return {name: np.array([float(v) for v in col]) for name, col in zip(header, cols)}


# -- SVG ---------------------------------------------------------------------

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 80, 20, 40, 60


def _nice_ticks(lo, hi, n=5):
    if hi == lo:
        hi, lo = hi + 1, lo - 1
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt(v):
    return f"{v:.3g}"


def errorbar_svg(x, y, sigma, *, title="", xlabel="", ylabel="", line=None, hline=None) -> str:
    """Points with 1-sigma error bars, an optional fitted line (slope, intercept)
    and an optional horizontal band (value, sigma)."""
    x, y, sigma = (np.asarray(a, dtype=float) for a in (x, y, sigma))
    lo_y = float(np.min(y - sigma))
    hi_y = float(np.max(y + sigma))
    if hline is not None:
        lo_y = min(lo_y, hline[0] - hline[1])
        hi_y = max(hi_y, hline[0] + hline[1])
    pad_y = 0.08 * (hi_y - lo_y or abs(hi_y) or 1.0)
    lo_y, hi_y = lo_y - pad_y, hi_y + pad_y
    lo_x, hi_x = float(np.min(x)), float(np.max(x))
    pad_x = 0.05 * (hi_x - lo_x or abs(hi_x) or 1.0)
    lo_x, hi_x = lo_x - pad_x, hi_x + pad_x

    def px(v):
        return _ML + (v - lo_x) / (hi_x - lo_x) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - lo_y) / (hi_y - lo_y) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" data-style-version="{SVG_STYLE_VERSION}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
        f'fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(lo_x, hi_x):
        out.append(f'<line x1="{px(t):.2f}" y1="{_H - _MB}" x2="{px(t):.2f}" y2="{_H - _MB + 5}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{_H - _MB + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
    for t in _nice_ticks(lo_y, hi_y):
        out.append(f'<line x1="{_ML - 5}" y1="{py(t):.2f}" x2="{_ML}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{py(t) + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
    out.append(f'<text x="{_W / 2:.1f}" y="{_H - 15}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{xlabel}</text>')
    out.append(f'<text x="18" y="{_H / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13" transform="rotate(-90 18 {_H / 2:.1f})">{ylabel}</text>')
    if hline is not None:
        v, s = hline
        out.append(f'<rect x="{_ML}" y="{py(v + s):.2f}" width="{_W - _ML - _MR}" '
                   f'height="{py(v - s) - py(v + s):.2f}" fill="#1f77b4" fill-opacity="0.15"/>')
        out.append(f'<line x1="{_ML}" y1="{py(v):.2f}" x2="{_W - _MR}" y2="{py(v):.2f}" '
                   f'stroke="#1f77b4" stroke-dasharray="6 4"/>')
    if line is not None:
        slope, intercept = line
        out.append(f'<line x1="{px(lo_x):.2f}" y1="{py(slope * lo_x + intercept):.2f}" '
                   f'x2="{px(hi_x):.2f}" y2="{py(slope * hi_x + intercept):.2f}" '
                   f'stroke="#d62728" stroke-width="1.5"/>')
    for xi, yi, si in zip(x, y, sigma):
        out.append(f'<line x1="{px(xi):.2f}" y1="{py(yi - si):.2f}" x2="{px(xi):.2f}" '
                   f'y2="{py(yi + si):.2f}" stroke="black"/>')
        out.append(f'<circle cx="{px(xi):.2f}" cy="{py(yi):.2f}" r="3.5" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, svg: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8", newline="\n")
    return path
