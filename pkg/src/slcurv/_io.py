"""Flat-file helpers: key=value configs, CSV with full precision, tiny SVG heat maps."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

_FLOAT_FMT = "%.17g"


def fmt(value) -> str:
    """Render a scalar for CSV output (17 significant digits for floats)."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT_FMT % float(value)
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with every cell left as a string."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def read_kv(path) -> dict:
    """Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _color(t: float) -> str:
    # blue -> white -> red ramp
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        s = t / 0.5
        r, g, b = int(255 * s), int(255 * s), 255
    else:
        s = (t - 0.5) / 0.5
        r, g, b = 255, int(255 * (1 - s)), int(255 * (1 - s))
    return f"#{r:02x}{g:02x}{b:02x}"


def write_svg_heatmap(path, values, title: str = "", cell: int = 4) -> Path:
    """Write a 2-d array as a static SVG heat map (row 0 at the bottom)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("heat map needs a 2-d array")
    ny, nx = values.shape[1], values.shape[0]
    lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
    span = hi - lo if hi > lo else 1.0
    pad = 20
    width, height = nx * cell, ny * cell + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="2" y="14" font-size="12" font-family="monospace">{title} [{lo:.6g}, {hi:.6g}]</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            y = pad + (ny - 1 - j) * cell
            parts.append(
                f'<rect x="{i * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_color((values[i, j] - lo) / span)}"/>'
            )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
