"""Atomic file output, stable JSON, and a tiny SVG line renderer."""
from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

__all__ = ["write_atomic", "write_text_atomic", "dumps_json", "write_json", "svg_lines"]


def write_atomic(path: str | Path, writer: Callable[[TextIO], None]) -> Path:
    """Write through ``writer`` into a temp file next to ``path`` then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text_atomic(path: str | Path, text: str) -> Path:
    return write_atomic(path, lambda fh: fh.write(text))


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=_default) + "\n"


def write_json(path: str | Path, obj) -> Path:
    return write_text_atomic(path, dumps_json(obj))


def svg_lines(x: np.ndarray, series: dict[str, np.ndarray], width: int = 640, height: int = 360,
              y_range: Sequence[float] = (0.0, 1.0)) -> str:
    """Minimal static SVG with one polyline per series."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    pad = 40
    x = np.asarray(x, dtype=float)
    x0, x1 = (float(x.min()), float(x.max())) if len(x) else (0.0, 1.0)
    y0, y1 = y_range
    sx = (width - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (height - 2 * pad) / ((y1 - y0) or 1.0)
    # thin long series to at most ~2000 vertices
    step = max(1, len(x) // 2000)
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n')
    out.write(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
              'fill="none" stroke="#888"/>\n')
    for k, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(f"{pad + (xi - x0) * sx:.2f},{height - pad - (yi - y0) * sy:.2f}"
                       for xi, yi in zip(x[::step], ys[::step]))
        color = colors[k % len(colors)]
        out.write(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>\n')
        out.write(f'<text x="{pad + 8}" y="{pad + 16 * (k + 1)}" fill="{color}" font-size="12">{name}</text>\n')
    out.write(f'<text x="{pad}" y="{height - 10}" font-size="11">t = {x0:g} .. {x1:g}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()
