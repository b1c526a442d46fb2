"""Standalone SVG emitters for the heat-map and ROC figures, plus the
plain-text matrix/point formats they consume.

Everything is rendered with fixed formatting so identical inputs yield
byte-identical files (the determinism and golden-file tests rely on it).
No raster backend is involved.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

FPR_FLOOR = 1e-3  # zero false-positive rates are drawn at this floor
_BLUE = (31, 119, 180)


# ---------------------------------------------------------------------------
# plot input files
# ---------------------------------------------------------------------------

def heatmap_matrix_text(matrix, t_values, delta_values) -> str:
    """One row per horizon, one column per prediction time, header row of
    t values; the first column carries the horizon."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(delta_values), len(t_values)):
        raise ValidationError("heat-map matrix shape must be (deltas, times)")
    lines = ["delta\t" + "\t".join(repr(float(t)) for t in t_values)]
    for dl, row in zip(delta_values, matrix):
        lines.append(repr(float(dl)) + "\t" + "\t".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_heatmap_matrix(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValidationError("heat-map file needs a header row and at least one row")
    head = lines[0].split("\t")
    if head[0] != "delta":
        raise ValidationError("heat-map header must start with 'delta'")
    try:
        t_values = [float(v) for v in head[1:]]
        deltas, rows = [], []
        for ln in lines[1:]:
            parts = ln.split("\t")
            deltas.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    except ValueError as exc:
        raise ValidationError(f"bad heat-map file: {exc}") from exc
    matrix = np.array(rows)
    if matrix.shape != (len(deltas), len(t_values)):
        raise ValidationError("ragged heat-map file")
    return matrix, t_values, deltas


def roc_points_text(curves) -> str:
    """TSV of (repeat, fpr, tpr) rows; one repeat per experimental split."""
    lines = ["repeat\tfpr\ttpr"]
    for rep, curve in enumerate(curves):
        for fpr, tpr in curve:
            lines.append(f"{rep}\t{repr(float(fpr))}\t{repr(float(tpr))}")
    return "\n".join(lines) + "\n"


def parse_roc_points(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != ["repeat", "fpr", "tpr"]:
        raise ValidationError("ROC file must start with 'repeat\\tfpr\\ttpr'")
    curves: dict = {}
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 3:
            raise ValidationError(f"bad ROC row: {ln!r}")
        try:
            rep = int(parts[0])
            fpr, tpr = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ValidationError(f"bad ROC row {ln!r}: {exc}") from exc
        curves.setdefault(rep, []).append((fpr, tpr))
    return [curves[rep] for rep in sorted(curves)]


# ---------------------------------------------------------------------------
# rendering helpers
# ---------------------------------------------------------------------------

def _ramp(v: float) -> str:
    """Single-hue linear ramp, white at 0 to blue at 1."""
    v = min(max(v, 0.0), 1.0)
    r, g, b = (round(255 + (c - 255) * v) for c in _BLUE)
    return f"rgb({r},{g},{b})"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _text(x, y, s, size=12, anchor="middle", fill="black", rotate=None):
    extra = f' transform="rotate(-90 {_fmt(x)} {_fmt(y)})"' if rotate else ""
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="sans-serif" '
        f'font-size="{size}" text-anchor="{anchor}" fill="{fill}"{extra}>{s}</text>'
    )


def heatmap_svg(matrix, t_values, delta_values, title: str = "P(awaken)") -> str:
    """Colored cell per (horizon, time) with its probability printed and a
    0 to 1 legend; rows run down with increasing horizon."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = matrix.shape
    if n_rows != len(delta_values) or n_cols != len(t_values):
        raise ValidationError("heat-map matrix shape must be (deltas, times)")
    cw, ch = 46, 34
    left, top = 86, 46
    width = left + n_cols * cw + 96
    height = top + n_rows * ch + 56
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        _text(left + n_cols * cw / 2, 24, title, size=15),
    ]
    for i, dl in enumerate(delta_values):
        parts.append(_text(left - 10, top + i * ch + ch / 2 + 4, f"{dl:g}", anchor="end"))
    for jcol, t in enumerate(t_values):
        parts.append(_text(left + jcol * cw + cw / 2, top + n_rows * ch + 16, f"{t:g}"))
    parts.append(_text(left + n_cols * cw / 2, top + n_rows * ch + 38, "prediction time t (hours)"))
    parts.append(_text(24, top + n_rows * ch / 2, "horizon (hours)", rotate=True))
    for i in range(n_rows):
        for jcol in range(n_cols):
            v = float(matrix[i, jcol])
            x, y = left + jcol * cw, top + i * ch
            parts.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{cw}" height="{ch}" '
                f'fill="{_ramp(v)}" stroke="white" stroke-width="1"/>'
            )
            ink = "black" if v < 0.6 else "white"
            parts.append(_text(x + cw / 2, y + ch / 2 + 4, _fmt(v), size=11, fill=ink))
    # legend: discrete ramp swatches, bottom value 0 to top value 1
    lx = left + n_cols * cw + 26
    steps = 10
    lh = n_rows * ch
    for srow in range(steps):
        v0 = 1.0 - (srow + 0.5) / steps
        parts.append(
            f'<rect x="{lx}" y="{_fmt(top + srow * lh / steps)}" width="16" '
            f'height="{_fmt(lh / steps + 0.5)}" fill="{_ramp(v0)}"/>'
        )
    for v, frac in ((1.0, 0.0), (0.5, 0.5), (0.0, 1.0)):
        parts.append(_text(lx + 22, top + frac * lh + 4, _fmt(v), anchor="start", size=11))
    parts.append(_text(lx + 8, top - 8, "scale", size=11))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _log_x(fpr: float, left: float, width: float) -> float:
    v = max(fpr, FPR_FLOOR)
    return left + (np.log10(v) - np.log10(FPR_FLOOR)) / (-np.log10(FPR_FLOOR)) * width


def _step_tpr(curve, fpr: float) -> float:
    """ROC curves are step functions: the achieved TPR at this FPR."""
    best = 0.0
    for f, t in curve:
        if f <= fpr:
            best = max(best, t)
    return best


def roc_svg(curves, title: str = "ROC") -> str:
    """Log-FPR ROC plot; with several repeats, the mean curve plus a one
    standard deviation band; FPR = 0 points sit at the 1e-3 floor."""
    if not curves:
        raise ValidationError("need at least one ROC curve")
    left, top, width, height = 70, 40, 480, 360
    total_w, total_h = left + width + 30, top + height + 70
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}">',
        f'<rect width="{total_w}" height="{total_h}" fill="white"/>',
        _text(left + width / 2, 24, title, size=15),
    ]
    decades = int(round(-np.log10(FPR_FLOOR)))
    for k in range(decades + 1):
        fpr = 10.0 ** (-decades + k)
        x = _log_x(fpr, left, width)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{top}" x2="{_fmt(x)}" y2="{top + height}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(_text(x, top + height + 18, f"{fpr:g}", size=11))
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + height * (1 - frac)
        parts.append(
            f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + width}" y2="{_fmt(y)}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(_text(left - 8, y + 4, f"{frac:g}", anchor="end", size=11))
    parts.append(_text(left + width / 2, top + height + 44, "false positive rate (log scale)"))
    parts.append(_text(22, top + height / 2, "true positive rate", rotate=True))

    def xy(fpr, tpr):
        return _log_x(fpr, left, width), top + height * (1 - tpr)

    if len(curves) > 1:
        grid = np.logspace(np.log10(FPR_FLOOR), 0.0, 80)
        tprs = np.array([[_step_tpr(curve, g) for g in grid] for curve in curves])
        mean = tprs.mean(axis=0)
        sd = tprs.std(axis=0, ddof=1)
        upper = np.minimum(mean + sd, 1.0)
        lower = np.maximum(mean - sd, 0.0)
        band = [xy(g, u) for g, u in zip(grid, upper)]
        band += [xy(g, low) for g, low in zip(grid[::-1], lower[::-1])]
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in band)
        parts.append(f'<polygon points="{pts}" fill="rgb(174,199,232)" fill-opacity="0.6"/>')
        mean_pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (xy(g, mv) for g, mv in zip(grid, mean)))
        parts.append(
            f'<polyline points="{mean_pts}" fill="none" stroke="rgb(31,119,180)" stroke-width="2"/>'
        )
    else:
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (xy(f, t) for f, t in curves[0]))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="rgb(31,119,180)" stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
