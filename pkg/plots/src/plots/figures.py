"""Figure emitters over the dualspace CSV contracts.

Three kinds, mapping 1:1 to the upstream schemas:

- scatter2d: ``role,x,y`` point files (simulation hidden-state clouds),
  student drawn red, teacher blue, one panel per input file.
- curves: ``step,loss`` files, one labeled polyline per file.
- bars: any CSV with a label column and numeric value columns, drawn as
  grouped bars (structure distances, arm comparisons).
"""

from __future__ import annotations

import csv
from pathlib import Path

from plots.svg import Axes, Svg

STUDENT_COLOR = "#d62728"   # red
TEACHER_COLOR = "#1f77b4"   # blue
SERIES_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

PANEL_W, PANEL_H = 300.0, 260.0
MARGIN_L, MARGIN_T, MARGIN_B, MARGIN_R = 56.0, 40.0, 48.0, 20.0


class SchemaError(ValueError):
    pass


def _read_csv(path, required: tuple[str, ...]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file {path} does not exist")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}; "
                              f"found {', '.join(header)}")
        return list(reader)


# ----------------------------------------------------------------------
def read_points(path) -> dict[str, list[tuple[float, float]]]:
    rows = _read_csv(path, ("role", "x", "y"))
    out: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        role = row["role"]
        if role not in ("student", "teacher"):
            raise SchemaError(f"{path}: unknown role {role!r}")
        out.setdefault(role, []).append((float(row["x"]), float(row["y"])))
    if not out:
        raise SchemaError(f"{path}: no data rows")
    return out


def render_scatter(panel_inputs: list[tuple[str, str]], out_path) -> dict:
    """One panel per (title, csv path); returns drawn point counts."""
    if not panel_inputs:
        raise ValueError("at least one input file is required")
    panels = [(title, read_points(path)) for title, path in panel_inputs]
    n = len(panels)
    svg = Svg(MARGIN_L + n * (PANEL_W + MARGIN_R), MARGIN_T + PANEL_H + MARGIN_B)
    counts = {}
    for i, (title, clouds) in enumerate(panels):
        x0 = MARGIN_L + i * (PANEL_W + MARGIN_R)
        xs = [p[0] for pts in clouds.values() for p in pts]
        ys = [p[1] for pts in clouds.values() for p in pts]
        ax = Axes.fit(x0, MARGIN_T, PANEL_W, PANEL_H, xs, ys)
        ax.frame(svg, xlabel="x", ylabel="y" if i == 0 else "")
        svg.text(x0 + PANEL_W / 2, MARGIN_T - 16, title, size=13, anchor="middle")
        for role, color in (("teacher", TEACHER_COLOR), ("student", STUDENT_COLOR)):
            for px, py in clouds.get(role, []):
                svg.circle(ax.px(px), ax.py(py), 2.2, color)
        counts[title] = {role: len(pts) for role, pts in sorted(clouds.items())}
    # shared legend
    lx = MARGIN_L
    svg.circle(lx, 16, 3, STUDENT_COLOR)
    svg.text(lx + 8, 20, "student", size=11)
    svg.circle(lx + 80, 16, 3, TEACHER_COLOR)
    svg.text(lx + 88, 20, "teacher", size=11)
    svg.write(out_path)
    return counts


# ----------------------------------------------------------------------
def read_curve(path) -> list[tuple[float, float]]:
    rows = _read_csv(path, ("step", "loss"))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return [(float(r["step"]), float(r["loss"])) for r in rows]


def render_curves(inputs: list[tuple[str, str]], out_path, ylabel="loss") -> dict:
    """Overlaid (label, csv path) loss curves; returns series lengths."""
    if not inputs:
        raise ValueError("at least one input file is required")
    series = [(label, read_curve(path)) for label, path in inputs]
    svg = Svg(MARGIN_L + PANEL_W + MARGIN_R, MARGIN_T + PANEL_H + MARGIN_B)
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    ax = Axes.fit(MARGIN_L, MARGIN_T, PANEL_W, PANEL_H, xs, ys)
    ax.frame(svg, xlabel="step", ylabel=ylabel)
    for i, (label, pts) in enumerate(series):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        svg.polyline([(ax.px(x), ax.py(y)) for x, y in pts], color)
        svg.line(MARGIN_L + 8, 14 + 14 * i, MARGIN_L + 28, 14 + 14 * i,
                 stroke=color, stroke_width=2)
        svg.text(MARGIN_L + 34, 18 + 14 * i, label, size=11)
    svg.write(out_path)
    return {label: len(pts) for label, pts in series}


# ----------------------------------------------------------------------
def render_bars(path, label_col: str, value_cols: list[str], out_path) -> dict:
    """Grouped bars: one group per row of the CSV, one bar per value column."""
    if not value_cols:
        raise ValueError("at least one value column is required")
    rows = _read_csv(path, (label_col, *value_cols))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    labels = [r[label_col] for r in rows]
    values = [[float(r[c]) for c in value_cols] for r in rows]
    flat = [v for row in values for v in row]
    svg = Svg(MARGIN_L + PANEL_W + MARGIN_R, MARGIN_T + PANEL_H + MARGIN_B)
    ax = Axes.fit(MARGIN_L, MARGIN_T, PANEL_W, PANEL_H,
                  [0, len(rows)], [min(0.0, min(flat)), max(flat)])
    ax.frame(svg, ylabel=", ".join(value_cols))
    group_w = PANEL_W / len(rows)
    bar_w = group_w * 0.8 / len(value_cols)
    base = ax.py(0.0)
    for gi, row_vals in enumerate(values):
        gx = MARGIN_L + gi * group_w + group_w * 0.1
        for bi, v in enumerate(row_vals):
            color = SERIES_COLORS[bi % len(SERIES_COLORS)]
            top = ax.py(v)
            y = min(top, base)
            svg.rect(gx + bi * bar_w, y, bar_w, abs(base - top),
                     fill=color, stroke="#000000", stroke_width=0.5)
        svg.text(MARGIN_L + gi * group_w + group_w / 2,
                 MARGIN_T + PANEL_H + 16, labels[gi], size=10, anchor="middle")
    for bi, col in enumerate(value_cols):
        color = SERIES_COLORS[bi % len(SERIES_COLORS)]
        svg.rect(MARGIN_L + 8 + 90 * bi, 10, 10, 10, fill=color,
                 stroke="#000000", stroke_width=0.5)
        svg.text(MARGIN_L + 22 + 90 * bi, 19, col, size=10)
    svg.write(out_path)
    return {"groups": len(rows), "bars_per_group": len(value_cols)}
