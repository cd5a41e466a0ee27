"""A tiny hand-rolled SVG writer.

Everything is emitted with fixed styles and "%.6g" coordinates so that the
same inputs always produce byte-identical files. No timestamps, no random
ids, no external renderer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

FONT = "font-family=\"Helvetica,Arial,sans-serif\""


def _f(x: float) -> str:
    return "%.6g" % x


def _esc(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


@dataclass
class Svg:
    width: float
    height: float
    parts: list[str] = field(default_factory=list)

    def rect(self, x, y, w, h, fill="none", stroke="none", stroke_width=1.0):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_f(stroke_width)}"/>')

    def line(self, x1, y1, x2, y2, stroke="#000000", stroke_width=1.0):
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(stroke_width)}"/>')

    def circle(self, cx, cy, r, fill):
        self.parts.append(
            f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" fill="{fill}"/>')

    def polyline(self, points, stroke, stroke_width=1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(stroke_width)}"/>')

    def text(self, x, y, s, size=12.0, anchor="start", fill="#000000"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{_f(size)}" {FONT} '
            f'text-anchor="{anchor}" fill="{fill}">{_esc(s)}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{_f(self.width)}" height="{_f(self.height)}" '
                f'viewBox="0 0 {_f(self.width)} {_f(self.height)}">\n'
                f"{body}\n</svg>\n")

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.render())


@dataclass
class Axes:
    """Linear data-to-pixel mapping with 5% margins on each side."""
    x0: float
    y0: float       # pixel origin (top-left of the plot area)
    width: float
    height: float
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @classmethod
    def fit(cls, x0, y0, width, height, xs, ys) -> "Axes":
        xs, ys = list(xs), list(ys)
        if not xs or not ys:
            raise ValueError("cannot fit axes to empty data")
        xmin, xmax = min(xs), max(xs)
        ymin, ymax = min(ys), max(ys)
        dx = (xmax - xmin) or 1.0
        dy = (ymax - ymin) or 1.0
        return cls(x0, y0, width, height,
                   xmin - 0.05 * dx, xmax + 0.05 * dx,
                   ymin - 0.05 * dy, ymax + 0.05 * dy)

    def px(self, x: float) -> float:
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.width

    def py(self, y: float) -> float:
        # svg y grows downward
        return self.y0 + self.height - (y - self.ymin) / (self.ymax - self.ymin) * self.height

    def ticks(self, n: int = 5) -> tuple[list[float], list[float]]:
        xs = [self.xmin + i * (self.xmax - self.xmin) / (n - 1) for i in range(n)]
        ys = [self.ymin + i * (self.ymax - self.ymin) / (n - 1) for i in range(n)]
        return xs, ys

    def frame(self, svg: Svg, xlabel: str = "", ylabel: str = ""):
        svg.rect(self.x0, self.y0, self.width, self.height,
                 fill="#ffffff", stroke="#000000")
        txs, tys = self.ticks()
        for tx in txs:
            px = self.px(tx)
            svg.line(px, self.y0 + self.height, px, self.y0 + self.height + 4)
            svg.text(px, self.y0 + self.height + 16, "%.3g" % tx, size=10,
                     anchor="middle")
        for ty in tys:
            py = self.py(ty)
            svg.line(self.x0 - 4, py, self.x0, py)
            svg.text(self.x0 - 6, py + 3, "%.3g" % ty, size=10, anchor="end")
        if xlabel:
            svg.text(self.x0 + self.width / 2, self.y0 + self.height + 32,
                     xlabel, size=11, anchor="middle")
        if ylabel:
            svg.text(self.x0 + 12, self.y0 - 8, ylabel, size=11)
