"""Minimal self-contained SVG charts (no external assets, stable bytes)."""

from __future__ import annotations

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT = 70, 20
MARGIN_TOP, MARGIN_BOTTOM = 40, 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _scale(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str) -> None:
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>',
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{x_label}</text>',
            f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {HEIGHT / 2})">{y_label}</text>',
        ]

    def px(self, frac: float) -> float:
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def py(self, frac: float) -> float:
        return HEIGHT - MARGIN_BOTTOM - frac * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)

    def axes(self, x_lo, x_hi, y_lo, y_hi) -> None:
        x0, x1 = self.px(0.0), self.px(1.0)
        y0, y1 = self.py(0.0), self.py(1.0)
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        )
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
        )
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = x_lo + frac * (x_hi - x_lo)
            yv = y_lo + frac * (y_hi - y_lo)
            self.parts.append(
                f'<text x="{self.px(frac):.1f}" y="{y0 + 16:.1f}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{_fmt(xv)}</text>'
            )
            self.parts.append(
                f'<text x="{x0 - 6:.1f}" y="{self.py(frac) + 3:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{_fmt(yv)}</text>'
            )

    def finish(self) -> str:
        self.parts.append("</svg>")
        return "\n".join(self.parts) + "\n"


def line_chart(
    title: str,
    x_label: str,
    y_label: str,
    series: list[tuple[str, list[float], list[float]]],
) -> str:
    """Render named (xs, ys) series as polylines with a small legend."""
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = _scale(all_x)
    y_lo, y_hi = _scale([0.0] + all_y)
    canvas = _Canvas(title, x_label, y_label)
    canvas.axes(x_lo, x_hi, y_lo, y_hi)
    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(
            f"{canvas.px((x - x_lo) / (x_hi - x_lo)):.1f},"
            f"{canvas.py((y - y_lo) / (y_hi - y_lo)):.1f}"
            for x, y in zip(xs, ys)
        )
        canvas.parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        for x, y in zip(xs, ys):
            canvas.parts.append(
                f'<circle cx="{canvas.px((x - x_lo) / (x_hi - x_lo)):.1f}" '
                f'cy="{canvas.py((y - y_lo) / (y_hi - y_lo)):.1f}" r="2.5" fill="{color}"/>'
            )
        ly = MARGIN_TOP + 14 * i
        canvas.parts.append(
            f'<rect x="{WIDTH - 150}" y="{ly - 8}" width="10" height="10" fill="{color}"/>'
        )
        canvas.parts.append(
            f'<text x="{WIDTH - 135}" y="{ly + 1}" font-family="sans-serif" '
            f'font-size="11">{name}</text>'
        )
    return canvas.finish()


def rank_heat_strip(
    title: str,
    x_label: str,
    counts: dict[int, int],
    x_max: int,
) -> str:
    """Histogram strip: darker cells mean more hospitals at that rank."""
    canvas = _Canvas(title, x_label, "count")
    peak = max(counts.values()) if counts else 1
    y_hi = float(peak)
    canvas.axes(1, x_max, 0.0, y_hi)
    band = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / max(1, x_max)
    for rank in sorted(counts):
        c = counts[rank]
        shade = 255 - int(205 * c / peak)
        x = canvas.px((rank - 1) / max(1, x_max))
        height = (c / y_hi) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
        y = canvas.py(c / y_hi)
        canvas.parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{max(band, 0.8):.2f}" '
            f'height="{height:.1f}" fill="rgb({shade},{shade},255)"/>'
        )
    return canvas.finish()
