"""Bare-bones static SVG charts: line charts and grouped or stacked bars."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape, quoteattr

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    ticks, v = [], start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{LEFT + (WIDTH - LEFT - RIGHT) / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="18" y="{TOP + (HEIGHT - TOP - BOTTOM) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + (HEIGHT - TOP - BOTTOM) / 2})">{escape(ylabel)}</text>',
    ]


def _y_axis(parts: list[str], ylo: float, yhi: float, ymap) -> None:
    x0, x1 = LEFT, WIDTH - RIGHT
    parts.append(f'<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{HEIGHT - BOTTOM}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{HEIGHT - BOTTOM}" x2="{x1}" y2="{HEIGHT - BOTTOM}" stroke="black"/>')
    for t in _nice_ticks(ylo, yhi):
        if t < ylo - 1e-12 or t > yhi + 1e-12:
            continue
        y = ymap(t)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" stroke="#ddd"/>')
        parts.append(f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{t:g}</text>')


def _legend(parts: list[str], labels: list[str]) -> None:
    x = WIDTH - RIGHT + 12
    for k, label in enumerate(labels):
        y = TOP + 10 + 18 * k
        parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="10" fill="{PALETTE[k % len(PALETTE)]}"/>')
        parts.append(f'<text x="{x + 16}" y="{y}">{escape(label)}</text>')


def _y_range(values: list[float], ylim) -> tuple[float, float]:
    if ylim is not None:
        return ylim
    if not values:
        return 0.0, 1.0
    lo, hi = min(min(values), 0.0), max(values)
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi * 1.05 if hi > 0 else hi


def line_chart(title, xlabel, ylabel, series: dict[str, tuple[list, list]], ylim=None) -> str:
    """``series`` maps a label to ``(xs, ys)``; ``None`` ys are skipped."""
    pts = {k: [(x, y) for x, y in zip(xs, ys) if y is not None] for k, (xs, ys) in series.items()}
    xs_all = [x for v in pts.values() for x, _ in v]
    ys_all = [y for v in pts.values() for _, y in v]
    xlo, xhi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    ylo, yhi = _y_range(ys_all, ylim)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def xmap(x):
        return LEFT + (x - xlo) / (xhi - xlo) * pw

    def ymap(y):
        return TOP + ph - (y - ylo) / (yhi - ylo) * ph

    parts = _frame(title, xlabel, ylabel)
    _y_axis(parts, ylo, yhi, ymap)
    for t in _nice_ticks(xlo, xhi):
        if xlo - 1e-12 <= t <= xhi + 1e-12:
            parts.append(f'<text x="{_fmt(xmap(t))}" y="{HEIGHT - BOTTOM + 16}" text-anchor="middle">{t:g}</text>')
    for k, (label, p) in enumerate(pts.items()):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{_fmt(xmap(x))},{_fmt(ymap(y))}" for x, y in p)
        parts.append(f'<g class="series" data-label={quoteattr(label)}>')
        if len(p) > 1:
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in p:
            parts.append(f'<circle cx="{_fmt(xmap(x))}" cy="{_fmt(ymap(y))}" r="3" fill="{color}"/>')
        parts.append("</g>")
    _legend(parts, list(pts))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart(title, xlabel, ylabel, groups: list[str], bars: list[str], values, stacked=False, ylim=None) -> str:
    """``values[g][b]`` is the height of bar ``b`` in group ``g`` (``None`` = missing)."""
    if stacked:
        tops = [sum(v for v in row if v is not None) for row in values]
    else:
        tops = [v for row in values for v in row if v is not None]
    ylo, yhi = _y_range(tops, ylim)
    ylo = min(ylo, 0.0)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def ymap(y):
        return TOP + ph - (y - ylo) / (yhi - ylo) * ph

    parts = _frame(title, xlabel, ylabel)
    _y_axis(parts, ylo, yhi, ymap)
    gw = pw / max(1, len(groups))
    inner = gw * 0.8
    bw = inner if stacked else inner / max(1, len(bars))
    for gi, g in enumerate(groups):
        gx = LEFT + gi * gw + gw * 0.1
        parts.append(f'<g class="group" data-label={quoteattr(g)}>')
        base = 0.0
        for bi, b in enumerate(bars):
            v = values[gi][bi]
            if v is None:
                continue
            color = PALETTE[bi % len(PALETTE)]
            if stacked:
                y_top, y_bot = ymap(base + v), ymap(base)
                x = gx
                base += v
            else:
                y_top, y_bot = ymap(max(v, 0.0)), ymap(min(v, 0.0))
                x = gx + bi * bw
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y_top)}" width="{_fmt(bw)}" height="{_fmt(y_bot - y_top)}" '
                f'fill="{color}" data-bar={quoteattr(b)}/>'
            )
        parts.append(
            f'<text x="{_fmt(gx + inner / 2)}" y="{HEIGHT - BOTTOM + 16}" text-anchor="middle">{escape(g)}</text>'
        )
        parts.append("</g>")
    _legend(parts, bars)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
