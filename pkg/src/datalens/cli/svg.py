"""Minimal standalone SVG charts: line charts and two-series histograms.

Coordinates are printed with fixed precision so identical inputs give
identical files.
"""

from __future__ import annotations

from html import escape
from typing import Mapping, Sequence

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 60, 170, 40, 50


def _f(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / n for i in range(n + 1)]


def _label(v: float) -> str:
    a = abs(v)
    if a != 0 and (a < 1e-2 or a >= 1e4):
        return f"{v:.1e}"
    return f"{v:.2f}"


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi == xlo:
            xhi = xlo + 1.0
        if yhi == ylo:
            yhi = ylo + 1.0
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.pw, self.ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def x(self, v):
        return LEFT + (v - self.xlo) / (self.xhi - self.xlo) * self.pw

    def y(self, v):
        return TOP + self.ph - (v - self.ylo) / (self.yhi - self.ylo) * self.ph

    def axes(self, title, xlabel, ylabel) -> list[str]:
        out = [f'<rect x="{LEFT}" y="{TOP}" width="{self.pw}" height="{self.ph}" '
               'fill="none" stroke="#333"/>',
               f'<text x="{_f(LEFT + self.pw / 2)}" y="24" text-anchor="middle" '
               f'font-size="15">{escape(title)}</text>',
               f'<text x="{_f(LEFT + self.pw / 2)}" y="{H - 12}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>',
               f'<text x="16" y="{_f(TOP + self.ph / 2)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {_f(TOP + self.ph / 2)})">{escape(ylabel)}</text>']
        for t in _ticks(self.xlo, self.xhi):
            px = self.x(t)
            out.append(f'<line x1="{_f(px)}" y1="{TOP + self.ph}" x2="{_f(px)}" '
                       f'y2="{TOP + self.ph + 4}" stroke="#333"/>')
            out.append(f'<text x="{_f(px)}" y="{TOP + self.ph + 17}" text-anchor="middle" '
                       f'font-size="10">{_label(t)}</text>')
        for t in _ticks(self.ylo, self.yhi):
            py = self.y(t)
            out.append(f'<line x1="{LEFT - 4}" y1="{_f(py)}" x2="{LEFT}" y2="{_f(py)}" stroke="#333"/>')
            out.append(f'<text x="{LEFT - 7}" y="{_f(py + 3)}" text-anchor="end" '
                       f'font-size="10">{_label(t)}</text>')
        return out


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = TOP + 8 + 16 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{W - RIGHT + 12}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - RIGHT + 27}" y="{y + 1}" font-size="11">{escape(name)}</text>')
    return out


def _doc(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{W}" height="{H}" fill="white"/>', *body, "</svg>"]) + "\n"


def line_chart(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str,
               xlabel: str, ylabel: str, ylim: tuple[float, float] | None = None) -> str:
    xs = [v for x, _ in series.values() for v in x]
    ys = [v for _, y in series.values() for v in y]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    ylo, yhi = ylim if ylim else (min(ys), max(ys))
    fr = _Frame(min(xs), max(xs), ylo, yhi)
    body = fr.axes(title, xlabel, ylabel)
    for i, (name, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{_f(fr.x(a))},{_f(fr.y(b))}" for a, b in zip(x, y))
        body.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                    f'stroke-width="1.5" points="{pts}"/>')
    body += _legend(list(series))
    return _doc(body)


def histogram(edges: Sequence[float], counts: Mapping[str, Sequence[int]], title: str,
              xlabel: str, ylabel: str = "samples") -> str:
    """Side-by-side bars per bin, one colour per series."""
    top = max([max(c) if len(c) else 0 for c in counts.values()] + [1])
    fr = _Frame(float(edges[0]), float(edges[-1]), 0.0, float(top))
    body = fr.axes(title, xlabel, ylabel)
    k = max(len(counts), 1)
    for i, (name, c) in enumerate(counts.items()):
        for j, n in enumerate(c):
            if n == 0:
                continue
            x0, x1 = fr.x(edges[j]), fr.x(edges[j + 1])
            w = (x1 - x0) / k
            y = fr.y(n)
            body.append(f'<rect x="{_f(x0 + i * w)}" y="{_f(y)}" width="{_f(w)}" '
                        f'height="{_f(fr.y(0) - y)}" fill="{PALETTE[i % len(PALETTE)]}"/>')
    body += _legend(list(counts))
    return _doc(body)
