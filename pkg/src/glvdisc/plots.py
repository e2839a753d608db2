"""Self-contained SVG line/band plots for run artifacts.

Deliberately dependency-free: the pipeline's plot emission is optional and
must not pull a plotting stack into an otherwise numpy-only install.  The
renderer covers exactly what the artifacts need -- overlaid lines, shaded
quantile bands, scatter markers, axes with round-number ticks, a legend.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 62, "right": 16, "top": 34, "bottom": 44}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f"]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s for s in (1.0, 2.0, 2.5, 5.0, 10.0) if s * mag >= raw),
               default=10.0) * mag
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(value: float) -> str:
    if value == int(value) and abs(value) < 1e6:
        return str(int(value))
    return f"{value:.4g}"


class _Canvas:
    """Collects SVG elements over a fixed plot frame."""

    def __init__(self, x_range: tuple[float, float],
                 y_range: tuple[float, float], title: str,
                 xlabel: str, ylabel: str):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts: list[str] = []
        self.legend: list[tuple[str, str]] = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def sx(self, x: float) -> float:
        span = WIDTH - MARGIN["left"] - MARGIN["right"]
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * span

    def sy(self, y: float) -> float:
        span = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        return HEIGHT - MARGIN["bottom"] - \
            (y - self.y0) / (self.y1 - self.y0) * span

    def band(self, x: Sequence[float], lo: Sequence[float],
             hi: Sequence[float], color: str, opacity: float = 0.18) -> None:
        fwd = [f"{self.sx(a):.2f},{self.sy(b):.2f}" for a, b in zip(x, lo)]
        back = [f"{self.sx(a):.2f},{self.sy(b):.2f}"
                for a, b in zip(reversed(list(x)), reversed(list(hi)))]
        self.parts.append(
            f'<polygon points="{" ".join(fwd + back)}" fill="{color}" '
            f'fill-opacity="{opacity}" stroke="none"/>')

    def line(self, x: Sequence[float], y: Sequence[float], color: str,
             label: str | None = None, dash: str | None = None,
             width: float = 1.6) -> None:
        pts = " ".join(f"{self.sx(a):.2f},{self.sy(b):.2f}"
                       for a, b in zip(x, y))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>')
        if label:
            self.legend.append((label, color))

    def dots(self, x: Sequence[float], y: Sequence[float], color: str,
             label: str | None = None, radius: float = 3.0) -> None:
        for a, b in zip(x, y):
            self.parts.append(
                f'<circle cx="{self.sx(a):.2f}" cy="{self.sy(b):.2f}" '
                f'r="{radius}" fill="{color}"/>')
        if label:
            self.legend.append((label, color))

    def _axes(self) -> list[str]:
        left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
        right, top = WIDTH - MARGIN["right"], MARGIN["top"]
        out = [f'<rect x="{left}" y="{top}" width="{right - left}" '
               f'height="{bottom - top}" fill="none" stroke="#333"/>']
        for t in _nice_ticks(self.x0, self.x1):
            px = self.sx(t)
            out.append(f'<line x1="{px:.2f}" y1="{bottom}" x2="{px:.2f}" '
                       f'y2="{bottom + 4}" stroke="#333"/>')
            out.append(f'<text x="{px:.2f}" y="{bottom + 16}" '
                       f'text-anchor="middle" font-size="11">{_fmt(t)}</text>')
        for t in _nice_ticks(self.y0, self.y1):
            py = self.sy(t)
            out.append(f'<line x1="{left - 4}" y1="{py:.2f}" x2="{left}" '
                       f'y2="{py:.2f}" stroke="#333"/>')
            out.append(f'<text x="{left - 7}" y="{py + 4:.2f}" '
                       f'text-anchor="end" font-size="11">{_fmt(t)}</text>')
        out.append(f'<text x="{(left + right) / 2}" y="{HEIGHT - 8}" '
                   f'text-anchor="middle" font-size="12">{self.xlabel}</text>')
        out.append(f'<text x="16" y="{(top + bottom) / 2}" '
                   f'text-anchor="middle" font-size="12" transform='
                   f'"rotate(-90 16 {(top + bottom) / 2})">'
                   f'{self.ylabel}</text>')
        out.append(f'<text x="{(left + right) / 2}" y="20" text-anchor='
                   f'"middle" font-size="14">{self.title}</text>')
        return out

    def _legend(self) -> list[str]:
        out = []
        x = WIDTH - MARGIN["right"] - 150
        y = MARGIN["top"] + 14
        for i, (label, color) in enumerate(self.legend):
            yy = y + 15 * i
            out.append(f'<line x1="{x}" y1="{yy - 4}" x2="{x + 18}" '
                       f'y2="{yy - 4}" stroke="{color}" stroke-width="3"/>')
            out.append(f'<text x="{x + 24}" y="{yy}" font-size="11">'
                       f'{label}</text>')
        return out

    def write(self, path: str | Path) -> None:
        body = "\n".join(self._axes() + self.parts + self._legend())
        Path(path).write_text(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f"{body}\n</svg>\n")


def scenario_band_plot(path: str | Path, times: np.ndarray,
                       observed: np.ndarray, truth: np.ndarray,
                       reduced: np.ndarray, median: np.ndarray,
                       lo95: np.ndarray, hi95: np.ndarray,
                       title: str = "") -> None:
    """One scenario: per-species predictive bands vs data and references.

    All value arrays are (n_times, n_species).
    """
    times = np.asarray(times, dtype=float)
    stacked = np.concatenate([observed, truth, reduced, lo95, hi95])
    lo = float(min(0.0, stacked.min()))
    hi = float(stacked.max()) * 1.05
    cv = _Canvas((0.0, float(times[-1])), (lo, hi), title,
                 "time", "concentration")
    n_species = observed.shape[1]
    for i in range(n_species):
        color = PALETTE[i % len(PALETTE)]
        cv.band(times, lo95[:, i], hi95[:, i], color)
        cv.line(times, median[:, i], color,
                label=f"species {i} enriched median")
        cv.line(times, reduced[:, i], color, dash="5,3",
                label=f"species {i} reduced")
        cv.dots(times, observed[:, i], color)
    cv.write(path)


def f_gamma_plot(path: str | Path, rows: Sequence, title: str =
                 "fraction of gamma-values below threshold") -> None:
    """f_gamma against relative size alpha, one line per (partition, tau)."""
    groups: dict[tuple[str, float], list] = {}
    for r in rows:
        groups.setdefault((r.partition, r.tau), []).append(r)
    cv = _Canvas((0.0, 1.0), (0.0, 1.0), title,
                 "alpha = s / S", "f_gamma")
    for idx, ((partition, tau), cell) in enumerate(sorted(groups.items())):
        cell = sorted(cell, key=lambda r: r.alpha)
        color = PALETTE[idx % len(PALETTE)]
        cv.line([r.alpha for r in cell], [r.value for r in cell], color,
                label=f"{partition}, tau={tau:g}")
        cv.dots([r.alpha for r in cell], [r.value for r in cell], color)
    cv.write(path)


def complexity_plot(path: str | Path, rows: Sequence[dict],
                    title: str = "relative model complexity") -> None:
    """Complexity against alpha, one line per detailed size."""
    groups: dict[int, list[dict]] = {}
    for r in rows:
        groups.setdefault(int(r["detailed_size"]), []).append(r)
    cv = _Canvas((0.0, 1.0), (0.0, 1.0), title, "alpha = s / S",
                 "relative complexity")
    for idx, (S, cell) in enumerate(sorted(groups.items())):
        cell = sorted(cell, key=lambda r: r["alpha"])
        cv.line([r["alpha"] for r in cell],
                [r["complexity"] for r in cell],
                PALETTE[idx % len(PALETTE)], label=f"S = {S}")
    cv.write(path)
