"""Result files: residual CSV, equilibrium JSON and two SVG plots."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CSV_HEADER = ("iteration", "mode", "topology", "residual", "lyapunov", "wall_ms")
FILES = ("residuals.csv", "equilibrium.json", "convergence.svg", "trajectories.svg")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
MAX_POINTS = 1500


def residuals_csv(runs) -> str:
    """CSV text with one row per iteration of every run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for run in runs:
        rep = run.report
        for k in range(rep.iterations):
            w.writerow([k + 1, run.mode, run.topology, repr(float(rep.residuals[k])),
                        repr(float(rep.lyapunov[k])), repr(float(rep.wall_ms[k]))])
    return buf.getvalue()


def _thin(n: int) -> np.ndarray:
    """At most ``MAX_POINTS`` evenly spread indices, endpoints included."""
    if n <= MAX_POINTS:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, MAX_POINTS).round().astype(int))


class _Canvas:
    W, H, L, R, T, B = 720, 440, 70, 170, 30, 50

    def __init__(self, title: str, xmax: float, ylo: float, yhi: float, log_y: bool):
        self.xmax = max(xmax, 1.0)
        self.log_y = log_y
        if log_y:
            ylo, yhi = math.log10(ylo), math.log10(yhi)
        if yhi <= ylo:
            yhi = ylo + 1.0
        self.ylo, self.yhi = ylo, yhi
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
            f'viewBox="0 0 {self.W} {self.H}">',
            f'<title>{escape(title)}</title>',
            f'<rect x="{self.L}" y="{self.T}" width="{self.pw}" height="{self.ph}" fill="none" stroke="#333"/>',
        ]
        self.series = []
        self._axes()

    @property
    def pw(self) -> int:
        return self.W - self.L - self.R

    @property
    def ph(self) -> int:
        return self.H - self.T - self.B

    def px(self, x: float) -> float:
        return self.L + self.pw * x / self.xmax

    def py(self, y: float) -> float:
        if self.log_y:
            y = math.log10(max(y, 10.0 ** self.ylo))
        return self.T + self.ph * (1.0 - (y - self.ylo) / (self.yhi - self.ylo))

    def _axes(self):
        for t in np.linspace(0, self.xmax, 5):
            x = self.px(t)
            self.parts.append(f'<text x="{x:.1f}" y="{self.H - self.B + 18}" font-size="11" '
                              f'text-anchor="middle">{int(t)}</text>')
        if self.log_y:
            ticks = range(math.floor(self.ylo), math.ceil(self.yhi) + 1)
            labels = [(10.0 ** e, f"1e{e}") for e in ticks if self.ylo <= e <= self.yhi]
        else:
            labels = [(v, f"{v:.3g}") for v in np.linspace(self.ylo, self.yhi, 5)]
        for v, lab in labels:
            y = self.py(v)
            self.parts.append(f'<text x="{self.L - 6}" y="{y + 4:.1f}" font-size="11" text-anchor="end">{lab}</text>')
        self.parts.append(f'<text x="{self.L + self.pw / 2}" y="{self.H - 8}" font-size="12" '
                          f'text-anchor="middle">iteration</text>')

    def polyline(self, name: str, xs, ys, color: str):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        self.parts.append(f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" '
                          f'stroke-width="1.3" points="{pts}"/>')
        k = len(self.series)
        ly = self.T + 14 * k + 8
        self.parts.append(f'<text x="{self.W - self.R + 10}" y="{ly}" font-size="11" fill="{color}">'
                          f'{escape(name)}</text>')
        self.series.append(name)

    def hline(self, y: float, color: str):
        yy = self.py(y)
        self.parts.append(f'<line x1="{self.L}" x2="{self.L + self.pw}" y1="{yy:.2f}" y2="{yy:.2f}" '
                          f'stroke="{color}" stroke-dasharray="5,4" stroke-width="1"/>')

    def render(self) -> str:
        meta = json.dumps(self.series)
        return "\n".join(self.parts[:2] + [f"<desc>{escape(meta)}</desc>"] + self.parts[2:] + ["</svg>"]) + "\n"


def convergence_svg(runs) -> str:
    """Log-scale residual per iteration, one polyline per (mode, topology) run."""
    vals = np.concatenate([r.report.residuals for r in runs if r.report.iterations] or [np.ones(1)])
    vals = vals[vals > 0]
    lo = float(vals.min()) if vals.size else 1e-12
    hi = float(vals.max()) if vals.size else 1.0
    xmax = max((r.report.iterations for r in runs), default=1)
    c = _Canvas("natural residual", xmax, lo, hi, log_y=True)
    for k, run in enumerate(runs):
        res = run.report.residuals
        idx = _thin(res.size)
        c.polyline(f"{run.mode}/{run.topology}", idx + 1, res[idx], PALETTE[k % len(PALETTE)])
    return c.render()


def trajectories_svg(run) -> str:
    """Each agent's strategy components per iteration; dashed lines mark the centralized solution."""
    xt = run.report.x_trace
    ref = run.centralized.x if run.centralized is not None else None
    allv = xt.ravel() if ref is None else np.concatenate([xt.ravel(), ref])
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    pad = 0.05 * (hi - lo or 1.0)
    c = _Canvas(f"strategies ({run.mode}/{run.topology})", max(xt.shape[0] - 1, 1), lo - pad, hi + pad, log_y=False)
    idx = _thin(xt.shape[0])
    for j in range(xt.shape[1]):
        color = PALETTE[j % len(PALETTE)]
        c.polyline(f"x[{j}]", idx, xt[idx, j], color)
        if ref is not None:
            c.hline(float(ref[j]), color)
    return c.render()


def export_results(report, out_dir) -> dict:
    """Write the four result files; on failure remove whatever was written."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        contents = {
            "residuals.csv": residuals_csv(report.runs),
            "equilibrium.json": json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_jsonable),
            "convergence.svg": convergence_svg(report.runs),
        }
        if report.runs:
            contents["trajectories.svg"] = trajectories_svg(report.runs[0])
        paths = {}
        for name, text in contents.items():
            p = out / name
            p.write_text(text)
            written.append(p)
            paths[name] = p
        return paths
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
