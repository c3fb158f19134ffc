"""Minimal dependency-free SVG line charts."""
from __future__ import annotations

from html import escape
from pathlib import Path

import numpy as np

from .errors import NoStrides

WIDTH, HEIGHT = 640, 400
MARGIN = (60, 20, 40, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
JOINTS = ("hip", "knee", "ankle")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_chart(series, title: str = "", xlabel: str = "", ylabel: str = "", band=None,
               markers: bool = False) -> str:
    """``series`` is a list of ``(x, y, label)``; ``band`` is optional ``(x, lo, hi)``."""
    xs = [np.asarray(s[0], dtype=float) for s in series]
    ys = [np.asarray(s[1], dtype=float) for s in series]
    all_x = np.concatenate(xs)
    all_y = np.concatenate(ys + ([np.asarray(band[1]), np.asarray(band[2])] if band else []))
    all_x, all_y = all_x[np.isfinite(all_x)], all_y[np.isfinite(all_y)]
    x0, x1 = (all_x.min(), all_x.max()) if all_x.size else (0.0, 1.0)
    y0, y1 = (all_y.min(), all_y.max()) if all_y.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(x):
        return left + (np.asarray(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - np.asarray(y)) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for frac in np.linspace(0, 1, 5):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(xv)}</text>')
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{_fmt(yv)}</text>')
    if band is not None:
        bx, lo, hi = (np.asarray(a, dtype=float) for a in band)
        pts = [f"{a:.1f},{b:.1f}" for a, b in zip(px(bx), py(hi))]
        pts += [f"{a:.1f},{b:.1f}" for a, b in zip(px(bx[::-1]), py(lo[::-1]))]
        out.append(f'<polygon points="{" ".join(pts)}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>')
    for i, (x, y) in enumerate(zip(xs, ys)):
        color = COLORS[i % len(COLORS)]
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px(x[ok]), py(y[ok])))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if markers:
            out += [f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{color}"/>'
                    for a, b in zip(px(x[ok]), py(y[ok]))]
        label = escape(str(series[i][2]))
        out.append(f'<text x="{left + 8}" y="{top + 16 + 14 * i}" fill="{color}">{label}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{top - 8}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_eval_plots(directory, record, summary, strides, leg="left", mass=None) -> list:
    from .eval_harness import LEG_COLUMNS, kinetics_curves, stride_metrics

    d = Path(directory) / "plots"
    d.mkdir(parents=True, exist_ok=True)
    written = []
    per = summary["per_speed"]
    speeds = [e["speed"] for e in per]
    measured = [e["measured_speed"] for e in per]
    (d / "speed_tracking.svg").write_text(line_chart(
        [(speeds, speeds, "target"), (speeds, measured, "measured")],
        "Steady-state speed", "target speed (m/s)", "speed (m/s)", markers=True))
    written.append("speed_tracking.svg")

    cols = LEG_COLUMNS[leg]
    with_strides = [e["speed"] for e in per if e.get("n_strides")]
    if with_strides:
        v = min(with_strides, key=lambda s: abs(s - 1.25))
        idx = [i for i, ep in enumerate(record.episodes) if ep.speed == v]
        m = stride_metrics([strides[i] for i in idx], [record.episodes[i].angles[:, cols].T for i in idx],
                           record.cycles[v])
        phase = np.arange(m["reference_deg"].shape[1]) / m["reference_deg"].shape[1] * 100
        for j, name in enumerate(JOINTS):
            fname = f"kinematics_{name}.svg"
            (d / fname).write_text(line_chart(
                [(phase, m["reference_deg"][j], "synthetic"), (phase, m["mean_stride_deg"][j], "agent")],
                f"{name} angle at {v:.2f} m/s", "gait cycle (%)", "angle (deg)"))
            written.append(fname)
    if mass is not None:
        try:
            kin = kinetics_curves(record, strides, mass, leg=leg)
        except NoStrides:
            kin = None
        if kin is not None:
            phase = kin["phase"] * 100
            for key, unit in (("torque_per_mass", "N m/kg"), ("power_per_mass", "W/kg")):
                fname = f"{key}.svg"
                (d / fname).write_text(line_chart(
                    [(phase, kin[key][:, j], JOINTS[j]) for j in range(3)],
                    key.replace("_", " "), "gait cycle (%)", unit))
                written.append(fname)
    return written


def chirp_plot(result) -> str:
    return line_chart([(result.t, result.target, "target"), (result.t, result.mean, "measured mean")],
                      "Chirp speed tracking", "time (s)", "speed (m/s)",
                      band=(result.t, result.mean - result.band, result.mean + result.band))
