"""Static SVG figures: top-down trajectory plots and success-rate bars.

SVGs are emitted directly with fixed float formatting so identical inputs
produce byte-identical files. Trajectory plots follow the reporting
convention: reference paths solid, executed paths dashed.
"""
from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def polyline(self, pts, color, dashed=False, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash}/>')

    def circle(self, x, y, r, color, fill="none"):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" stroke="{color}" '
            f'fill="{fill}"/>')

    def rect(self, x, y, w, h, color):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{color}"/>')

    def text(self, x, y, s, size=12, anchor="start"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def render_episode_svg(doc: dict, paths_by_sector: dict, size: int = 720) -> str:
    """Top-down view of one episode: solid references, dashed executed paths."""
    pts = []
    for agent in doc["agents"]:
        pts.extend([(s[0], s[1]) for s in agent["trajectory"]["states"]])
        pts.extend([(w[0], w[1]) for w in paths_by_sector[agent["sector"]].waypoints])
    pts = np.array(pts)
    lo = pts.min(axis=0) - 0.5
    hi = pts.max(axis=0) + 0.5
    span = float(max(hi - lo))
    margin = 40.0
    scale = (size - 2 * margin) / span

    def to_px(x, y):
        return (margin + (x - lo[0]) * scale, size - margin - (y - lo[1]) * scale)

    cv = _Canvas(size, size)
    for i, agent in enumerate(doc["agents"]):
        color = PALETTE[i % len(PALETTE)]
        ref = paths_by_sector[agent["sector"]].waypoints
        cv.polyline([to_px(w[0], w[1]) for w in ref], color, dashed=False, width=1.0)
        exe = agent["trajectory"]["states"]
        cv.polyline([to_px(s[0], s[1]) for s in exe], color, dashed=True, width=1.8)
        sx, sy = to_px(exe[0][0], exe[0][1])
        cv.circle(sx, sy, 4.0, color)
        cv.text(sx + 6, sy - 6, f'{agent["id"]} ({agent["planner"]}, {agent["outcome"]})',
                size=11)
    gx, gy = to_px(*[paths_by_sector[doc["agents"][0]["sector"]].waypoints[-1][k]
                     for k in (0, 1)])
    cv.rect(gx - 5, gy - 2, 10, 4, "#333333")
    cv.text(margin, 20, f'episode seed={doc["config"]["seed"]} '
                        f'n_agents={doc["config"]["n_agents"]}', size=13)
    return cv.render()


def render_success_bars_svg(groups: list[dict], size: int = 720) -> str:
    """Grouped success-rate bars, one cluster per agent count.

    groups rows: {n_agents, algorithm, success_pct}.
    """
    cv = _Canvas(size, 420)
    counts = sorted({g["n_agents"] for g in groups})
    algs = sorted({g["algorithm"] for g in groups})
    colors = {alg: PALETTE[i % len(PALETTE)] for i, alg in enumerate(algs)}
    margin, base, top = 60.0, 360.0, 40.0
    cluster_w = (size - 2 * margin) / max(len(counts), 1)
    bar_w = cluster_w / (len(algs) + 1)
    for ci, n in enumerate(counts):
        for ai, alg in enumerate(algs):
            rows = [g for g in groups if g["n_agents"] == n and g["algorithm"] == alg]
            pct = rows[0]["success_pct"] if rows else 0.0
            h = (base - top) * pct / 100.0
            x = margin + ci * cluster_w + (ai + 0.5) * bar_w
            cv.rect(x, base - h, bar_w * 0.9, h, colors[alg])
            cv.text(x + bar_w * 0.45, base - h - 4, f"{pct:.1f}", size=10, anchor="middle")
        cv.text(margin + ci * cluster_w + cluster_w / 2, base + 20, f"{n} agents",
                size=12, anchor="middle")
    for ai, alg in enumerate(algs):
        cv.rect(margin + ai * 120.0, 8.0, 12, 12, colors[alg])
        cv.text(margin + ai * 120.0 + 16, 18.0, alg, size=12)
    cv.text(size / 2, 405, "task success rate (%)", size=12, anchor="middle")
    return cv.render()
