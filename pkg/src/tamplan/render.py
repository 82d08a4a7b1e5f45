"""Standalone SVG drawings of scenarios, tunnels and trajectories."""

from __future__ import annotations

from typing import Sequence

from .geometry import HPolytope
from .simkit import TraceRecord

SCALE = 60  # pixels per meter
PAD = 20


def _poly_points(poly: HPolytope, to_px) -> str:
    return " ".join(f"{x:.1f},{y:.1f}" for x, y in (to_px(float(a), float(b)) for a, b in poly.vertices()))


def render_svg(scn, plans: Sequence = (), trace: TraceRecord | None = None) -> str:
    verts = [(float(x), float(y)) for x, y in scn.workspace.boundary.vertices()]
    xmin, xmax = min(v[0] for v in verts), max(v[0] for v in verts)
    ymin, ymax = min(v[1] for v in verts), max(v[1] for v in verts)
    width = (xmax - xmin) * SCALE + 2 * PAD
    height = (ymax - ymin) * SCALE + 2 * PAD

    def to_px(x, y):
        return PAD + (x - xmin) * SCALE, PAD + (ymax - y) * SCALE

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<title>{scn.name}</title>',
        f'<polygon points="{_poly_points(scn.workspace.boundary, to_px)}" fill="#fafafa" stroke="#333" stroke-width="2"/>',
    ]
    for plan in plans:
        for poly in plan.tunnel.polytopes:
            out.append(f'<polygon points="{_poly_points(poly, to_px)}" fill="#4a90d9" fill-opacity="0.06" '
                       f'stroke="#4a90d9" stroke-opacity="0.3"/>')
    for cb in scn.cobstacles:
        out.append(f'<polygon points="{_poly_points(cb.inflated, to_px)}" fill="none" stroke="#c0392b" '
                   f'stroke-dasharray="4 3"/>')
    for name, ob in zip(scn.obstacle_names, scn.workspace.obstacles):
        out.append(f'<polygon points="{_poly_points(ob, to_px)}" fill="#7f8c8d"><title>{name}</title></polygon>')
    for loc in scn.locations:
        x, y = to_px(float(loc.x), float(loc.y))
        color = "#27ae60" if loc.robot_access else "#8e44ad"
        out.append(f'<rect x="{x - 8:.1f}" y="{y - 8:.1f}" width="16" height="16" fill="none" stroke="{color}"/>')
        out.append(f'<text x="{x + 10:.1f}" y="{y - 10:.1f}" font-size="12" font-family="sans-serif">{loc.name}</text>')
    for plan in plans:
        pts = [plan.start] + list(plan.targets)
        line = " ".join(f"{a:.1f},{b:.1f}" for a, b in (to_px(float(p[0]), float(p[1])) for p in pts))
        out.append(f'<polyline points="{line}" fill="none" stroke="#4a90d9" stroke-dasharray="6 4"/>')
    if trace is not None and trace.rows:
        px, py, mode = trace.column("px"), trace.column("py"), trace.column("mode")
        step = max(1, len(px) // 2000)
        line = " ".join(f"{a:.1f},{b:.1f}" for a, b in (to_px(x, y) for x, y in zip(px[::step], py[::step])))
        out.append(f'<polyline points="{line}" fill="none" stroke="#e67e22" stroke-width="2"/>')
        for i in range(0, len(px), 10):
            if mode[i] == "override":
                x, y = to_px(px[i], py[i])
                out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2" fill="#c0392b"/>')
        for j in range(len(trace.obstacle_names)):
            ox, oy = trace.column(f"obst{j + 1}x"), trace.column(f"obst{j + 1}y")
            line = " ".join(f"{a:.1f},{b:.1f}" for a, b in (to_px(x, y) for x, y in zip(ox[::step * 5], oy[::step * 5])))
            out.append(f'<polyline points="{line}" fill="none" stroke="#95a5a6" stroke-dasharray="2 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
