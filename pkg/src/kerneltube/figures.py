"""Self-contained SVG rendering of planning results (no plotting dependency)."""

import numpy as np

from .planner import star_polygon

_W = 640
_H = 640
_MARGIN = 40


class _Mapper:
    """Map data coordinates to SVG pixels (y axis flipped)."""

    def __init__(self, lo, hi):
        span = np.maximum(hi - lo, 1e-9)
        scale = min((_W - 2 * _MARGIN) / span[0], (_H - 2 * _MARGIN) / span[1])
        self.scale = scale
        self.lo = lo
        self.hi = hi

    def pt(self, p):
        x = _MARGIN + (p[0] - self.lo[0]) * self.scale
        y = _H - _MARGIN - (p[1] - self.lo[1]) * self.scale
        return f"{x:.2f},{y:.2f}"

    def xy(self, p):
        x = _MARGIN + (p[0] - self.lo[0]) * self.scale
        y = _H - _MARGIN - (p[1] - self.lo[1]) * self.scale
        return x, y


def _polyline(mapper, points, color, width=1.5, opacity=1.0):
    pts = " ".join(mapper.pt(p) for p in points)
    return (
        f'<polyline points="{pts}" fill="none" stroke="{color}" '
        f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
    )


def render_plan_svg(path, plan_result, rollout_states, plan_config, provenance=""):
    """Write an SVG figure of the planned tube and executed rollouts.

    Shows the obstacle, the tube rectangles of the nominal plan, the
    nominal model rollout in red, and the closed-loop trajectories in
    blue.  ``rollout_states`` is an (R, T, 2) array or an empty list.
    """
    rects = plan_result.rects
    pieces = [rects[:, 0, :], rects[:, 1, :], plan_result.nominal]
    for traj in rollout_states:
        pieces.append(np.asarray(traj))
    allpts = np.vstack(pieces)
    center = np.asarray(plan_config.obstacle_center, dtype=float)
    radius = plan_config.obstacle_radius
    lo = np.minimum(allpts.min(axis=0), center - radius) - 0.5
    hi = np.maximum(allpts.max(axis=0), center + radius) + 0.5
    m = _Mapper(lo, hi)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f"<!-- {provenance} -->" if provenance else "<!-- kerneltube plan -->",
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # tube rectangles
    for k in range(rects.shape[0]):
        rlo, rhi = rects[k]
        x0p, y1p = m.xy(rlo)
        x1p, y0p = m.xy(rhi)
        parts.append(
            f'<rect x="{x0p:.2f}" y="{y0p:.2f}" width="{x1p - x0p:.2f}" '
            f'height="{y1p - y0p:.2f}" fill="#9ecae1" fill-opacity="0.25" '
            f'stroke="#6baed6" stroke-width="0.5"/>'
        )
    # obstacle
    if plan_config.obstacle_shape == "disk":
        cx, cy = m.xy(center)
        parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius * m.scale:.2f}" '
            f'fill="#636363" fill-opacity="0.85"/>'
        )
    else:
        verts = star_polygon(
            center, plan_config.star_circumradius, plan_config.star_inradius
        )
        pts = " ".join(m.pt(v) for v in verts)
        parts.append(f'<polygon points="{pts}" fill="#636363" fill-opacity="0.85"/>')
    # rollouts (blue) under the nominal path (red)
    for traj in rollout_states:
        parts.append(_polyline(m, np.asarray(traj), "#3182bd", 1.0, 0.7))
    parts.append(_polyline(m, plan_result.nominal, "#de2d26", 2.0))
    # endpoints
    for p, color in ((plan_config.x0, "#31a354"), (plan_config.xf, "#756bb1")):
        cx, cy = m.xy(np.asarray(p, dtype=float))
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{color}"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
