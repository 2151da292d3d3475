"""SVG picture of a torus mosaic.

Faces are drawn once, unwrapped from their first vertex, then the whole
group is repeated in the eight neighbouring periods and clipped to the
fundamental box, so cells crossing the seam show up on both sides.
"""
from __future__ import annotations

from ..errors import PreconditionError
from .mesh import TorusMosaic


def _f(v) -> str:
    return format(float(v), ".6f").rstrip("0").rstrip(".")


def render_svg(m: TorusMosaic, path, scale: float = 20.0, marker_radius: float | None = None) -> None:
    if not m.geometric:
        raise PreconditionError("SVG export needs a geometric-mode mosaic")
    W, H = m.width, m.height
    r = marker_radius if marker_radius is not None else 0.08
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{_f(W * scale)}" height="{_f(H * scale)}" viewBox="0 0 {_f(W)} {_f(H)}">',
        f'<defs><clipPath id="box"><rect x="0" y="0" width="{_f(W)}" height="{_f(H)}"/></clipPath></defs>',
        # y axis points up in the mosaic, down in SVG
        f'<g transform="matrix(1 0 0 -1 0 {_f(H)})" clip-path="url(#box)">',
        '<g id="cells" fill="#e8dcc4" stroke="#3b2f2f" stroke-width="0.03" stroke-linejoin="round">',
    ]
    for f in range(m.F):
        pts = m.face_polygon(f)
        out.append('<polygon points="' + " ".join(f"{_f(x)},{_f(y)}" for x, y in pts) + '"/>')
    out.append("</g>")
    for dx in (-W, 0.0, W):
        for dy in (-H, 0.0, H):
            if dx == 0.0 and dy == 0.0:
                continue
            out.append(f'<use xlink:href="#cells" href="#cells" transform="translate({_f(dx)} {_f(dy)})"/>')
    out.append('<g id="t-nodes" fill="#c0392b">')
    for v in m.irregular_vertices():
        x, y = m.v_pos[v]
        out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}"/>')
    out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
