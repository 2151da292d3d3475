"""Half-edge tessellations of a flat torus and the three seed patterns.

Storage is a struct of arrays with spare capacity so the compiled kernels
can grow the mesh in place:

=============  =====================================================
``he_org``     origin vertex of each half-edge
``he_nxt``     next half-edge around the face (counter-clockwise)
``he_prv``     previous half-edge around the face
``he_twin``    opposite half-edge
``he_fac``     face on the left
``he_cor``     1 if the origin is a true corner of that face
``he_vec``     origin-to-destination displacement (geometric mode only)
``v_he``       one outgoing half-edge per vertex
``v_pos``      wrapped position (geometric mode only)
``v_ncor``     corner degree n*
``v_deg``      combinatorial degree n
``v_irr``      slot in ``irr`` for T nodes, -1 otherwise
``v_gflat``    healed vertex that had to stay geometrically straight
``f_he``       one half-edge per face
``f_ncor``     number of true corners per face
``irr``        list of irregular vertices (swap-removal)
``cnt``        ``[V, H, F, N*, V_I]`` live counts
=============  =====================================================
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import InvariantViolation, PreconditionError
from ..stats import StateVector
from . import kernels as K

GEOMETRIC = "geometric"
COMBINATORIAL = "combinatorial"
MODES = (GEOMETRIC, COMBINATORIAL)
PATTERNS = ("brick", "square", "hex")

_IDX = np.int32


class TorusMosaic:
    """A convex tessellation of the ``W x H`` flat torus."""

    def __init__(self, width, height, mode=GEOMETRIC, pattern=None):
        if mode not in MODES:
            raise ValueError(f"geometry mode must be one of {MODES}, got {mode!r}")
        self.width = float(width)
        self.height = float(height)
        self.mode = mode
        self.pattern = pattern
        self.cnt = np.zeros(5, np.int64)
        self.box = np.array([self.width, self.height])
        self._alloc(0, 0, 0)

    # -- storage ---------------------------------------------------------------
    def _alloc(self, cv, ch, cf):
        g = 2 if self.geometric else 0
        self.he_org = np.full(ch, -1, _IDX)
        self.he_nxt = np.full(ch, -1, _IDX)
        self.he_prv = np.full(ch, -1, _IDX)
        self.he_twin = np.full(ch, -1, _IDX)
        self.he_fac = np.full(ch, -1, _IDX)
        self.he_cor = np.zeros(ch, np.uint8)
        self.he_vec = np.zeros((ch if g else 0, 2))
        self.v_he = np.full(cv, -1, _IDX)
        self.v_pos = np.zeros((cv if g else 0, 2))
        self.v_ncor = np.zeros(cv, _IDX)
        self.v_deg = np.zeros(cv, _IDX)
        self.v_irr = np.full(cv, -1, _IDX)
        self.v_gflat = np.zeros(cv, np.uint8)
        self.f_he = np.full(cf, -1, _IDX)
        self.f_ncor = np.zeros(cf, _IDX)
        self.irr = np.full(cv, -1, _IDX)

    @property
    def geometric(self) -> bool:
        return self.mode == GEOMETRIC

    @property
    def capacity(self):
        return self.v_he.size, self.he_org.size, self.f_he.size

    def reserve(self, cv, ch, cf):
        """Grow capacities to at least the given sizes (amortised doubling)."""
        ov, oh, of = self.capacity

        def grow(arr, n, fill):
            if arr.shape[0] >= n:
                return arr
            new = np.full((n,) + arr.shape[1:], fill, arr.dtype)
            new[: arr.shape[0]] = arr
            return new

        nv = max(cv, 2 * ov) if cv > ov else ov
        nh = max(ch, 2 * oh) if ch > oh else oh
        nf = max(cf, 2 * of) if cf > of else of
        for name in ("he_org", "he_nxt", "he_prv", "he_twin", "he_fac"):
            setattr(self, name, grow(getattr(self, name), nh, -1))
        self.he_cor = grow(self.he_cor, nh, 0)
        if self.geometric:
            self.he_vec = grow(self.he_vec, nh, 0.0)
            self.v_pos = grow(self.v_pos, nv, 0.0)
        self.v_he = grow(self.v_he, nv, -1)
        self.v_ncor = grow(self.v_ncor, nv, 0)
        self.v_deg = grow(self.v_deg, nv, 0)
        self.v_irr = grow(self.v_irr, nv, -1)
        self.v_gflat = grow(self.v_gflat, nv, 0)
        self.irr = grow(self.irr, nv, -1)
        self.f_he = grow(self.f_he, nf, -1)
        self.f_ncor = grow(self.f_ncor, nf, 0)

    def arrays(self) -> K.MeshArrays:
        return K.MeshArrays(
            self.he_org, self.he_nxt, self.he_prv, self.he_twin, self.he_fac, self.he_cor,
            self.he_vec if self.geometric else np.zeros((1, 2)),
            self.v_he, self.v_pos if self.geometric else np.zeros((1, 2)),
            self.v_ncor, self.v_deg, self.v_irr, self.v_gflat,
            self.f_he, self.f_ncor, self.irr, self.cnt, self.box,
        )

    # -- counts ----------------------------------------------------------------
    @property
    def V(self) -> int:
        return int(self.cnt[K.NV])

    @property
    def E(self) -> int:
        return int(self.cnt[K.NH]) // 2

    @property
    def F(self) -> int:
        return int(self.cnt[K.NF])

    @property
    def nstar(self) -> int:
        return int(self.cnt[K.NSTAR])

    @property
    def V_I(self) -> int:
        return int(self.cnt[K.NI])

    def state(self) -> StateVector:
        return StateVector((self.nstar, self.V, self.F))

    def irregular_vertices(self) -> np.ndarray:
        return np.sort(self.irr[: self.V_I].copy())

    def direct_counts(self) -> dict:
        """Recount everything by walking the arrays (no cached totals)."""
        nv, nf = self.V, self.F
        ncor_v = np.zeros(nv, np.int64)
        deg_v = np.zeros(nv, np.int64)
        org = self.he_org[: self.cnt[K.NH]]
        np.add.at(deg_v, org, 1)
        np.add.at(ncor_v, org, self.he_cor[: self.cnt[K.NH]])
        t_nodes = int(np.count_nonzero(ncor_v < deg_v))
        return {
            "V": nv,
            "E": int(self.cnt[K.NH]) // 2,
            "F": nf,
            "Nstar": int(ncor_v.sum()),
            "V_I": t_nodes,
        }

    # -- walking ---------------------------------------------------------------
    def face_cycle(self, f) -> list:
        h0 = int(self.f_he[f])
        out = [h0]
        h = int(self.he_nxt[h0])
        while h != h0:
            out.append(h)
            h = int(self.he_nxt[h])
        return out

    def vertex_star(self, v) -> list:
        """Outgoing half-edges of ``v`` in rotational order."""
        h0 = int(self.v_he[v])
        out = [h0]
        h = int(self.he_nxt[self.he_twin[h0]])
        while h != h0:
            out.append(h)
            h = int(self.he_nxt[self.he_twin[h]])
        return out

    def face_polygon(self, f) -> np.ndarray:
        """Unwrapped corner-and-node positions of face ``f``, starting inside the box."""
        if not self.geometric:
            raise PreconditionError("positions exist only in geometric mode")
        cyc = self.face_cycle(f)
        p = self.v_pos[self.he_org[cyc[0]]].copy()
        pts = [p.copy()]
        for h in cyc[:-1]:
            p = p + self.he_vec[h]
            pts.append(p.copy())
        return np.array(pts)

    def interior_angle(self, h) -> float:
        """Angle of face ``he_fac[h]`` at the origin of ``h`` (radians)."""
        a = -self.he_vec[self.he_prv[h]]
        b = self.he_vec[h]
        # swept counter-clockwise from the outgoing edge to the reversed incoming one
        ang = math.atan2(b[0] * a[1] - b[1] * a[0], b[0] * a[0] + b[1] * a[1])
        return ang if ang > 0 else ang + 2 * math.pi

    def mean_edge_length(self) -> float:
        if not self.geometric or self.E == 0:
            return float("nan")
        v = self.he_vec[: self.cnt[K.NH]]
        return float(np.mean(np.hypot(v[:, 0], v[:, 1])))

    # -- checks ----------------------------------------------------------------
    def check(self):
        """Full invariant check: ``(ok, message)``."""
        code, idx = K.check_full(self.arrays(), self.geometric)
        if code == K.OK:
            return True, "ok"
        return False, f"{K.VIOLATION_NAMES[code]} (element {idx})"

    def copy(self) -> "TorusMosaic":
        m = TorusMosaic(self.width, self.height, self.mode, self.pattern)
        for name in _ARRAY_FIELDS:
            setattr(m, name, getattr(self, name).copy())
        m.cnt = self.cnt.copy()
        return m

    # -- snapshot --------------------------------------------------------------
    def snapshot(self) -> dict:
        nv, nh, nf = self.V, int(self.cnt[K.NH]), self.F
        doc = {
            "width": self.width,
            "height": self.height,
            "mode": self.mode,
            "pattern": self.pattern,
            "counts": {"V": nv, "E": nh // 2, "F": nf, "Nstar": self.nstar, "V_I": self.V_I},
            "vertices": {
                "corner_degree": self.v_ncor[:nv].tolist(),
                "degree": self.v_deg[:nv].tolist(),
                "irregular": (self.v_irr[:nv] >= 0).astype(int).tolist(),
            },
            "half_edges": {
                "origin": self.he_org[:nh].tolist(),
                "twin": self.he_twin[:nh].tolist(),
                "next": self.he_nxt[:nh].tolist(),
                "prev": self.he_prv[:nh].tolist(),
                "face": self.he_fac[:nh].tolist(),
                "corner": self.he_cor[:nh].tolist(),
            },
            "faces": [[int(self.he_org[h]) for h in self.face_cycle(f)] for f in range(nf)],
        }
        if self.geometric:
            doc["vertices"]["position"] = self.v_pos[:nv].tolist()
            doc["half_edges"]["vector"] = self.he_vec[:nh].tolist()
        return doc

    def save_snapshot(self, path) -> None:
        Path(path).write_text(json.dumps(self.snapshot()) + "\n")

    def __repr__(self):
        return (
            f"TorusMosaic({self.width:g}x{self.height:g}, {self.mode}, V={self.V}, E={self.E}, "
            f"F={self.F}, N*={self.nstar}, V_I={self.V_I})"
        )


_ARRAY_FIELDS = (
    "he_org", "he_nxt", "he_prv", "he_twin", "he_fac", "he_cor", "he_vec",
    "v_he", "v_pos", "v_ncor", "v_deg", "v_irr", "v_gflat", "f_he", "f_ncor", "irr",
)


def mosaic_state(m: TorusMosaic) -> StateVector:
    """``(N*, V, F)`` summed directly over the mesh."""
    c = m.direct_counts()
    return StateVector((c["Nstar"], c["V"], c["F"]))


def check_invariants(m: TorusMosaic):
    """Return ``(ok, report)``; never raises."""
    return m.check()


def assert_invariants(m: TorusMosaic) -> None:
    ok, msg = m.check()
    if not ok:
        raise InvariantViolation(msg)


# -- construction ----------------------------------------------------------------


def build(width, height, positions, faces, mode=GEOMETRIC, pattern=None, slack=1.0) -> TorusMosaic:
    """Assemble a mosaic from face polygons.

    ``faces`` is a list of ``(vertex ids, unwrapped points, corner flags)``
    with vertices listed counter-clockwise.  Twins are paired by vertex ids
    and displacement, so two distinct edges between the same pair of
    vertices (possible on small tori) stay apart.
    """
    nv = len(positions)
    nh = sum(len(ids) for ids, _, _ in faces)
    nf = len(faces)
    m = TorusMosaic(width, height, mode, pattern)
    cap = lambda n: max(8, int(n * (1 + slack)))  # noqa: E731
    m._alloc(cap(nv), cap(nh), cap(nf))
    vec = np.zeros((nh, 2))
    key = {}
    h = 0
    for f, (ids, pts, cor) in enumerate(faces):
        n = len(ids)
        base = h
        for i in range(n):
            j = (i + 1) % n
            m.he_org[h] = ids[i]
            m.he_fac[h] = f
            m.he_cor[h] = 1 if cor[i] else 0
            m.he_nxt[h] = base + j
            m.he_prv[h] = base + (i - 1) % n
            d = np.asarray(pts[j], float) - np.asarray(pts[i], float)
            vec[h] = d
            k = (ids[i], ids[j], round(d[0] * 1e6), round(d[1] * 1e6))
            if k in key:
                raise ValueError(f"duplicate half-edge {k}")
            key[k] = h
            m.v_he[ids[i]] = h
            h += 1
        m.f_he[f] = base
        m.f_ncor[f] = sum(1 for c in cor if c)
    for (u, v, dx, dy), h in key.items():
        t = key.get((v, u, -dx, -dy))
        if t is None:
            raise ValueError(f"half-edge {u}->{v} has no twin")
        m.he_twin[h] = t
        if t < h:
            vec[h] = -vec[t]
    org = m.he_org[:nh]
    deg = np.bincount(org, minlength=nv)
    ncor = np.bincount(org, weights=m.he_cor[:nh], minlength=nv).astype(np.int64)
    m.v_deg[:nv] = deg
    m.v_ncor[:nv] = ncor
    irr = np.flatnonzero(ncor < deg)
    m.irr[: irr.size] = irr
    m.v_irr[irr] = np.arange(irr.size)
    if m.geometric:
        m.he_vec[:nh] = vec
        m.v_pos[:nv] = np.mod(np.asarray(positions, float), [m.width, m.height])
    m.cnt[:] = (nv, nh, nf, int(ncor.sum()), irr.size)
    ok, msg = m.check()
    if not ok:
        raise InvariantViolation(f"seed pattern failed its own check: {msg}")
    return m


def _need(rows, cols, even_rows):
    if rows < 2 or cols < 2:
        raise ValueError(f"seed patterns need at least 2x2 cells, got {rows}x{cols}")
    if even_rows and rows % 2:
        raise ValueError(f"staggered patterns need an even number of rows, got {rows}")


def _staggered(rows, cols, w, h, face_pts, corner, mode, pattern, slack):
    """Running-bond topology shared by the brick and hexagon seeds.

    Vertex ``B(r,k)`` is the bottom end of the k-th joint of course ``r``,
    ``T(r,k)`` its top end; odd courses are offset by half a cell.
    """
    R, Kc = rows, cols

    def B(r, k):
        return 2 * ((r % R) * Kc + (k % Kc))

    def T(r, k):
        return B(r, k) + 1

    positions = np.zeros((2 * R * Kc, 2))
    faces = []
    for r in range(R):
        odd = r % 2
        for k in range(Kc):
            mb = T(r - 1, k + odd)
            mt = B(r + 1, k + odd)
            ids = [B(r, k), mb, B(r, k + 1), T(r, k + 1), mt, T(r, k)]
            pts = face_pts(r, k)
            for vid, p in zip(ids, pts):
                positions[vid] = p
            faces.append((ids, pts, corner))
    return build(Kc * w, R * h, positions, faces, mode, pattern, slack)


def seed_brick(rows, cols, mode=GEOMETRIC, slack=1.0) -> TorusMosaic:
    """Running-bond brick wall of 2x1 bricks; every node is a T node."""
    _need(rows, cols, True)
    w, h = 2.0, 1.0

    def pts(r, k):
        x0 = (r % 2) * w / 2 + k * w
        y0 = r * h
        return [(x0, y0), (x0 + w / 2, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0 + w / 2, y0 + h), (x0, y0 + h)]

    return _staggered(rows, cols, w, h, pts, (1, 0, 1, 1, 0, 1), mode, f"brick:{rows}x{cols}", slack)


def seed_hex(rows, cols, mode=GEOMETRIC, slack=1.0) -> TorusMosaic:
    """Regular hexagons of unit side; every node is a regular Y node."""
    _need(rows, cols, True)
    w, h = math.sqrt(3.0), 1.5

    def pts(r, k):
        cx = (r % 2) * w / 2 + k * w + w / 2
        cy = r * h + 1.0
        return [
            (cx - w / 2, cy - 0.5), (cx, cy - 1.0), (cx + w / 2, cy - 0.5),
            (cx + w / 2, cy + 0.5), (cx, cy + 1.0), (cx - w / 2, cy + 0.5),
        ]

    return _staggered(rows, cols, w, h, pts, (1, 1, 1, 1, 1, 1), mode, f"hex:{rows}x{cols}", slack)


def seed_square(rows, cols=None, mode=GEOMETRIC, slack=1.0) -> TorusMosaic:
    cols = rows if cols is None else cols
    _need(rows, cols, False)

    def vid(i, j):
        return (i % rows) * cols + (j % cols)

    positions = np.array([(j, i) for i in range(rows) for j in range(cols)], float)
    faces = []
    for i in range(rows):
        for j in range(cols):
            ids = [vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j)]
            pts = [(j, i), (j + 1, i), (j + 1, i + 1), (j, i + 1)]
            faces.append((ids, pts, (1, 1, 1, 1)))
    return build(cols, rows, positions, faces, mode, f"square:{rows}x{cols}", slack)


SEEDERS = {"brick": seed_brick, "square": seed_square, "hex": seed_hex}


def parse_pattern(spec: str):
    """``'brick:100x100'`` -> ``('brick', 100, 100)``."""
    try:
        name, dims = spec.split(":")
        r, c = dims.lower().split("x")
        r, c = int(r), int(c)
    except ValueError:
        raise ValueError(f"seed pattern must look like brick:ROWSxCOLS, got {spec!r}") from None
    if name not in SEEDERS:
        raise ValueError(f"unknown seed pattern {name!r}; choose from {PATTERNS}")
    _need(r, c, name != "square")
    return name, r, c


def seed(pattern: str, rows: int, cols: int, mode=GEOMETRIC, slack=1.0) -> TorusMosaic:
    return SEEDERS[pattern](rows, cols, mode=mode, slack=slack)
