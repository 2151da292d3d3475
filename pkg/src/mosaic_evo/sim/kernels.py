"""Compiled inner loops of the torus simulator.

The mesh lives in a :class:`MeshArrays` tuple of preallocated arrays (see
``mesh.py`` for the meaning of each field).  Kernels mutate it in place and
never allocate mesh storage; when capacity runs short they return and let
the Python driver grow the arrays.

``he_cor[h]`` says whether the origin of ``h`` is a true corner of the face
``he_fac[h]``.  A vertex is irregular (a T node) when exactly one of its
incident face angles is flat.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

MeshArrays = namedtuple(
    "MeshArrays",
    "he_org he_nxt he_prv he_twin he_fac he_cor he_vec "
    "v_he v_pos v_ncor v_deg v_irr v_gflat f_he f_ncor irr cnt box",
)

# cnt layout
NV, NH, NF, NSTAR, NI = 0, 1, 2, 3, 4

KIND_SPLIT, KIND_HEAL = 0, 1
FLAG_OK, FLAG_STALLED, FLAG_FALLBACK = 0, 1, 2

# run_chunk return codes (negative values are invariant violations)
ST_EVENTS, ST_TEND, ST_ABSORBED, ST_CAPACITY, ST_SPLITFAIL = 0, 1, 2, 3, 4

OK = 0
V_TWIN, V_NEXTPREV, V_CYCLE, V_EULER, V_NSTAR, V_IRRSET, V_VI = 1, 2, 3, 4, 5, 6, 7
V_DEGREE, V_TSHAPE, V_CONVEX, V_GEOMETRY, V_CORNERS, V_INCREMENT = 8, 9, 10, 11, 12, 13

VIOLATION_NAMES = {
    V_TWIN: "twin mismatch",
    V_NEXTPREV: "next/prev mismatch",
    V_CYCLE: "face cycle broken",
    V_EULER: "Euler relation V - E + F = 0 violated",
    V_NSTAR: "N* mismatch",
    V_IRRSET: "irregular set mismatch",
    V_VI: "V_I identity violated",
    V_DEGREE: "degree mismatch",
    V_TSHAPE: "T-node shape violated",
    V_CONVEX: "convexity violated",
    V_GEOMETRY: "geometry inconsistent",
    V_CORNERS: "face with fewer than 3 corners",
    V_INCREMENT: "increment mismatch",
}

SPLIT_ATTEMPTS = 100
HEAL_HALVINGS = 20
MIN_CHORD = 1e-9
CHORD_MIN_SIN = 1e-9
CORNER_MIN_SIN = 1e-12
FLAT_SLACK = 1e-9


# -- small geometry helpers ---------------------------------------------------


@njit(cache=True)
def _len(M, h):
    return math.hypot(M.he_vec[h, 0], M.he_vec[h, 1])


@njit(cache=True)
def _wrapped(p, L):
    r = p % L
    if r >= L:
        r -= L
    return r


@njit(cache=True)
def _shift_vertex(M, v, dx, dy):
    """Translate vertex ``v``; all incident half-edge vectors follow."""
    h = M.v_he[v]
    start = h
    while True:
        M.he_vec[h, 0] -= dx
        M.he_vec[h, 1] -= dy
        t = M.he_twin[h]
        M.he_vec[t, 0] += dx
        M.he_vec[t, 1] += dy
        h = M.he_nxt[t]
        if h == start:
            break
    M.v_pos[v, 0] = _wrapped(M.v_pos[v, 0] + dx, M.box[0])
    M.v_pos[v, 1] = _wrapped(M.v_pos[v, 1] + dy, M.box[1])


# -- local checks --------------------------------------------------------------


@njit(cache=True)
def face_convex(M, f):
    """Convexity of face ``f``: ``OK`` or ``V_CONVEX``.

    True corners need a strictly positive turn; flat incidences (and corners
    kept geometrically flat after a fallback heal) may be straight or bent
    outward but never reflex.  The total turning must be one full turn.
    """
    h0 = M.f_he[f]
    h = h0
    total = 0.0
    while True:
        p = M.he_prv[h]
        ax, ay = M.he_vec[p, 0], M.he_vec[p, 1]
        bx, by = M.he_vec[h, 0], M.he_vec[h, 1]
        cr = ax * by - ay * bx
        dt = ax * bx + ay * by
        nrm = math.hypot(ax, ay) * math.hypot(bx, by)
        if nrm <= 0.0:
            return V_CONVEX
        s = cr / nrm
        if M.he_cor[h] == 0:
            if s < -FLAT_SLACK or dt <= 0.0:
                return V_CONVEX
        elif M.v_gflat[M.he_org[h]] == 1:
            if s < -FLAT_SLACK:
                return V_CONVEX
        elif s <= CORNER_MIN_SIN:
            return V_CONVEX
        total += math.atan2(cr, dt)
        h = M.he_nxt[h]
        if h == h0:
            break
    if abs(total - 2.0 * math.pi) > 1e-6:
        return V_CONVEX
    return OK


@njit(cache=True)
def check_face(M, f, geometric):
    nh = M.cnt[NH]
    h0 = M.f_he[f]
    if h0 < 0 or h0 >= nh:
        return V_CYCLE
    h = h0
    steps = 0
    ncor = 0
    sx = 0.0
    sy = 0.0
    while True:
        t = M.he_twin[h]
        if t < 0 or t >= nh or M.he_twin[t] != h or t == h:
            return V_TWIN
        n = M.he_nxt[h]
        if n < 0 or n >= nh or M.he_prv[n] != h:
            return V_NEXTPREV
        if M.he_fac[h] != f:
            return V_CYCLE
        if M.he_org[n] != M.he_org[t]:
            return V_TWIN
        ncor += M.he_cor[h]
        if geometric:
            sx += M.he_vec[h, 0]
            sy += M.he_vec[h, 1]
            if M.he_vec[t, 0] != -M.he_vec[h, 0] or M.he_vec[t, 1] != -M.he_vec[h, 1]:
                return V_GEOMETRY
            # endpoint positions must agree modulo the torus
            for c in range(2):
                L = M.box[c]
                d = M.v_pos[M.he_org[h], c] + M.he_vec[h, c] - M.v_pos[M.he_org[n], c]
                d = d - L * math.floor(d / L + 0.5)
                if abs(d) > 1e-7 * (1.0 + L):
                    return V_GEOMETRY
        h = n
        steps += 1
        if h == h0:
            break
        if steps > nh:
            return V_CYCLE
    if ncor != M.f_ncor[f]:
        return V_NSTAR
    if ncor < 3:
        return V_CORNERS
    if geometric:
        scale = 1.0 + M.box[0] + M.box[1]
        if abs(sx) > 1e-9 * scale or abs(sy) > 1e-9 * scale:
            return V_GEOMETRY
        return face_convex(M, f)
    return OK


@njit(cache=True)
def check_vertex(M, v):
    nh = M.cnt[NH]
    h0 = M.v_he[v]
    if h0 < 0 or h0 >= nh or M.he_org[h0] != v:
        return V_DEGREE
    h = h0
    deg = 0
    ncor = 0
    while True:
        if M.he_org[h] != v:
            return V_TWIN
        deg += 1
        ncor += M.he_cor[h]
        h = M.he_nxt[M.he_twin[h]]
        if h == h0:
            break
        if deg > nh:
            return V_CYCLE
    if deg != M.v_deg[v] or ncor != M.v_ncor[v]:
        return V_DEGREE
    k = M.v_irr[v]
    if ncor < deg:
        if deg != 3 or ncor != 2:
            return V_TSHAPE
        if k < 0 or k >= M.cnt[NI] or M.irr[k] != v:
            return V_IRRSET
    else:
        if k != -1:
            return V_IRRSET
        if deg < 3:
            return V_DEGREE
    return OK


@njit(cache=True)
def check_full(M, geometric):
    """Whole-mesh verification; returns ``(code, element index)``."""
    nv, nh, nf = M.cnt[NV], M.cnt[NH], M.cnt[NF]
    for h in range(nh):
        t = M.he_twin[h]
        if t < 0 or t >= nh or M.he_twin[t] != h or t == h:
            return V_TWIN, h
    for h in range(nh):
        n = M.he_nxt[h]
        p = M.he_prv[h]
        if n < 0 or n >= nh or p < 0 or p >= nh or M.he_prv[n] != h or M.he_nxt[p] != h:
            return V_NEXTPREV, h
    if nh % 2 != 0 or nv - nh // 2 + nf != 0:
        return V_EULER, -1
    total_len = 0
    nstar_f = 0
    for f in range(nf):
        c = check_face(M, f, geometric)
        if c != OK:
            return c, f
        nstar_f += M.f_ncor[f]
        h = M.f_he[f]
        h0 = h
        while True:
            total_len += 1
            h = M.he_nxt[h]
            if h == h0:
                break
    if total_len != nh:
        return V_CYCLE, -1
    nstar_v = 0
    n_irr = 0
    for v in range(nv):
        c = check_vertex(M, v)
        if c != OK:
            return c, v
        nstar_v += M.v_ncor[v]
        if M.v_irr[v] >= 0:
            n_irr += 1
    if nstar_f != M.cnt[NSTAR] or nstar_v != M.cnt[NSTAR]:
        return V_NSTAR, -1
    if n_irr != M.cnt[NI]:
        return V_IRRSET, -1
    if 2 * nv + 2 * nf - M.cnt[NSTAR] != M.cnt[NI]:
        return V_VI, -1
    return OK, -1


# -- surgery -------------------------------------------------------------------


@njit(cache=True)
def _edge_split(M, h, t, geometric):
    """Put a new vertex on half-edge ``h`` at fraction ``t``; returns its id.

    ``h`` keeps the first part, a new half-edge follows it in the same face;
    the new vertex is flat in the face across the edge.
    """
    a = M.cnt[NV]
    M.cnt[NV] += 1
    tw = M.he_twin[h]
    h2 = M.cnt[NH]
    t2 = h2 + 1
    M.cnt[NH] += 2
    u = M.he_org[h]
    w = M.he_org[tw]
    f = M.he_fac[h]
    g = M.he_fac[tw]

    hn = M.he_nxt[h]
    M.he_org[h2] = a
    M.he_fac[h2] = f
    M.he_nxt[h2] = hn
    M.he_prv[hn] = h2
    M.he_nxt[h] = h2
    M.he_prv[h2] = h

    tp = M.he_prv[tw]
    M.he_org[t2] = w
    M.he_fac[t2] = g
    M.he_nxt[tp] = t2
    M.he_prv[t2] = tp
    M.he_nxt[t2] = tw
    M.he_prv[tw] = t2

    M.he_cor[t2] = M.he_cor[tw]
    M.he_cor[tw] = 0
    M.he_cor[h2] = 0
    M.he_org[tw] = a
    M.he_twin[h2] = t2
    M.he_twin[t2] = h2
    if M.v_he[w] == tw:
        M.v_he[w] = t2
    M.v_he[a] = h2
    M.v_deg[a] = 2
    M.v_ncor[a] = 0
    M.v_irr[a] = -1
    M.v_gflat[a] = 0
    if geometric:
        vx = M.he_vec[h, 0]
        vy = M.he_vec[h, 1]
        M.he_vec[h, 0] = t * vx
        M.he_vec[h, 1] = t * vy
        M.he_vec[h2, 0] = vx - t * vx
        M.he_vec[h2, 1] = vy - t * vy
        M.he_vec[tw, 0] = -M.he_vec[h, 0]
        M.he_vec[tw, 1] = -M.he_vec[h, 1]
        M.he_vec[t2, 0] = -M.he_vec[h2, 0]
        M.he_vec[t2, 1] = -M.he_vec[h2, 1]
        M.v_pos[a, 0] = _wrapped(M.v_pos[u, 0] + t * vx, M.box[0])
        M.v_pos[a, 1] = _wrapped(M.v_pos[u, 1] + t * vy, M.box[1])
    return a


@njit(cache=True)
def _pick_point(M, c, rng, geometric, delta_rel, out):
    """Random point on the side of a face starting at corner half-edge ``c``.

    Writes ``(half-edge, fraction)`` into ``out``; returns False when the
    point fell within ``delta_rel`` of a segment end.
    """
    if not geometric:
        n = 1
        h = M.he_nxt[c]
        while M.he_cor[h] == 0:
            n += 1
            h = M.he_nxt[h]
        k = int(rng.random() * n)
        h = c
        for _ in range(k):
            h = M.he_nxt[h]
        out[0] = h
        out[1] = 0.5
        return True
    total = _len(M, c)
    h = M.he_nxt[c]
    while M.he_cor[h] == 0:
        total += _len(M, h)
        h = M.he_nxt[h]
    s = rng.random() * total
    h = c
    while True:
        L = _len(M, h)
        nx = M.he_nxt[h]
        if s < L or M.he_cor[nx] == 1:
            break
        s -= L
        h = nx
    L = _len(M, h)
    if s < delta_rel * L or L - s < delta_rel * L:
        return False
    out[0] = h
    out[1] = s / L
    return True


@njit(cache=True)
def _recount_face(M, f):
    h0 = M.f_he[f]
    h = h0
    n = 0
    while True:
        n += M.he_cor[h]
        h = M.he_nxt[h]
        if h == h0:
            break
    M.f_ncor[f] = n


@njit(cache=True)
def _sin(ax, ay, bx, by):
    nrm = math.hypot(ax, ay) * math.hypot(bx, by)
    if nrm <= 0.0:
        return -1.0
    return (ax * by - ay * bx) / nrm


@njit(cache=True)
def split_face(M, f, rng, geometric, delta_rel, touched):
    """Secondary crack across face ``f``.

    Picks an unordered pair of distinct sides (corner-to-corner runs) and a
    point on each, then inserts the chord.  Returns the new face id, or -1
    if every attempt was degenerate.  ``touched`` receives
    ``(f, new face, face across side 1, face across side 2, a, b)``.
    """
    k = M.f_ncor[f]
    corners = np.empty(k, np.int64)
    h0 = M.f_he[f]
    h = h0
    i = 0
    while True:
        if M.he_cor[h] == 1:
            corners[i] = h
            i += 1
        h = M.he_nxt[h]
        if h == h0:
            break
    p1 = np.empty(2)
    p2 = np.empty(2)
    for _ in range(SPLIT_ATTEMPTS):
        i = int(rng.random() * k)
        j = int(rng.random() * (k - 1))
        if j >= i:
            j += 1
        if not _pick_point(M, corners[i], rng, geometric, delta_rel, p1):
            continue
        if not _pick_point(M, corners[j], rng, geometric, delta_rel, p2):
            continue
        h1 = int(p1[0])
        h2 = int(p2[0])
        t1 = p1[1]
        t2 = p2[1]
        cx = 0.0
        cy = 0.0
        if geometric:
            cx = (1.0 - t1) * M.he_vec[h1, 0]
            cy = (1.0 - t1) * M.he_vec[h1, 1]
            h = M.he_nxt[h1]
            while h != h2:
                cx += M.he_vec[h, 0]
                cy += M.he_vec[h, 1]
                h = M.he_nxt[h]
            cx += t2 * M.he_vec[h2, 0]
            cy += t2 * M.he_vec[h2, 1]
            if math.hypot(cx, cy) < MIN_CHORD:
                continue
            d1x, d1y = M.he_vec[h1, 0], M.he_vec[h1, 1]
            d2x, d2y = M.he_vec[h2, 0], M.he_vec[h2, 1]
            if (
                _sin(d1x, d1y, cx, cy) <= CHORD_MIN_SIN
                or _sin(-cx, -cy, d1x, d1y) <= CHORD_MIN_SIN
                or _sin(cx, cy, d2x, d2y) <= CHORD_MIN_SIN
                or _sin(d2x, d2y, -cx, -cy) <= CHORD_MIN_SIN
            ):
                continue

        g1 = M.he_fac[M.he_twin[h1]]
        g2 = M.he_fac[M.he_twin[h2]]
        a = _edge_split(M, h1, t1, geometric)
        h1p = M.he_nxt[h1]
        b = _edge_split(M, h2, t2, geometric)
        h2p = M.he_nxt[h2]
        c = M.cnt[NH]
        cc = c + 1
        M.cnt[NH] += 2
        fn = M.cnt[NF]
        M.cnt[NF] += 1

        M.he_org[c] = a
        M.he_org[cc] = b
        M.he_twin[c] = cc
        M.he_twin[cc] = c
        M.he_nxt[h1] = c
        M.he_prv[c] = h1
        M.he_nxt[c] = h2p
        M.he_prv[h2p] = c
        M.he_nxt[h2] = cc
        M.he_prv[cc] = h2
        M.he_nxt[cc] = h1p
        M.he_prv[h1p] = cc
        M.he_fac[c] = f
        M.f_he[f] = c
        M.f_he[fn] = cc
        h = cc
        while True:
            M.he_fac[h] = fn
            h = M.he_nxt[h]
            if h == cc:
                break
        M.he_cor[c] = 1
        M.he_cor[cc] = 1
        M.he_cor[h1p] = 1
        M.he_cor[h2p] = 1
        if geometric:
            M.he_vec[c, 0] = cx
            M.he_vec[c, 1] = cy
            M.he_vec[cc, 0] = -cx
            M.he_vec[cc, 1] = -cy
        _recount_face(M, f)
        _recount_face(M, fn)
        for v in (a, b):
            M.v_deg[v] = 3
            M.v_ncor[v] = 2
            M.v_irr[v] = M.cnt[NI]
            M.irr[M.cnt[NI]] = v
            M.cnt[NI] += 1
        M.cnt[NSTAR] += 4
        touched[0] = f
        touched[1] = fn
        touched[2] = g1
        touched[3] = g2
        touched[4] = a
        touched[5] = b
        return fn
    return -1


@njit(cache=True)
def heal_vertex(M, v, geometric, eps_rel, eps_abs, touched):
    """Turn T node ``v`` into a Y node.  Returns ``FLAG_OK`` or ``FLAG_FALLBACK``.

    Geometrically the vertex is pushed along its stem, away from the face in
    which it was flat, so that the through-edge bends into a corner.  The
    push is halved until all three incident faces stay convex; if that never
    happens only the classification changes and the vertex is marked as
    geometrically flat.
    """
    h = M.v_he[v]
    start = h
    h0 = -1
    while True:
        if M.he_cor[h] == 0:
            h0 = h
        h = M.he_nxt[M.he_twin[h]]
        if h == start:
            break
    o1 = M.he_twin[M.he_prv[h0]]
    s = M.he_nxt[M.he_twin[h0]]
    if s == o1:
        s = M.he_nxt[M.he_twin[o1]]
    touched[0] = M.he_fac[h0]
    touched[1] = M.he_fac[o1]
    touched[2] = M.he_fac[s]
    touched[3] = v
    flag = FLAG_OK

    M.he_cor[h0] = 1
    M.f_ncor[M.he_fac[h0]] += 1
    if geometric:
        L = _len(M, s)
        ux = M.he_vec[s, 0] / L
        uy = M.he_vec[s, 1] / L
        if eps_abs > 0.0:
            eps = eps_abs
        else:
            eps = eps_rel * (_len(M, h0) + _len(M, o1) + L) / 3.0
        success = False
        for _ in range(HEAL_HALVINGS + 1):
            _shift_vertex(M, v, eps * ux, eps * uy)
            if (
                face_convex(M, touched[0]) == OK
                and face_convex(M, touched[1]) == OK
                and face_convex(M, touched[2]) == OK
            ):
                success = True
                break
            _shift_vertex(M, v, -eps * ux, -eps * uy)
            eps *= 0.5
        if not success:
            M.v_gflat[v] = 1
            flag = FLAG_FALLBACK

    M.v_ncor[v] = 3
    M.cnt[NSTAR] += 1
    k = M.v_irr[v]
    last = M.irr[M.cnt[NI] - 1]
    M.irr[k] = last
    M.v_irr[last] = k
    M.v_irr[v] = -1
    M.cnt[NI] -= 1
    return flag


# -- SSA loop ------------------------------------------------------------------


@njit(cache=True)
def _record(samp, ns, t, M):
    samp[ns, 0] = t
    samp[ns, 1] = M.cnt[NSTAR]
    samp[ns, 2] = M.cnt[NV]
    samp[ns, 3] = M.cnt[NF]
    samp[ns, 4] = M.cnt[NI]
    samp[ns, 5] = M.cnt[NH] // 2


@njit(cache=True)
def run_chunk(
    M, coef, lam, kind, inc, rng, geometric, delta_rel, eps_rel, eps_abs,
    clock, ctr, st, samp, sample_every,
    ev_tau, ev_type, ev_loc, ev_flag, ev_d, keep_log, local_every, err,
):
    """Advance the simulation until a stop condition; returns a status code.

    ``clock = [t, t_end]``; ``ctr = [events done, event budget, next sample
    time index, samples written, log rows written, V cap, H cap, F cap]``.
    Negative return values are violated invariant codes, with the offending
    event number in ``err[0]`` and element in ``err[1]``.
    """
    touched = np.empty(6, np.int64)
    n_types = lam.size
    fi = np.empty(n_types)
    t_end = clock[1]
    while True:
        if ctr[0] >= ctr[1]:
            return ST_EVENTS
        if M.cnt[NV] + 2 > ctr[5] or M.cnt[NH] + 6 > ctr[6] or M.cnt[NF] + 1 > ctr[7]:
            return ST_CAPACITY
        nstar = M.cnt[NSTAR]
        nv = M.cnt[NV]
        nf = M.cnt[NF]
        ftot = 0.0
        for i in range(n_types):
            ci = coef[i, 0] * nstar + coef[i, 1] * nv + coef[i, 2] * nf
            if ci < 0.0:
                ci = 0.0
            fi[i] = ci * lam[i]
            ftot += fi[i]
        if not ftot > 0.0:
            return ST_ABSORBED
        tnew = clock[0] + rng.exponential(1.0 / ftot)
        if tnew > t_end:
            clock[0] = t_end
            return ST_TEND
        while ctr[2] < st.size and st[ctr[2]] < tnew:
            _record(samp, ctr[3], st[ctr[2]], M)
            ctr[2] += 1
            ctr[3] += 1
        u = rng.random() * ftot
        typ = n_types - 1
        acc = 0.0
        for i in range(n_types):
            acc += fi[i]
            if u < acc:
                typ = i
                break
        clock[0] = tnew
        nI0 = M.cnt[NI]
        flag = FLAG_OK
        loc = -1
        nt = 0
        if kind[typ] == KIND_SPLIT:
            loc = int(rng.random() * nf)
            if split_face(M, loc, rng, geometric, delta_rel, touched) < 0:
                err[0] = ctr[0]
                err[1] = loc
                return ST_SPLITFAIL
            nt = 6
        else:
            if nI0 == 0:
                flag = FLAG_STALLED
            else:
                loc = M.irr[int(rng.random() * nI0)]
                flag = heal_vertex(M, loc, geometric, eps_rel, eps_abs, touched)
                nt = 4
        d0 = M.cnt[NSTAR] - nstar
        d1 = M.cnt[NV] - nv
        d2 = M.cnt[NF] - nf

        n_ev = ctr[0]
        code = OK
        if flag != FLAG_STALLED:
            if d0 != inc[typ, 0] or d1 != inc[typ, 1] or d2 != inc[typ, 2]:
                code = V_INCREMENT
        elif d0 != 0 or d1 != 0 or d2 != 0:
            code = V_INCREMENT
        if code == OK and M.cnt[NV] - M.cnt[NH] // 2 + M.cnt[NF] != 0:
            code = V_EULER
        if code == OK and 2 * M.cnt[NV] + 2 * M.cnt[NF] - M.cnt[NSTAR] != M.cnt[NI]:
            code = V_VI
        if code == OK and nt > 0 and local_every > 0 and n_ev % local_every == 0:
            nfaces = 4 if nt == 6 else 3
            for q in range(nfaces):
                code = check_face(M, touched[q], geometric)
                if code != OK:
                    err[1] = touched[q]
                    break
            if code == OK:
                for q in range(nfaces, nt):
                    code = check_vertex(M, touched[q])
                    if code != OK:
                        err[1] = touched[q]
                        break
        if code != OK:
            err[0] = n_ev
            return -code

        if keep_log:
            r = ctr[4]
            ev_tau[r] = tnew
            ev_type[r] = typ
            ev_loc[r] = loc
            ev_flag[r] = flag
            ev_d[r, 0] = d0
            ev_d[r, 1] = d1
            ev_d[r, 2] = d2
            ctr[4] += 1
        ctr[0] += 1
        if sample_every > 0 and ctr[0] % sample_every == 0:
            _record(samp, ctr[3], tnew, M)
            ctr[3] += 1
