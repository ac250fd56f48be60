"""Hot numeric kernels.

Every kernel here is written in numba-compatible Python. When numba is
enabled (the default) each function is compiled with ``@njit``; setting the
environment variable ``TRACKS4D_NUMBA=0`` selects the identical pure-Python
source as a fallback, which is slow but bit-compatible. The benchmark suite
under ``benchmarks/`` compares the two paths.
"""

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("TRACKS4D_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "off",
)

if NUMBA_ENABLED:
    from numba import njit

    def _jit(func):
        return njit(cache=True)(func)

else:

    def _jit(func):
        return func


@_jit
def closest_point_on_triangle(a, b, c, p):
    """Closest point to ``p`` on triangle ``(a, b, c)``.

    Returns ``(d2, w0, w1, w2)``: squared distance and barycentric weights
    of the closest point, clamped exactly to the simplex. Standard 7-region
    decomposition (Ericson, Real-Time Collision Detection).
    """
    ab0 = b[0] - a[0]
    ab1 = b[1] - a[1]
    ab2 = b[2] - a[2]
    ac0 = c[0] - a[0]
    ac1 = c[1] - a[1]
    ac2 = c[2] - a[2]
    ap0 = p[0] - a[0]
    ap1 = p[1] - a[1]
    ap2 = p[2] - a[2]

    d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    if d1 <= 0.0 and d2 <= 0.0:
        dx = p[0] - a[0]
        dy = p[1] - a[1]
        dz = p[2] - a[2]
        return dx * dx + dy * dy + dz * dz, 1.0, 0.0, 0.0

    bp0 = p[0] - b[0]
    bp1 = p[1] - b[1]
    bp2 = p[2] - b[2]
    d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
    d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
    if d3 >= 0.0 and d4 <= d3:
        dx = p[0] - b[0]
        dy = p[1] - b[1]
        dz = p[2] - b[2]
        return dx * dx + dy * dy + dz * dz, 0.0, 1.0, 0.0

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = a[0] + v * ab0
        qy = a[1] + v * ab1
        qz = a[2] + v * ab2
        dx = p[0] - qx
        dy = p[1] - qy
        dz = p[2] - qz
        return dx * dx + dy * dy + dz * dz, 1.0 - v, v, 0.0

    cp0 = p[0] - c[0]
    cp1 = p[1] - c[1]
    cp2 = p[2] - c[2]
    d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
    d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
    if d6 >= 0.0 and d5 <= d6:
        dx = p[0] - c[0]
        dy = p[1] - c[1]
        dz = p[2] - c[2]
        return dx * dx + dy * dy + dz * dz, 0.0, 0.0, 1.0

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx = a[0] + w * ac0
        qy = a[1] + w * ac1
        qz = a[2] + w * ac2
        dx = p[0] - qx
        dy = p[1] - qy
        dz = p[2] - qz
        return dx * dx + dy * dy + dz * dz, 1.0 - w, 0.0, w

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = b[0] + w * (c[0] - b[0])
        qy = b[1] + w * (c[1] - b[1])
        qz = b[2] + w * (c[2] - b[2])
        dx = p[0] - qx
        dy = p[1] - qy
        dz = p[2] - qz
        return dx * dx + dy * dy + dz * dz, 0.0, 1.0 - w, w

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = a[0] + ab0 * v + ac0 * w
    qy = a[1] + ab1 * v + ac1 * w
    qz = a[2] + ab2 * v + ac2 * w
    dx = p[0] - qx
    dy = p[1] - qy
    dz = p[2] - qz
    return dx * dx + dy * dy + dz * dz, 1.0 - v - w, v, w


@_jit
def brute_force_fit_points(points, verts, faces, candidates,
                           out_face, out_alpha, out_res):
    """Exhaustive closest-face search over ``candidates`` for each point.

    Strictly-lower squared distance wins; with the fixed ascending scan
    order the lowest face index wins among exact ties.
    """
    n = points.shape[0]
    m = candidates.shape[0]
    for i in range(n):
        p = points[i]
        best_d2 = np.inf
        best_f = -1
        b0 = 0.0
        b1 = 0.0
        b2 = 0.0
        for j in range(m):
            f = candidates[j]
            d2, w0, w1, w2 = closest_point_on_triangle(
                verts[faces[f, 0]], verts[faces[f, 1]], verts[faces[f, 2]], p
            )
            if d2 < best_d2:
                best_d2 = d2
                best_f = f
                b0 = w0
                b1 = w1
                b2 = w2
        out_face[i] = best_f
        out_alpha[i, 0] = b0
        out_alpha[i, 1] = b1
        out_alpha[i, 2] = b2
        out_res[i] = np.sqrt(best_d2)


@_jit
def _aabb_dist2(p, bmin, bmax):
    d2 = 0.0
    for k in range(3):
        v = p[k]
        if v < bmin[k]:
            d = bmin[k] - v
            d2 += d * d
        elif v > bmax[k]:
            d = v - bmax[k]
            d2 += d * d
    return d2


@_jit
def bvh_fit_points(points, verts, faces,
                   node_min, node_max, node_left, node_right,
                   node_start, node_count, leaf_faces,
                   out_face, out_alpha, out_res):
    """Closest-face search accelerated by a flattened AABB hierarchy.

    ``node_left[i] < 0`` marks a leaf holding ``node_count[i]`` face ids at
    ``leaf_faces[node_start[i]:]``. Subtrees whose box cannot beat the
    current best squared distance are pruned.
    """
    n = points.shape[0]
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        p = points[i]
        best_d2 = np.inf
        best_f = -1
        b0 = 0.0
        b1 = 0.0
        b2 = 0.0
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _aabb_dist2(p, node_min[node], node_max[node]) >= best_d2:
                continue
            if node_left[node] < 0:
                s = node_start[node]
                for j in range(node_count[node]):
                    f = leaf_faces[s + j]
                    d2, w0, w1, w2 = closest_point_on_triangle(
                        verts[faces[f, 0]], verts[faces[f, 1]],
                        verts[faces[f, 2]], p,
                    )
                    if d2 < best_d2 or (d2 == best_d2 and f < best_f):
                        best_d2 = d2
                        best_f = f
                        b0 = w0
                        b1 = w1
                        b2 = w2
            else:
                l = node_left[node]
                r = node_right[node]
                dl = _aabb_dist2(p, node_min[l], node_max[l])
                dr = _aabb_dist2(p, node_min[r], node_max[r])
                # push farther child first so the nearer one is explored next
                if dl <= dr:
                    stack[top] = r
                    top += 1
                    stack[top] = l
                    top += 1
                else:
                    stack[top] = l
                    top += 1
                    stack[top] = r
                    top += 1
        out_face[i] = best_f
        out_alpha[i, 0] = b0
        out_alpha[i, 1] = b1
        out_alpha[i, 2] = b2
        out_res[i] = np.sqrt(best_d2)


@_jit
def rasterize_frame(verts_cam, faces, face_obj, face_static,
                    fx, fy, cx, cy, height, width,
                    depth, face_idx, bary, seg):
    """Z-buffered triangle rasterization at pixel centers.

    ``verts_cam`` are camera-frame vertex positions. Each covered pixel gets
    the exact ray/triangle intersection depth and barycentric weights.
    Faces with any vertex at or behind the near plane are discarded. With
    the fixed face scan order and a strict depth test the output is
    deterministic.
    """
    near = 1e-6
    nfaces = faces.shape[0]
    for f in range(nfaces):
        a = verts_cam[faces[f, 0]]
        b = verts_cam[faces[f, 1]]
        c = verts_cam[faces[f, 2]]
        if a[2] <= near or b[2] <= near or c[2] <= near:
            continue
        ua = fx * a[0] / a[2] + cx
        va = fy * a[1] / a[2] + cy
        ub = fx * b[0] / b[2] + cx
        vb = fy * b[1] / b[2] + cy
        uc = fx * c[0] / c[2] + cx
        vc = fy * c[1] / c[2] + cy
        umin = min(ua, min(ub, uc))
        umax = max(ua, max(ub, uc))
        vmin = min(va, min(vb, vc))
        vmax = max(va, max(vb, vc))
        # pixel centers are at integer + 0.5
        iu0 = int(np.ceil(umin - 0.5))
        iu1 = int(np.floor(umax - 0.5))
        iv0 = int(np.ceil(vmin - 0.5))
        iv1 = int(np.floor(vmax - 0.5))
        if iu0 < 0:
            iu0 = 0
        if iv0 < 0:
            iv0 = 0
        if iu1 >= width:
            iu1 = width - 1
        if iv1 >= height:
            iv1 = height - 1
        if iu0 > iu1 or iv0 > iv1:
            continue
        e10 = b[0] - a[0]
        e11 = b[1] - a[1]
        e12 = b[2] - a[2]
        e20 = c[0] - a[0]
        e21 = c[1] - a[1]
        e22 = c[2] - a[2]
        for pv in range(iv0, iv1 + 1):
            dy = (pv + 0.5 - cy) / fy
            for pu in range(iu0, iu1 + 1):
                dx = (pu + 0.5 - cx) / fx
                # Moller-Trumbore with ray origin 0, direction (dx, dy, 1)
                px = dy * e22 - e21
                py = e20 - dx * e22
                pz = dx * e21 - dy * e20
                det = e10 * px + e11 * py + e12 * pz
                if det == 0.0:
                    continue
                inv = 1.0 / det
                tx = -a[0]
                ty = -a[1]
                tz = -a[2]
                w1 = (tx * px + ty * py + tz * pz) * inv
                if w1 < 0.0 or w1 > 1.0:
                    continue
                qx = ty * e12 - tz * e11
                qy = tz * e10 - tx * e12
                qz = tx * e11 - ty * e10
                w2 = (dx * qx + dy * qy + qz) * inv
                if w2 < 0.0 or w1 + w2 > 1.0:
                    continue
                t = (e20 * qx + e21 * qy + e22 * qz) * inv
                if t <= near:
                    continue
                if t < depth[pv, pu]:
                    depth[pv, pu] = t
                    face_idx[pv, pu] = f
                    bary[pv, pu, 0] = 1.0 - w1 - w2
                    bary[pv, pu, 1] = w1
                    bary[pv, pu, 2] = w2
                    if face_static[f] != 0:
                        seg[pv, pu] = 0
                    else:
                        seg[pv, pu] = face_obj[f]


@_jit
def decode_tracks(verts_time, faces, q_face, q_alpha, out):
    """Evaluate barycentric records over all timesteps.

    ``verts_time`` is a (T, V, 3) array of union-mesh vertex positions,
    ``q_face``/``q_alpha`` hold B records, and ``out`` receives (B, T, 3)
    convex combinations. The summation order (a0*v0 + a1*v1 + a2*v2, per
    component) is part of the archive contract.
    """
    nt = verts_time.shape[0]
    nb = q_face.shape[0]
    for i in range(nb):
        f = q_face[i]
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        a0 = q_alpha[i, 0]
        a1 = q_alpha[i, 1]
        a2 = q_alpha[i, 2]
        for t in range(nt):
            for k in range(3):
                out[i, t, k] = (
                    a0 * verts_time[t, i0, k]
                    + a1 * verts_time[t, i1, k]
                    + a2 * verts_time[t, i2, k]
                )
