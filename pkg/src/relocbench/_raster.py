"""Numba z-buffer kernel used by :mod:`relocbench.render`.

The kernel works on camera-space vertices and writes, per pixel, the depth
of the nearest fragment, the index of the winning triangle and that
fragment's perspective-correct barycentric weights with respect to the
original (unclipped) triangle corners.
"""
import numba
import numpy as np

DEPTH_TIE = 1e-9
AREA_EPS = 1e-12


@numba.njit(cache=True, inline="always")
def _edge(ax, ay, bx, by, px, py):
    # Evaluated with the endpoints in canonical (lexicographic) order so that
    # two triangles sharing an edge see exactly opposite values.
    if ax < bx or (ax == bx and ay < by):
        return (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    return -((ax - bx) * (py - by) - (ay - by) * (px - bx))


@numba.njit(cache=True, inline="always")
def _owns_edge(ax, ay, bx, by):
    # Tie rule for pixel centres exactly on an edge. Adjacent triangles
    # traverse a shared edge in opposite directions, so exactly one owns it.
    dy = by - ay
    return dy > 0 or (dy == 0 and bx - ax < 0)


@numba.njit(cache=True)
def _clip_near(p, near, out_p, out_w):
    """Clip a triangle against ``z >= near``; returns the vertex count (0, 3 or 4)."""
    n = 0
    for i in range(3):
        j = (i + 1) % 3
        zi = p[i, 2]
        zj = p[j, 2]
        if zi >= near:
            out_p[n, :] = p[i, :]
            out_w[n, :] = 0.0
            out_w[n, i] = 1.0
            n += 1
        if (zi >= near) != (zj >= near):
            s = (near - zi) / (zj - zi)
            for c in range(3):
                out_p[n, c] = p[i, c] + s * (p[j, c] - p[i, c])
            out_p[n, 2] = near
            out_w[n, :] = 0.0
            out_w[n, i] = 1.0 - s
            out_w[n, j] = s
            n += 1
    return n


@numba.njit(cache=True, nogil=True)
def rasterize(cam_vertices, triangles, width, height, fx, fy, cx, cy, near, zbuf, tri_id, weights):
    """Fill ``zbuf``, ``tri_id`` and ``weights`` in place.

    ``zbuf`` must be initialised to ``inf`` and ``tri_id`` to ``-1``.
    Triangles are processed in index order; a later fragment replaces an
    earlier one only if it is nearer by more than ``DEPTH_TIE``.
    """
    tri = np.empty((3, 3))
    poly = np.empty((4, 3))
    polyw = np.empty((4, 3))
    sx = np.empty(4)
    sy = np.empty(4)
    for t in range(triangles.shape[0]):
        for i in range(3):
            tri[i, :] = cam_vertices[triangles[t, i], :]
        n = _clip_near(tri, near, poly, polyw)
        if n < 3:
            continue
        for i in range(n):
            sx[i] = fx * poly[i, 0] / poly[i, 2] + cx
            sy[i] = fy * poly[i, 1] / poly[i, 2] + cy
        # fan triangulation of the clipped polygon
        for f in range(1, n - 1):
            i0 = 0
            i1 = f
            i2 = f + 1
            area = _edge(sx[i0], sy[i0], sx[i1], sy[i1], sx[i2], sy[i2])
            if abs(area) < AREA_EPS:
                continue
            if area < 0:
                i1, i2 = i2, i1
                area = -area
            x0 = sx[i0]
            y0 = sy[i0]
            x1 = sx[i1]
            y1 = sy[i1]
            x2 = sx[i2]
            y2 = sy[i2]
            own0 = _owns_edge(x1, y1, x2, y2)
            own1 = _owns_edge(x2, y2, x0, y0)
            own2 = _owns_edge(x0, y0, x1, y1)
            iz0 = 1.0 / poly[i0, 2]
            iz1 = 1.0 / poly[i1, 2]
            iz2 = 1.0 / poly[i2, 2]
            # clamp in floating point first; projected coordinates can be huge
            xmin = int(np.ceil(max(min(x0, x1, x2), 0.0)))
            xmax = int(np.floor(min(max(x0, x1, x2), width - 1.0)))
            ymin = int(np.ceil(max(min(y0, y1, y2), 0.0)))
            ymax = int(np.floor(min(max(y0, y1, y2), height - 1.0)))
            for py in range(ymin, ymax + 1):
                fy_ = float(py)
                for px in range(xmin, xmax + 1):
                    fx_ = float(px)
                    e0 = _edge(x1, y1, x2, y2, fx_, fy_)
                    if e0 < 0 or (e0 == 0 and not own0):
                        continue
                    e1 = _edge(x2, y2, x0, y0, fx_, fy_)
                    if e1 < 0 or (e1 == 0 and not own1):
                        continue
                    e2 = _edge(x0, y0, x1, y1, fx_, fy_)
                    if e2 < 0 or (e2 == 0 and not own2):
                        continue
                    b0 = e0 / area
                    b1 = e1 / area
                    b2 = e2 / area
                    inv_z = b0 * iz0 + b1 * iz1 + b2 * iz2
                    z = 1.0 / inv_z
                    if not z < zbuf[py, px] - DEPTH_TIE:
                        continue
                    zbuf[py, px] = z
                    tri_id[py, px] = t
                    l0 = b0 * iz0 * z
                    l1 = b1 * iz1 * z
                    l2 = b2 * iz2 * z
                    for c in range(3):
                        weights[py, px, c] = l0 * polyw[i0, c] + l1 * polyw[i1, c] + l2 * polyw[i2, c]
