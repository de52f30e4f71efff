"""Slow, independent reference implementations used to freeze expected values.

Nothing here imports the optimized code paths it checks: loops are plain
Python over ``tolist()`` data, and the renderer oracle is a ray caster.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# rigid transforms as plain nested lists
# ---------------------------------------------------------------------------

def _apply(R, t, p):
    return [sum(R[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]


def _inverse(R, t):
    Rt = [[R[j][i] for j in range(3)] for i in range(3)]
    return Rt, [-sum(Rt[i][j] * t[j] for j in range(3)) for i in range(3)]


def naive_dcre(depth, fx, fy, cx, cy, gt_R, gt_t, pred_R, pred_t, diag=None, scale=1.0, penalty=None):
    """Double loop DCRE: mean clamped normalized flow and mean unclamped pixel flow."""
    d = np.asarray(depth, dtype=np.float64).tolist()
    h, w = len(d), len(d[0])
    if diag is None:
        diag = math.hypot(w, h)
    if penalty is None:
        penalty = 2.0 * diag
    gR, gt = np.asarray(gt_R).tolist(), np.asarray(gt_t).tolist()
    pR, pt = _inverse(np.asarray(pred_R).tolist(), np.asarray(pred_t).tolist())
    tot_n = tot_px = 0.0
    n = 0
    for v in range(h):
        for u in range(w):
            z = d[v][u]
            if not z > 0:
                continue
            x_cam = [(u - cx) / fx * z, (v - cy) / fy * z, z]
            x_world = _apply(gR, gt, x_cam)
            x_pred = _apply(pR, pt, x_world)
            n += 1
            if x_pred[2] <= 0:
                tot_n += 1.0
                tot_px += penalty
                continue
            up = fx * x_pred[0] / x_pred[2] + cx
            vp = fy * x_pred[1] / x_pred[2] + cy
            delta = math.hypot(up - u, vp - v) / scale
            tot_n += min(delta / diag, 1.0)
            tot_px += delta
    if n == 0:
        return None
    return tot_n / n, tot_px / n, n


# ---------------------------------------------------------------------------
# image measures
# ---------------------------------------------------------------------------

def naive_gray(img):
    img = np.asarray(img, dtype=np.float64).tolist()
    return [[0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] for p in row] for row in img]


def naive_visual(img, img_ref, mask):
    a_img, b_img = naive_gray(img), naive_gray(img_ref)
    m = np.asarray(mask).tolist()
    a, b = [], []
    for r in range(len(m)):
        for c in range(len(m[0])):
            if m[r][c]:
                a.append(a_img[r][c])
                b.append(b_img[r][c])
    saa = sum(x * x for x in a)
    sbb = sum(x * x for x in b)
    rho = sum((x - y) ** 2 for x, y in zip(a, b)) / math.sqrt(saa * sbb)
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return rho, num / den


def naive_semantic(lab, lab_ref):
    lab, lab_ref = np.asarray(lab).tolist(), np.asarray(lab_ref).tolist()
    n = diff = 0
    for r1, r2 in zip(lab, lab_ref):
        for x, y in zip(r1, r2):
            if x != 0 and y != 0:
                n += 1
                diff += x != y
    return diff / n if n else 0.0


def naive_geometric(depth, depth_ref):
    d1 = np.asarray(depth, dtype=np.float64).tolist()
    d2 = np.asarray(depth_ref, dtype=np.float64).tolist()
    tot = 0.0
    n = 0
    for r1, r2 in zip(d1, d2):
        for x, y in zip(r1, r2):
            if x > 0 and y > 0:
                tot += abs(x - y)
                n += 1
    return 1000.0 * tot / n if n else 0.0


def naive_vol(img):
    g = naive_gray(img) if np.asarray(img).ndim == 3 else np.asarray(img, dtype=np.float64).tolist()
    h, w = len(g), len(g[0])
    vals = []
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            vals.append(g[r - 1][c] + g[r + 1][c] + g[r][c - 1] + g[r][c + 1] - 4.0 * g[r][c])
    mean = sum(vals) / len(vals)
    return sum((x - mean) ** 2 for x in vals) / len(vals)


# ---------------------------------------------------------------------------
# ray casting renderer
# ---------------------------------------------------------------------------

def raycast(vertices, triangles, labels, R, t, fx, fy, cx, cy, width, height, near=0.05):
    """Depth and instance label per pixel centre by Moller-Trumbore ray casting.

    Vectorized over triangles, looped over pixels. The label is taken from
    the corner with the largest barycentric weight.
    """
    V = (np.asarray(vertices, dtype=np.float64) - np.asarray(t)) @ np.asarray(R)  # model -> camera
    T = np.asarray(triangles)
    lab = np.asarray(labels)
    v0, v1, v2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    e1, e2 = v1 - v0, v2 - v0
    depth = np.zeros((height, width))
    out_lab = np.zeros((height, width), dtype=np.int64)
    for v in range(height):
        for u in range(width):
            d = np.array([(u - cx) / fx, (v - cy) / fy, 1.0])
            p = np.cross(d, e2)
            det = np.einsum("ij,ij->i", e1, p)
            ok = np.abs(det) > 1e-15
            inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            s = -v0
            b1 = np.einsum("ij,ij->i", s, p) * inv
            q = np.cross(s, e1)
            b2 = (q @ d) * inv
            z = np.einsum("ij,ij->i", e2, q) * inv  # ray parameter == camera z since d_z = 1
            hit = ok & (b1 >= 0) & (b2 >= 0) & (b1 + b2 <= 1) & (z > near)
            if not hit.any():
                continue
            idx = np.flatnonzero(hit)
            j = idx[np.argmin(z[idx])]
            depth[v, u] = z[j]
            bary = (1 - b1[j] - b2[j], b1[j], b2[j])
            out_lab[v, u] = lab[T[j, int(np.argmax(bary))]]
    return depth, out_lab


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

def _quat(R):
    # trace-based conversion, enough for well-conditioned test rotations
    R = np.asarray(R)
    w = math.sqrt(max(0.0, 1.0 + R[0, 0] + R[1, 1] + R[2, 2])) / 2
    x = math.copysign(math.sqrt(max(0.0, 1 + R[0, 0] - R[1, 1] - R[2, 2])) / 2, R[2, 1] - R[1, 2])
    y = math.copysign(math.sqrt(max(0.0, 1 - R[0, 0] + R[1, 1] - R[2, 2])) / 2, R[0, 2] - R[2, 0])
    z = math.copysign(math.sqrt(max(0.0, 1 - R[0, 0] - R[1, 1] + R[2, 2])) / 2, R[1, 0] - R[0, 1])
    return np.array([w, x, y, z])


def _close(a, b, trans, rot):
    dist = math.dist(a.translation, b.translation)
    dot = min(abs(float(_quat(a.rotation) @ _quat(b.rotation))), 1.0)
    return dist <= trans and math.degrees(2 * math.acos(dot)) <= rot


def exhaustive_best_cluster(poses, trans, rot):
    """Best cluster by exhaustive search over all (seed, subset-of-neighbours) stars.

    A valid cluster is a seed plus any subset of its neighbours; the first
    round of the greedy procedure picks among these. Ranked by (size desc,
    translation spread asc, smallest member asc, seed asc).
    """
    n = len(poses)
    nbs = [[j for j in range(n) if j != s and _close(poses[s], poses[j], trans, rot)] for s in range(n)]
    # sizes from large to small; the first size with any star holds the best
    for size in range(n, 0, -1):
        best = None
        for seed in range(n):
            for sub in itertools.combinations(nbs[seed], size - 1):
                members = tuple(sorted((seed,) + sub))
                pts = np.array([poses[i].translation for i in members])
                spread = float(np.sum(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
                key = (spread, members[0], seed)
                if best is None or key < best[0]:
                    best = (key, members)
        if best is not None:
            return best[1]


def blend_oracle(poses):
    """Sign-aligned average of unit dual quaternions, renormalized, back to (R, t)."""
    reals, duals = [], []
    for p in poses:
        q = _quat(p.rotation)
        tq = np.array([0.0, *p.translation])
        reals.append(q)
        duals.append(0.5 * _qmul(tq, q))
    ref = reals[0]
    sr, sd = np.zeros(4), np.zeros(4)
    for r, d in zip(reals, duals):
        s = 1.0 if r @ ref >= 0 else -1.0
        sr += s * r
        sd += s * d
    norm = np.linalg.norm(sr)
    sr, sd = sr / norm, sd / norm
    t = 2.0 * _qmul(sd, sr * np.array([1, -1, -1, -1]))[1:]
    return _rot(sr), t


def _qmul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
