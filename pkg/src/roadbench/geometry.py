"""Planar geometry helpers: oriented rectangles, separating-axis overlap,
polygon containment and polyline utilities.

Rectangles are described by their center pose ``(x, y, theta)`` and their
``length`` (along theta) and ``width``.
"""
from __future__ import annotations

import math

import numpy as np
import shapely


def rectangle_corners(x, y, theta, length, width):
    """Corners of oriented rectangles, counter-clockwise.

    All arguments broadcast; the result has shape ``(..., 4, 2)``.
    """
    x, y, theta = np.asarray(x, float), np.asarray(y, float), np.asarray(theta, float)
    hl = 0.5 * np.asarray(length, float)
    hw = 0.5 * np.asarray(width, float)
    c, s = np.cos(theta), np.sin(theta)
    local = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]])
    lx = local[:, 0] * hl[..., None]
    ly = local[:, 1] * hw[..., None]
    cx = x[..., None] + lx * c[..., None] - ly * s[..., None]
    cy = y[..., None] + lx * s[..., None] + ly * c[..., None]
    return np.stack([cx, cy], axis=-1)


def _edge_normals(corners):
    # rectangles only need two edge directions each
    e0 = corners[..., 1, :] - corners[..., 0, :]
    e1 = corners[..., 2, :] - corners[..., 1, :]
    n0 = np.stack([-e0[..., 1], e0[..., 0]], axis=-1)
    n1 = np.stack([-e1[..., 1], e1[..., 0]], axis=-1)
    return n0, n1


def rectangles_overlap(a, b):
    """Separating-axis test for batches of rectangles given as corners.

    ``a`` and ``b`` have shape ``(..., 4, 2)`` and broadcast against each
    other. Touching rectangles count as overlapping.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    a, b = np.broadcast_arrays(a, b)
    overlap = np.ones(a.shape[:-2], dtype=bool)
    for axis in (*_edge_normals(a), *_edge_normals(b)):
        pa = np.einsum("...kj,...j->...k", a, axis)
        pb = np.einsum("...kj,...j->...k", b, axis)
        # tolerance scaled to the (unnormalised) axis length
        eps = 1e-12 * np.maximum(1.0, np.abs(axis).sum(axis=-1))
        separated = (pa.max(-1) < pb.min(-1) - eps) | (pb.max(-1) < pa.min(-1) - eps)
        overlap &= ~separated
    return overlap


def rectangle_overlap(pose_a, dims_a, pose_b, dims_b) -> bool:
    """Scalar convenience wrapper: poses are (x, y, theta), dims (length, width)."""
    ca = rectangle_corners(*pose_a, *dims_a)
    cb = rectangle_corners(*pose_b, *dims_b)
    return bool(rectangles_overlap(ca, cb))


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def polygon_is_simple(vertices) -> bool:
    """True if the closed polygon has no self-intersections."""
    pts = np.asarray(vertices, float)
    if len(pts) < 3:
        return False
    ring = shapely.LinearRing(pts)
    return bool(ring.is_simple)


def make_polygon(vertices) -> shapely.Polygon:
    poly = shapely.Polygon(np.asarray(vertices, float))
    shapely.prepare(poly)
    return poly


def points_in_polygon(polygon: shapely.Geometry, points) -> np.ndarray:
    """Boundary-inclusive containment for an ``(n, 2)`` point array."""
    pts = np.asarray(points, float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    return shapely.intersects_xy(polygon, pts[:, 0], pts[:, 1])


def polyline_lengths(points) -> np.ndarray:
    """Cumulative arc length of a polyline, starting at 0."""
    pts = np.asarray(points, float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def densify(points, spacing: float) -> np.ndarray:
    """Insert vertices so no segment is longer than ``spacing``."""
    pts = np.asarray(points, float)
    out = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(q - p) / spacing)))
        for k in range(1, n + 1):
            out.append(p + (q - p) * (k / n))
    return np.array(out)


def resample_uniform(points, spacing: float) -> np.ndarray:
    """Walk the polyline placing vertices exactly ``spacing`` apart (chord).

    The remainder shorter than ``spacing`` at the end is dropped so every
    chord has the same length.
    """
    pts = np.asarray(points, float)
    # drop duplicate vertices
    keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-12])
    pts = pts[keep]
    out = [pts[0]]
    cur = pts[0]
    i = 0  # current segment pts[i] -> pts[i+1]
    r2 = spacing * spacing
    while i < len(pts) - 1:
        a, b = pts[i], pts[i + 1]
        if np.dot(b - cur, b - cur) < r2:
            i += 1
            continue
        # intersect the circle around cur with segment a-b, take the far root
        d = b - a
        f = a - cur
        qa = np.dot(d, d)
        qb = 2.0 * np.dot(f, d)
        qc = np.dot(f, f) - r2
        disc = max(qb * qb - 4 * qa * qc, 0.0)
        u = (-qb + math.sqrt(disc)) / (2 * qa)
        u = min(max(u, 0.0), 1.0)
        cur = a + u * d
        out.append(cur)
    return np.array(out)


def moving_average(points, window: int = 3) -> np.ndarray:
    """Centered moving average; endpoints are kept fixed."""
    pts = np.asarray(points, float)
    if len(pts) < window:
        return pts.copy()
    half = window // 2
    out = pts.copy()
    kernel = np.ones(window) / window
    for dim in range(pts.shape[1]):
        out[half:-half, dim] = np.convolve(pts[:, dim], kernel, mode="valid")
    return out


def circumcircle_curvature(points) -> np.ndarray:
    """Signed three-point curvature (left turn positive); ends copy neighbours."""
    pts = np.asarray(points, float)
    n = len(pts)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    p0, p1, p2 = pts[:-2], pts[1:-1], pts[2:]
    a = np.linalg.norm(p1 - p0, axis=1)
    b = np.linalg.norm(p2 - p1, axis=1)
    c = np.linalg.norm(p2 - p0, axis=1)
    cross = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    denom = a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 1e-12, 2.0 * cross / denom, 0.0)
    kappa[1:-1] = k
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return kappa


def project_onto_polyline(points, polyline, cumlen=None):
    """Nearest-segment projection of points onto a polyline.

    Returns ``(s, d, seg_index)`` with ``d`` positive to the left of the
    direction of travel.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    line = np.asarray(polyline, float)
    if cumlen is None:
        cumlen = polyline_lengths(line)
    a = line[:-1]
    e = line[1:] - a
    el2 = np.maximum((e * e).sum(1), 1e-300)
    rel = pts[:, None, :] - a[None, :, :]
    u = np.clip((rel * e[None]).sum(-1) / el2[None], 0.0, 1.0)
    foot = a[None] + u[..., None] * e[None]
    dist2 = ((pts[:, None, :] - foot) ** 2).sum(-1)
    j = np.argmin(dist2, axis=1)
    idx = np.arange(len(pts))
    uj = u[idx, j]
    ej = e[j]
    s = cumlen[j] + uj * np.sqrt(el2[j])
    relj = rel[idx, j]
    cross = ej[:, 0] * relj[:, 1] - ej[:, 1] * relj[:, 0]
    d = np.sign(cross) * np.sqrt(dist2[idx, j])
    return s, d, j
