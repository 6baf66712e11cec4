"""Software perspective rasterizer.

Pixel centers sit on integer image coordinates.  Triangles are clipped
against a near plane in camera space, projected, and scan-converted with a
top-left fill rule so that a pixel on an edge shared by two triangles is
drawn exactly once.  Nearest fragment wins; equal depths go to the lower face
id.  Attributes are interpolated perspective-correctly.

A face is front-facing in a view when it appears counter-clockwise on screen
(image ``v`` axis pointing down), i.e. when its normal
``(v1 - v0) x (v2 - v0)`` points toward the camera.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mvinpaint.camera import Camera

NEAR = 1e-4
_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class RenderOutput:
    color: np.ndarray
    front: np.ndarray
    back: np.ndarray
    depth: np.ndarray
    shadow: np.ndarray
    face: np.ndarray
    valid: np.ndarray
    source_px: np.ndarray


@dataclass(frozen=True, eq=False)
class Raster:
    """Raw nearest-hit buffers.  ``depth`` is ``inf`` and ``face`` -1 where empty."""

    depth: np.ndarray
    face: np.ndarray
    facing_front: np.ndarray
    attrs: Optional[np.ndarray]


def _clip_near(xc, faces, attrs, near):
    """Clip triangles against ``z = near`` in camera space.

    Returns per-triangle camera coordinates (T, 3, 3), attributes (T, 3, A)
    and the originating face index of every output triangle.
    """
    tri = xc[faces]
    tat = attrs[faces] if attrs is not None else None
    inside = tri[:, :, 2] > near
    n_in = inside.sum(axis=1)
    full = np.flatnonzero(n_in == 3)
    mixed = np.flatnonzero((n_in > 0) & (n_in < 3))
    out_xyz = [tri[full]]
    out_att = [tat[full]] if tat is not None else None
    out_id = [full]
    if len(mixed):
        xs, ats, ids = [], [], []
        for f in mixed:
            P = tri[f]
            A = tat[f] if tat is not None else None
            poly, pat = [], []
            for k in range(3):
                a, b = k, (k + 1) % 3
                ina, inb = inside[f, a], inside[f, b]
                if ina:
                    poly.append(P[a])
                    if A is not None:
                        pat.append(A[a])
                if ina != inb:
                    s = (near - P[a, 2]) / (P[b, 2] - P[a, 2])
                    q = P[a] + s * (P[b] - P[a])
                    q[2] = near
                    poly.append(q)
                    if A is not None:
                        pat.append(A[a] + s * (A[b] - A[a]))
            for k in range(1, len(poly) - 1):
                xs.append([poly[0], poly[k], poly[k + 1]])
                if A is not None:
                    ats.append([pat[0], pat[k], pat[k + 1]])
                ids.append(f)
        out_xyz.append(np.array(xs).reshape(-1, 3, 3))
        if out_att is not None:
            out_att.append(np.array(ats).reshape(-1, 3, tat.shape[2]))
        out_id.append(np.array(ids, dtype=np.int64))
    xyz = np.concatenate(out_xyz)
    att = np.concatenate(out_att) if out_att is not None else None
    return xyz, att, np.concatenate(out_id)


def _next_pow2(x):
    return np.left_shift(1, np.ceil(np.log2(np.maximum(x, 1))).astype(np.int64))


def _fragments(scr, width, height):
    """Scan-convert screen-space triangles.

    Yields ``(tri, pix, l0, l1, l2)`` arrays of covered pixel fragments with
    screen-space barycentric weights.
    """
    x, y = scr[:, :, 0], scr[:, :, 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0])
    sign = np.sign(area2)
    with np.errstate(invalid="ignore"):
        xmin = np.maximum(np.ceil(x.min(axis=1)), 0)
        xmax = np.minimum(np.floor(x.max(axis=1)), width - 1)
        ymin = np.maximum(np.ceil(y.min(axis=1)), 0)
        ymax = np.minimum(np.floor(y.max(axis=1)), height - 1)
    ok = np.isfinite(area2) & (area2 != 0) & (xmax >= xmin) & (ymax >= ymin)
    tris = np.flatnonzero(ok)
    if len(tris) == 0:
        return
    xmin = xmin[tris].astype(np.int64)
    ymin = ymin[tris].astype(np.int64)
    bw = xmax[tris].astype(np.int64) - xmin + 1
    bh = ymax[tris].astype(np.int64) - ymin + 1

    # canonical endpoint order per edge makes the edge function of a shared
    # edge bitwise antisymmetric between its two triangles
    ax, ay, bx, by, es, tl = [], [], [], [], [], []
    for k in range(3):
        x0, y0 = x[tris, k], y[tris, k]
        x1, y1 = x[tris, (k + 1) % 3], y[tris, (k + 1) % 3]
        swap = (x0 > x1) | ((x0 == x1) & (y0 > y1))
        ax.append(np.where(swap, x1, x0))
        ay.append(np.where(swap, y1, y0))
        bx.append(np.where(swap, x0, x1))
        by.append(np.where(swap, y0, y1))
        s = sign[tris] * np.where(swap, -1.0, 1.0)
        es.append(s)
        dx, dy = sign[tris] * (x1 - x0), sign[tris] * (y1 - y0)
        tl.append((dy < 0) | ((dy == 0) & (dx > 0)))
    inv_area = 1.0 / np.abs(area2[tris])

    keys = _next_pow2(bw) * 4096 + _next_pow2(bh)
    for key in np.unique(keys):
        BW, BH = int(key // 4096), int(key % 4096)
        members = np.flatnonzero(keys == key)
        oy, ox = np.divmod(np.arange(BW * BH), BW)
        step = max(1, _CHUNK // (BW * BH))
        for s0 in range(0, len(members), step):
            m = members[s0:s0 + step]
            inb = (ox[None, :] < bw[m, None]) & (oy[None, :] < bh[m, None])
            px = (xmin[m, None] + ox[None, :]).astype(np.float64)
            py = (ymin[m, None] + oy[None, :]).astype(np.float64)
            E = []
            inside = inb
            for k in range(3):
                e = es[k][m, None] * (
                    (bx[k][m, None] - ax[k][m, None]) * (py - ay[k][m, None])
                    - (by[k][m, None] - ay[k][m, None]) * (px - ax[k][m, None])
                )
                inside = inside & ((e > 0) | ((e == 0) & tl[k][m, None]))
                E.append(e)
            ti, ci = np.nonzero(inside)
            if len(ti) == 0:
                continue
            pix = (py[ti, ci].astype(np.int64) * width + px[ti, ci].astype(np.int64))
            ia = inv_area[m][ti]
            yield (tris[m][ti], pix, E[1][ti, ci] * ia, E[2][ti, ci] * ia, E[0][ti, ci] * ia)


def _prepare(vertices, faces, cam, attrs, near):
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    xc = vertices @ cam.R.T + cam.t
    xyz, att, fid = _clip_near(xc, faces, attrs, near)
    p = xyz @ cam.K.T
    scr = p[:, :, :2] / p[:, :, 2:3]
    return scr, xyz[:, :, 2], att, fid


def rasterize(vertices, faces, cam: Camera, width: int, height: int, attrs=None,
              near: float = NEAR) -> Raster:
    """Z-buffered rasterization of a triangle soup into ``cam``."""
    if width <= 0 or height <= 0:
        raise ValueError("zero-area viewport")
    n = width * height
    depth = np.full(n, np.inf)
    face = np.full(n, -1, dtype=np.int64)
    facing = np.zeros(n, dtype=bool)
    A = None if attrs is None else np.asarray(attrs, dtype=np.float64)
    out_attr = None if A is None else np.zeros((n, A.shape[1]))
    if len(faces) == 0:
        return Raster(depth.reshape(height, width), face.reshape(height, width),
                      facing.reshape(height, width),
                      None if out_attr is None else out_attr.reshape(height, width, -1))
    scr, z, att, fid = _prepare(vertices, faces, cam, A, near)

    parts = list(_fragments(scr, width, height))
    if not parts:
        return Raster(depth.reshape(height, width), face.reshape(height, width),
                      facing.reshape(height, width),
                      None if out_attr is None else out_attr.reshape(height, width, -1))
    tri = np.concatenate([p[0] for p in parts])
    pix = np.concatenate([p[1] for p in parts])
    lam = np.stack([np.concatenate([p[k] for p in parts]) for k in (2, 3, 4)], axis=1)
    w = lam / z[tri]
    inv_z = w.sum(axis=1)
    frag_depth = 1.0 / inv_z
    frag_face = fid[tri]

    order = np.lexsort((frag_face, frag_depth, pix))
    ps = pix[order]
    first = np.ones(len(ps), dtype=bool)
    first[1:] = ps[1:] != ps[:-1]
    win = order[first]
    wp = pix[win]
    depth[wp] = frag_depth[win]
    face[wp] = frag_face[win]
    t = tri[win]
    x, y = scr[t, :, 0], scr[t, :, 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0])
    facing[wp] = area2 < 0
    if out_attr is not None:
        wn = w[win] / inv_z[win, None]
        out_attr[wp] = np.einsum("pk,pka->pa", wn, att[t])
    return Raster(depth.reshape(height, width), face.reshape(height, width),
                  facing.reshape(height, width),
                  None if out_attr is None else out_attr.reshape(height, width, -1))


def coverage(vertices, faces, cam: Camera, width: int, height: int, depth_limit=None,
             near: float = NEAR) -> np.ndarray:
    """Pixels covered by any triangle (no z-buffer).

    With ``depth_limit`` only fragments strictly nearer than the limit at
    their pixel count.
    """
    if width <= 0 or height <= 0:
        raise ValueError("zero-area viewport")
    out = np.zeros(width * height, dtype=bool)
    if len(faces) == 0:
        return out.reshape(height, width)
    scr, z, _, _ = _prepare(vertices, faces, cam, None, near)
    limit = None if depth_limit is None else np.asarray(depth_limit, dtype=np.float64).ravel()
    for tri, pix, l0, l1, l2 in _fragments(scr, width, height):
        if limit is not None:
            inv_z = l0 / z[tri, 0] + l1 / z[tri, 1] + l2 / z[tri, 2]
            pix = pix[1.0 / inv_z < limit[pix]]
        out[pix] = True
    return out.reshape(height, width)


def render_mesh(mesh, target: Camera, width: int, height: int) -> RenderOutput:
    """Render a :class:`DepthMesh` into ``target``; the shadow field is left zero."""
    attrs = np.concatenate([mesh.colors, mesh.pixels], axis=1)
    r = rasterize(mesh.vertices, mesh.faces, target, width, height, attrs=attrs)
    valid = r.face >= 0
    front = valid & r.facing_front
    back = valid & ~r.facing_front
    color = np.where(front[..., None], r.attrs[..., :3], 0.0)
    src = np.where(valid[..., None], r.attrs[..., 3:5], -1.0)
    depth = np.where(valid, r.depth, 0.0)
    return RenderOutput(color=color, front=front, back=back, depth=depth,
                        shadow=np.zeros_like(valid), face=r.face, valid=valid, source_px=src)


def render_shadow(shadow, mesh, target: Camera, width: int, height: int,
                  depth_test: bool = True, mesh_render: Optional[RenderOutput] = None) -> np.ndarray:
    """Shadow-wall coverage in ``target``.

    With ``depth_test`` (default) a wall fragment counts only when it lies in
    front of the nearest hit of ``mesh`` at that pixel, i.e. the target ray
    enters hidden space before reaching visible reference geometry.  Without
    it the mask is plain wall coverage.
    """
    if shadow.n_faces == 0:
        return np.zeros((height, width), dtype=bool)
    limit = None
    if depth_test:
        if mesh_render is None:
            mesh_render = render_mesh(mesh, target, width, height)
        limit = np.where(mesh_render.valid, mesh_render.depth, np.inf)
    return coverage(shadow.vertices, shadow.faces, target, width, height, depth_limit=limit)


def normalize_inverse_depth(depth: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Min-max normalized inverse depth on ``valid``; 0.5 for a constant map, 0 elsewhere."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    out = np.zeros(depth.shape)
    if not valid.any():
        return out
    r = 1.0 / depth[valid]
    lo, hi = r.min(), r.max()
    out[valid] = 0.5 if hi == lo else (r - lo) / (hi - lo)
    return out


def save_render(out: RenderOutput, directory) -> None:
    """Write a render as PNG masks/color plus PFM depth and face index (-1 where empty)."""
    from pathlib import Path

    from mvinpaint.io import write_pfm, write_png

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_png(d / "color.png", out.color)
    write_png(d / "front.png", out.front)
    write_png(d / "back.png", out.back)
    write_png(d / "shadow.png", out.shadow)
    write_pfm(d / "depth.pfm", out.depth)
    write_pfm(d / "face.pfm", out.face.astype(np.float32))
