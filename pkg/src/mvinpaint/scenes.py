"""Procedural test scenes with exact ground-truth geometry.

Scenes are plain triangle meshes with per-vertex colors; images and depth
maps come from rasterizing them, so geometry is known to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvinpaint.camera import Camera, DepthMap, View, unproject
from mvinpaint.raster import rasterize


@dataclass(frozen=True, eq=False)
class SceneMesh:
    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray

    def __add__(self, other: "SceneMesh") -> "SceneMesh":
        n = len(self.vertices)
        return SceneMesh(
            np.concatenate([self.vertices, other.vertices]),
            np.concatenate([self.faces, other.faces + n]),
            np.concatenate([self.colors, other.colors]),
        )


def grid_patch(origin, du, dv, nu: int, nv: int, color_fn) -> SceneMesh:
    """Planar patch ``origin + s*du + t*dv`` for ``s, t`` in [0, 1].

    Faces are wound so the normal is ``du x dv``.
    """
    origin, du, dv = (np.asarray(a, dtype=np.float64) for a in (origin, du, dv))
    s, t = np.meshgrid(np.linspace(0, 1, nu + 1), np.linspace(0, 1, nv + 1))
    verts = origin + s.reshape(-1, 1) * du + t.reshape(-1, 1) * dv
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nv + 1, nu + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])
    return SceneMesh(verts, faces, color_fn(verts))


def texture(base, freq: float = 6.0):
    base = np.asarray(base, dtype=np.float64)

    def fn(p):
        w = 0.5 + 0.5 * np.sin(freq * p[:, 0]) * np.cos(freq * p[:, 2] + 0.7 * freq * p[:, 1])
        return np.clip(base[None, :] * (0.55 + 0.45 * w[:, None]), 0.0, 1.0)

    return fn


def box(lo, hi, color, n: int = 4) -> SceneMesh:
    """Axis-aligned box with outward-facing triangles."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    ex = np.diag(hi - lo)
    fn = texture(color, 9.0)
    parts = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        for side in (0, 1):
            origin = lo + side * ex[axis]
            du, dv = ex[a], ex[b]
            # the normal du x dv must point away from the box center
            if (np.cross(du, dv)[axis] > 0) != (side == 1):
                du, dv = dv, du
            parts.append(grid_patch(origin, du, dv, n, n, fn))
    mesh = parts[0]
    for p in parts[1:]:
        mesh = mesh + p
    return mesh


def render_scene(scene: SceneMesh, cam: Camera, width: int, height: int, background=(0.0, 0.0, 0.0)):
    """Ground-truth image, depth map and face map of ``scene`` seen by ``cam``."""
    r = rasterize(scene.vertices, scene.faces, cam, width, height, attrs=scene.colors)
    valid = r.face >= 0
    image = np.where(valid[..., None], r.attrs, np.asarray(background, float))
    depth = DepthMap(np.where(valid, r.depth, 0.0), valid)
    return image, depth, r.face


def box_over_plane(extent: float = 6.0) -> SceneMesh:
    """Textured box standing on a large textured ground plane (world y is down)."""
    ground = grid_patch([-extent, 0.0, -extent], [2 * extent, 0, 0], [0, 0, 2 * extent], 24, 24,
                        texture([0.35, 0.75, 0.45], 3.0))
    return ground + box([-0.5, -0.9, -0.5], [0.5, 0.0, 0.5], [0.9, 0.45, 0.25])


def ring_cameras(n: int, width: int, height: int, radius: float = 3.0, elevation: float = 1.8,
                 target=(0.0, -0.3, 0.0), arc: float = 2 * np.pi, focal=None) -> list:
    f = float(width) if focal is None else focal
    K = np.array([[f, 0.0, width / 2], [0.0, f, height / 2], [0.0, 0.0, 1.0]])
    cams = []
    for k in range(n):
        a = arc * k / n if arc >= 2 * np.pi else arc * (k / max(n - 1, 1) - 0.5)
        eye = [radius * np.sin(a), -elevation, -radius * np.cos(a)]
        cams.append(Camera.look_at(K, eye, target))
    return cams


def region_mask(depth: DepthMap, cam: Camera, lo, hi) -> np.ndarray:
    """Pixels whose lifted surface point falls inside the world box ``[lo, hi]``."""
    h, w = depth.values.shape
    v, u = np.nonzero(depth.valid)
    X = unproject(cam, np.stack([u, v], 1).astype(float), depth.values[v, u])
    inside = np.all((X >= np.asarray(lo)) & (X <= np.asarray(hi)), axis=1)
    mask = np.zeros((h, w), dtype=bool)
    mask[v[inside], u[inside]] = True
    return mask


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    scene: SceneMesh
    views: list           # View objects carrying ground-truth geometry
    gt_images: list


def make_box_scene(n_views: int = 8, width: int = 64, height: int = 48,
                   mask_lo=(-0.7, -1.2, -0.7), mask_hi=(0.7, 0.05, 0.7)) -> SyntheticScene:
    """Multiview box-over-plane scene; the masked region wraps the box top."""
    scene = box_over_plane()
    views, gts = [], []
    for cam in ring_cameras(n_views, width, height):
        image, depth, _ = render_scene(scene, cam, width, height)
        mask = region_mask(depth, cam, mask_lo, mask_hi)
        masked = np.where(mask[..., None], 0.0, image)
        views.append(View(masked, mask, False, cam, depth))
        gts.append(image)
    return SyntheticScene(scene, views, gts)


def square_over_plane(square_depth: float = 2.0, half: float = 0.45, plane_depth: float = 4.0,
                      plane_half: float = 6.0, n: int = 8) -> SceneMesh:
    """Fronto-parallel square in front of a wall, both facing the -z direction."""
    wall = grid_patch([-plane_half, -plane_half, plane_depth], [0, 2 * plane_half, 0],
                      [2 * plane_half, 0, 0], 2 * n, 2 * n, texture([0.3, 0.5, 0.9], 2.0))
    sq = grid_patch([-half, -half, square_depth], [0, 2 * half, 0], [2 * half, 0, 0], n, n,
                    texture([0.9, 0.8, 0.2], 8.0))
    return wall + sq


def random_rgbd(rng: np.random.Generator, width: int = 40, height: int = 30):
    """Random single-view RGB-D image: boxes floating before a tilted wall.

    Uses the identity camera with focal ``(W + H) / 2`` and principal point
    ``(W / 2, H / 2)``.
    """
    f = (width + height) / 2.0
    cam = Camera.from_params(f, width / 2.0, height / 2.0)
    tilt = rng.uniform(-0.3, 0.3, 2)
    d0 = rng.uniform(3.0, 5.0)
    wall = grid_patch([-8, -8, d0 - 8 * tilt[0] - 8 * tilt[1]], [0, 16, 16 * tilt[1]],
                      [16, 0, 16 * tilt[0]], 8, 8, texture(rng.uniform(0.2, 0.9, 3), rng.uniform(1, 4)))
    scene = wall
    for _ in range(int(rng.integers(1, 4))):
        c = np.array([rng.uniform(-1, 1), rng.uniform(-0.7, 0.7), rng.uniform(1.5, d0 - 0.8)])
        s = rng.uniform(0.2, 0.6, 3)
        scene = scene + box(c - s, c + s, rng.uniform(0.2, 1.0, 3), n=3)
    image, depth, _ = render_scene(scene, cam, width, height)
    return image, depth, cam, scene
