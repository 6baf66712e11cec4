"""Depth-map meshing, silhouette edges and shadow-volume side walls."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mvinpaint.camera import Camera, DepthMap

EPS_EDGE = 4e-2


@dataclass(frozen=True, eq=False)
class DepthMesh:
    """Triangle mesh lifted from a depth map.

    Faces are wound counter-clockwise as seen from ``camera`` (the source
    view), so they are front-facing there.  ``pixels`` holds the source pixel
    ``(u, v)`` of every vertex and ``silhouette`` the edges used by one face.
    """

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray
    pixels: np.ndarray
    silhouette: np.ndarray
    camera: Camera

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "DepthMesh":
        return DepthMesh(np.asarray(vertices, float), self.faces, self.colors, self.pixels,
                         self.silhouette, self.camera)


@dataclass(frozen=True, eq=False)
class ShadowMesh:
    vertices: np.ndarray
    faces: np.ndarray
    eps_d: float

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "ShadowMesh":
        return ShadowMesh(np.asarray(vertices, float), self.faces, self.eps_d)


def edge_criterion(d_i, d_j):
    """Relative depth jump ``2|d_i - d_j| / (d_i + d_j)`` between neighbors."""
    d_i = np.asarray(d_i, dtype=np.float64)
    d_j = np.asarray(d_j, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2.0 * np.abs(d_i - d_j) / (d_i + d_j)


def edge_face_counts(faces: np.ndarray):
    """Unique undirected edges of ``faces`` and how many faces use each."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges.reshape(-1, 2), counts


def silhouette_edges(faces: np.ndarray) -> np.ndarray:
    edges, counts = edge_face_counts(faces)
    return edges[counts == 1]


def lift_depth(depth: DepthMap, cam: Camera) -> np.ndarray:
    """World position of every pixel, ``R.T @ (d * K^-1 [u, v, 1] - t)``; H x W x 3."""
    h, w = depth.values.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    hom = np.stack([u, v, np.ones_like(u)], axis=-1)
    rays = hom @ np.linalg.inv(cam.K).T
    xc = rays * depth.values[..., None]
    return (xc - cam.t) @ cam.R


def build_mesh(depth: DepthMap, image: Optional[np.ndarray], cam: Camera,
               eps_edge: float = EPS_EDGE) -> DepthMesh:
    """Regular-grid mesh over the valid pixels of ``depth``.

    Each grid cell is split along its (p+dx, p+dy) diagonal.  A triangle is
    kept only when its three vertices are valid and none of its three edges
    exceeds the relative depth-jump threshold ``eps_edge``.
    """
    valid = depth.valid
    if not valid.any():
        raise ValueError("depth map has an empty valid region")
    h, w = valid.shape
    D = depth.values
    if image is None:
        image = np.zeros((h, w, 3))
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != (h, w):
        raise ValueError("image and depth sizes differ")

    index = np.full((h, w), -1, dtype=np.int64)
    index[valid] = np.arange(int(valid.sum()))
    points = lift_depth(depth, cam)

    # per-edge keep flags on the grid; an edge survives if both ends are valid
    # and the depth jump is within eps_edge
    with np.errstate(divide="ignore", invalid="ignore"):
        keep_h = valid[:, :-1] & valid[:, 1:] & ~(edge_criterion(D[:, :-1], D[:, 1:]) > eps_edge)
        keep_v = valid[:-1, :] & valid[1:, :] & ~(edge_criterion(D[:-1, :], D[1:, :]) > eps_edge)
        keep_d = valid[:-1, 1:] & valid[1:, :-1] & ~(edge_criterion(D[:-1, 1:], D[1:, :-1]) > eps_edge)

    p = index[:-1, :-1]
    px = index[:-1, 1:]
    py = index[1:, :-1]
    pxy = index[1:, 1:]
    # (p, p+dy, p+dx): counter-clockwise on screen with v pointing down
    ok1 = keep_v[:, :-1] & keep_h[:-1, :] & keep_d
    ok2 = keep_d & keep_v[:, 1:] & keep_h[1:, :]
    t1 = np.stack([p[ok1], py[ok1], px[ok1]], axis=1)
    t2 = np.stack([px[ok2], py[ok2], pxy[ok2]], axis=1)
    # interleave per cell so face order follows raster order of cells
    cell1 = np.flatnonzero(ok1.ravel()) * 2
    cell2 = np.flatnonzero(ok2.ravel()) * 2 + 1
    order = np.argsort(np.concatenate([cell1, cell2]), kind="stable")
    faces = np.concatenate([t1, t2])[order].reshape(-1, 3)

    v, u = np.nonzero(valid)
    pixels = np.stack([u, v], axis=1).astype(np.float64)
    return DepthMesh(
        vertices=points[valid],
        faces=faces,
        colors=image[valid],
        pixels=pixels,
        silhouette=silhouette_edges(faces) if len(faces) else np.zeros((0, 2), np.int64),
        camera=cam,
    )


def default_eps_d(points: np.ndarray) -> float:
    """Ten times the diameter of a bounding sphere of ``points``."""
    points = np.asarray(points, dtype=np.float64)
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    radius = np.sqrt(((points - center) ** 2).sum(axis=1).max())
    return float(max(20.0 * radius, 1e-6))


def build_shadow_mesh(mesh: DepthMesh, eps_d: Optional[float] = None) -> ShadowMesh:
    """Extrude silhouette edges away from the source camera.

    Every silhouette vertex ``v`` is pushed to ``v + eps_d * unit(v - c)``
    where ``c`` is the source camera center, and every silhouette edge
    ``(v1, v2)`` becomes the quad ``(v1, v2, v2', v1')`` split in two.
    """
    if eps_d is None:
        eps_d = default_eps_d(mesh.vertices) if mesh.n_vertices else 1.0
    if not eps_d > 0:
        raise ValueError("eps_d must be positive")
    sil = np.asarray(mesh.silhouette, dtype=np.int64).reshape(-1, 2)
    if len(sil) == 0:
        return ShadowMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64), float(eps_d))
    used, inverse = np.unique(sil.ravel(), return_inverse=True)
    base = mesh.vertices[used]
    ray = base + mesh.camera.R.T @ mesh.camera.t
    norm = np.linalg.norm(ray, axis=1)
    if np.any(norm == 0):
        raise ValueError("silhouette vertex coincides with the camera center")
    extruded = base + eps_d * ray / norm[:, None]
    n = len(used)
    e = inverse.reshape(-1, 2)
    v1, v2 = e[:, 0], e[:, 1]
    faces = np.empty((2 * len(e), 3), dtype=np.int64)
    faces[0::2] = np.stack([v1, v2, v2 + n], axis=1)
    faces[1::2] = np.stack([v1, v2 + n, v1 + n], axis=1)
    return ShadowMesh(np.concatenate([base, extruded]), faces, float(eps_d))
