"""Cameras, views and the scene containers shared by every other module.

Pixel convention: the pixel in row ``i`` and column ``j`` has its center at
image coordinate ``(u, v) = (j, i)``.  Extrinsics map world to camera,
``x_cam = R @ x_world + t``; the camera center is ``-R.T @ t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

ORTHO_TOL = 1e-6


class BehindCameraError(ValueError):
    """Raised when a point has non-positive camera-frame depth."""


@dataclass(frozen=True, eq=False)
class Camera:
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64).reshape(3, 3)
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if np.abs(R @ R.T - np.eye(3)).max() > ORTHO_TOL or np.linalg.det(R) < 0:
            raise ValueError("camera: R must be a proper rotation")
        if not (K[0, 0] > 0 and K[1, 1] > 0 and K[2, 2] == 1.0):
            raise ValueError("camera: K must have positive focal lengths and K[2,2] = 1")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise ValueError("camera: K must be upper-triangular")
        for name, arr in (("K", K), ("R", R), ("t", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_params(cls, f, cx, cy, R=None, t=None, fy=None) -> "Camera":
        K = np.array([[f, 0.0, cx], [0.0, f if fy is None else fy, cy], [0.0, 0.0, 1.0]])
        return cls(K, np.eye(3) if R is None else R, np.zeros(3) if t is None else t)

    @classmethod
    def look_at(cls, K, eye, target, up=(0.0, -1.0, 0.0)) -> "Camera":
        """Camera at ``eye`` whose optical axis points at ``target``.

        ``up`` is the world direction that should appear upward in the image
        (image ``v`` grows downward, so the default maps world -y to up).
        """
        eye = np.asarray(eye, dtype=np.float64)
        z = np.asarray(target, dtype=np.float64) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=np.float64))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(K, R, -R @ eye)

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def to_dict(self) -> dict:
        return {
            "K": [float(v) for v in self.K.ravel()],
            "R": [float(v) for v in self.R.ravel()],
            "t": [float(v) for v in self.t],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(np.asarray(d["K"], float), np.asarray(d["R"], float), np.asarray(d["t"], float))

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            np.array_equal(self.K, other.K)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.t, other.t)
        )

    __hash__ = None


def load_camera(path: Union[str, Path]) -> Camera:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"camera: file not found: {path}")
    try:
        return Camera.from_dict(json.loads(path.read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"camera: malformed file {path}: {exc!r}") from exc


def save_camera(cam: Camera, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cam.to_dict(), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise ValueError("depth valid mask shape mismatch")
            if np.any(~(values[valid] > 0)):
                raise ValueError("depth must be positive wherever valid")
        values[~valid] = 0.0
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def min_depth(self) -> float:
        if not self.valid.any():
            raise ValueError("depth map has no valid pixels")
        return float(self.values[self.valid].min())


@dataclass(frozen=True, eq=False)
class View:
    """One entry of the autoregressive set: image, inpainting mask and geometry."""

    image: np.ndarray
    mask: np.ndarray
    inpainted: bool = False
    camera: Optional[Camera] = None
    depth: Optional[DepthMap] = None

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("view image must be H x W x 3")
        if mask.shape != image.shape[:2]:
            raise ValueError("view mask must match image size")
        if self.depth is not None and self.depth.values.shape != mask.shape:
            raise ValueError("view depth must match image size")
        image.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def effective_mask(self) -> np.ndarray:
        # an inpainted view is trusted everywhere
        if self.inpainted:
            return np.zeros_like(self.mask)
        return self.mask

    def with_geometry(self, camera: Camera, depth: DepthMap) -> "View":
        return replace(self, camera=camera, depth=depth)


@dataclass(frozen=True)
class SceneGraph:
    n: int
    edges: tuple
    distances: tuple

    def neighbors(self, i: int) -> list:
        return [j for (a, j) in self.edges if a == i]


@dataclass(frozen=True)
class AutoregressiveSet:
    views: tuple
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))

    def __len__(self):
        return len(self.views)

    def __getitem__(self, i) -> View:
        return self.views[i]

    @property
    def inpainted(self) -> list:
        return [i for i, v in enumerate(self.views) if v.inpainted]

    @property
    def complete(self) -> bool:
        return all(v.inpainted for v in self.views)


def rotation_zyx(angles) -> np.ndarray:
    """Rotation ``Rz(a) @ Ry(b) @ Rx(c)`` for ``angles = (a, b, c)``."""
    a, b, c = (float(x) for x in angles)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    Rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]])
    return Rz @ Ry @ Rx


def _wrap(a: float) -> float:
    # atan2 can land on -pi; the interval is (-pi, pi]
    return np.pi if a <= -np.pi else a


def euler_zyx(R) -> np.ndarray:
    """Intrinsic Z-Y-X Euler angles of ``R``, each in (-pi, pi].

    Inverse of :func:`rotation_zyx` away from gimbal lock.  At gimbal lock the
    roll angle is set to zero.
    """
    R = np.asarray(R, dtype=np.float64)
    s = -R[2, 0]
    if abs(s) >= 1.0 - 1e-12:
        b = np.copysign(np.pi / 2, s)
        a = np.arctan2(-R[0, 1], R[1, 1])
        c = 0.0
    else:
        b = np.arcsin(s)
        a = np.arctan2(R[1, 0], R[0, 0])
        c = np.arctan2(R[2, 1], R[2, 2])
    return np.array([_wrap(a), b, _wrap(c)])


def view_distance(cam_a: Camera, cam_b: Camera) -> float:
    """Euler-angle norm of the relative rotation ``R_a.T @ R_b``."""
    rel = cam_a.R.T @ cam_b.R
    if np.array_equal(cam_a.R, cam_b.R):
        return 0.0
    return float(np.linalg.norm(euler_zyx(rel)))


def build_scene_graph(cameras: Sequence[Camera], k: Union[int, str] = 4) -> SceneGraph:
    n = len(cameras)
    if n < 2:
        raise ValueError("scene graph needs at least 2 cameras")
    D = np.array([[view_distance(a, b) for b in cameras] for a in cameras])
    if k == "complete" or (isinstance(k, int) and k >= n - 1):
        edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    else:
        if not isinstance(k, int) or k < 1:
            raise ValueError("k must be a positive integer or 'complete'")
        edges = []
        for i in range(n):
            others = [j for j in range(n) if j != i]
            others.sort(key=lambda j: (D[i, j], j))
            edges.extend((i, j) for j in others[:k])
    return SceneGraph(n, tuple(edges), tuple(float(D[i, j]) for i, j in edges))


def project(cam: Camera, point) -> tuple:
    """Project a world point; returns ``(pixel, depth)``."""
    xc = cam.R @ np.asarray(point, dtype=np.float64) + cam.t
    z = xc[2]
    if not z > 0:
        raise BehindCameraError(f"point is behind camera (depth {z:g})")
    p = cam.K @ xc
    return p[:2] / p[2], float(z)


def project_points(cam: Camera, points: np.ndarray):
    """Vectorized projection, no behind-camera check.  Returns ``(uv, z)``."""
    xc = np.asarray(points, dtype=np.float64) @ cam.R.T + cam.t
    p = xc @ cam.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = p[:, :2] / p[:, 2:3]
    return uv, xc[:, 2]


def unproject(cam: Camera, pixel, depth) -> np.ndarray:
    """Lift pixel coordinates at camera-frame depth to world points.

    Accepts a single ``(u, v)`` pair or an ``(N, 2)`` array with matching depths.
    """
    pix = np.asarray(pixel, dtype=np.float64)
    single = pix.ndim == 1
    pix = np.atleast_2d(pix)
    d = np.broadcast_to(np.asarray(depth, dtype=np.float64), pix.shape[:1])
    h = np.concatenate([pix, np.ones((len(pix), 1))], axis=1)
    rays = np.linalg.solve(cam.K, h.T).T
    xc = rays * d[:, None]
    X = (xc - cam.t) @ cam.R
    return X[0] if single else X
