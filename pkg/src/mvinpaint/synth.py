"""Training-sample synthesis from single RGB-D images.

A sample pairs cues rendered from a perturbed reference mesh with
ground-truth confidence masks rendered from the unperturbed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy.spatial import ConvexHull, QhullError

from mvinpaint.camera import Camera, DepthMap, rotation_zyx, view_distance
from mvinpaint.cues import ConfidenceTriple, CueSet, gt_confidence
from mvinpaint.io import read_mask, write_json, write_png
from mvinpaint.meshing import EPS_EDGE, DepthMesh, build_mesh, build_shadow_mesh
from mvinpaint.raster import coverage, normalize_inverse_depth, render_mesh, render_shadow

OCCLUDER_RANGE = {"object": (0.6, 1.0), "scene": (0.6, 0.8)}


@dataclass(frozen=True)
class SynthConfig:
    sigma_ar: float = 0.3
    sigma_tr: float = 0.2
    sigma_ap: float = 0.2
    sigma_tp: float = 0.01
    p_occluder: float = 0.2
    p_drop_reference: float = 0.2
    mode: str = "object"
    o_min: Optional[float] = None
    o_max: Optional[float] = None
    n_occluder_points: int = 32
    hull_retries: int = 10
    eps_edge: float = EPS_EDGE
    # 2-D stroke masks
    strokes: tuple = (1, 4)
    stroke_vertices: tuple = (2, 6)
    stroke_width: tuple = (0.05, 0.2)     # fraction of min(H, W)
    stroke_step: tuple = (0.1, 0.4)       # fraction of min(H, W)
    rects: tuple = (0, 2)
    rect_size: tuple = (0.1, 0.4)         # fraction of each side

    def __post_init__(self):
        if self.mode not in OCCLUDER_RANGE:
            raise ValueError(f"unknown occluder mode {self.mode!r}")
        if min(self.sigma_ar, self.sigma_tr, self.sigma_ap, self.sigma_tp) < 0:
            raise ValueError("sigmas must be non-negative")
        if not 0 <= self.p_occluder <= 1:
            raise ValueError("p_occluder must lie in [0, 1]")
        if self.occluder_range[0] > self.occluder_range[1]:
            raise ValueError("o_min must not exceed o_max")

    @property
    def occluder_range(self) -> tuple:
        lo, hi = OCCLUDER_RANGE[self.mode]
        return (lo if self.o_min is None else self.o_min, hi if self.o_max is None else self.o_max)


def single_view_camera(width: int, height: int) -> Camera:
    """Identity pose with focal ``(W + H) / 2`` and principal point ``(W / 2, H / 2)``."""
    return Camera.from_params((width + height) / 2.0, width / 2.0, height / 2.0)


def sample_reference_pose(depth: DepthMap, cfg: SynthConfig, rng: np.random.Generator) -> Camera:
    """Random reference camera around the identity pose, scaled by the nearest depth."""
    dmin = depth.min_depth()
    angles = rng.normal(0.0, 1.0, 3) * cfg.sigma_ar
    t = rng.normal(0.0, 1.0, 3) * (cfg.sigma_tr * dmin)
    cam = single_view_camera(depth.width, depth.height)
    return Camera(cam.K, rotation_zyx(angles), t)


def sample_rigid(cfg: SynthConfig, rng, scale: float):
    angles = rng.normal(0.0, 1.0, 3) * cfg.sigma_ap
    t = rng.normal(0.0, 1.0, 3) * (cfg.sigma_tp * scale)
    return rotation_zyx(angles), t, angles


def perturb_vertices(vertices: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.asarray(vertices, dtype=np.float64) @ R.T + t


def perturb_mesh(mesh: DepthMesh, cfg: SynthConfig, rng: np.random.Generator,
                 min_depth: Optional[float] = None) -> DepthMesh:
    """Apply one random rigid motion to every vertex; connectivity is untouched."""
    if min_depth is None:
        xc = mesh.vertices @ mesh.camera.R.T + mesh.camera.t
        min_depth = float(xc[:, 2].min())
    R, t, _ = sample_rigid(cfg, rng, min_depth)
    return mesh.with_vertices(perturb_vertices(mesh.vertices, R, t))


def hull_faces(points: np.ndarray) -> np.ndarray:
    """Convex-hull triangles of ``points`` with outward winding."""
    hull = ConvexHull(points)
    faces = hull.simplices.copy()
    p = points[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n, hull.equations[:, :3]) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def render_hull_mask(points: np.ndarray, cam: Camera, width: int, height: int) -> np.ndarray:
    return coverage(points, hull_faces(points), cam, width, height)


def sample_occluder(points: np.ndarray, cam: Camera, cfg: SynthConfig, rng, scale=None):
    """Sample occluder points inside a random box; returns ``(points, box_lo, box_hi)``.

    Object mode places a box inside the scene bounding box with per-axis size
    in ``[o_min, o_max]`` times the scene extent.  Scene mode centers it on a
    random scene point and scales it by that point's camera depth.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("occluder sampling needs a non-empty point cloud")
    lo_b, hi_b = points.min(axis=0), points.max(axis=0)
    o_lo, o_hi = cfg.occluder_range
    frac = rng.uniform(o_lo, o_hi, 3) if scale is None else np.full(3, float(scale))
    u = rng.uniform(0.0, 1.0, 3)
    if cfg.mode == "object":
        size = frac * (hi_b - lo_b)
        lo = lo_b + u * (hi_b - lo_b - size)
    else:
        c = points[int(rng.integers(len(points)))]
        z = float(cam.R[2] @ c + cam.t[2])
        size = frac * abs(z)
        lo = c - 0.5 * size
    pts = lo + rng.uniform(0.0, 1.0, (cfg.n_occluder_points, 3)) * size
    return pts, lo, lo + size


def sample_occluder_mask(points: np.ndarray, cam: Camera, width: int, height: int,
                         cfg: SynthConfig, rng: np.random.Generator, scale=None):
    """Render a random convex occluder into ``cam``; returns ``(mask, occluder_points)``."""
    for _ in range(cfg.hull_retries):
        occ, _, _ = sample_occluder(points, cam, cfg, rng, scale)
        try:
            faces = hull_faces(occ)
        except QhullError:
            continue
        return coverage(occ, faces, cam, width, height), occ
    raise ValueError("could not sample a non-degenerate occluder hull")


def stroke_mask(width: int, height: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Random thick polylines plus rectangles."""
    im = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(im)
    side = min(width, height)
    for _ in range(int(rng.integers(cfg.strokes[0], cfg.strokes[1] + 1))):
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        pts = [(x, y)]
        wd = max(1, int(round(rng.uniform(*cfg.stroke_width) * side)))
        for _ in range(int(rng.integers(cfg.stroke_vertices[0], cfg.stroke_vertices[1] + 1))):
            a = rng.uniform(0, 2 * np.pi)
            step = rng.uniform(*cfg.stroke_step) * side
            x = float(np.clip(x + step * np.cos(a), 0, width - 1))
            y = float(np.clip(y + step * np.sin(a), 0, height - 1))
            pts.append((x, y))
        draw.line(pts, fill=255, width=wd, joint="curve")
        for px, py in pts:
            r = wd / 2.0
            draw.ellipse([px - r, py - r, px + r, py + r], fill=255)
    for _ in range(int(rng.integers(cfg.rects[0], cfg.rects[1] + 1))):
        rw = rng.uniform(*cfg.rect_size) * width
        rh = rng.uniform(*cfg.rect_size) * height
        x0, y0 = rng.uniform(0, width - rw), rng.uniform(0, height - rh)
        draw.rectangle([x0, y0, x0 + rw, y0 + rh], fill=255)
    return np.asarray(im) > 0


@dataclass(frozen=True, eq=False)
class SynthSample:
    image: np.ndarray
    mask: np.ndarray
    cues: CueSet
    gt: ConfidenceTriple
    provenance: dict
    unperturbed: dict = field(default_factory=dict)


def _cue_from_render(r, walls, ref_index=0, distance=0.0) -> CueSet:
    return CueSet(color=r.color, front=r.front, back=r.back,
                  inv_depth=normalize_inverse_depth(r.depth, r.valid), shadow=walls | r.back,
                  hint=None, reference_index=ref_index, reference_distance=distance, walls=walls,
                  depth=r.depth, source_px=r.source_px, face=r.face)


def make_sample(image: np.ndarray, depth: DepthMap, cfg: SynthConfig, rng: np.random.Generator,
                ref_cam: Optional[Camera] = None, perturb: bool = True) -> SynthSample:
    """Synthesize one training tuple from a single RGB-D image.

    The target is the input view (identity pose).  A reference view is
    rendered from the target mesh at a sampled pose; its own mesh and shadow
    volume are rendered back into the target twice, once after a random rigid
    perturbation (the cues) and once unperturbed (the ground truth).
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = depth.values.shape
    tcam = single_view_camera(w, h)
    mesh_t = build_mesh(depth, image, tcam, cfg.eps_edge)
    if mesh_t.n_faces == 0:
        raise ValueError("input depth yields an empty mesh")
    if ref_cam is None:
        ref_cam = sample_reference_pose(depth, cfg, rng)

    # reference view rendered from the target mesh; back-facing content is unseen
    ref = render_mesh(mesh_t, ref_cam, w, h)
    ref_valid = ref.front
    if not ref_valid.any():
        raise ValueError("sampled reference sees no front-facing geometry")

    # inpainting mask
    use_occ = bool(rng.uniform() < cfg.p_occluder)
    prov = {"reference_camera": ref_cam.to_dict(), "mask_type": "occluder" if use_occ else "strokes",
            "mode": cfg.mode}
    if use_occ:
        mask, occ = sample_occluder_mask(mesh_t.vertices, tcam, w, h, cfg, rng)
        prov["occluder_points"] = occ.tolist()
        drop = bool(rng.uniform() < cfg.p_drop_reference)
        prov["reference_dropped"] = drop
        if drop:
            # the reference loses whatever the occluder covers in its own frame
            ref_valid = ref_valid & ~render_hull_mask(occ, ref_cam, w, h)
            if not ref_valid.any():
                raise ValueError("dropped reference content leaves no geometry")
    else:
        mask = stroke_mask(w, h, cfg, rng)

    ref_depth = DepthMap(np.where(ref_valid, ref.depth, 0.0), ref_valid)
    ref_image = np.where(ref_valid[..., None], ref.color, 0.0)
    mesh_r = build_mesh(ref_depth, ref_image, ref_cam, cfg.eps_edge)
    shadow_r = build_shadow_mesh(mesh_r)

    # cues from the perturbed reference geometry
    if perturb:
        Rp, tp, ap = sample_rigid(cfg, rng, ref_depth.min_depth())
    else:
        Rp, tp, ap = np.eye(3), np.zeros(3), np.zeros(3)
    prov["perturbation"] = {"angles": ap.tolist(), "translation": tp.tolist()}
    mesh_p = mesh_r.with_vertices(perturb_vertices(mesh_r.vertices, Rp, tp))
    shadow_p = shadow_r.with_vertices(perturb_vertices(shadow_r.vertices, Rp, tp))
    rp = render_mesh(mesh_p, tcam, w, h)
    walls_p = render_shadow(shadow_p, mesh_p, tcam, w, h, mesh_render=rp)
    cue = _cue_from_render(rp, walls_p, 0, view_distance(tcam, ref_cam))

    # ground truth from the unperturbed geometry
    ru = render_mesh(mesh_r, tcam, w, h)
    walls_u = render_shadow(shadow_r, mesh_r, tcam, w, h, mesh_render=ru)
    shadow_u = walls_u | ru.back
    face_target = render_mesh(mesh_t, tcam, w, h).face
    gt = gt_confidence(ru.front, ru.back, shadow_u, ref.face, face_target, ru.source_px, mask)
    return SynthSample(image=image, mask=mask, cues=cue, gt=gt, provenance=prov,
                       unperturbed={"front": ru.front, "back": ru.back, "shadow": shadow_u})


def write_sample(sample: SynthSample, directory, extra: Optional[dict] = None) -> None:
    from mvinpaint.pipeline import write_cueset

    d = Path(directory)
    write_cueset(sample.cues, d)
    write_png(d / "target.png", sample.image)
    write_png(d / "mask.png", sample.mask)
    write_png(d / "gt_cf.png", sample.gt.front)
    write_png(d / "gt_cb.png", sample.gt.back)
    write_png(d / "gt_cs.png", sample.gt.shadow)
    prov = dict(sample.provenance)
    if extra:
        prov.update(extra)
    write_json(d / "provenance.json", prov)


def read_gt(directory) -> ConfidenceTriple:
    d = Path(directory)
    return ConfidenceTriple(read_mask(d / "gt_cf.png"), read_mask(d / "gt_cb.png"), read_mask(d / "gt_cs.png"))
