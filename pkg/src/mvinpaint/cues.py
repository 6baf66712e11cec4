"""Reference-based conditioning cues, hint selection and ground-truth confidences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mvinpaint.camera import AutoregressiveSet, View, view_distance
from mvinpaint.meshing import EPS_EDGE, build_mesh, build_shadow_mesh
from mvinpaint.raster import normalize_inverse_depth, render_mesh, render_shadow


@dataclass(frozen=True, eq=False)
class CueSet:
    """Maps rendered from one reference into the target frame.

    ``shadow`` follows the combined convention (wall coverage or back-face);
    ``walls`` keeps the bare wall coverage.  ``source_px`` is the reference
    pixel seen at each target pixel (-1 where nothing is hit).
    """

    color: np.ndarray
    front: np.ndarray
    back: np.ndarray
    inv_depth: np.ndarray
    shadow: np.ndarray
    hint: Optional[np.ndarray]
    reference_index: int
    reference_distance: float
    walls: np.ndarray
    depth: np.ndarray
    source_px: np.ndarray
    face: np.ndarray

    @property
    def shape(self):
        return self.front.shape


@dataclass(frozen=True, eq=False)
class ConfidenceTriple:
    front: np.ndarray
    back: np.ndarray
    shadow: np.ndarray

    def check(self, mask: np.ndarray) -> None:
        """Raise if the ground-truth identities are violated."""
        m = np.asarray(mask, bool)
        if np.any(~m & ~self.front):
            raise AssertionError("pixel outside the mask is not front-confident")
        if np.any(self.back & ~m) or np.any(self.shadow & ~m):
            raise AssertionError("back/shadow confidence outside the mask")
        if np.any(self.front & self.back):
            raise AssertionError("front and back confidence overlap")


def lookup_source(mask: np.ndarray, source_px: np.ndarray, hit: np.ndarray) -> np.ndarray:
    """Sample a reference-frame boolean map at rounded source pixels.

    Pixels without a hit, or whose source falls outside ``mask``, read False.
    """
    h, w = mask.shape
    u = np.rint(source_px[..., 0]).astype(np.int64)
    v = np.rint(source_px[..., 1]).astype(np.int64)
    inb = hit & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    out = np.zeros(hit.shape, dtype=bool)
    out[inb] = mask[v[inb], u[inb]]
    return out


def assemble_cues(reference: View, target: View, hint: Optional[np.ndarray] = None,
                  reference_index: int = -1, eps_edge: float = EPS_EDGE,
                  eps_d: Optional[float] = None) -> CueSet:
    """Build the reference mesh and shadow volume and render both into the target."""
    if reference.camera is None or reference.depth is None:
        raise ValueError("reference view needs a camera and a depth map")
    if target.camera is None:
        raise ValueError("target view needs a camera")
    h, w = target.shape
    mesh = build_mesh(reference.depth, reference.image, reference.camera, eps_edge)
    shadow = build_shadow_mesh(mesh, eps_d)
    r = render_mesh(mesh, target.camera, w, h)
    walls = render_shadow(shadow, mesh, target.camera, w, h, mesh_render=r)

    color, front, back = r.color, r.front, r.back
    ref_mask = reference.effective_mask
    if ref_mask.any():
        # unknown reference content must not leak into the target as a cue
        hidden = lookup_source(ref_mask, r.source_px, r.valid)
        color = np.where(hidden[..., None], 0.0, color)
        front = front & ~hidden
        back = back & ~hidden
    return CueSet(
        color=color,
        front=front,
        back=back,
        inv_depth=normalize_inverse_depth(r.depth, r.valid),
        shadow=walls | back,
        hint=None if hint is None else np.asarray(hint, dtype=np.float64),
        reference_index=reference_index,
        reference_distance=view_distance(target.camera, reference.camera),
        walls=walls,
        depth=r.depth,
        source_px=r.source_px,
        face=r.face,
    )


def select_hint(target_index: int, aset: AutoregressiveSet) -> Optional[int]:
    """Index of the inpainted view farthest from the target, or None."""
    tcam = aset[target_index].camera
    best, best_d = None, -np.inf
    for i in aset.inpainted:
        if i == target_index:
            continue
        d = view_distance(tcam, aset[i].camera)
        if d > best_d:
            best, best_d = i, d
    return best


def empty_hint(shape) -> np.ndarray:
    return np.zeros((*shape, 3))


def face_match(face_target: np.ndarray, face_ref: np.ndarray, source_px: np.ndarray) -> np.ndarray:
    """True where the target sees the same face the reference sees along that ray."""
    h, w = face_ref.shape
    u = np.rint(source_px[..., 0]).astype(np.int64)
    v = np.rint(source_px[..., 1]).astype(np.int64)
    inb = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    out = np.zeros(face_target.shape, dtype=bool)
    ft = face_target[inb]
    out[inb] = (ft >= 0) & (ft == face_ref[v[inb], u[inb]])
    return out


def gt_confidence(front_r, back_r, shadow_r, face_ref, face_target, source_px, mask) -> ConfidenceTriple:
    """Ground-truth confidence masks from unperturbed renders.

    ``front_r, back_r, shadow_r`` are the unperturbed reference renders in the
    target frame, ``source_px`` the reference pixel hit at each target pixel.
    ``face_ref`` / ``face_target`` are face-index maps of one common mesh
    rendered into the reference and target views.
    """
    front_r = np.asarray(front_r, bool)
    back_r = np.asarray(back_r, bool)
    shadow_r = np.asarray(shadow_r, bool)
    mask = np.asarray(mask, bool)
    face_target = np.asarray(face_target)
    shapes = {front_r.shape, back_r.shape, shadow_r.shape, mask.shape, face_target.shape,
              np.asarray(source_px).shape[:2]}
    if len(shapes) != 1:
        raise ValueError(f"confidence inputs differ in size: {sorted(shapes)}")
    same = face_match(face_target, np.asarray(face_ref), np.asarray(source_px))
    return ConfidenceTriple(
        front=(front_r & ~shadow_r) | ~mask,
        back=back_r & mask,
        shadow=shadow_r & same & front_r & mask,
    )
