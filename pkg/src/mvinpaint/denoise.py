"""Denoiser plug-ins.

The real model is a reference-conditioned diffusion inpainter; here it is
replaced by a deterministic stub, or by an external executable driven
through a request directory.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mvinpaint.camera import View
from mvinpaint.cues import CueSet
from mvinpaint.fusion import FRONT, FusionBundle, fuse


@dataclass(frozen=True, eq=False)
class InpaintOutput:
    image: np.ndarray
    selection: Optional[np.ndarray] = None   # chosen reference position per pixel
    level: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None      # H x W x 3: (reference index, u, v), -1 where not copied


@dataclass(frozen=True)
class StubDenoiser:
    """Deterministic stand-in for the diffusion model.

    ``copy-confident`` writes the projected reference color where a reference
    is front-confident and ``fill`` elsewhere inside the mask; with several
    references the per-reference outputs go through the confidence fusion.
    ``constant-fill`` writes ``fill`` over the whole mask.

    When the target carries a depth map, a reference pixel only counts as
    front-confident if its rendered depth agrees with the target depth to a
    relative ``depth_tol``.  This rejects content seen through the gaps that
    edge dropping leaves at depth discontinuities, which no shadow wall
    covers.  ``depth_tol=None`` disables the check.
    """

    mode: str = "copy-confident"
    fill: tuple = (0.5, 0.5, 0.5)
    depth_tol: Optional[float] = 0.01

    def __post_init__(self):
        if self.mode not in ("copy-confident", "constant-fill"):
            raise ValueError(f"unknown stub mode {self.mode!r}")

    def confidences(self, target: View, cue: CueSet):
        m = target.effective_mask
        if self.mode == "constant-fill":
            cf = ~m
            return cf, np.zeros_like(m), np.zeros_like(m)
        ok = cue.front & ~cue.shadow
        if self.depth_tol is not None and target.depth is not None:
            td = target.depth.values
            with np.errstate(divide="ignore", invalid="ignore"):
                agree = np.abs(cue.depth - td) <= self.depth_tol * td
            ok &= agree & target.depth.valid
        return ok | ~m, cue.back & m, np.zeros_like(m)

    def inpaint(self, target: View, cues: Sequence[CueSet], hint=None) -> InpaintOutput:
        m = target.effective_mask
        h, w = m.shape
        fill = np.broadcast_to(np.asarray(self.fill, dtype=np.float64), (h, w, 3))
        base = np.where(m[..., None], fill, target.image)
        source = np.full((h, w, 3), -1.0)
        if not cues:
            return InpaintOutput(base, source=source)

        estimates, fronts, backs, shadows = [], [], [], []
        for cue in cues:
            cf, cb, cs = self.confidences(target, cue)
            if self.mode == "copy-confident":
                est = np.where((m & cf)[..., None], cue.color, base)
            else:
                est = base
            estimates.append(np.moveaxis(est, -1, 0))
            fronts.append(cf)
            backs.append(cb)
            shadows.append(cs)
        res = fuse(FusionBundle(np.stack(estimates), np.stack(fronts), np.stack(backs),
                                np.stack(shadows), [c.reference_distance for c in cues]))
        image = np.moveaxis(res.fused, 0, -1)
        image = np.where(m[..., None], image, target.image)

        if self.mode == "copy-confident":
            rows, cols = np.indices((h, w))
            src = np.stack([c.source_px for c in cues])[res.selection, rows, cols]
            copied = m & (res.level == FRONT)
            ref_ids = np.array([c.reference_index for c in cues], dtype=np.float64)[res.selection]
            source[copied, 0] = ref_ids[copied]
            source[copied, 1:] = src[copied]
        return InpaintOutput(image, res.selection, res.level, source)


@dataclass(frozen=True)
class ExternalDenoiser:
    """Runs ``command <request_dir>``; the executable must write ``out.png`` there.

    The request directory holds ``image.png`` (masked target), ``mask.png``,
    ``hint.png`` when available and one ``cues/<k>/`` directory per reference
    in the cue layout.
    """

    command: str
    workdir: Optional[Path] = None
    timeout: float = 600.0

    def inpaint(self, target: View, cues: Sequence[CueSet], hint=None) -> InpaintOutput:
        from mvinpaint.io import read_png, write_png
        from mvinpaint.pipeline import write_cueset

        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            req = Path(tmp)
            m = target.effective_mask
            write_png(req / "image.png", np.where(m[..., None], 0.0, target.image))
            write_png(req / "mask.png", m)
            if hint is not None:
                write_png(req / "hint.png", hint)
            for k, cue in enumerate(cues):
                write_cueset(cue, req / "cues" / f"{k}")
            proc = subprocess.run(shlex.split(self.command) + [str(req)], capture_output=True,
                                  text=True, timeout=self.timeout)
            if proc.returncode != 0:
                raise RuntimeError(f"denoiser exited with {proc.returncode}: {proc.stderr.strip()}")
            out = req / "out.png"
            if not out.exists():
                raise RuntimeError("denoiser did not write out.png")
            image = read_png(out)
        if image.shape[:2] != m.shape:
            raise RuntimeError("denoiser output has the wrong size")
        image = np.where(m[..., None], image, target.image)
        return InpaintOutput(image, source=np.full((*m.shape, 3), -1.0))
