"""View scheduling: wide-baseline subset selection, inpainting plans and geometry updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from mvinpaint.camera import AutoregressiveSet, Camera, DepthMap, View, rotation_zyx, view_distance

R_MAX = 4


class GeometryError(RuntimeError):
    def __init__(self, message, views=()):
        super().__init__(f"{message} (views {list(views)})")
        self.views = list(views)


def distance_matrix(cameras: Sequence[Camera]) -> np.ndarray:
    n = len(cameras)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = view_distance(cameras[i], cameras[j])
    return D


def default_subset_size(n: int) -> int:
    return int(min(max(math.ceil(n / 4), 3), n))


def select_wide_baseline(D, start: int, m: Optional[int] = None) -> list:
    """Greedy min-max subset of ``m`` views, reordered for sequential inpainting.

    Views are added by maximizing their minimum distance to the chosen set;
    the chosen set is then ordered from ``start`` by repeatedly taking the
    member with the smallest mean distance to everything already ordered.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if m is None:
        m = n
    if not 1 <= m <= n:
        raise ValueError(f"subset size m={m} out of range [1, {n}]")
    if not 0 <= start < n:
        raise ValueError(f"start view {start} out of range")

    chosen = [start]
    remaining = np.ones(n, dtype=bool)
    remaining[start] = False
    min_d = D[:, start].copy()
    while len(chosen) < m:
        score = np.where(remaining, min_d, -np.inf)
        i = int(np.argmax(score))           # first maximum = lowest index
        chosen.append(i)
        remaining[i] = False
        min_d = np.minimum(min_d, D[:, i])

    ordered = [start]
    pool = [i for i in chosen if i != start]
    total = D[:, start].copy()
    while pool:
        means = np.array([total[i] for i in pool]) / len(ordered)
        best = min(range(len(pool)), key=lambda k: (means[k], pool[k]))
        i = pool.pop(best)
        ordered.append(i)
        total += D[:, i]
    return ordered


@dataclass(frozen=True)
class InpaintPlan:
    stage1: list
    stage2: list
    references: dict
    start: int
    m: int
    r_max: int
    mode: str = "wide"
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "stage1": list(self.stage1),
            "stage2": list(self.stage2),
            "references": {str(k): list(v) for k, v in sorted(self.references.items())},
            "start": self.start,
            "seed": self.seed,
            "m": self.m,
            "R_max": self.r_max,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InpaintPlan":
        return cls(
            stage1=[int(i) for i in d["stage1"]],
            stage2=[int(i) for i in d["stage2"]],
            references={int(k): [int(r) for r in v] for k, v in d["references"].items()},
            start=int(d.get("start", d["stage1"][0])),
            m=int(d["m"]),
            r_max=int(d["R_max"]),
            mode=d.get("mode", "wide"),
            seed=d.get("seed"),
        )


def build_plan(D, start: int, m: Optional[int] = None, mode: str = "wide",
               r_max: Optional[int] = None, inpainted: Optional[Sequence[bool]] = None,
               seed: Optional[int] = None) -> InpaintPlan:
    """Two-stage plan: sequential wide-baseline subset, then parallel propagation.

    Stage-1 targets draw references from the whole set, inpainted views first,
    each group by ascending distance.  Stage-2 targets use only stage-1 views.
    Narrow mode is single-reference.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if mode not in ("wide", "narrow"):
        raise ValueError(f"unknown plan mode {mode!r}")
    if m is None:
        m = default_subset_size(n)
    if r_max is None:
        r_max = 1 if mode == "narrow" else R_MAX
    if mode == "narrow":
        r_max = 1
    if r_max < 1:
        raise ValueError("R_max must be at least 1")
    stage1 = select_wide_baseline(D, start, m)
    in1 = set(stage1)
    stage2 = [i for i in range(n) if i not in in1]
    done = [bool(b) for b in inpainted] if inpainted is not None else [False] * n

    refs = {}
    for t in stage1:
        cand = [j for j in range(n) if j != t]
        cand.sort(key=lambda j: (not done[j], D[t, j], j))
        refs[t] = cand[:r_max]
        done[t] = True
    for t in stage2:
        cand = [j for j in stage1 if j != t]
        cand.sort(key=lambda j: (D[t, j], j))
        refs[t] = cand[:r_max]
    return InpaintPlan(stage1, stage2, refs, start, m, r_max, mode, seed)


class GeometryEstimator(Protocol):
    def estimate(self, views: Sequence[View], frozen: Sequence[bool]) -> dict:
        """Return ``{index: (camera, depth)}`` for every view not frozen."""


@dataclass
class GroundTruthEstimator:
    """Passes through known geometry, optionally with Gaussian perturbation.

    ``perturb`` is the standard deviation of each Euler angle of a random
    rotation applied to the camera and of a relative depth-scale error.
    """

    cameras: Sequence[Camera]
    depths: Sequence[DepthMap]
    perturb: float = 0.0
    seed: int = 0
    calls: int = field(default=0, init=False)

    def estimate(self, views, frozen):
        from mvinpaint.rng import derive_rng

        self.calls += 1
        out = {}
        for i, fz in enumerate(frozen):
            if fz:
                continue
            cam, depth = self.cameras[i], self.depths[i]
            if self.perturb > 0:
                rng = derive_rng(self.seed, "estimator", i, self.calls)
                Rp = rotation_zyx(rng.normal(0.0, self.perturb, 3))
                scale = 1.0 + self.perturb * rng.normal()
                cam = Camera(cam.K, Rp @ cam.R, Rp @ cam.t)
                depth = DepthMap(depth.values * max(scale, 0.1), depth.valid)
            out[i] = (cam, depth)
        return out


@dataclass
class FileEstimator:
    """Imports externally computed geometry: ``<root>/<i>/camera.json`` and ``depth.pfm``."""

    root: Path

    def estimate(self, views, frozen):
        from mvinpaint.camera import load_camera
        from mvinpaint.io import read_pfm

        out = {}
        for i, fz in enumerate(frozen):
            if fz:
                continue
            d = Path(self.root) / f"{i:03d}"
            try:
                cam = load_camera(d / "camera.json")
                depth = read_pfm(d / "depth.pfm").astype(np.float64)
            except (OSError, ValueError) as exc:
                raise GeometryError(f"cannot import geometry: {exc}", [i]) from exc
            out[i] = (cam, DepthMap(depth, np.isfinite(depth) & (depth > 0)))
        return out


def estimate_all(aset: AutoregressiveSet, estimator) -> AutoregressiveSet:
    """Initial geometry for every view (nothing frozen)."""
    return _apply_geometry(aset, estimator, set(range(len(aset))), bump=False)


def _apply_geometry(aset, estimator, indices, bump=True):
    frozen = [i not in indices for i in range(len(aset))]
    try:
        geo = estimator.estimate(aset.views, frozen)
    except GeometryError:
        raise
    except Exception as exc:
        raise GeometryError(f"geometry estimation failed: {exc}", sorted(indices)) from exc
    views = list(aset.views)
    for i in sorted(indices):
        if i not in geo:
            raise GeometryError("estimator returned no geometry", [i])
        cam, depth = geo[i]
        views[i] = replace(views[i], camera=cam, depth=depth)
    return AutoregressiveSet(views, aset.version + (1 if bump else 0))


def update_after_inpaint(aset: AutoregressiveSet, inpainted: Mapping[int, np.ndarray],
                         estimator) -> AutoregressiveSet:
    """Replace images, mark them inpainted and refresh only their geometry."""
    if not inpainted:
        return aset
    views = list(aset.views)
    for i, img in inpainted.items():
        if views[i].inpainted:
            raise ValueError(f"view {i} is already inpainted")
        views[i] = replace(views[i], image=np.asarray(img, dtype=np.float64), inpainted=True)
    return _apply_geometry(AutoregressiveSet(views, aset.version), estimator, set(inpainted))
