"""Confidence-hierarchy fusion of per-reference noise estimates.

Each pixel of the caller's grid adopts the estimate of a single reference.
Levels are tried in order front > back > shadow > none; within a level the
closest confident reference wins, ties going to the lower index.  Nothing is
averaged, so the fused value is always an exact copy of one input stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRONT, BACK, SHADOW, NONE = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class FusionBundle:
    estimates: np.ndarray      # R x C x h x w
    front: np.ndarray          # R x h x w, bool
    back: np.ndarray
    shadow: np.ndarray
    distances: np.ndarray      # R

    def __post_init__(self):
        est = np.asarray(self.estimates)
        if est.ndim != 4 or est.shape[0] == 0:
            raise ValueError("fusion bundle needs at least one R x C x h x w estimate")
        R, _, h, w = est.shape
        for name in ("front", "back", "shadow"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (R, h, w):
                raise ValueError(f"{name} confidence must be {(R, h, w)}, got {m.shape}")
            object.__setattr__(self, name, m)
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        if d.shape != (R,) or not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distances must be R finite non-negative values")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "distances", d)


@dataclass(frozen=True, eq=False)
class FusionResult:
    fused: np.ndarray          # C x h x w
    selection: np.ndarray      # h x w, reference index
    level: np.ndarray          # h x w, FRONT/BACK/SHADOW/NONE


def level_masks(front, back, shadow):
    """Per-reference masks of the four hierarchy levels.

    Returns ``(cf, cb, cs, none)``: the first three are R x h x w, ``none``
    is h x w.
    """
    any_f = front.any(axis=0)
    cb = back & ~any_f
    any_b = cb.any(axis=0)
    cs = shadow & ~(any_f | any_b)
    any_s = cs.any(axis=0)
    none = ~(any_f | any_b | any_s)
    return front, cb, cs, none


def fuse(bundle: FusionBundle) -> FusionResult:
    est = bundle.estimates
    R, C, h, w = est.shape
    cf, cb, cs, none = level_masks(bundle.front, bundle.back, bundle.shadow)

    # stable sort: equal distances keep ascending index order
    order = np.argsort(bundle.distances, kind="stable")
    level = np.full((h, w), NONE, dtype=np.int64)
    selection = np.full((h, w), order[0], dtype=np.int64)
    for lv, m in ((SHADOW, cs), (BACK, cb), (FRONT, cf)):
        ms = m[order]
        hit = ms.any(axis=0)
        first = order[np.argmax(ms, axis=0)]
        selection = np.where(hit, first, selection)
        level = np.where(hit, lv, level)

    rows, cols = np.indices((h, w))
    fused = est[selection, :, rows, cols]          # h x w x C
    return FusionResult(np.moveaxis(fused, -1, 0), selection, level)


def binarize_confidence(raw, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(raw) >= threshold


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging ``n_in`` cells into ``n_out`` by overlap area."""
    edges_out = np.arange(n_out + 1) * (n_in / n_out)
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(1, n_in + 1)[None, :])
    A = np.clip(hi - lo, 0.0, None)
    return A / A.sum(axis=1, keepdims=True)


def downsample_confidence(mask, size, threshold: float = 0.5) -> np.ndarray:
    """Area-average an image-resolution mask to ``size = (h, w)`` and binarize."""
    m = np.asarray(mask, dtype=np.float64)
    h, w = size
    if m.shape[-2:] == (h, w):
        return binarize_confidence(m, threshold)
    Ay = _area_matrix(m.shape[-2], h)
    Ax = _area_matrix(m.shape[-1], w)
    return binarize_confidence(Ay @ m @ Ax.T, threshold)
