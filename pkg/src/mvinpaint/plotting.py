"""Diagnostic figures for runs, cue sets and fusion results."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mvinpaint.fusion import FRONT, NONE  # noqa: E402

# fixed metadata keeps figure bytes stable across runs
_META = {"Software": None}
LEVEL_NAMES = ("front", "back", "shadow", "none")
LEVEL_COLORS = np.array([[0.20, 0.62, 0.30], [0.25, 0.45, 0.85], [0.90, 0.55, 0.15], [0.35, 0.35, 0.35]])


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def _show(ax, img, title):
    ax.imshow(np.clip(img, 0, 1), interpolation="nearest", cmap="gray", vmin=0, vmax=1)
    ax.set_title(title, fontsize=8)
    ax.set_xticks([])
    ax.set_yticks([])


def level_image(level: np.ndarray) -> np.ndarray:
    return LEVEL_COLORS[np.clip(level, FRONT, NONE)]


def plot_cues(cue, path, title=None):
    fig, axes = plt.subplots(1, 5, figsize=(11, 2.4))
    _show(axes[0], cue.color, "color")
    _show(axes[1], cue.front.astype(float), "front")
    _show(axes[2], cue.back.astype(float), "back")
    _show(axes[3], cue.inv_depth, "inverse depth")
    _show(axes[4], cue.shadow.astype(float), "shadow")
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def plot_fusion(result, path, image=None):
    n = 3 if image is not None else 2
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 2.8))
    _show(axes[0], level_image(result.level), "level")
    sel = result.selection.astype(float)
    axes[1].imshow(sel, interpolation="nearest", cmap="viridis")
    axes[1].set_title("selected reference", fontsize=8)
    axes[1].set_xticks([])
    axes[1].set_yticks([])
    if image is not None:
        _show(axes[2], image, "fused")
    fig.tight_layout()
    _save(fig, path)


def plot_run(result, out_dir):
    """One panel per view plus a per-view bar chart of masked vs copied pixels."""
    out = Path(out_dir)
    views = result.aset.views
    n = len(views)
    cols = min(4, n)
    rows = -(-n // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2.6 * cols, 2.2 * rows), squeeze=False)
    stage = {t: 1 for t in result.plan.stage1}
    stage.update({t: 2 for t in result.plan.stage2})
    for k, ax in enumerate(axes.ravel()):
        if k >= n:
            ax.axis("off")
            continue
        _show(ax, views[k].image, f"view {k} (stage {stage.get(k, 0)})")
    fig.tight_layout()
    _save(fig, out / "views.png")

    masked = [int(v.mask.sum()) for v in views]
    copied = []
    for i in range(n):
        o = result.outputs.get(i)
        copied.append(0 if o is None or o.source is None else int((o.source[..., 0] >= 0).sum()))
    fig, ax = plt.subplots(figsize=(5, 3))
    x = np.arange(n)
    ax.bar(x - 0.2, masked, 0.4, label="masked")
    ax.bar(x + 0.2, copied, 0.4, label="copied from references")
    ax.set_xticks(x)
    ax.set_xlabel("view")
    ax.set_ylabel("pixels")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, out / "coverage.png")

    for i, o in sorted(result.outputs.items()):
        if o.level is not None:
            plot_fusion(o, out / f"fusion_{i:03d}.png", views[i].image)
