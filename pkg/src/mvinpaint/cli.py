"""Command-line entry point: ``mvinpaint <subcommand> ...``.

Exit codes: 0 ok, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from mvinpaint.camera import load_camera
from mvinpaint.io import (
    load_manifest,
    read_mask,
    read_pfm,
    read_png,
    save_manifest,
    write_indexed_png,
    write_json,
    write_obj,
    write_pfm,
)
from mvinpaint.meshing import EPS_EDGE

log = logging.getLogger("mvinpaint")


class InputError(Exception):
    """Bad or missing input; maps to exit status 2."""


def _require_geometry(views, what="view"):
    for i, v in enumerate(views):
        if v.camera is None or v.depth is None:
            raise InputError(f"{what} {i} has no camera or depth in the manifest")


def _load_views(path):
    try:
        return load_manifest(path)
    except (FileNotFoundError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _graph_k(text):
    if text == "complete":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'complete'")
    if k < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'complete'")
    return k


# ---------------------------------------------------------------- mesh

def cmd_mesh(args) -> int:
    from mvinpaint.camera import DepthMap
    from mvinpaint.meshing import build_mesh, build_shadow_mesh

    try:
        cam = load_camera(args.camera)
    except FileNotFoundError:
        raise InputError(f"camera: file not found: {args.camera}")
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if not Path(args.depth).exists():
        raise InputError(f"depth: file not found: {args.depth}")
    d = read_pfm(args.depth).astype(np.float64)
    if d.ndim != 2:
        raise InputError("depth: expected a single-channel PFM")
    depth = DepthMap(d, np.isfinite(d) & (d > 0))
    image = read_png(args.image) if args.image else None
    if image is not None and image.shape[:2] != d.shape:
        raise InputError("image: size does not match the depth map")

    mesh = build_mesh(depth, image, cam, args.eps_edge)
    shadow = build_shadow_mesh(mesh, args.eps_d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_obj(out / "mesh.obj", mesh.vertices, mesh.faces, mesh.colors)
    write_obj(out / "shadow.obj", shadow.vertices, shadow.faces)
    write_json(out / "silhouettes.json", {"edges": mesh.silhouette.tolist()})
    write_json(out / "provenance.json", {
        "eps_edge": args.eps_edge,
        "eps_d": shadow.eps_d,
        "n_vertices": mesh.n_vertices,
        "n_faces": mesh.n_faces,
        "n_silhouette_edges": int(len(mesh.silhouette)),
        "n_shadow_faces": shadow.n_faces,
    })
    log.info("mesh: %d vertices, %d faces", mesh.n_vertices, mesh.n_faces)
    return 0


# ---------------------------------------------------------------- cues

def cmd_cues(args) -> int:
    from mvinpaint.camera import AutoregressiveSet
    from mvinpaint.cues import assemble_cues, empty_hint, select_hint
    from mvinpaint.pipeline import write_cueset

    views = _load_views(args.manifest)
    n = len(views)
    refs = args.references
    if refs is None:
        refs = [i for i in range(n) if i != args.target]
    for r in [args.target, *refs]:
        if not 0 <= r < n:
            raise InputError(f"cues: view index {r} out of range (0..{n - 1})")
    _require_geometry([views[r] for r in refs], "reference")
    if views[args.target].camera is None:
        raise InputError("cues: target has no camera")

    aset = AutoregressiveSet(views)
    h = select_hint(args.target, aset)
    hint = empty_hint(views[args.target].shape) if h is None else views[h].image
    out = Path(args.out) / f"{args.target:03d}"
    for r in refs:
        cue = assemble_cues(views[r], views[args.target], hint=hint, reference_index=r,
                            eps_edge=args.eps_edge)
        d = out / f"{r:03d}"
        write_cueset(cue, d, {"target_index": args.target, "hint_index": -1 if h is None else h})
        if args.render:
            from mvinpaint.raster import RenderOutput, save_render

            save_render(RenderOutput(cue.color, cue.front, cue.back, cue.depth, cue.walls, cue.face,
                                     cue.face >= 0, cue.source_px), d / "render")
        if args.figures:
            from mvinpaint.plotting import plot_cues

            plot_cues(cue, d / "cues.png", f"reference {r} -> target {args.target}")
    return 0


# ---------------------------------------------------------------- fuse

def cmd_fuse(args) -> int:
    """Fuse per-reference estimates.

    Input directory layout: ``distances.json`` (list, one per reference),
    ``est_<r>_c<k>.pfm`` per reference ``r`` and channel ``k``, and
    ``conf_<r>_f.png``, ``conf_<r>_b.png``, ``conf_<r>_s.png``.
    """
    from mvinpaint.fusion import FusionBundle, fuse

    src = Path(args.input)
    dpath = src / "distances.json"
    if not dpath.exists():
        raise InputError(f"fuse: file not found: {dpath}")
    distances = json.loads(dpath.read_text())
    R = len(distances)
    if R == 0:
        raise InputError("fuse: no references listed in distances.json")
    C = 0
    while (src / f"est_0_c{C}.pfm").exists():
        C += 1
    if C == 0:
        raise InputError("fuse: no est_0_c0.pfm found")
    try:
        est = np.stack([np.stack([read_pfm(src / f"est_{r}_c{k}.pfm") for k in range(C)]) for r in range(R)])
        conf = {s: np.stack([read_mask(src / f"conf_{r}_{s}.png") for r in range(R)]) for s in "fbs"}
    except (OSError, ValueError) as exc:
        raise InputError(f"fuse: {exc}") from exc
    try:
        res = fuse(FusionBundle(est.astype(np.float64), conf["f"], conf["b"], conf["s"], distances))
    except ValueError as exc:
        raise InputError(f"fuse: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(C):
        write_pfm(out / f"fused_c{k}.pfm", res.fused[k])
    write_indexed_png(out / "selection.png", res.selection, R)
    write_indexed_png(out / "level.png", res.level, 4)
    if args.figures:
        from mvinpaint.plotting import plot_fusion

        plot_fusion(res, out / "fusion.png")
    return 0


# ---------------------------------------------------------------- plan

def cmd_plan(args) -> int:
    from mvinpaint.rng import derive_rng
    from mvinpaint.scheduler import build_plan, distance_matrix

    views = _load_views(args.manifest)
    if any(v.camera is None for v in views):
        raise InputError("plan: every view needs a camera")
    n = len(views)
    start = args.start
    if start is None:
        start = int(derive_rng(args.seed, "start").integers(n))
    if not 0 <= start < n:
        raise InputError(f"plan: start view {start} out of range")
    D = distance_matrix([v.camera for v in views])
    try:
        plan = build_plan(D, start, args.m, args.mode, args.r_max,
                          inpainted=[v.inpainted for v in views], seed=args.seed)
    except ValueError as exc:
        raise InputError(f"plan: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "plan.json", plan.to_dict())
    return 0


# ---------------------------------------------------------------- synth

def _synth_one(k, pairs, cfg, seed, out):
    from mvinpaint.camera import DepthMap
    from mvinpaint.rng import derive_rng
    from mvinpaint.synth import make_sample, write_sample

    img_path, depth_path = pairs[k % len(pairs)]
    image = read_png(img_path)
    d = read_pfm(depth_path).astype(np.float64)
    if d.shape != image.shape[:2]:
        raise InputError(f"synth: {depth_path.name} does not match {img_path.name} in size")
    depth = DepthMap(d, np.isfinite(d) & (d > 0))
    last = None
    for attempt in range(8):
        rng = derive_rng(seed, "synth", k, attempt)
        try:
            sample = make_sample(image, depth, cfg, rng)
            break
        except ValueError as exc:
            last = exc
    else:
        raise RuntimeError(f"synth: sample {k}: {last}")
    write_sample(sample, Path(out) / f"{k:05d}", {"seed": seed, "sample": k, "attempt": attempt,
                                                  "image": img_path.name, "depth": depth_path.name})


def cmd_synth(args) -> int:
    from concurrent.futures import ThreadPoolExecutor

    from mvinpaint.synth import SynthConfig

    img_dir, depth_dir = Path(args.images), Path(args.depths)
    for d in (img_dir, depth_dir):
        if not d.is_dir():
            raise InputError(f"synth: directory not found: {d}")
    pairs = []
    for p in sorted(img_dir.glob("*.png")):
        dp = depth_dir / (p.stem + ".pfm")
        if not dp.exists():
            raise InputError(f"synth: no depth map {dp.name} for {p.name}")
        pairs.append((p, dp))
    if not pairs:
        raise InputError(f"synth: no PNG images in {img_dir}")
    cfg = SynthConfig(mode=args.mode, p_occluder=args.p_occluder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = lambda k: _synth_one(k, pairs, cfg, args.seed, out)  # noqa: E731
    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            list(pool.map(run, range(args.n)))
    else:
        for k in range(args.n):
            run(k)
    return 0


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    from mvinpaint.denoise import ExternalDenoiser, StubDenoiser
    from mvinpaint.pipeline import Driver, write_run
    from mvinpaint.scheduler import FileEstimator, GroundTruthEstimator

    views = _load_views(args.manifest)
    if args.estimator == "gt":
        _require_geometry(views)
        est = GroundTruthEstimator([v.camera for v in views], [v.depth for v in views],
                                   perturb=args.perturb, seed=args.seed)
    else:
        if args.geometry is None:
            raise InputError("run: --estimator file needs --geometry DIR")
        est = FileEstimator(Path(args.geometry))
    if args.denoiser:
        den = ExternalDenoiser(args.denoiser)
    else:
        den = StubDenoiser(args.stub_mode)
    if args.start is not None and not 0 <= args.start < len(views):
        raise InputError(f"run: start view {args.start} out of range")

    drv = Driver(est, den, seed=args.seed, start=args.start, m=args.m, r_max=args.r_max,
                 mode=args.mode, jobs=args.jobs, eps_edge=args.eps_edge, graph_k=args.graph_k)
    t0 = time.perf_counter()
    result = drv.run(views)
    write_run(result, args.out, figures=args.figures)
    if args.timings:
        write_json(args.timings, {"total_s": time.perf_counter() - t0,
                                  "views_s": {str(k): v for k, v in sorted(result.timings.items())}})
    log.info("run: %d views inpainted, geometry version %d", len(result.aset), result.aset.version)
    return 0


# ---------------------------------------------------------------- make-scene

def cmd_make_scene(args) -> int:
    """Write the synthetic box-over-plane scene as a manifest plus ground truth."""
    from mvinpaint.camera import save_camera
    from mvinpaint.io import write_png
    from mvinpaint.scenes import make_box_scene

    sc = make_box_scene(args.views, args.width, args.height)
    out = Path(args.out)
    save_manifest(out / "manifest.json", sc.views)
    (out / "gt").mkdir(exist_ok=True)
    for i, v in enumerate(sc.views):
        g = out / "geometry" / f"{i:03d}"
        g.mkdir(parents=True, exist_ok=True)
        save_camera(v.camera, g / "camera.json")
        write_pfm(g / "depth.pfm", v.depth.values)
        write_png(out / "gt" / f"{i:03d}.png", sc.gt_images[i])
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvinpaint", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mesh", help="lift a depth map to a mesh and its shadow volume")
    s.add_argument("--depth", required=True, help="depth map (PFM)")
    s.add_argument("--camera", required=True, help="camera JSON")
    s.add_argument("--image", help="optional color image (PNG) for vertex colors")
    s.add_argument("--out", required=True)
    s.add_argument("--eps-edge", type=float, default=EPS_EDGE)
    s.add_argument("--eps-d", type=float, default=None, help="shadow extrusion length")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("cues", help="render reference cue sets into a target view")
    s.add_argument("--manifest", required=True)
    s.add_argument("--target", type=int, required=True)
    s.add_argument("--references", type=_int_list, default=None, help="comma-separated view indices")
    s.add_argument("--out", required=True)
    s.add_argument("--eps-edge", type=float, default=EPS_EDGE)
    s.add_argument("--render", action="store_true", help="also write raw render maps (depth, face index)")
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_cues)

    s = sub.add_parser("fuse", help="fuse per-reference estimates by confidence level")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("plan", help="wide-baseline inpainting plan")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--start", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--r-max", type=int, default=None)
    s.add_argument("--mode", choices=("wide", "narrow"), default="wide")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("synth", help="synthesize training samples from RGB-D images")
    s.add_argument("--images", required=True)
    s.add_argument("--depths", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("object", "scene"), default="object")
    s.add_argument("--p-occluder", type=float, default=0.2)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="end-to-end autoregressive inpainting")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--estimator", choices=("gt", "file"), default="gt")
    s.add_argument("--geometry", help="geometry directory for --estimator file")
    s.add_argument("--perturb", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start", type=int, default=None)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--r-max", type=int, default=None)
    s.add_argument("--mode", choices=("wide", "narrow"), default="wide")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--eps-edge", type=float, default=EPS_EDGE)
    s.add_argument("--graph-k", type=_graph_k, default=4, help="scene-graph neighbours, or 'complete'")
    s.add_argument("--denoiser", help="external denoiser command (default: built-in stub)")
    s.add_argument("--stub-mode", choices=("copy-confident", "constant-fill"), default="copy-confident")
    s.add_argument("--figures", action="store_true")
    s.add_argument("--timings", help="write wall-clock timings to this JSON file")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("make-scene", help="write the synthetic multiview test scene")
    s.add_argument("--out", required=True)
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--height", type=int, default=48)
    s.set_defaults(func=cmd_make_scene)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MVS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"mvinpaint {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"mvinpaint {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"mvinpaint {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
