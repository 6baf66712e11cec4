"""Autoregressive scene-inpainting driver and cue-set serialization."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mvinpaint.camera import AutoregressiveSet, View, build_scene_graph
from mvinpaint.cues import CueSet, assemble_cues, empty_hint, select_hint
from mvinpaint.io import write_json, write_pfm, write_png
from mvinpaint.meshing import EPS_EDGE
from mvinpaint.rng import derive_rng
from mvinpaint.scheduler import (
    InpaintPlan,
    build_plan,
    distance_matrix,
    estimate_all,
    update_after_inpaint,
)

log = logging.getLogger(__name__)


def write_cueset(cue: CueSet, directory, extra_meta: Optional[dict] = None) -> None:
    """Write one cue set as ``color.png, front.png, back.png, invdepth.pfm, shadow.png, meta.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_png(d / "color.png", cue.color)
    write_png(d / "front.png", cue.front)
    write_png(d / "back.png", cue.back)
    write_pfm(d / "invdepth.pfm", cue.inv_depth)
    write_png(d / "shadow.png", cue.shadow)
    meta = {
        "reference_index": int(cue.reference_index),
        "reference_distance": float(cue.reference_distance),
        "height": int(cue.shape[0]),
        "width": int(cue.shape[1]),
    }
    if extra_meta:
        meta.update(extra_meta)
    write_json(d / "meta.json", meta)


@dataclass
class RunResult:
    aset: AutoregressiveSet
    plan: InpaintPlan
    events: list
    outputs: dict            # view index -> InpaintOutput
    timings: dict = field(default_factory=dict)
    graph_edges: list = field(default_factory=list)


class Driver:
    """Single-writer loop over the plan.

    Stage-1 targets are inpainted one at a time, each followed by a geometry
    update.  Stage-2 targets depend only on stage-1 results, so they run on a
    worker pool and are committed together.
    """

    def __init__(self, estimator, denoiser, *, seed: int = 0, start: Optional[int] = None,
                 m: Optional[int] = None, r_max: Optional[int] = None, mode: str = "wide",
                 jobs: int = 1, eps_edge: float = EPS_EDGE, graph_k=4, use_hint: bool = True):
        self.estimator = estimator
        self.denoiser = denoiser
        self.seed = seed
        self.start = start
        self.m = m
        self.r_max = r_max
        self.mode = mode
        self.jobs = max(1, int(jobs))
        self.eps_edge = eps_edge
        self.graph_k = graph_k
        self.use_hint = use_hint
        self.events = []

    def _targets_cues(self, aset, target, refs):
        tview = aset[target]
        hint = None
        if self.use_hint:
            h = select_hint(target, aset)
            hint = empty_hint(tview.shape) if h is None else aset[h].image
        cues = []
        for r in refs:
            rview = aset[r]
            self.events.append({"event": "read", "view": r, "inpainted": bool(rview.inpainted),
                                "for_target": target})
            cues.append(assemble_cues(rview, tview, hint=hint, reference_index=r, eps_edge=self.eps_edge))
        return cues, hint

    def _inpaint_one(self, aset, target, refs):
        t0 = time.perf_counter()
        cues, hint = self._targets_cues(aset, target, refs)
        out = self.denoiser.inpaint(aset[target], cues, hint)
        return out, time.perf_counter() - t0

    def run(self, views: Sequence[View]) -> RunResult:
        aset = estimate_all(AutoregressiveSet(views), self.estimator)
        n = len(aset)
        cams = [v.camera for v in aset.views]
        graph_edges = list(build_scene_graph(cams, self.graph_k).edges) if n >= 2 else []
        D = distance_matrix(cams)
        start = self.start
        if start is None:
            start = int(derive_rng(self.seed, "start").integers(n))
        plan = build_plan(D, start, self.m, self.mode, self.r_max,
                          inpainted=[v.inpainted for v in aset.views], seed=self.seed)
        self.events.append({"event": "plan", "stage1": plan.stage1, "stage2": plan.stage2})
        outputs, timings = {}, {}

        for step, target in enumerate(plan.stage1):
            if aset[target].inpainted:
                continue
            refs = plan.references[target]
            self.events.append({"event": "inpaint", "stage": 1, "step": step, "target": target,
                                "references": refs})
            out, dt = self._inpaint_one(aset, target, refs)
            outputs[target] = out
            timings[target] = dt
            aset = update_after_inpaint(aset, {target: out.image}, self.estimator)
            self.events.append({"event": "update", "views": [target], "version": aset.version})
            log.info("stage 1: view %d done (%.2fs)", target, dt)

        todo = [t for t in plan.stage2 if not aset[t].inpainted]
        for t in todo:
            self.events.append({"event": "inpaint", "stage": 2, "target": t,
                                "references": plan.references[t]})
        frozen = aset
        if self.jobs > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.jobs) as pool:
                results = list(pool.map(lambda t: self._inpaint_one(frozen, t, plan.references[t]), todo))
        else:
            results = [self._inpaint_one(frozen, t, plan.references[t]) for t in todo]
        # read events from worker threads arrive in any order
        self.events = _sorted_reads(self.events)
        for t, (out, dt) in zip(todo, results):
            outputs[t] = out
            timings[t] = dt
        if todo:
            aset = update_after_inpaint(aset, {t: outputs[t].image for t in todo}, self.estimator)
            self.events.append({"event": "update", "views": todo, "version": aset.version})
        if not aset.complete:
            raise RuntimeError("run: some views were not inpainted")
        return RunResult(aset, plan, self.events, outputs, timings, graph_edges)


def _sorted_reads(events):
    """Group read events under their target in plan order, keeping other events in place."""
    reads = {}
    rest = []
    for e in events:
        if e["event"] == "read":
            reads.setdefault(e["for_target"], []).append(e)
        else:
            rest.append(e)
    out = []
    for e in rest:
        out.append(e)
        if e["event"] == "inpaint":
            out.extend(sorted(reads.pop(e["target"], []), key=lambda r: r["view"]))
    return out


def write_run(result: RunResult, out_dir, figures: bool = False) -> None:
    """Completed views, provenance maps, ``report.json`` and ``views.csv``."""
    out = Path(out_dir)
    (out / "views").mkdir(parents=True, exist_ok=True)
    (out / "provenance").mkdir(exist_ok=True)
    rows = []
    stage_of = {t: 1 for t in result.plan.stage1}
    stage_of.update({t: 2 for t in result.plan.stage2})
    for i, v in enumerate(result.aset.views):
        write_png(out / "views" / f"{i:03d}.png", v.image)
        o = result.outputs.get(i)
        filled = copied = 0
        if o is not None and o.source is not None:
            write_pfm(out / "provenance" / f"{i:03d}.pfm", o.source)
            copied = int((o.source[..., 0] >= 0).sum())
        filled = int(v.mask.sum())
        rows.append((i, stage_of.get(i, 0), len(result.plan.references.get(i, [])), filled, copied))
    with open(out / "views.csv", "w") as f:
        f.write("view,stage,n_references,masked_pixels,copied_pixels\n")
        for r in rows:
            f.write(",".join(str(x) for x in r) + "\n")
    report = {
        "plan": result.plan.to_dict(),
        "geometry_version": result.aset.version,
        "n_views": len(result.aset),
        "scene_graph_edges": [list(e) for e in result.graph_edges],
        "events": result.events,
    }
    write_json(out / "report.json", report)
    if figures:
        from mvinpaint.plotting import plot_run

        plot_run(result, out / "figures")
