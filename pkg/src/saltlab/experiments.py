"""Evaluation sweeps and ablation grids over the synthetic eval splits.

Records are processed in fixed chunks keyed by record order, each chunk on a
single intra-op thread, so serial and multi-process runs compute exactly the
same numbers.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .composer import (builtin_background, builtin_object,
                       load_background_asset, load_object_asset, salt_init)
from .dataset import SceneSpec, render_scene
from .denoiser import ModelConfig, TinyUNet, clone_model
from .errors import ConfigError
from .guidance import LayoutSpec
from .metrics import Detection, map50
from .pipeline import Assets, Method, PipelineConfig, reference_images, run_batch
from .schedule import NoiseSchedule
from .seeding import record_seed


def load_assets(background: str | None, obj: str | None, size: int = 32) -> Assets:
    """Resolve built-in asset names or PPM paths (objects need a JSON sidecar)."""
    bg = ob = None
    if background:
        bg = load_background_asset(background) if background.endswith(".ppm") else builtin_background(background, size)
    if obj:
        ob = load_object_asset(obj) if obj.endswith(".ppm") else builtin_object(obj)
    return Assets(bg, ob)


def record_layout(spec: SceneSpec, bind: str = "both"):
    """Ground-truth layout for an eval record: tight boxes bound to caption tokens."""
    _, gts = render_scene(spec)
    return LayoutSpec([g.box for g in gts], spec.token_sets(bind)), [g.label for g in gts]


def _chunk_rows(model, sched, records, methods, pcfg: PipelineConfig, assets: Assets, seed: int, bind: str):
    torch.set_num_threads(1)
    caps = [r.tokens for r in records]
    pairs = [record_layout(r, bind) for r in records]
    lays = [p[0] for p in pairs]
    seeds = [record_seed(seed, r.id) for r in records]
    salt = None
    if any(m in (Method.SALT, Method.SALT_AG) for m in methods):
        salt = salt_init(reference_images(lays, assets), model, sched, pcfg.inv_steps)
    rows = {m.value: [] for m in methods}
    for m in methods:
        results = run_batch(m, caps, lays, model, sched, pcfg, seeds, assets, salt_latents=salt)
        for rec, (lay, labels), res in zip(records, pairs, results):
            rows[m.value].append({
                "id": rec.id,
                "caption": rec.caption,
                "boxes": [b.as_list() for b in lay.boxes],
                "labels": labels,
                "detections": [{"label": d.label, "box": d.box.as_list(), "score": d.score} for d in res.detections],
                **{k: v for k, v in res.metrics.items()},
            })
    return rows


def _worker(args):
    state, model_cfg, beta, records, methods, pcfg, assets, seed, bind = args
    model = TinyUNet(ModelConfig.from_dict(model_cfg))
    model.load_state_dict(state)
    model = clone_model(model)
    return _chunk_rows(model, NoiseSchedule(beta), records, methods, pcfg, assets, seed, bind)


def summarize(method: str, split: str, rows: list[dict]) -> dict:
    from .boxes import BBox

    preds = [[Detection(d["label"], BBox(*d["box"]), d["score"]) for d in r["detections"]] for r in rows]
    gts = [[Detection(l, BBox(*b), 1.0) for l, b in zip(r["labels"], r["boxes"])] for r in rows]
    return {
        "method": method,
        "split": split,
        "iou_mean": float(np.mean([v for r in rows for v in r["ious"]])),
        "map50": map50(preds, gts),
        "fidelity_mean": float(np.mean([r["fidelity"] for r in rows])),
        "attention_mass_mean": float(np.mean([r["attention_mass"] for r in rows])),
        "drift_mean": float(np.mean([r["drift"] for r in rows])),
        "n": len(rows),
    }


def evaluate(model: TinyUNet, sched: NoiseSchedule, records, methods, pcfg: PipelineConfig = PipelineConfig(),
             assets: Assets = Assets(), seed: int = 0, split: str = "single", bind: str = "both",
             chunk: int = 25, jobs: int = 1):
    """Run every method on every record; returns ``(reports, rows)`` keyed by method name."""
    methods = [Method.parse(m) for m in methods]
    if any(m.needs_reference for m in methods):
        assets.require()
    records = list(records)
    chunks = [records[i : i + chunk] for i in range(0, len(records), chunk)]
    if jobs > 1 and len(chunks) > 1:
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        args = [(state, model.config.to_dict(), sched.beta, c, methods, pcfg, assets, seed, bind) for c in chunks]
        import multiprocessing as mp

        with ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("fork")) as ex:
            parts = list(ex.map(_worker, args))
    else:
        prev = torch.get_num_threads()
        try:
            parts = [_chunk_rows(model, sched, c, methods, pcfg, assets, seed, bind) for c in chunks]
        finally:
            torch.set_num_threads(prev)
    rows = {m.value: [r for p in parts for r in p[m.value]] for m in methods}
    reports = {m: summarize(m, split, rs) for m, rs in rows.items()}
    return reports, rows


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_reports(out_dir, reports: dict, rows: dict | None = None, prefix: str = "") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rep in reports.items():
        p = out / f"{prefix}report_{name}.json"
        p.write_text(dumps_report(rep))
        written.append(p)
        if rows is not None:
            with open(out / f"{prefix}records_{name}.jsonl", "w") as f:
                for r in rows[name]:
                    f.write(json.dumps(r, sort_keys=True) + "\n")
    table = out / f"{prefix}summary.csv"
    with open(table, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "split", "iou", "map50", "fidelity", "n"])
        for name, rep in reports.items():
            w.writerow([name, rep["split"], f"{rep['iou_mean']:.4f}", f"{rep['map50']:.4f}",
                        f"{rep['fidelity_mean']:.4f}", rep["n"]])
    written.append(table)
    return written


ABLATION_GRIDS = ("guidance-steps", "inversion-steps", "regularization", "init-kind", "background", "object")


def ablation_points(grid: str, pcfg: PipelineConfig, background: str, obj: str):
    """List of (label, method, pipeline config, background, object) grid points."""
    g = pcfg.guidance
    if grid == "guidance-steps":
        return [(f"steps={k}", Method.SALT_AG, replace(pcfg, salt_iters=k), background, obj) for k in (1, 2, 3, 5, 10)]
    if grid == "inversion-steps":
        return [(f"inversion={k}", Method.SALT_AG, replace(pcfg, inv_steps=k), background, obj) for k in (20, 50, 100)]
    if grid == "regularization":
        return [(f"lambda={lam}", Method.SALT_AG, replace(pcfg, guidance=replace(g, lam=lam)), background, obj)
                for lam in (0.05, 0.0)]
    if grid == "init-kind":
        return [("sdedit-ag steps=3", Method.SDEDIT_AG, replace(pcfg, salt_iters=3), background, obj),
                ("sdedit-ag steps=10", Method.SDEDIT_AG, replace(pcfg, salt_iters=10), background, obj),
                ("salt-ag steps=3", Method.SALT_AG, replace(pcfg, salt_iters=3), background, obj)]
    if grid == "background":
        return [(f"background={b}", Method.SALT_AG, pcfg, b, obj) for b in ("green-plain", "gray-plain", "farm")]
    if grid == "object":
        return [(f"object={o}", Method.SALT_AG, pcfg, background, o) for o in ("bread", "cat", "dog")]
    raise ConfigError(f"unknown ablation grid {grid!r}; choose from {list(ABLATION_GRIDS)}")


def ablate(model, sched, records, grid: str, pcfg: PipelineConfig = PipelineConfig(), background="green-plain",
           obj="cat", seed: int = 0, split: str = "multiple", bind: str = "both", chunk: int = 25, jobs: int = 1):
    """One report per grid point; every point reuses the same per-record seeds."""
    out = []
    for label, method, cfg, bg, ob in ablation_points(grid, pcfg, background, obj):
        assets = load_assets(bg, ob, model.config.size)
        reports, _ = evaluate(model, sched, records, [method], cfg, assets, seed, split, bind, chunk, jobs)
        rep = dict(reports[method.value])
        rep["grid"] = grid
        rep["point"] = label
        out.append(rep)
    return out
