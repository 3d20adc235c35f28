"""Command-line front end: train, generate, evaluate, ablate, inspect.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .boxes import BBox
from .config import RunConfig, load_config
from .errors import (AssetError, ConfigError, ContractError, SaltLabError, TokenizationError)

log = logging.getLogger("saltlab")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def parse_boxes(text: str) -> list[BBox]:
    """``"x0,y0,x1,y1;x0,y0,x1,y1"`` -> boxes (normalized coordinates)."""
    parts = [p for p in text.split(";") if p.strip()]
    if not parts:
        raise ContractError("no boxes given")
    return [BBox.parse(p) for p in parts]


def default_token_sets(tokens, n_boxes: int, bind: str):
    """Bind the k-th box to the k-th "<color> <shape>" pair of the caption."""
    from .tokens import COLORS, SHAPES

    words = tokens.words
    pairs = [(i - 1, i) for i, w in enumerate(words) if w in SHAPES and i > 0 and words[i - 1] in COLORS]
    if len(pairs) < n_boxes:
        raise ContractError(f"caption names {len(pairs)} objects but {n_boxes} boxes were given")
    pick = {"shape": lambda p: (p[1],), "color": lambda p: (p[0],), "both": lambda p: p}[bind]
    return [pick(p) for p in pairs[:n_boxes]]


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def _methods(text, cfg):
    from .pipeline import Method

    names = text.split(",") if text else list(cfg.methods)
    return [Method.parse(n) for n in names]


def _load_model(path):
    from .checkpoint import load_checkpoint

    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .dataset import make_corpus
    from .io import write_jsonl
    from .schedule import build_schedule
    from .training import train

    cfg = _config(args)
    if args.steps is not None:
        cfg = replace(cfg, train=replace(cfg.train, steps=args.steps))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)
    sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end)
    corpus = make_corpus(cfg.corpus, cfg.seed)
    model_cfg = replace(cfg.model, T=sched.T)
    t0 = time.time()
    model, loss_log = train(corpus.train, sched, model_cfg, cfg.train, cfg.seed)
    ckpt = out / "checkpoint.salt"
    run = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    save_checkpoint(ckpt, model, sched, {"seed": cfg.seed, "config": run})
    write_jsonl(out / "train_log.jsonl", loss_log)
    print(f"final loss {loss_log[-1]['loss']:.5f} after {cfg.train.steps} steps "
          f"({time.time() - t0:.0f}s); wrote {ckpt}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .experiments import load_assets
    from .guidance import LayoutSpec
    from .io import write_ppm
    from .pipeline import Method, run_pipeline
    from .tokens import tokenize

    cfg = _config(args)
    boxes = parse_boxes(args.boxes)
    tokens = tokenize(args.caption)
    method = Method.parse(args.method)
    token_sets = default_token_sets(tokens, len(boxes), cfg.eval.bind)
    layout = LayoutSpec(boxes, token_sets)
    model, sched, _ = _load_model(args.checkpoint)
    assets = load_assets(cfg.assets.background, cfg.assets.object, model.config.size) if method.needs_reference else None
    if method.needs_reference:
        assets.require()
    from .pipeline import Assets

    torch.set_num_threads(1)
    res = run_pipeline(method, tokens, layout, model, sched, cfg.pipeline_config(), seed=cfg.seed,
                       assets=assets or Assets(), keep_trajectory=args.trajectory)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(out / "image.ppm", res.image)
    record = {
        "method": method.value, "caption": args.caption, "seed": cfg.seed,
        "boxes": [b.as_list() for b in boxes], "token_sets": [list(t) for t in token_sets],
        "labels": res.labels,
        "detections": [{"label": d.label, "box": d.box.as_list(), "score": d.score} for d in res.detections],
        "metrics": res.metrics, "attention_mass_series": res.mass_series,
    }
    (out / "record.json").write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    if args.trajectory:
        dump_trajectory(out / "trajectory", res.trajectory)
    print(json.dumps({"iou": res.metrics["iou"], "fidelity": res.metrics["fidelity"]}))
    return EXIT_OK


def dump_trajectory(directory, traj) -> None:
    """Raw little-endian f32 latent per step plus ``index.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for k, (t, z) in enumerate(zip(traj.timesteps, traj.latents)):
        name = f"step_{k:03d}.f32"
        arr = z[0].detach().cpu().numpy().astype("<f4")
        arr.tofile(d / name)
        index.append({"step": k, "timestep": t, "file": name, "dtype": "f32", "shape": list(arr.shape)})
    (d / "index.json").write_text(json.dumps(index, indent=2) + "\n")


def _eval_records(cfg, split):
    from .dataset import make_corpus

    corpus = make_corpus(replace(cfg.corpus, n_train=1), cfg.seed)
    records = corpus.split(split)
    if cfg.eval.limit:
        records = records[: cfg.eval.limit]
    return records


def cmd_evaluate(args) -> int:
    from .experiments import evaluate, load_assets, write_reports

    cfg = _config(args)
    split = args.split or cfg.eval.split
    if split not in ("single", "multiple"):
        raise UsageError(f"unknown split {split!r}")
    if args.limit is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, limit=args.limit))
    methods = _methods(args.method, cfg)
    model, sched, meta = _load_model(args.checkpoint)
    records = _eval_records(cfg, split)
    assets = load_assets(cfg.assets.background, cfg.assets.object, model.config.size)
    reports, rows = evaluate(model, sched, records, methods, cfg.pipeline_config(), assets, cfg.seed, split,
                             cfg.eval.bind, cfg.eval.chunk, args.jobs or cfg.eval.jobs)
    write_reports(cfg.out, reports, rows)
    for r in reports.values():
        print(f"{r['method']:22s} iou {r['iou_mean']:.3f}  mAP@0.5 {r['map50']:.3f}  "
              f"fidelity {r['fidelity_mean']:.3f}  n={r['n']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .experiments import ABLATION_GRIDS, ablate, dumps_report

    cfg = _config(args)
    if args.grid not in ABLATION_GRIDS:
        raise UsageError(f"unknown grid {args.grid!r}; choose from {', '.join(ABLATION_GRIDS)}")
    if args.limit is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, limit=args.limit))
    split = args.split or "multiple"
    model, sched, _ = _load_model(args.checkpoint)
    records = _eval_records(cfg, split)
    reports = ablate(model, sched, records, args.grid, cfg.pipeline_config(), cfg.assets.background,
                     cfg.assets.object, cfg.seed, split, cfg.eval.bind, cfg.eval.chunk, args.jobs or cfg.eval.jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, rep in enumerate(reports):
        (out / f"ablate_{args.grid}_{k}.json").write_text(dumps_report(rep))
        print(f"{rep['point']:22s} iou {rep['iou_mean']:.3f}  mAP@0.5 {rep['map50']:.3f}  "
              f"fidelity {rep['fidelity_mean']:.3f}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .experiments import load_assets
    from .guidance import LayoutSpec
    from .io import write_ppm
    from .metrics import trajectory_maps
    from .pipeline import Assets, Method, run_pipeline
    from .tokens import tokenize

    cfg = _config(args)
    boxes = parse_boxes(args.boxes)
    tokens = tokenize(args.caption)
    method = Method.parse(args.method)
    layout = LayoutSpec(boxes, default_token_sets(tokens, len(boxes), cfg.eval.bind))
    model, sched, _ = _load_model(args.checkpoint)
    assets = load_assets(cfg.assets.background, cfg.assets.object, model.config.size) if method.needs_reference else Assets()
    torch.set_num_threads(1)
    res = run_pipeline(method, tokens, layout, model, sched, cfg.pipeline_config(), seed=cfg.seed,
                       assets=assets, keep_trajectory=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res_grid = cfg.guidance.attention_res
    for s, ts in enumerate(layout.token_sets):
        for k, m in enumerate(trajectory_maps(res.trajectory, ts, res_grid), 1):
            if (k - 1) % args.every == 0:
                write_ppm(out / f"attn_entry{s}_step{k:03d}.ppm", heatmap(m / max(m.max(), 1e-12)))
    write_ppm(out / "image.ppm", res.image)
    print(f"wrote attention heatmaps to {out}")
    return EXIT_OK


def heatmap(v: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to a black-red-yellow-white ramp."""
    v = np.clip(v, 0, 1)[..., None]
    return np.concatenate([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saltlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=True):
        sp.add_argument("--config", help="JSON or YAML run configuration")
        sp.add_argument("--seed", type=int, help="global 64-bit seed")
        sp.add_argument("--out", help="output directory")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)

    t = sub.add_parser("train", help="train the toy denoiser")
    common(t, checkpoint=False)
    t.add_argument("--steps", type=int)
    t.set_defaults(func=cmd_train)

    for name, func in (("generate", cmd_generate), ("inspect", cmd_inspect)):
        g = sub.add_parser(name, help="generate one image" if name == "generate" else "dump attention heatmaps")
        common(g)
        g.add_argument("--method", required=True)
        g.add_argument("--caption", required=True)
        g.add_argument("--boxes", required=True, help='"x0,y0,x1,y1[;x0,y0,x1,y1]" normalized')
        if name == "generate":
            g.add_argument("--trajectory", action="store_true", help="also dump the latent trajectory")
        else:
            g.add_argument("--every", type=int, default=5, help="dump every n-th sampling step")
        g.set_defaults(func=func)

    e = sub.add_parser("evaluate", help="metrics report per method on an eval split")
    common(e)
    e.add_argument("--method", help="comma-separated method names")
    e.add_argument("--split", choices=("single", "multiple"))
    e.add_argument("--jobs", type=int)
    e.add_argument("--limit", type=int, help="use only the first N records")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="run an ablation grid")
    common(a)
    a.add_argument("--grid", required=True)
    a.add_argument("--split", choices=("single", "multiple"))
    a.add_argument("--jobs", type=int)
    a.add_argument("--limit", type=int)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ContractError, TokenizationError, AssetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SaltLabError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
