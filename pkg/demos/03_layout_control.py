"""Compare the generation methods on a few captions and boxes.

Uses runs/demo/checkpoint.salt from 02_train_and_invert.py, or a path given
as the first argument. Writes one row of images per method.
"""
import sys
from pathlib import Path

import numpy as np
import torch

from saltlab.boxes import BBox
from saltlab.checkpoint import load_checkpoint
from saltlab.composer import builtin_background, builtin_object, compose_reference
from saltlab.guidance import LayoutSpec
from saltlab.io import write_ppm
from saltlab.pipeline import ALL_METHODS, Assets, PipelineConfig, run_batch
from saltlab.seeding import record_seed
from saltlab.tokens import tokenize

ckpt = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/demo/checkpoint.salt")
model, sched, _ = load_checkpoint(ckpt)
torch.set_num_threads(1)

captions = ["a red circle on green plain", "a blue square on green plain", "a yellow cross on green plain",
            "a purple triangle on green plain"]
boxes = [BBox(0.1, 0.1, 0.55, 0.55), BBox(0.45, 0.4, 0.95, 0.9), BBox(0.3, 0.05, 0.75, 0.5),
         BBox(0.05, 0.5, 0.5, 0.95)]
# color and shape words together steer each box
layouts = [LayoutSpec([b], [(1, 2)]) for b in boxes]
seeds = [record_seed(0, k) for k in range(len(captions))]
assets = Assets(builtin_background("green-plain"), builtin_object("cat"))
pcfg = PipelineConfig()

rows = [np.concatenate([compose_reference(assets.background, assets.obj, [b]) for b in boxes], 1)]
print("%-22s %6s %9s %6s" % ("method", "iou", "fidelity", "drift"))
for method in ALL_METHODS:
    res = run_batch(method, [tokenize(c) for c in captions], layouts, model, sched, pcfg, seeds, assets)
    rows.append(np.concatenate([r.image for r in res], 1))
    print("%-22s %6.3f %9.3f %6.4f" % (method.value, np.mean([r.metrics["iou"] for r in res]),
                                       np.mean([r.metrics["fidelity"] for r in res]),
                                       np.mean([r.metrics["drift"] for r in res])))

out = ckpt.parent / "methods.ppm"
write_ppm(out, np.concatenate(rows, 0))
print("first row is the composed reference; wrote", out)
