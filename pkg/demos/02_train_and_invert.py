"""Train a small denoiser, sample from it, and check how well DDIM inversion round-trips.

Takes about ten minutes on one core. Pass a step count to go longer, e.g.
``python demos/02_train_and_invert.py 8000``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import torch

from saltlab.checkpoint import save_checkpoint
from saltlab.dataset import CorpusConfig, make_corpus, render_batch
from saltlab.denoiser import ModelConfig, encode_captions, null_cond
from saltlab.grid import to_image, to_latent
from saltlab.io import write_jsonl, write_ppm
from saltlab.sampler import SamplerConfig, ddim_invert, ddim_sample
from saltlab.schedule import build_schedule
from saltlab.training import TrainConfig, heldout_mse, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
out = Path("runs/demo")
out.mkdir(parents=True, exist_ok=True)
torch.set_num_threads(1)

sched = build_schedule(1000)
corpus = make_corpus(CorpusConfig(), seed=0)
cfg = ModelConfig(channels=(16, 32, 32), T=sched.T)

t0 = time.time()
model, log = train(corpus.train, sched, cfg, TrainConfig(steps=steps, log_every=250), seed=0,
                   callback=lambda r: print("step %5d  loss %.4f" % (r["step"], r["loss"]), flush=True))
print("trained in %.0fs" % (time.time() - t0))
print("held-out eps MSE %.4f" % heldout_mse(model, corpus.eval_single[:200], sched))
save_checkpoint(out / "checkpoint.salt", model, sched, {"seed": 0})
write_jsonl(out / "train_log.jsonl", log)

# conditional samples with guidance weight 3
recs = corpus.eval_single[:8]
z = torch.randn(8, 3, 32, 32, generator=torch.Generator().manual_seed(0))
traj = ddim_sample(z, encode_captions(model, [r.tokens for r in recs]), model, sched, SamplerConfig(steps=50))
for r in recs:
    print(r.caption)
write_ppm(out / "samples.ppm", np.concatenate(list(to_image(traj.final)), 1))

# invert real renders and sample them back without a caption
x = to_latent(render_batch(recs))
for n in (20, 50, 100):
    zT, _ = ddim_invert(x, model, sched, n)
    back = ddim_sample(zT, null_cond(model, 8), model, sched, SamplerConfig(steps=n, cfg_weight=1.0)).final
    err = ((back - x).flatten(1).norm(dim=1) / x.flatten(1).norm(dim=1)).mean()
    print("%3d steps: relative L2 round-trip error %.3f" % (n, err))
write_ppm(out / "roundtrip.ppm", np.concatenate([np.concatenate(list(to_image(x)), 1),
                                                 np.concatenate(list(to_image(back)), 1)], 0))
