"""Denoiser training with the epsilon-prediction objective and condition dropout."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import render_batch
from .denoiser import ModelConfig, TinyUNet
from .errors import TrainingError
from .grid import to_latent
from .schedule import NoiseSchedule
from .tokens import pad_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 32
    lr: float = 1e-3
    p_drop: float = 0.1
    ema_decay: float = 0.999
    warmup: int = 200
    log_every: int = 50

    def to_dict(self):
        return asdict(self)


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(step)]))


def _lr_at(cfg: TrainConfig, step: int) -> float:
    if step < cfg.warmup:
        return cfg.lr * (step + 1) / cfg.warmup
    frac = (step - cfg.warmup) / max(1, cfg.steps - cfg.warmup)
    return cfg.lr * (0.1 + 0.9 * 0.5 * (1 + math.cos(math.pi * frac)))


def train(records, sched: NoiseSchedule, model_cfg: ModelConfig = ModelConfig(),
          cfg: TrainConfig = TrainConfig(), seed: int = 0, callback=None):
    """Fit a :class:`TinyUNet`; returns ``(ema_model, loss_log)``.

    Records are ordered by id before indexing, so every minibatch depends only
    on (seed, step) and not on the order of ``records``. ``loss_log`` holds
    ``{"step", "loss"}`` rows averaged over each logging window.
    """
    records = sorted(records, key=lambda r: r.id)
    if not records:
        raise TrainingError("empty training set")
    if model_cfg.T != sched.T:
        raise TrainingError("model and schedule disagree on T")
    torch.manual_seed(seed)
    model = TinyUNet(model_cfg)
    ema = copy.deepcopy(model)
    for p in ema.parameters():
        p.requires_grad_(False)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    data = to_latent(render_batch(records, model_cfg.size)).contiguous()
    ids = torch.from_numpy(pad_batch([r.tokens for r in records]))
    sqrt_ab = torch.tensor(np.sqrt(sched.alpha_bar), dtype=torch.float32)
    sqrt_1mab = torch.tensor(np.sqrt(1 - sched.alpha_bar), dtype=torch.float32)

    loss_log, window = [], []
    model.train()
    for step in range(cfg.steps):
        rng = step_rng(seed, step)
        idx = torch.from_numpy(rng.integers(0, len(records), cfg.batch_size))
        t = torch.from_numpy(rng.integers(1, sched.T + 1, cfg.batch_size))
        eps = torch.from_numpy(rng.standard_normal((cfg.batch_size, *data.shape[1:])).astype(np.float32))
        drop = torch.from_numpy(rng.random(cfg.batch_size) < cfg.p_drop)
        z0 = data[idx]
        batch_ids = ids[idx].clone()
        batch_ids[drop] = 0
        zt = sqrt_ab[t - 1].view(-1, 1, 1, 1) * z0 + sqrt_1mab[t - 1].view(-1, 1, 1, 1) * eps
        pred, _ = model(zt, t.float(), model.encode(batch_ids))
        loss = F.mse_loss(pred, eps)
        if not torch.isfinite(loss):
            raise TrainingError("training loss became non-finite", step)
        for g in opt.param_groups:
            g["lr"] = _lr_at(cfg, step)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        with torch.no_grad():
            d = min(cfg.ema_decay, (1 + step) / (10 + step))
            for pe, pm in zip(ema.parameters(), model.parameters()):
                pe.mul_(d).add_(pm, alpha=1 - d)
        window.append(loss.item())
        if (step + 1) % cfg.log_every == 0 or step + 1 == cfg.steps:
            loss_log.append({"step": step + 1, "loss": float(np.mean(window))})
            window = []
            if callback is not None:
                callback(loss_log[-1])
            log.info("step %d loss %.4f", loss_log[-1]["step"], loss_log[-1]["loss"])
    ema.eval()
    return ema, loss_log


@torch.no_grad()
def heldout_mse(model: TinyUNet, records, sched: NoiseSchedule, seed: int = 1, batch: int = 64) -> float:
    """Mean epsilon-MSE on ``records`` with random timesteps and noise."""
    rng = np.random.default_rng(seed)
    records = list(records)
    data = to_latent(render_batch(records, model.config.size), dtype=model.dtype)
    ids = torch.from_numpy(pad_batch([r.tokens for r in records]))
    total, n = 0.0, 0
    for s in range(0, len(records), batch):
        z0 = data[s : s + batch]
        t = torch.from_numpy(rng.integers(1, sched.T + 1, z0.shape[0]))
        eps = torch.from_numpy(rng.standard_normal(tuple(z0.shape))).to(z0.dtype)
        ab = torch.tensor(sched.alpha_bar, dtype=z0.dtype)[t - 1].view(-1, 1, 1, 1)
        zt = ab.sqrt() * z0 + (1 - ab).sqrt() * eps
        pred, _ = model(zt, t.to(z0.dtype), model.encode(ids[s : s + batch]))
        total += F.mse_loss(pred, eps, reduction="sum").item()
        n += eps.numel()
    return total / n
