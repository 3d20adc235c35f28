"""Checkpoint = tensor container holding model weights and the noise schedule."""
from __future__ import annotations

import numpy as np
import torch

from .denoiser import ModelConfig, TinyUNet, clone_model
from .errors import ContractError
from .io import read_tensors, write_tensors
from .schedule import NoiseSchedule


def save_checkpoint(path, model: TinyUNet, sched: NoiseSchedule, meta: dict | None = None) -> None:
    tensors = {f"model.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensors["schedule.beta"] = sched.beta
    tensors["schedule.alpha_bar"] = sched.alpha_bar
    write_tensors(path, tensors, {"model_config": model.config.to_dict(), **(meta or {})})


def load_checkpoint(path):
    """Return ``(model, schedule, meta)``; the model is frozen in eval mode."""
    tensors, meta = read_tensors(path)
    cfg = ModelConfig.from_dict(meta["model_config"])
    sched = NoiseSchedule(tensors["schedule.beta"])
    if not np.array_equal(sched.alpha_bar, tensors["schedule.alpha_bar"]):
        raise ContractError(f"{path}: stored alpha_bar disagrees with beta")
    model = TinyUNet(cfg)
    state = {k[len("model."):]: torch.from_numpy(np.array(v)) for k, v in tensors.items() if k.startswith("model.")}
    for k, v in state.items():
        if not torch.isfinite(v).all():
            raise ContractError(f"{path}: tensor {k} is not finite")
    model.load_state_dict(state)
    return clone_model(model), sched, meta
