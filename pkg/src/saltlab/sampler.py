"""DDIM sampling and inversion with classifier-free guidance, plus SDE noising."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from .denoiser import AttentionCapture, Cond, TinyUNet, null_cond, predict_noise
from .errors import ContractError
from .schedule import NoiseSchedule, q_sample


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    cfg_weight: float = 3.0

    def validate(self, T: int):
        if not 1 <= self.steps <= T:
            raise ContractError(f"steps must lie in 1..{T}, got {self.steps}")
        if self.cfg_weight < 0:
            raise ContractError("cfg_weight must be >= 0")


@dataclass
class Trajectory:
    """Ordered (timestep, latent, capture) records of one sampling or inversion run."""

    timesteps: list[int] = field(default_factory=list)
    latents: list[torch.Tensor] = field(default_factory=list)
    captures: list[Optional[AttentionCapture]] = field(default_factory=list)

    def append(self, t, z, cap=None):
        self.timesteps.append(int(t))
        self.latents.append(z.detach().clone())
        self.captures.append(cap)

    @property
    def final(self) -> torch.Tensor:
        return self.latents[-1]

    def __len__(self):
        return len(self.timesteps)


def timestep_sequence(T: int, steps: int) -> list[int]:
    """Descending uniform subsequence of 1..T that starts at T and (for steps > 1) ends at 1."""
    if not 1 <= steps <= T:
        raise ContractError(f"steps must lie in 1..{T}, got {steps}")
    if steps == 1:
        return [T]
    seq = [int(v) for v in np.floor(np.linspace(T, 1, steps) + 0.5)]
    if len(set(seq)) != steps:
        raise ContractError("timestep subsequence is not strictly decreasing")
    return seq


def cfg_combine(eps_cond, eps_uncond, w: float):
    """w * eps_cond + (1 - w) * eps_uncond."""
    if tuple(np.shape(eps_cond)) != tuple(np.shape(eps_uncond)):
        raise ContractError("cfg_combine shape mismatch")
    return w * eps_cond + (1 - w) * eps_uncond


def ddim_step(z_t, t: int, t_next: int, eps_hat, sched: NoiseSchedule):
    """Deterministic DDIM move from ``t`` to ``t_next`` (either direction)."""
    if t == t_next:
        raise ContractError("t and t_next must differ")
    if tuple(np.shape(z_t)) != tuple(np.shape(eps_hat)):
        raise ContractError("ddim_step shape mismatch")
    a_t, a_n = sched.ab(t), sched.ab(t_next)
    if a_t == a_n:
        return z_t.clone() if hasattr(z_t, "clone") else np.array(z_t, copy=True)
    x0 = (z_t - math.sqrt(1.0 - a_t) * eps_hat) / math.sqrt(a_t)
    return math.sqrt(a_n) * x0 + math.sqrt(1.0 - a_n) * eps_hat


GuidanceHook = Callable[[torch.Tensor, int, int], torch.Tensor]


def ddim_sample(z_init: torch.Tensor, cond: Cond, model: TinyUNet, sched: NoiseSchedule,
                cfg: SamplerConfig = SamplerConfig(), guidance_hook: Optional[GuidanceHook] = None,
                guided_steps: int = 0, capture: bool = False, uncond: Optional[Cond] = None) -> Trajectory:
    """Denoise ``z_init`` (B, C, H, W) from T to 0.

    On the first ``guided_steps`` timesteps the hook ``hook(z, t, step_index)``
    may replace the latent before the noise prediction. Captures (when
    requested) come from the conditional branch.
    """
    cfg.validate(sched.T)
    seq = timestep_sequence(sched.T, cfg.steps)
    if uncond is None:
        uncond = null_cond(model, z_init.shape[0])
    traj = Trajectory()
    z = z_init.detach()
    traj.append(seq[0], z)
    for i, t in enumerate(seq):
        if guidance_hook is not None and i < guided_steps:
            z = guidance_hook(z, t, i).detach()
        with torch.no_grad():
            e_c, cap = predict_noise(model, z, t, cond, capture=capture)
            e_u, _ = predict_noise(model, z, t, uncond)
            eps = cfg_combine(e_c, e_u, cfg.cfg_weight)
            t_next = seq[i + 1] if i + 1 < len(seq) else 0
            z = ddim_step(z, t, t_next, eps, sched)
        traj.append(t_next, z, cap.detach() if cap is not None else None)
    return traj


def ddim_invert(z0: torch.Tensor, model: TinyUNet, sched: NoiseSchedule, steps: int = 50):
    """Unconditional DDIM inversion from t=0 to T; returns ``(z_T_star, trajectory)``.

    The predictor is queried at the destination timestep of every move because it
    is undefined at t = 0.
    """
    seq = timestep_sequence(sched.T, steps)[::-1]
    uncond = null_cond(model, z0.shape[0])
    traj = Trajectory()
    z = z0.detach()
    traj.append(0, z)
    t = 0
    with torch.no_grad():
        for t_next in seq:
            eps, _ = predict_noise(model, z, t_next, uncond)
            z = ddim_step(z, t, t_next, eps, sched)
            traj.append(t_next, z)
            t = t_next
    return z, traj


def sde_noise(z0: torch.Tensor, t: int, sched: NoiseSchedule, rng: np.random.Generator):
    """SDEdit-style stochastic initialization: q_sample with fresh Gaussian noise."""
    if not 1 <= t <= sched.T:
        raise ContractError(f"t must lie in 1..{sched.T}")
    eps = torch.as_tensor(rng.standard_normal(tuple(z0.shape)), dtype=z0.dtype)
    return q_sample(z0, t, eps, sched)
