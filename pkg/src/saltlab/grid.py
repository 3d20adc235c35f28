"""Conversions between H x W x C images in [0, 1] and channel-first latents.

The latent is the pixel grid itself, affinely mapped to [-1, 1].
"""
from __future__ import annotations

import numpy as np
import torch


def to_latent(image, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C) or (B, H, W, C) image in [0, 1] -> (…, C, H, W) latent in [-1, 1]."""
    x = torch.as_tensor(np.asarray(image), dtype=dtype)
    x = x.movedim(-1, -3)
    return x * 2 - 1


def to_image(z: torch.Tensor) -> np.ndarray:
    """Inverse of :func:`to_latent`, clamped to [0, 1], returned as float64 numpy."""
    x = (z.detach().to(torch.float64) + 1) / 2
    return x.clamp(0, 1).movedim(-3, -1).cpu().numpy()
