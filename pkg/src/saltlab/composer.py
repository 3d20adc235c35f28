"""Reference-image compositing and the inversion-based initialization latent."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import AssetError, ContractError, DegenerateBoxError
from .grid import to_latent
from .sampler import ddim_invert


@dataclass(frozen=True)
class ObjectAsset:
    name: str
    mask: np.ndarray
    color: tuple[float, ...]

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or not m.any():
            raise AssetError(f"object {self.name!r} needs a nonempty 2-D mask")
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise AssetError(f"object {self.name!r} color outside [0, 1]")
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class BackgroundAsset:
    name: str
    image: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 3 or img.min() < 0 or img.max() > 1:
            raise AssetError(f"background {self.name!r} must be H x W x C in [0, 1]")
        object.__setattr__(self, "image", img)


def _cat_mask(n=24):
    y, x = (np.indices((n, n)) + 0.5) / n
    body = ((x - 0.5) / 0.42) ** 2 + ((y - 0.6) / 0.38) ** 2 <= 1
    left_ear = (y >= 0.05) & (y <= 0.35) & (np.abs(x - 0.25) <= (y - 0.05) * 0.5)
    right_ear = (y >= 0.05) & (y <= 0.35) & (np.abs(x - 0.75) <= (y - 0.05) * 0.5)
    return body | left_ear | right_ear


def _dog_mask(n=24):
    y, x = (np.indices((n, n)) + 0.5) / n
    head = ((x - 0.5) / 0.34) ** 2 + ((y - 0.5) / 0.45) ** 2 <= 1
    ears = (y >= 0.1) & (y <= 0.65) & ((np.abs(x - 0.12) <= 0.1) | (np.abs(x - 0.88) <= 0.1))
    return head | ears


def _bread_mask(n=24):
    y, x = (np.indices((n, n)) + 0.5) / n
    base = (y >= 0.4) & (y <= 0.95) & (x >= 0.05) & (x <= 0.95)
    dome = ((x - 0.5) / 0.45) ** 2 + ((y - 0.45) / 0.4) ** 2 <= 1
    return base | dome


BUILTIN_OBJECTS = {
    "cat": ObjectAsset("cat", _cat_mask(), (0.85, 0.55, 0.30)),
    "dog": ObjectAsset("dog", _dog_mask(), (0.55, 0.40, 0.30)),
    "bread": ObjectAsset("bread", _bread_mask(), (0.90, 0.78, 0.50)),
}


def builtin_background(name: str, size: int = 32) -> BackgroundAsset:
    from .dataset import render_background

    return BackgroundAsset(name, render_background(name, size))


def builtin_object(name: str) -> ObjectAsset:
    try:
        return BUILTIN_OBJECTS[name]
    except KeyError:
        raise AssetError(f"unknown object asset {name!r}") from None


def load_object_asset(ppm_path) -> ObjectAsset:
    """Load a mask image (nonzero pixels = object) plus ``<stem>.json`` sidecar {class, color}."""
    from .io import read_ppm

    path = Path(ppm_path)
    sidecar = path.with_suffix(".json")
    if not path.exists() or not sidecar.exists():
        raise AssetError(f"missing object asset {path} or its sidecar {sidecar.name}")
    img = read_ppm(path)
    meta = json.loads(sidecar.read_text())
    return ObjectAsset(meta["class"], img.max(axis=-1) > 0.5, tuple(float(c) for c in meta["color"]))


def load_background_asset(ppm_path, name=None) -> BackgroundAsset:
    from .io import read_ppm

    path = Path(ppm_path)
    if not path.exists():
        raise AssetError(f"missing background asset {path}")
    return BackgroundAsset(name or path.stem, read_ppm(path))


def resize_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Nearest-neighbor anisotropic resize sampled at target pixel centers."""
    mh, mw = mask.shape
    rows = np.minimum(((np.arange(h) + 0.5) * mh / h).astype(int), mh - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * mw / w).astype(int), mw - 1)
    return mask[np.ix_(rows, cols)]


def compose_reference(background: BackgroundAsset, obj: ObjectAsset, boxes) -> np.ndarray:
    """Paint ``obj`` stretched into each box over ``background``; later boxes overdraw earlier ones."""
    boxes = list(boxes)
    if not boxes:
        raise ContractError("compose_reference needs at least one box")
    img = background.image.copy()
    H, W, C = img.shape
    color = np.asarray(obj.color, dtype=np.float64)
    if color.size != C:
        raise AssetError("object color does not match background channels")
    for box in boxes:
        r0, r1, c0, c1 = box.pixel_extent(H, W)
        if r1 - r0 < 2 or c1 - c0 < 2:
            raise DegenerateBoxError(f"box {box.as_list()} covers fewer than 2x2 pixels")
        m = resize_mask(obj.mask, r1 - r0, c1 - c0)
        img[r0:r1, c0:c1][m] = color
    return np.clip(img, 0.0, 1.0)


def salt_init(reference: np.ndarray, model, sched, inv_steps: int = 50) -> torch.Tensor:
    """Invert one (H, W, C) reference image or a (B, H, W, C) stack to terminal latents."""
    if inv_steps < 1:
        raise ContractError("inv_steps must be >= 1")
    z0 = to_latent(reference, dtype=model.dtype)
    if z0.ndim == 3:
        z0 = z0[None]
    z_T, _ = ddim_invert(z0, model, sched, inv_steps)
    return z_T
