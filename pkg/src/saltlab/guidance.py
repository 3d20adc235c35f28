"""Layout loss, latent updates by attention guidance, and the attention-driven noise rearrangement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .boxes import BBox
from .denoiser import (Cond, TinyUNet, capture_attention, entry_maps,
                       token_weights)
from .errors import ContractError, DegenerateBoxError, GuidanceError


@dataclass(frozen=True)
class LayoutSpec:
    """Boxes each bound to a nonempty set of caption token indices."""

    boxes: tuple[BBox, ...]
    token_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "token_sets", tuple(tuple(int(i) for i in ts) for ts in self.token_sets))
        if not self.boxes:
            raise ContractError("layout needs at least one box")
        if len(self.boxes) != len(self.token_sets):
            raise ContractError("every box needs a token set")
        if any(len(ts) == 0 for ts in self.token_sets):
            raise ContractError("empty token set in layout")

    def __len__(self):
        return len(self.boxes)

    def check_caption(self, n_tokens: int):
        if len(self) > n_tokens:
            raise ContractError("more boxes than caption tokens")
        for ts in self.token_sets:
            if min(ts) < 0 or max(ts) >= n_tokens:
                raise ContractError(f"token set {ts} outside caption of length {n_tokens}")


@dataclass(frozen=True)
class GuidanceConfig:
    lam: float = 0.05
    eta: float = 0.5
    inner_iters: int = 3
    guided_fraction: float = 0.2
    max_halvings: int = 4
    attention_res: int = 16

    def __post_init__(self):
        if self.lam < 0 or self.eta <= 0 or self.inner_iters < 0:
            raise ContractError("need lam >= 0, eta > 0, inner_iters >= 0")
        if not 0 <= self.guided_fraction <= 1:
            raise ContractError("guided_fraction must lie in [0, 1]")

    def guided_steps(self, steps: int) -> int:
        return int(np.ceil(self.guided_fraction * steps - 1e-9))


@dataclass
class LayoutBatch:
    """Padded per-sample layouts: weights (B, S, N), masks (B, S, h, w), valid (B, S)."""

    weights: torch.Tensor
    masks: torch.Tensor
    valid: torch.Tensor
    boxes: list = None

    @classmethod
    def build(cls, layouts, n_tokens: int, res: int = 16, dtype=torch.float32) -> "LayoutBatch":
        layouts = list(layouts)
        S = max(len(l) for l in layouts)
        B = len(layouts)
        weights = torch.zeros(B, S, n_tokens, dtype=dtype)
        masks = torch.zeros(B, S, res, res, dtype=dtype)
        valid = torch.zeros(B, S, dtype=torch.bool)
        for b, lay in enumerate(layouts):
            lay.check_caption(n_tokens)
            weights[b, : len(lay)] = token_weights(lay.token_sets, n_tokens, dtype)
            for s, box in enumerate(lay.boxes):
                masks[b, s] = torch.from_numpy(box.mask(res, res))
            valid[b, : len(lay)] = True
        return cls(weights, masks, valid, [lay.boxes for lay in layouts])

    def index(self, sel) -> "LayoutBatch":
        sel = torch.as_tensor(sel)
        boxes = None if self.boxes is None else [self.boxes[i] for i in torch.arange(len(self.boxes))[sel].tolist()]
        return LayoutBatch(self.weights[sel], self.masks[sel], self.valid[sel], boxes)

    def to(self, dtype) -> "LayoutBatch":
        return LayoutBatch(self.weights.to(dtype), self.masks.to(dtype), self.valid, self.boxes)


def layout_loss_terms(maps: torch.Tensor, masks: torch.Tensor, lam: float):
    """Per-entry (alignment, regularization) terms for maps and masks shaped (..., h, w)."""
    s_tot = maps.sum(dim=(-2, -1))
    if torch.any(s_tot <= 0):
        raise ContractError("attention map with zero total mass")
    s_in = (maps * masks).sum(dim=(-2, -1))
    return (1 - s_in / s_tot) ** 2, lam * s_in


def layout_loss_batch(maps: torch.Tensor, lb: LayoutBatch, lam: float) -> torch.Tensor:
    align, reg = layout_loss_terms(maps, lb.masks, lam)
    return ((align - reg) * lb.valid.to(maps.dtype)).sum(dim=-1)


def layout_loss(maps, layout: LayoutSpec, lam: float) -> float:
    """Sum over boxes of (1 - S_in/S_tot)^2 - lam * S_in for per-entry maps (S, h, w)."""
    m = torch.as_tensor(np.asarray(maps), dtype=torch.float64)
    if m.ndim == 2:
        m = m[None]
    if m.shape[0] != len(layout):
        raise ContractError("one map per layout entry required")
    if torch.any(m < 0):
        raise ContractError("attention maps must be nonnegative")
    h, w = m.shape[-2:]
    masks = torch.stack([torch.from_numpy(b.mask(h, w)) for b in layout.boxes]).to(m.dtype)
    align, reg = layout_loss_terms(m, masks, lam)
    return float((align - reg).sum())


def _as_batch(layouts, cond: Cond, res: int, dtype) -> LayoutBatch:
    if isinstance(layouts, LayoutBatch):
        return layouts.to(dtype)
    if isinstance(layouts, LayoutSpec):
        layouts = [layouts] * len(cond)
    return LayoutBatch.build(layouts, cond.emb.shape[1], res, dtype)


def layout_loss_at(z_t, t, cond, model, layouts, lam, res=16) -> torch.Tensor:
    """Per-sample layout loss (B,) of the conditional attention at (z_t, t); no gradient."""
    lb = _as_batch(layouts, cond, res, z_t.dtype)
    with torch.no_grad():
        cap = capture_attention(model, z_t, t, cond)
        return layout_loss_batch(entry_maps(cap, lb.weights, res), lb, lam)


def loss_grad_latent(z_t, t, cond: Cond, model: TinyUNet, layouts, lam: float, res: int = 16):
    """Per-sample layout loss (B,) and its exact gradient with respect to ``z_t``."""
    lb = _as_batch(layouts, cond, res, z_t.dtype)
    z = z_t.detach().requires_grad_(True)
    with torch.enable_grad():
        cap = capture_attention(model, z, t, cond)
        loss = layout_loss_batch(entry_maps(cap, lb.weights, res), lb, lam)
        (grad,) = torch.autograd.grad(loss.sum(), z)
    return loss.detach(), grad


def guided_update(z_t, t, cond: Cond, model: TinyUNet, layouts, gcfg: GuidanceConfig = GuidanceConfig(),
                  iters: int | None = None, history: list | None = None):
    """Gradient steps z <- z - eta * grad with per-sample backtracking.

    A candidate is accepted only if it strictly lowers that sample's loss;
    otherwise eta is halved up to ``max_halvings`` times and, failing that,
    the sample stays put for this iteration. Loss never increases.
    """
    iters = gcfg.inner_iters if iters is None else iters
    if iters <= 0:
        return z_t
    res = gcfg.attention_res
    lb = _as_batch(layouts, cond, res, z_t.dtype)
    z = z_t.detach().clone()
    B = z.shape[0]
    for _ in range(iters):
        loss, grad = loss_grad_latent(z, t, cond, model, lb, gcfg.lam, res)
        if not torch.isfinite(grad).all():
            raise GuidanceError(f"non-finite guidance gradient at t={t}")
        if history is not None:
            history.append(loss.clone())
        eta = torch.full((B,), float(gcfg.eta), dtype=z.dtype)
        pending = torch.ones(B, dtype=torch.bool)
        for _k in range(gcfg.max_halvings + 1):
            idx = torch.nonzero(pending).flatten()
            cand = z[idx] - eta[idx].view(-1, 1, 1, 1) * grad[idx]
            cand_loss = layout_loss_at(cand, t, cond.index(idx), model, lb.index(idx), gcfg.lam, res)
            ok = cand_loss < loss[idx]
            z[idx[ok]] = cand[ok]
            pending[idx[ok]] = False
            eta[idx[~ok]] /= 2
            if not pending.any():
                break
    if history is not None:
        history.append(layout_loss_at(z, t, cond, model, lb, gcfg.lam, res))
    return z


def rearrange_by_attention(z: torch.Tensor, att: torch.Tensor, masks) -> torch.Tensor:
    """Swap channel vectors so high-attention outside pixels move into each box.

    ``z`` is (C, H, W), ``att`` is (S, H, W) and ``masks`` is (S, H, W) bool.
    For entry i, the k-th highest-attention outside position swaps with the
    k-th lowest-attention inside position while the outside value is larger.
    """
    z = z.clone()
    C, H, W = z.shape
    flat = z.view(C, H * W)
    att = torch.as_tensor(att).reshape(len(masks), H * W)
    masks = torch.as_tensor(np.asarray(masks)).reshape(len(masks), H * W)
    for a, m in zip(att, masks):
        inside = torch.nonzero(m).flatten()
        outside = torch.nonzero(~m).flatten()
        if inside.numel() == 0:
            raise DegenerateBoxError("box covers no latent pixels")
        if outside.numel() == 0:
            continue
        out_sorted = outside[torch.argsort(-a[outside], stable=True)]
        in_sorted = inside[torch.argsort(a[inside], stable=True)]
        k = min(out_sorted.numel(), in_sorted.numel())
        out_sorted, in_sorted = out_sorted[:k], in_sorted[:k]
        n = int((a[out_sorted] > a[in_sorted]).long().cumprod(0).sum())
        if n == 0:
            continue
        o, i = out_sorted[:n], in_sorted[:n]
        vo, vi = flat[:, o].clone(), flat[:, i].clone()
        flat[:, o], flat[:, i] = vi, vo
    return z


def guided_only_rearrange(z_T: torch.Tensor, cond: Cond, model: TinyUNet, layouts, res: int = 16) -> torch.Tensor:
    """Permute initial noise pixels using one captured attention evaluation at t = T."""
    lb = _as_batch(layouts, cond, res, z_T.dtype)
    H, W = z_T.shape[-2:]
    with torch.no_grad():
        cap = capture_attention(model, z_T, model.config.T, cond)
        maps = entry_maps(cap, lb.weights, res)
        maps = F.interpolate(maps, size=(H, W), mode="bilinear", align_corners=False)
    out = []
    for b in range(z_T.shape[0]):
        boxes = lb.boxes[b]
        masks = np.stack([box.mask(H, W) for box in boxes])
        out.append(rearrange_by_attention(z_T[b], maps[b, : len(boxes)], masks))
    return torch.stack(out)
