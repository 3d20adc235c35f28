"""Tiny conditional noise-prediction U-Net with capturable cross-attention."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError
from .tokens import MAX_LEN, NULL_ID, VOCAB_SIZE, TokenSequence, pad_batch

BLOCKS = ("mid", "up")


@dataclass(frozen=True)
class ModelConfig:
    size: int = 32
    in_channels: int = 3
    channels: tuple[int, int, int] = (32, 64, 64)
    heads: int = 2
    embed_dim: int = 32
    time_dim: int = 64
    groups: int = 8
    vocab_size: int = VOCAB_SIZE
    max_len: int = MAX_LEN
    T: int = 1000
    attention_res: int = 16

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        return cls(**d)


@dataclass
class Cond:
    """Caption embedding matrix (B, N, d) plus key mask (B, N)."""

    emb: torch.Tensor
    mask: torch.Tensor
    ids: torch.Tensor

    def __len__(self):
        return self.emb.shape[0]

    def index(self, sel) -> "Cond":
        return Cond(self.emb[sel], self.mask[sel], self.ids[sel])


@dataclass
class AttentionCapture:
    """Per-block cross-attention maps, each shaped (B, heads, P_block, N)."""

    maps: dict[str, torch.Tensor] = field(default_factory=dict)
    resolutions: dict[str, tuple[int, int]] = field(default_factory=dict)

    def detach(self) -> "AttentionCapture":
        return AttentionCapture({k: v.detach() for k, v in self.maps.items()}, dict(self.resolutions))


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, cin, cout, time_dim, groups):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.time = nn.Linear(time_dim, 2 * cout)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.time(temb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = self.conv2(F.silu(h))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Pixels query caption tokens; M = softmax(Q K^T / sqrt(d_head)) per head."""

    def __init__(self, channels, embed_dim, heads, groups):
        super().__init__()
        if embed_dim % heads:
            raise ValueError("embed_dim must be divisible by heads")
        self.heads = heads
        self.norm = nn.GroupNorm(groups, channels)
        self.to_q = nn.Linear(channels, embed_dim, bias=False)
        self.to_k = nn.Linear(embed_dim, embed_dim, bias=False)
        self.to_v = nn.Linear(embed_dim, embed_dim, bias=False)
        self.to_out = nn.Linear(embed_dim, channels)

    def forward(self, x, cond: Cond):
        B, C, h, w = x.shape
        H = self.heads
        tokens = self.norm(x).flatten(2).transpose(1, 2)  # (B, P, C)
        q = self.to_q(tokens).view(B, h * w, H, -1).transpose(1, 2)
        k = self.to_k(cond.emb).view(B, -1, H, q.shape[-1]).transpose(1, 2)
        v = self.to_v(cond.emb).view(B, -1, H, q.shape[-1]).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        scores = scores.masked_fill(~cond.mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)  # (B, H, P, N)
        out = (attn @ v).transpose(1, 2).reshape(B, h * w, -1)
        out = self.to_out(out).transpose(1, 2).reshape(B, C, h, w)
        return x + out, attn


class TinyUNet(nn.Module):
    """Three resolution levels; cross-attention at the mid block and the first up block."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        c1, c2, c3 = config.channels
        g, td, d = config.groups, config.time_dim, config.embed_dim
        self.token_emb = nn.Embedding(config.vocab_size, d)
        self.pos_emb = nn.Parameter(torch.randn(config.max_len, d) * 0.1)
        self.time_mlp = nn.Sequential(nn.Linear(d, td), nn.SiLU(), nn.Linear(td, td))
        self.conv_in = nn.Conv2d(config.in_channels, c1, 3, padding=1)
        self.enc1 = ResBlock(c1, c1, td, g)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = ResBlock(c2, c2, td, g)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.mid = ResBlock(c3, c3, td, g)
        self.attn_mid = CrossAttention(c3, d, config.heads, g)
        self.dec2 = ResBlock(c3 + c2, c2, td, g)
        self.attn_up = CrossAttention(c2, d, config.heads, g)
        self.dec1 = ResBlock(c2 + c1, c1, td, g)
        self.norm_out = nn.GroupNorm(g, c1)
        self.conv_out = nn.Conv2d(c1, config.in_channels, 3, padding=1)

    @property
    def dtype(self):
        return self.conv_in.weight.dtype

    def encode(self, ids) -> Cond:
        """Embed token ids (B, N) (NULL-padded) into a :class:`Cond`."""
        ids = torch.as_tensor(np.asarray(ids), dtype=torch.long)
        if ids.ndim == 1:
            ids = ids[None]
        n = ids.shape[1]
        emb = self.token_emb(ids) + self.pos_emb[:n]
        mask = ids != NULL_ID
        mask[:, 0] = True
        return Cond(emb, mask, ids)

    def forward(self, z, t, cond: Cond, capture: bool = False, attention_only: bool = False):
        temb = self.time_mlp(timestep_embedding(t.to(z.dtype), self.config.embed_dim))
        h1 = self.enc1(self.conv_in(z), temb)
        h2 = self.enc2(self.down1(h1), temb)
        h3 = self.mid(self.down2(h2), temb)
        h3, m_mid = self.attn_mid(h3, cond)
        u = F.interpolate(h3, scale_factor=2, mode="nearest")
        u = self.dec2(torch.cat([u, h2], dim=1), temb)
        u, m_up = self.attn_up(u, cond)
        cap = None
        if capture or attention_only:
            cap = AttentionCapture(
                {"mid": m_mid, "up": m_up},
                {"mid": tuple(h3.shape[-2:]), "up": tuple(u.shape[-2:])},
            )
        if attention_only:
            return None, cap
        u = F.interpolate(u, scale_factor=2, mode="nearest")
        u = self.dec1(torch.cat([u, h1], dim=1), temb)
        eps = self.conv_out(F.silu(self.norm_out(u)))
        return eps, cap


def encode_captions(model: TinyUNet, seqs) -> Cond:
    if isinstance(seqs, TokenSequence):
        seqs = [seqs]
    return model.encode(pad_batch(seqs))


def null_cond(model: TinyUNet, batch: int) -> Cond:
    return model.encode(np.zeros((batch, 1), dtype=np.int64))


def _check_latent(model: TinyUNet, z: torch.Tensor):
    cfg = model.config
    expect = (cfg.in_channels, cfg.size, cfg.size)
    if z.ndim != 4 or tuple(z.shape[1:]) != expect:
        raise ContractError(f"latent must be (B, {expect[0]}, {expect[1]}, {expect[2]}), got {tuple(z.shape)}")
    if not torch.isfinite(z).all():
        raise ContractError("latent contains non-finite values")


def _timesteps(t, batch: int, T: int, dtype) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=dtype)
    if t.ndim == 0:
        t = t.expand(batch)
    if torch.any(t < 1) or torch.any(t > T):
        raise ContractError(f"timestep outside 1..{T}")
    return t


def predict_noise(model: TinyUNet, z_t: torch.Tensor, t, cond: Cond, capture: bool = False):
    """Return ``(eps_hat, capture_or_None)`` for a batch of latents (B, C, H, W)."""
    _check_latent(model, z_t)
    if len(cond) != z_t.shape[0]:
        raise ContractError("condition batch does not match latent batch")
    tt = _timesteps(t, z_t.shape[0], model.config.T, z_t.dtype)
    return model(z_t, tt, cond, capture=capture)


def capture_attention(model: TinyUNet, z_t: torch.Tensor, t, cond: Cond) -> AttentionCapture:
    """Run the network only as far as the last attention block; keeps the autograd graph."""
    _check_latent(model, z_t)
    tt = _timesteps(t, z_t.shape[0], model.config.T, z_t.dtype)
    return model(z_t, tt, cond, attention_only=True)[1]


def token_weights(token_sets, n_tokens: int, dtype=torch.float32) -> torch.Tensor:
    """(S, N) averaging weights, one row per nonempty token index set."""
    w = torch.zeros(len(token_sets), n_tokens, dtype=dtype)
    for s, ts in enumerate(token_sets):
        ts = sorted(set(int(i) for i in ts))
        if not ts:
            raise ContractError("empty token set")
        if ts[0] < 0 or ts[-1] >= n_tokens:
            raise ContractError(f"token index out of range 0..{n_tokens - 1}")
        w[s, ts] = 1.0 / len(ts)
    return w


def entry_maps(capture: AttentionCapture, weights: torch.Tensor, size: int = 16) -> torch.Tensor:
    """Token-set attention maps on a common ``size x size`` grid.

    ``weights`` is (S, N) shared across the batch or (B, S, N) per sample.
    Heads are averaged per block, each block map is bilinearly resized, blocks
    are averaged, and the token set is averaged via the weights. Returns (B, S, size, size).
    """
    total = None
    for name, m in capture.maps.items():
        h, w = capture.resolutions[name]
        m = m.mean(dim=1)  # (B, P, N)
        wts = weights.to(m.dtype)
        if wts.ndim == 2:
            e = torch.einsum("bpn,sn->bsp", m, wts)
        else:
            e = torch.einsum("bpn,bsn->bsp", m, wts)
        e = e.reshape(m.shape[0], -1, h, w)
        if (h, w) != (size, size):
            e = F.interpolate(e, size=(size, size), mode="bilinear", align_corners=False)
        total = e if total is None else total + e
    return total / len(capture.maps)


def attention_map(capture: AttentionCapture, token_set, size: int = 16) -> torch.Tensor:
    """Mean attention map of one token set, shaped (B, size, size)."""
    n = next(iter(capture.maps.values())).shape[-1]
    return entry_maps(capture, token_weights([token_set], n), size)[:, 0]


def clone_model(model: TinyUNet, dtype=None) -> TinyUNet:
    out = TinyUNet(model.config)
    out.load_state_dict(model.state_dict())
    if dtype is not None:
        out = out.to(dtype)
    out.eval()
    for p in out.parameters():
        p.requires_grad_(False)
    return out
