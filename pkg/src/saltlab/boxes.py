"""Normalized bounding boxes and the pixel mapping shared by every module.

Box edges map to pixel indices with ``floor(n * coord + 0.5)`` (round half up);
a box covers rows ``[r0, r1)`` and columns ``[c0, c1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise ContractError(f"non-finite box {vals}")
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise ContractError(f"box {vals} must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1")

    @classmethod
    def from_pixels(cls, r0: int, r1: int, c0: int, c1: int, H: int, W: int) -> "BBox":
        return cls(c0 / W, r0 / H, c1 / W, r1 / H)

    @classmethod
    def parse(cls, text: str) -> "BBox":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ContractError(f"box {text!r} needs four comma-separated numbers")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as exc:
            raise ContractError(f"box {text!r} is not numeric") from exc

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def pixel_extent(self, H: int, W: int) -> tuple[int, int, int, int]:
        """(r0, r1, c0, c1) half-open pixel bounds on an H x W grid."""
        return (round_half_up(H * self.y0), round_half_up(H * self.y1),
                round_half_up(W * self.x0), round_half_up(W * self.x1))

    def mask(self, H: int, W: int) -> np.ndarray:
        r0, r1, c0, c1 = self.pixel_extent(H, W)
        m = np.zeros((H, W), dtype=bool)
        m[r0:r1, c0:c1] = True
        return m


def box_masks(boxes, H: int, W: int) -> np.ndarray:
    return np.stack([b.mask(H, W) for b in boxes]) if boxes else np.zeros((0, H, W), bool)
