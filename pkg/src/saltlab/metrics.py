"""Deterministic detection and scoring."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .boxes import BBox
from .errors import ContractError
from .palette import COLOR_RGB

DETECT_SIGMA = 0.25
DETECT_THRESHOLD = 0.5
MIN_COMPONENT = 4


def iou(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Detection:
    label: str
    box: BBox
    score: float


def color_score(image: np.ndarray, rgb) -> np.ndarray:
    d2 = ((np.asarray(image, dtype=np.float64) - np.asarray(rgb)) ** 2).sum(axis=-1)
    return np.exp(-d2 / DETECT_SIGMA**2)


def detect(image: np.ndarray, palette=COLOR_RGB) -> list[Detection]:
    """Best connected component per color class (one detection per class at most)."""
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape[:2]
    out = []
    for label, rgb in palette.items():
        s = color_score(image, rgb)
        comps, n = ndimage.label(s > DETECT_THRESHOLD)
        best = None
        for k in range(1, n + 1):
            rr, cc = np.nonzero(comps == k)
            if rr.size < MIN_COMPONENT:
                continue
            score = float(s[rr, cc].mean())
            if best is None or score > best.score:
                box = BBox.from_pixels(rr.min(), rr.max() + 1, cc.min(), cc.max() + 1, H, W)
                best = Detection(label, box, score)
        if best is not None:
            out.append(best)
    return out


def average_precision(tp_flags, n_gt: int) -> float:
    """All-point interpolated AP from rank-ordered TP flags."""
    if n_gt == 0:
        return 0.0
    tp = np.asarray(tp_flags, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def map50(preds, gts, threshold: float = 0.5) -> float:
    """mAP at IoU ``threshold``.

    ``preds`` and ``gts`` are parallel per-image lists of objects with ``label``
    and ``box`` attributes (predictions also carry ``score``). Predictions are
    ranked per class by score; each takes the unmatched same-class ground truth
    in its image with the highest IoU if that IoU reaches the threshold.
    """
    if len(preds) != len(gts):
        raise ContractError("preds and gts must cover the same images")
    by_class = defaultdict(list)
    n_gt = defaultdict(int)
    for img, (ps, gs) in enumerate(zip(preds, gts)):
        for p in ps:
            by_class[p.label].append((p.score, img, p.box))
        for g in gs:
            n_gt[g.label] += 1
    aps = []
    for label in sorted(n_gt):
        ranked = sorted(by_class[label], key=lambda r: -r[0])
        used = set()
        flags = []
        for _, img, box in ranked:
            best, best_iou = None, threshold
            for j, g in enumerate(gts[img]):
                if g.label != label or (img, j) in used:
                    continue
                v = iou(box, g.box)
                if v >= best_iou:
                    best, best_iou = j, v
            if best is None:
                flags.append(0)
            else:
                used.add((img, best))
                flags.append(1)
        aps.append(average_precision(flags, n_gt[label]))
    return float(np.mean(aps)) if aps else 0.0


def fidelity(image: np.ndarray, prompted, detections=None) -> float:
    """Mean top detector score over the prompted color classes (0 when missing)."""
    prompted = list(prompted)
    if not prompted:
        raise ContractError("fidelity needs at least one prompted class")
    dets = detect(image) if detections is None else detections
    best = {}
    for d in dets:
        best[d.label] = max(best.get(d.label, 0.0), d.score)
    return float(np.mean([best.get(c, 0.0) for c in prompted]))


def _pixel_mask(box: BBox, shape) -> np.ndarray:
    return box.mask(shape[-2], shape[-1])


def attention_mass(att_map, box: BBox) -> float:
    """Fraction of the map's total inside ``box`` (pixel-center rule)."""
    m = np.asarray(att_map, dtype=np.float64)
    if np.any(m < 0):
        raise ContractError("attention map must be nonnegative")
    total = m.sum()
    if total <= 0:
        raise ContractError("attention map has zero total")
    return float(m[_pixel_mask(box, m.shape)].sum() / total)


def trajectory_maps(traj, token_set, size: int = 16, sample: int = 0) -> list[np.ndarray]:
    """Token-set attention maps for every captured step of a trajectory."""
    from .denoiser import attention_map

    return [attention_map(c, token_set, size)[sample].detach().double().numpy()
            for c in traj.captures if c is not None]


def attention_drift(maps, token_set=None, size: int = 16) -> float:
    """Mean L1 distance between consecutive L1-normalized maps of one token set.

    ``maps`` is either a sequence of 2-D maps in trajectory order, or a
    captured trajectory together with ``token_set``.
    """
    if token_set is not None:
        maps = trajectory_maps(maps, token_set, size)
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if len(maps) < 2:
        raise ContractError("drift needs at least two captured steps")
    norm = []
    for m in maps:
        s = m.sum()
        if s <= 0:
            raise ContractError("attention map has zero total")
        norm.append(m / s)
    return float(np.mean([np.abs(b - a).sum() for a, b in zip(norm, norm[1:])]))
