"""Procedural shapes-and-captions corpus with ground-truth boxes."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox
from .errors import SpecError
from .metrics import iou
from .palette import COLOR_RGB, FARM_RGB, PLAIN_RGB
from .tokens import BACKGROUND_WORDS, COLORS, SHAPES, TokenSequence, tokenize

SIZE = 32

TRAIN_BACKGROUNDS = ("green-plain", "gray-plain", "farm")


def render_background(name: str, size: int = SIZE) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.float64)
    if name in PLAIN_RGB:
        img[:] = PLAIN_RGB[name]
    elif name == "farm":
        r, c = np.indices((size, size))
        checker = ((r // 4) + (c // 4)) % 2
        img[checker == 0] = FARM_RGB[0]
        img[checker == 1] = FARM_RGB[1]
    else:
        raise SpecError(f"unknown background {name!r}")
    return img


def shape_mask(shape: str, h: int, w: int) -> np.ndarray:
    """Binary mask of ``shape`` filling an h x w box, sampled at pixel centers."""
    y = (np.arange(h) + 0.5)[:, None] / h
    x = (np.arange(w) + 0.5)[None, :] / w
    if shape == "square":
        m = np.ones((h, w), dtype=bool)
    elif shape == "circle":
        m = ((x - 0.5) / 0.5) ** 2 + ((y - 0.5) / 0.5) ** 2 <= 1.0
    elif shape == "triangle":
        m = np.abs(x - 0.5) <= 0.5 * y + 0.5 / w
    elif shape == "cross":
        m = (np.abs(x - 0.5) <= 1 / 6 + 0.5 / w) | (np.abs(y - 0.5) <= 1 / 6 + 0.5 / h)
    else:
        raise SpecError(f"unknown shape {shape!r}")
    return np.broadcast_to(m, (h, w)).copy()


@dataclass(frozen=True)
class Placement:
    shape: str
    color: str
    box: BBox


@dataclass(frozen=True)
class SceneSpec:
    background: str
    placements: tuple[Placement, ...]
    caption: str
    split: str = "train"
    id: int = 0

    def validate(self, size: int = SIZE):
        if not 1 <= len(self.placements) <= 2:
            raise SpecError("a scene holds one or two placements")
        for p in self.placements:
            if p.shape not in SHAPES or p.color not in COLOR_RGB:
                raise SpecError(f"unknown placement {p}")
            r0, r1, c0, c1 = p.box.pixel_extent(size, size)
            if r0 < 1 or c0 < 1 or r1 > size - 1 or c1 > size - 1:
                raise SpecError(f"box {p.box} violates the 1px margin")
        if len(self.placements) == 2 and iou(self.placements[0].box, self.placements[1].box) > 0:
            raise SpecError("placements overlap")

    @property
    def tokens(self) -> TokenSequence:
        return tokenize(self.caption)

    def token_sets(self, bind: str = "shape") -> list[tuple[int, ...]]:
        """Caption token indices bound to each placement.

        ``bind`` selects the shape word, the color word, or both.
        """
        toks = self.tokens
        out = []
        for k, p in enumerate(self.placements):
            shape_idx = _word_index(toks, p.shape, k, self.placements, "shape")
            color_idx = _word_index(toks, p.color, k, self.placements, "color")
            out.append({"shape": (shape_idx,), "color": (color_idx,),
                        "both": (color_idx, shape_idx)}[bind])
        return out


def _word_index(toks, word, k, placements, attr):
    occurrence = sum(1 for q in placements[:k] if getattr(q, attr) == word)
    return toks.index_of(word, occurrence)


def caption_for(placements, background: str) -> str:
    objects = " and ".join(f"a {p.color} {p.shape}" for p in placements)
    return f"{objects} on {' '.join(BACKGROUND_WORDS[background])}"


@dataclass(frozen=True)
class GroundTruth:
    label: str
    box: BBox


def render_scene(spec: SceneSpec, size: int = SIZE):
    """Render to an (size, size, 3) float64 image in [0, 1].

    Ground-truth boxes are the tight bounds of each drawn mask, labelled by
    color (the detector's label space).
    """
    spec.validate(size)
    img = render_background(spec.background, size)
    gts = []
    for p in spec.placements:
        r0, r1, c0, c1 = p.box.pixel_extent(size, size)
        m = shape_mask(p.shape, r1 - r0, c1 - c0)
        img[r0:r1, c0:c1][m] = COLOR_RGB[p.color]
        rows = np.flatnonzero(m.any(axis=1))
        cols = np.flatnonzero(m.any(axis=0))
        gts.append(GroundTruth(p.color, BBox.from_pixels(
            r0 + rows[0], r0 + rows[-1] + 1, c0 + cols[0], c0 + cols[-1] + 1, size, size)))
    return img, gts


@dataclass(frozen=True)
class CorpusConfig:
    n_train: int = 8000
    n_eval_single: int = 400
    n_eval_multiple: int = 200
    train_multi_fraction: float = 0.25
    min_side: int = 6
    max_side: int = 16
    backgrounds: tuple[str, ...] = TRAIN_BACKGROUNDS
    size: int = SIZE


@dataclass
class Corpus:
    train: list[SceneSpec] = field(default_factory=list)
    eval_single: list[SceneSpec] = field(default_factory=list)
    eval_multiple: list[SceneSpec] = field(default_factory=list)
    vocabulary: tuple[str, ...] = ()

    def split(self, name: str) -> list[SceneSpec]:
        return {"train": self.train, "single": self.eval_single, "eval-single": self.eval_single,
                "multiple": self.eval_multiple, "eval-multiple": self.eval_multiple}[name]


def _random_box(rng, cfg: CorpusConfig) -> BBox:
    h = int(rng.integers(cfg.min_side, cfg.max_side + 1))
    w = int(rng.integers(cfg.min_side, cfg.max_side + 1))
    r0 = int(rng.integers(1, cfg.size - 1 - h + 1))
    c0 = int(rng.integers(1, cfg.size - 1 - w + 1))
    return BBox.from_pixels(r0, r0 + h, c0, c0 + w, cfg.size, cfg.size)


def _balanced(rng, n, values):
    reps = np.resize(np.arange(len(values)), n)
    return [values[i] for i in rng.permutation(reps)]


def _make_split(rng, n, n_objects, split, cfg: CorpusConfig, start_id: int):
    if np.isscalar(n_objects):
        n_objects = [n_objects] * n
    shapes = _balanced(rng, n, SHAPES)
    colors = _balanced(rng, n, COLORS)
    bgs = _balanced(rng, n, cfg.backgrounds)
    out = []
    for i in range(n):
        first = Placement(shapes[i], colors[i], _random_box(rng, cfg))
        placements = [first]
        if n_objects[i] == 2:
            color2 = COLORS[(COLORS.index(colors[i]) + int(rng.integers(1, len(COLORS)))) % len(COLORS)]
            shape2 = SHAPES[int(rng.integers(len(SHAPES)))]
            for _ in range(1000):
                box2 = _random_box(rng, cfg)
                if iou(first.box, box2) == 0:
                    break
            else:
                raise SpecError("could not place a non-overlapping second object")
            placements.append(Placement(shape2, color2, box2))
        placements = tuple(placements)
        spec = SceneSpec(bgs[i], placements, caption_for(placements, bgs[i]), split, start_id + i)
        spec.validate(cfg.size)
        out.append(spec)
    return out


def make_corpus(cfg: CorpusConfig = CorpusConfig(), seed: int = 0) -> Corpus:
    """Deterministic corpus; each split draws from its own child seed stream."""
    if min(cfg.n_train, cfg.n_eval_single, cfg.n_eval_multiple) < 1:
        raise SpecError("split counts must be >= 1")
    if not 1 <= cfg.min_side <= cfg.max_side <= cfg.size - 2:
        raise SpecError("invalid object side range")
    for b in cfg.backgrounds:
        if b not in BACKGROUND_WORDS:
            raise SpecError(f"unknown background {b!r}")
    s_train, s_single, s_multi = np.random.SeedSequence(seed).spawn(3)
    from .tokens import VOCAB

    rng_train = np.random.default_rng(s_train)
    n_multi = int(round(cfg.train_multi_fraction * cfg.n_train))
    train_objects = rng_train.permutation([2] * n_multi + [1] * (cfg.n_train - n_multi))
    return Corpus(
        train=_make_split(rng_train, cfg.n_train, train_objects, "train", cfg, 0),
        eval_single=_make_split(np.random.default_rng(s_single), cfg.n_eval_single, 1, "single", cfg, 0),
        eval_multiple=_make_split(np.random.default_rng(s_multi), cfg.n_eval_multiple, 2, "multiple", cfg, 0),
        vocabulary=VOCAB,
    )


def render_batch(specs, size: int = SIZE) -> np.ndarray:
    return np.stack([render_scene(s, size)[0] for s in specs])


def export_split(records, out_dir, size: int = SIZE) -> Path:
    """Write ``<id>.ppm`` per record and a ``manifest.jsonl`` next to them."""
    from .io import write_jsonl, write_ppm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in records:
        img, gts = render_scene(spec, size)
        name = f"{spec.split}_{spec.id:05d}.ppm"
        write_ppm(out / name, img)
        rows.append({"id": spec.id, "file": name, "caption": spec.caption, "split": spec.split,
                     "boxes": [g.box.as_list() for g in gts], "classes": [g.label for g in gts],
                     "shapes": [p.shape for p in spec.placements], "background": spec.background})
    write_jsonl(out / "manifest.jsonl", rows)
    return out / "manifest.jsonl"
