import json
from collections import Counter

import numpy as np
import pytest

from oracles import tight_bbox
from saltlab.boxes import BBox
from saltlab.dataset import (CorpusConfig, Placement, SceneSpec, caption_for, export_split, make_corpus,
                             render_background, render_scene)
from saltlab.errors import SpecError
from saltlab.io import read_jsonl, read_ppm
from saltlab.metrics import iou
from saltlab.palette import COLOR_RGB
from saltlab.tokens import tokenize

SMALL = CorpusConfig(n_train=200, n_eval_single=20, n_eval_multiple=10)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(SMALL, seed=5)


def test_square_gt_pixels():
    ps = (Placement("square", "red", BBox(0.25, 0.25, 0.75, 0.75)),)
    img, gts = render_scene(SceneSpec("gray-plain", ps, caption_for(ps, "gray-plain")))
    assert gts[0].box.pixel_extent(32, 32) == (8, 24, 8, 24)
    assert np.all(img[8:24, 8:24] == COLOR_RGB["red"])


def test_circle_gt_is_tight_bound():
    ps = (Placement("circle", "yellow", BBox(0.2, 0.3, 0.65, 0.7)),)
    img, gts = render_scene(SceneSpec("green-plain", ps, caption_for(ps, "green-plain")))
    bg = render_background("green-plain")
    assert gts[0].box.pixel_extent(32, 32) == tight_bbox(np.any(img != bg, axis=-1))


def test_no_placements_rejected():
    with pytest.raises(SpecError):
        render_scene(SceneSpec("gray-plain", (), "a red circle"))


def test_overlap_rejected():
    ps = (Placement("square", "red", BBox(0.2, 0.2, 0.6, 0.6)), Placement("circle", "blue", BBox(0.5, 0.5, 0.9, 0.9)))
    with pytest.raises(SpecError):
        render_scene(SceneSpec("gray-plain", ps, caption_for(ps, "gray-plain")))


def test_render_is_pure(corpus):
    spec = corpus.eval_multiple[0]
    a, ga = render_scene(spec)
    b, gb = render_scene(spec)
    np.testing.assert_array_equal(a, b)
    assert ga == gb


def test_same_seed_same_corpus(corpus):
    assert make_corpus(SMALL, seed=5) == corpus
    assert make_corpus(SMALL, seed=6) != corpus


def test_split_sizes_and_grammar(corpus):
    assert (len(corpus.train), len(corpus.eval_single), len(corpus.eval_multiple)) == (200, 20, 10)
    for r in corpus.eval_single:
        w = r.caption.split()
        assert len(r.placements) == 1 and w[0] == "a" and w[3] == "on"
    for r in corpus.eval_multiple:
        assert len(r.placements) == 2 and " and a " in r.caption
        _, gts = render_scene(r)
        assert len(gts) == 2 and iou(gts[0].box, gts[1].box) == 0.0


def test_caption_names_every_placement(corpus):
    for r in corpus.train + corpus.eval_multiple:
        words = tokenize(r.caption).words
        for p in r.placements:
            assert p.shape in words and p.color in words
        for ts, p in zip(r.token_sets("shape"), r.placements):
            assert words[ts[0]] == p.shape
        for ts, p in zip(r.token_sets("both"), r.placements):
            assert [words[i] for i in ts] == [p.color, p.shape]


def test_default_class_balance():
    train = make_corpus(CorpusConfig(n_eval_single=1, n_eval_multiple=1), seed=0).train
    assert len(train) == 8000
    for attr in ("shape", "color"):
        counts = Counter(getattr(p, attr) for r in train for p in r.placements)
        mean = sum(counts.values()) / len(counts)
        assert all(abs(c - mean) <= 0.05 * mean for c in counts.values()), counts


def test_box_sides_within_range(corpus):
    for r in corpus.train:
        for p in r.placements:
            r0, r1, c0, c1 = p.box.pixel_extent(32, 32)
            assert 6 <= r1 - r0 <= 16 and 6 <= c1 - c0 <= 16


def test_bad_counts():
    with pytest.raises(SpecError):
        make_corpus(CorpusConfig(n_train=0))


def test_export(tmp_path, corpus):
    manifest = export_split(corpus.eval_multiple[:3], tmp_path)
    rows = read_jsonl(manifest)
    assert [r["id"] for r in rows] == [r.id for r in corpus.eval_multiple[:3]]
    img, gts = render_scene(corpus.eval_multiple[0])
    back = read_ppm(tmp_path / rows[0]["file"])
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
    assert rows[0]["boxes"] == [g.box.as_list() for g in gts]
    assert json.loads(json.dumps(rows[0])) == rows[0]
