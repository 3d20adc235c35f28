import numpy as np
import pytest
from hypothesis import given, strategies as st

from saltlab.boxes import BBox, round_half_up
from saltlab.errors import ContractError, TokenizationError
from saltlab.tokens import MAX_LEN, VOCAB, VOCAB_SIZE, pad_batch, tokenize


def test_empty_caption_rejected():
    with pytest.raises(TokenizationError):
        tokenize("")


def test_single_caption_ids():
    seq = tokenize("a red circle on green plain")
    assert len(seq) == 6
    assert all(0 <= i < VOCAB_SIZE for i in seq.ids)
    assert seq.words == ["a", "red", "circle", "on", "green", "plain"]


def test_tokenize_is_deterministic():
    assert tokenize("a blue cross on farm") == tokenize("a blue cross on farm")


def test_unknown_word_named():
    with pytest.raises(TokenizationError, match="zebra"):
        tokenize("a red zebra")


def test_null_token_not_a_word():
    with pytest.raises(TokenizationError):
        tokenize(VOCAB[0])


def test_longest_grammar_caption_fits():
    seq = tokenize("a red circle and a blue square on green plain")
    assert len(seq) == 10 <= MAX_LEN


def test_pad_batch():
    out = pad_batch([tokenize("a red circle"), tokenize("a blue square on farm")])
    assert out.shape == (2, MAX_LEN)
    assert list(out[0, 3:]) == [0] * (MAX_LEN - 3)


@pytest.mark.parametrize("v,expect", [(0.5, 1), (1.5, 2), (2.4999, 2), (8.0, 8), (-0.5, 0)])
def test_round_half_up(v, expect):
    assert round_half_up(v) == expect


def test_quarter_box_pixels():
    b = BBox(0.25, 0.25, 0.75, 0.75)
    assert b.pixel_extent(32, 32) == (8, 24, 8, 24)
    assert b.mask(32, 32).sum() == 256


@pytest.mark.parametrize("coords", [(0.5, 0, 0.4, 1), (0, 0, 1, 1.1), (-0.1, 0, 1, 1), (0, 0.2, 1, 0.2)])
def test_invalid_boxes(coords):
    with pytest.raises(ContractError):
        BBox(*coords)


def test_parse():
    assert BBox.parse("0,0,1,1") == BBox(0, 0, 1, 1)
    for bad in ("0,0,1", "a,b,c,d", "0,0,1,1,1"):
        with pytest.raises(ContractError):
            BBox.parse(bad)


@given(st.integers(0, 31), st.integers(1, 32), st.integers(0, 31), st.integers(1, 32))
def test_from_pixels_roundtrip(r0, dr, c0, dc):
    r1, c1 = min(r0 + dr, 32), min(c0 + dc, 32)
    b = BBox.from_pixels(r0, r1, c0, c1, 32, 32)
    assert b.pixel_extent(32, 32) == (r0, r1, c0, c1)
    m = b.mask(32, 32)
    rows, cols = np.nonzero(m)
    assert (rows.min(), rows.max() + 1, cols.min(), cols.max() + 1) == (r0, r1, c0, c1)
