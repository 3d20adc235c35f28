import random

import pytest
import torch

from conftest import TINY
from saltlab.dataset import CorpusConfig, make_corpus
from saltlab.errors import TrainingError
from saltlab.schedule import build_schedule
from saltlab.training import TrainConfig, _lr_at, train

SCHED = build_schedule(TINY.T)


@pytest.fixture(scope="module")
def records():
    return make_corpus(CorpusConfig(n_train=40, n_eval_single=1, n_eval_multiple=1), seed=3).train


def _params(model):
    return torch.cat([p.flatten() for p in model.parameters()])


def test_same_seed_same_run(records):
    cfg = TrainConfig(steps=12, batch_size=4, log_every=3)
    m1, log1 = train(records, SCHED, TINY, cfg, seed=9)
    m2, log2 = train(records, SCHED, TINY, cfg, seed=9)
    assert log1 == log2 and len(log1) == 4
    assert torch.equal(_params(m1), _params(m2))
    _, log3 = train(records, SCHED, TINY, cfg, seed=10)
    assert log3 != log1


def test_record_order_does_not_matter(records):
    cfg = TrainConfig(steps=6, batch_size=4)
    shuffled = list(records)
    random.Random(0).shuffle(shuffled)
    a, _ = train(records, SCHED, TINY, cfg, seed=1)
    b, _ = train(shuffled, SCHED, TINY, cfg, seed=1)
    assert torch.equal(_params(a), _params(b))


def test_overfit_single_example(records):
    cfg = TrainConfig(steps=2000, batch_size=8, lr=2e-3, warmup=50, p_drop=0.0, log_every=100)
    _, log = train(records[:1], SCHED, TINY, cfg, seed=0)
    assert log[-1]["loss"] < 0.05


def test_divergence_reports_step(records):
    cfg = TrainConfig(steps=50, batch_size=4, lr=1e12, warmup=1)
    with pytest.raises(TrainingError) as info:
        train(records, SCHED, TINY, cfg, seed=0)
    assert info.value.step is not None and 0 < info.value.step < 50


def test_lr_schedule():
    cfg = TrainConfig(steps=1000, lr=1e-3, warmup=100)
    assert _lr_at(cfg, 0) == pytest.approx(1e-5)
    assert _lr_at(cfg, 99) == pytest.approx(1e-3)
    assert _lr_at(cfg, 100) == pytest.approx(1e-3)
    assert _lr_at(cfg, 1000) == pytest.approx(1e-4)


def test_empty_and_mismatched(records):
    with pytest.raises(TrainingError):
        train([], SCHED, TINY, TrainConfig(steps=1))
    with pytest.raises(TrainingError):
        train(records, build_schedule(7), TINY, TrainConfig(steps=1))
