
import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from saltlab.denoiser import encode_captions, null_cond, predict_noise
from saltlab.errors import ContractError
from saltlab.sampler import (SamplerConfig, cfg_combine, ddim_invert, ddim_sample, ddim_step,
                             sde_noise, timestep_sequence)
from saltlab.schedule import NoiseSchedule, build_schedule, q_sample
from saltlab.tokens import tokenize


def test_cfg_identities_are_exact():
    g = torch.Generator().manual_seed(0)
    c, u = torch.randn(4, 3, 8, 8, generator=g), torch.randn(4, 3, 8, 8, generator=g)
    assert torch.equal(cfg_combine(c, u, 1.0), c)
    assert torch.equal(cfg_combine(c, u, 0.0), u)
    assert cfg_combine(1.0, 0.0, 3.0) == 3.0


def test_ddim_step_scalar():
    # alpha_bar 0.64 at t=1 and 0.25 at t=2
    s = NoiseSchedule(np.array([0.36, 1 - 0.25 / 0.64]))
    assert s.ab(1) == pytest.approx(0.64) and s.ab(2) == pytest.approx(0.25)
    z = q_sample(np.array(1.0), 2, np.array(2.0), s)
    assert z == pytest.approx(2.23205, abs=1e-5)
    out = ddim_step(z, 2, 1, np.array(2.0), s)
    assert out == pytest.approx(0.8 * 1.0 + 0.6 * 2.0, abs=1e-12)


def test_ddim_step_equal_alpha_bar_returns_input():
    s = NoiseSchedule(np.array([0.1, 0.2]))
    z = torch.randn(2, 3, 4, 4)
    # t=0 and an index beyond the first step have different alpha_bar, so fake equality via same t
    with pytest.raises(ContractError):
        ddim_step(z, 1, 1, z, s)
    s_flat = NoiseSchedule(np.array([0.1, 1e-300]))
    assert s_flat.ab(1) == s_flat.ab(2)
    out = ddim_step(z, 2, 1, torch.randn_like(z), s_flat)
    assert torch.equal(out, z) and out is not z


def test_ddim_step_shape_mismatch():
    with pytest.raises(ContractError):
        ddim_step(torch.zeros(1, 3, 4, 4), 2, 1, torch.zeros(1, 3, 4, 5), build_schedule(4))


@given(st.integers(0, 200), st.integers(0, 200), st.integers(0, 2**32 - 1))
def test_ddim_matches_q_sample_and_inverts(t, t2, seed):
    if t == t2:
        return
    s = build_schedule(200)
    rng = np.random.default_rng(seed)
    z0, eps = rng.standard_normal((3, 8, 8)), rng.standard_normal((3, 8, 8))
    zt = q_sample(z0, t, eps, s)
    moved = ddim_step(zt, t, t2, eps, s)
    target = q_sample(z0, t2, eps, s)
    assert np.linalg.norm(moved - target) <= 1e-5 * np.linalg.norm(target)
    back = ddim_step(moved, t2, t, eps, s)
    assert np.linalg.norm(back - zt) <= 1e-5 * np.linalg.norm(zt)


def test_timestep_sequence():
    assert timestep_sequence(1000, 1) == [1000]
    seq = timestep_sequence(1000, 50)
    assert len(seq) == 50 and seq[0] == 1000 and seq[-1] == 1
    assert all(a > b for a, b in zip(seq, seq[1:]))
    assert timestep_sequence(10, 10) == list(range(10, 0, -1))
    with pytest.raises(ContractError):
        timestep_sequence(10, 11)
    with pytest.raises(ContractError):
        timestep_sequence(10, 0)


def _counting(model):
    calls = []
    orig = model.forward

    def fwd(z, t, cond, **kw):
        calls.append(int(t[0]))
        return orig(z, t, cond, **kw)
    return calls, fwd


def test_single_step_sampling(tiny_model, tiny_sched, monkeypatch):
    calls, fwd = _counting(tiny_model)
    monkeypatch.setattr(tiny_model, "forward", fwd)
    z = torch.randn(1, 3, 32, 32)
    traj = ddim_sample(z, null_cond(tiny_model, 1), tiny_model, tiny_sched, SamplerConfig(steps=1))
    assert traj.timesteps == [50, 0]
    assert calls == [50, 50]
    monkeypatch.undo()
    with torch.no_grad():
        e, _ = predict_noise(tiny_model, z, 50, null_cond(tiny_model, 1))
    torch.testing.assert_close(traj.final, ddim_step(z, 50, 0, e, tiny_sched))


def test_sampling_is_deterministic(tiny_model, tiny_sched):
    z = torch.randn(2, 3, 32, 32, generator=torch.Generator().manual_seed(3))
    cond = encode_captions(tiny_model, [tokenize("a red circle on farm")] * 2)
    cfg = SamplerConfig(steps=5, cfg_weight=3.0)
    a = ddim_sample(z, cond, tiny_model, tiny_sched, cfg).final
    b = ddim_sample(z, cond, tiny_model, tiny_sched, cfg).final
    assert torch.equal(a, b)


def test_w1_null_cond_equals_unconditional(tiny_model, tiny_sched):
    z = torch.randn(1, 3, 32, 32, generator=torch.Generator().manual_seed(4))
    un = null_cond(tiny_model, 1)
    traj = ddim_sample(z, un, tiny_model, tiny_sched, SamplerConfig(steps=4, cfg_weight=1.0))
    ref = z
    seq = timestep_sequence(50, 4)
    with torch.no_grad():
        for i, t in enumerate(seq):
            e, _ = predict_noise(tiny_model, ref, t, un)
            ref = ddim_step(ref, t, seq[i + 1] if i + 1 < len(seq) else 0, e, tiny_sched)
    assert torch.equal(traj.final, ref)


def test_invert_rejects_zero_steps(tiny_model, tiny_sched):
    with pytest.raises(ContractError):
        ddim_invert(torch.zeros(1, 3, 32, 32), tiny_model, tiny_sched, 0)


def test_invert_trajectory(tiny_model, tiny_sched):
    z0 = torch.rand(1, 3, 32, 32) * 2 - 1
    zT, traj = ddim_invert(z0, tiny_model, tiny_sched, 10)
    assert traj.timesteps[0] == 0 and traj.timesteps[-1] == 50 and len(traj) == 11
    assert torch.equal(traj.latents[0], z0) and torch.equal(zT, traj.final)


def test_sde_noise():
    s = build_schedule(1000)
    z0 = torch.randn(3, 8, 8)
    out = sde_noise(z0, 1, s, np.random.default_rng(0))
    assert torch.allclose(out, z0, atol=0.05)
    a = sde_noise(z0, 500, s, np.random.default_rng(7))
    b = sde_noise(z0, 500, s, np.random.default_rng(7))
    assert torch.equal(a, b)
    with pytest.raises(ContractError):
        sde_noise(z0, 0, s, np.random.default_rng(0))
