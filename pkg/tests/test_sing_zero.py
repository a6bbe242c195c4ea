import math

import pytest
import torch

from diffjscc.degradation import make_operator, rectify
from diffjscc.diffusion import Denoiser, NoiseSchedule, from_diffusion_domain, to_diffusion_domain
from diffjscc.errors import ConfigurationError
from diffjscc.sing_zero import SingZeroConfig, restore


def _denoiser(channels=3, timesteps=60):
    return Denoiser(channels=channels, width=8, depth=1,
                    schedule=NoiseSchedule.linear(timesteps), seed=0)


def test_output_agrees_with_measurement():
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    g = torch.Generator().manual_seed(0)
    for seed in range(3):
        y = torch.rand(3, 8, 8, generator=g)
        out = restore(y, model, op, SingZeroConfig(t_effective=12, seed=seed))
        assert float((op.apply(out) - y).abs().max()) <= 1e-4


def test_identity_operator_returns_measurement():
    # with A = I the whole image is pinned by the measurement
    model = _denoiser()
    op = make_operator("identity")
    y = torch.rand(3, 8, 8, generator=torch.Generator().manual_seed(1))
    out = restore(y, model, op, SingZeroConfig(t_effective=10, seed=2))
    assert torch.allclose(out, y, atol=1e-5)


def test_deterministic_in_seed():
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    y = torch.rand(3, 8, 8, generator=torch.Generator().manual_seed(3))
    a = restore(y, model, op, SingZeroConfig(t_effective=8, seed=7))
    b = restore(y, model, op, SingZeroConfig(t_effective=8, seed=7))
    c = restore(y, model, op, SingZeroConfig(t_effective=8, seed=8))
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_batched_matches_unbatched():
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    y = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(4))
    batched = restore(y, model, op, SingZeroConfig(t_effective=6, seed=5))
    single = restore(y[0], model, op, SingZeroConfig(t_effective=6, seed=5))
    assert batched.shape == (1, 3, 16, 16)
    assert single.shape == (3, 16, 16)
    assert torch.equal(batched[0], single)


def test_one_denoiser_eval_per_step():
    model = _denoiser()
    calls = []
    original = model.forward
    model.forward = lambda x, t: (calls.append(int(t.reshape(-1)[0])), original(x, t))[1]
    op = make_operator("mean_pool", 2)
    y = torch.rand(3, 8, 8, generator=torch.Generator().manual_seed(6))
    restore(y, model, op, SingZeroConfig(t_effective=7, seed=0))
    assert calls == list(range(7, 0, -1))


def test_on_step_sees_consistent_rectified_estimates():
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    y = torch.rand(3, 8, 8, generator=torch.Generator().manual_seed(7))
    y_chain = to_diffusion_domain(y[None])
    seen = []

    def on_step(t, info):
        seen.append(t)
        gap = float((op.apply(info["x0_rect"]) - y_chain).abs().max())
        assert gap <= 1e-5

    restore(y, model, op, SingZeroConfig(t_effective=9, seed=1), on_step=on_step)
    assert seen == list(range(9, 0, -1))


def test_single_step_closed_form():
    # untrained denoiser predicts eps = 0, so one step from t = 1 is exactly
    # rectify(x_init / sqrt(alpha_1), y) mapped back to [0, 1]
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    y = torch.rand(3, 8, 8, generator=torch.Generator().manual_seed(8))
    out = restore(y, model, op, SingZeroConfig(t_effective=1, seed=42))
    g = torch.Generator().manual_seed(42)
    x_init = torch.randn(1, 3, 16, 16, generator=g)
    sched = model.schedule
    x0 = x_init / math.sqrt(float(sched.alpha_bar[1]))
    expected = from_diffusion_domain(
        float(sched.posterior_coeffs(1)[1]) * rectify(x0, to_diffusion_domain(y[None]), op)
    )[0]
    assert torch.allclose(out, expected, atol=1e-6)


def test_shape_validation():
    model = _denoiser()
    op = make_operator("mean_pool", 2)
    with pytest.raises(ConfigurationError):
        restore(torch.rand(8, 8), model, op)  # missing channel dim
    with pytest.raises(ConfigurationError):
        restore(torch.rand(3, 8, 8), _denoiser(channels=1), op)
    with pytest.raises(ConfigurationError):
        restore(torch.rand(3, 8, 8), model, make_operator("decolorize"))  # y should be 1-channel
    with pytest.raises(ConfigurationError):
        restore(torch.rand(3, 8, 8), model, op, SingZeroConfig(t_effective=999))
    with pytest.raises(ConfigurationError):
        SingZeroConfig(t_effective=0)


def test_decolorize_route():
    model = _denoiser()
    op = make_operator("decolorize")
    y = torch.rand(1, 8, 8, generator=torch.Generator().manual_seed(9))
    out = restore(y, model, op, SingZeroConfig(t_effective=5, seed=3))
    assert out.shape == (3, 8, 8)
    assert float((op.apply(out) - y).abs().max()) <= 1e-4
