import math

import pytest
import torch
from torch import nn

from diffjscc.diffusion import (
    Denoiser,
    NoiseSchedule,
    forward_sample,
    from_diffusion_domain,
    posterior_step,
    predict_x0,
    sample,
    to_diffusion_domain,
    train_ddpm,
    train_step,
)


def test_linear_schedule_endpoints():
    s = NoiseSchedule.linear()
    assert s.T == 1000
    assert float(s.beta[1]) == pytest.approx(1e-4, rel=0, abs=1e-15)
    assert float(s.beta[1000]) == pytest.approx(0.02, rel=0, abs=1e-15)


def test_schedule_sentinels():
    s = NoiseSchedule.linear(100)
    assert float(s.beta[0]) == 0.0
    assert float(s.alpha[0]) == 1.0
    assert float(s.alpha_bar[0]) == 1.0
    assert float(s.sigma[0]) == 0.0
    assert float(s.sigma[1]) == 0.0  # no noise is re-injected at the last reverse step


def test_alpha_bar_is_running_product():
    s = NoiseSchedule.linear(1000)
    prod = 1.0
    for t in range(1, s.T + 1):
        prod *= float(s.alpha[t])
        assert abs(float(s.alpha_bar[t]) - prod) <= 1e-10
    assert bool(torch.all(s.alpha_bar[1:] < s.alpha_bar[:-1]))


def test_schedule_rejects_bad_betas():
    with pytest.raises(ValueError):
        NoiseSchedule([0.1, 1.5])
    with pytest.raises(ValueError):
        NoiseSchedule([0.0, 0.1])
    with pytest.raises(ValueError):
        NoiseSchedule([])


def test_posterior_coeffs_identity_and_t1():
    s = NoiseSchedule.linear(1000)
    for t in range(1, s.T + 1):
        c1, c2 = s.posterior_coeffs(t)
        lhs = c1 * math.sqrt(float(s.alpha_bar[t])) + c2
        assert abs(lhs - math.sqrt(float(s.alpha_bar[t - 1]))) <= 1e-10
    c1, c2 = s.posterior_coeffs(1)
    assert c1 == pytest.approx(0.0, abs=1e-12)
    assert c2 == pytest.approx(1.0, abs=1e-10)


def test_posterior_coeff_sum_deviation_closed_form():
    # the coefficients do NOT sum to 1 for t >= 2; the shortfall is exactly
    # (1 - u)(1 - v) / (1 + u v) with u = sqrt(alpha_t), v = sqrt(alpha_bar_{t-1})
    s = NoiseSchedule.linear(1000)
    worst = 0.0
    for t in [2, 10, 500, 1000]:
        c1, c2 = s.posterior_coeffs(t)
        u = math.sqrt(float(s.alpha[t]))
        v = math.sqrt(float(s.alpha_bar[t - 1]))
        predicted = (1 - u) * (1 - v) / (1 + u * v)
        assert 1.0 - (c1 + c2) == pytest.approx(predicted, abs=1e-12)
        worst = max(worst, predicted)
    assert worst > 1e-3  # the deviation is far from roundoff at large t


def test_coeff_range_checks():
    s = NoiseSchedule.linear(10)
    with pytest.raises(IndexError):
        s.posterior_coeffs(0)
    with pytest.raises(IndexError):
        s.posterior_coeffs(11)
    with pytest.raises(IndexError):
        forward_sample(torch.zeros(1, 1), 11, torch.zeros(1, 1), s)


def test_forward_sample_zero_noise():
    s = NoiseSchedule.linear(50)
    x0 = torch.randn(4, 3, 2, 2, generator=torch.Generator().manual_seed(0))
    out = forward_sample(x0, 20, torch.zeros_like(x0), s)
    assert torch.allclose(out, math.sqrt(float(s.alpha_bar[20])) * x0, atol=1e-6)


def test_forward_sample_batched_t_matches_scalar():
    s = NoiseSchedule.linear(50)
    g = torch.Generator().manual_seed(1)
    x0 = torch.randn(3, 2, 4, 4, generator=g)
    eps = torch.randn(3, 2, 4, 4, generator=g)
    t = torch.tensor([1, 25, 50])
    batched = forward_sample(x0, t, eps, s)
    for i in range(3):
        single = forward_sample(x0[i : i + 1], int(t[i]), eps[i : i + 1], s)
        assert torch.allclose(batched[i], single[0], atol=1e-7)


def test_forward_sample_moments():
    s = NoiseSchedule.linear(100)
    g = torch.Generator().manual_seed(2)
    n = 200_000
    x0 = torch.full((n, 1), 0.6)
    eps = torch.randn(n, 1, generator=g)
    xt = forward_sample(x0, 70, eps, s)
    ab = float(s.alpha_bar[70])
    assert float(xt.mean()) == pytest.approx(math.sqrt(ab) * 0.6, abs=0.01)
    assert float(xt.var()) == pytest.approx(1 - ab, rel=0.02)


class _OracleEps(nn.Module):
    """Returns a pre-registered noise tensor, ignoring the input."""

    def __init__(self, eps):
        super().__init__()
        self.eps = eps

    def forward(self, x, t):
        return self.eps.to(x.dtype)


def test_predict_x0_inverts_forward_with_oracle_noise():
    s = NoiseSchedule.linear(200)
    g = torch.Generator().manual_seed(3)
    x0 = torch.rand(2, 3, 4, 4, generator=g) * 2 - 1
    eps = torch.randn(2, 3, 4, 4, generator=g)
    for t in [1, 100, 200]:
        xt = forward_sample(x0, t, eps, s)
        rec = predict_x0(_OracleEps(eps), xt, t, s)
        assert torch.allclose(rec, x0, atol=1e-5)


def test_predict_x0_detach_eps_gradient():
    # with the network output detached, d x0 / d x_t is exactly 1 / sqrt(ab_t)
    s = NoiseSchedule.linear(100)
    x_t = torch.randn(1, 1, 2, 2, dtype=torch.float64, requires_grad=True)
    model = _OracleEps(torch.randn(1, 1, 2, 2, dtype=torch.float64))
    out = predict_x0(model, x_t, 40, s, detach_eps=True).sum()
    out.backward()
    expected = 1.0 / math.sqrt(float(s.alpha_bar[40]))
    assert torch.allclose(x_t.grad, torch.full_like(x_t, expected), atol=1e-12)


def test_posterior_step_t1_returns_estimate():
    s = NoiseSchedule.linear(500)
    g = torch.Generator().manual_seed(4)
    x_t = torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64)
    x0 = torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64)
    out = posterior_step(x_t, x0, 1, torch.zeros_like(x_t), s)
    assert torch.allclose(out, x0, atol=1e-9)


def test_domain_maps_are_inverse():
    x = torch.rand(5, 3, 2, 2)
    assert torch.allclose(from_diffusion_domain(to_diffusion_domain(x)), x, atol=1e-7)
    assert float(to_diffusion_domain(torch.zeros(1))) == -1.0
    assert float(to_diffusion_domain(torch.ones(1))) == 1.0


def test_denoiser_fresh_model_predicts_zero():
    model = Denoiser(channels=3, width=16, depth=2, schedule=NoiseSchedule.linear(10), seed=0)
    x = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(5))
    assert torch.equal(model(x, torch.tensor([3, 7])), torch.zeros(2, 3, 8, 8))


def test_denoiser_seeding():
    a = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(10), seed=1)
    b = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(10), seed=1)
    c = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(10), seed=2)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_denoiser_ctor_ignores_ambient_rng():
    torch.manual_seed(999)
    a = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(10), seed=3)
    torch.manual_seed(123)
    b = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(10), seed=3)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_train_ddpm_deterministic_and_recorded():
    images = torch.rand(4, 1, 8, 8, generator=torch.Generator().manual_seed(6))
    losses = []
    for _ in range(2):
        model = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(20), seed=0)
        losses.append(train_ddpm(model, images, steps=5, batch_size=2, lr=1e-3, seed=7))
    assert losses[0] == losses[1]
    assert len(losses[0]) == 5


def test_train_step_initial_loss_near_unit():
    # zero-init head means the first prediction is exactly 0, so the loss is E||eps||^2
    model = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(20), seed=0)
    opt = torch.optim.Adam(model.parameters(), lr=0.0)
    images = torch.rand(64, 1, 8, 8, generator=torch.Generator().manual_seed(8))
    loss = train_step(model, opt, images, torch.Generator().manual_seed(9))
    assert loss == pytest.approx(1.0, rel=0.15)


def test_sample_shapes_and_determinism():
    model = Denoiser(channels=1, width=8, depth=1, schedule=NoiseSchedule.linear(15), seed=0)
    a = sample(model, (2, 1, 8, 8), seed=11)
    b = sample(model, (2, 1, 8, 8), seed=11)
    assert torch.equal(a, b)
    assert torch.isfinite(a).all()
    assert a.shape == (2, 1, 8, 8)
