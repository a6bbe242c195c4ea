import pytest
import torch

from diffjscc.cond_inn import (
    CondBlock,
    CondInnModel,
    depth_to_space,
    inn_loss,
    space_to_depth,
    train_inn,
)
from diffjscc.errors import ConfigurationError
from diffjscc.seeding import randomize_module


def _model(**overrides):
    base = dict(channels=3, scale=2, num_pairs=2, blocks_per_net=1, hidden=8, seed=0)
    base.update(overrides)
    return CondInnModel(**base)


def test_space_to_depth_roundtrip():
    g = torch.Generator().manual_seed(0)
    for s in [2, 4]:
        x = torch.randn(2, 3, 8, 8, generator=g)
        assert torch.equal(depth_to_space(space_to_depth(x, s), s), x)


def test_space_to_depth_offset_major_layout():
    # first C channels must be the top-left subsample, i.e. the pooled-measurement grid
    x = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(1))
    folded = space_to_depth(x, 2)
    assert torch.equal(folded[:, :3], x[:, :, ::2, ::2])
    # channel block for offset (di=0, dj=1)
    assert torch.equal(folded[:, 3:6], x[:, :, ::2, 1::2])


def test_space_to_depth_divisibility():
    with pytest.raises(ConfigurationError):
        space_to_depth(torch.randn(1, 3, 9, 8), 2)
    with pytest.raises(ConfigurationError):
        depth_to_space(torch.randn(1, 10, 4, 4), 2)


def test_scale_one_rejected():
    with pytest.raises(ConfigurationError):
        _model(scale=1)


def test_fresh_model_is_exact_split():
    # zero-initialized output convs make every coupling a no-op
    model = _model()
    x = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(2))
    c, d = model(x, snr_db=-3.0)
    folded = space_to_depth(x, 2)
    assert torch.equal(c, folded[:, :3])
    assert torch.equal(d, folded[:, 3:])
    assert torch.equal(model.inverse(c, d, -3.0), x)


def test_zeroed_final_convs_restore_exact_split():
    model = randomize_module(_model(), seed=3)
    with torch.no_grad():
        for net in list(model.pnets) + list(model.unets):
            net.proj_out.weight.zero_()
            net.proj_out.bias.zero_()
    x = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(4))
    c, d = model(x, snr_db=1.0)
    folded = space_to_depth(x, 2)
    assert torch.equal(c, folded[:, :3])
    assert torch.equal(d, folded[:, 3:])


def test_invertibility_random_weights():
    g = torch.Generator().manual_seed(5)
    for trial in range(20):
        model = randomize_module(_model(), seed=100 + trial)
        x = torch.randn(1, 3, 8, 8, generator=g)
        snr = float(torch.empty(1).uniform_(-5, 5, generator=g))
        with torch.no_grad():
            c, d = model(x, snr)
            back = model.inverse(c, d, snr)
        assert float((back - x).abs().max()) <= 1e-4


def test_forward_rank_handling():
    model = _model()
    x = torch.randn(3, 8, 8)
    c, d = model(x, 0.0)
    assert c.shape == (3, 4, 4)
    assert d.shape == (9, 4, 4)
    assert model.inverse(c, d, 0.0).shape == (3, 8, 8)


def test_inverse_shape_validation():
    model = _model()
    with pytest.raises(ConfigurationError):
        model.inverse(torch.randn(1, 3, 4, 4), torch.randn(1, 8, 4, 4), 0.0)
    with pytest.raises(ConfigurationError):
        model.inverse(torch.randn(1, 3, 4, 4), torch.randn(1, 9, 2, 2), 0.0)
    with pytest.raises(ConfigurationError):
        model(torch.randn(1, 4, 8, 8), 0.0)


def test_snr_conditioning_changes_output():
    model = randomize_module(_model(), seed=6)
    x = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(7))
    with torch.no_grad():
        c_lo, _ = model(x, -5.0)
        c_hi, _ = model(x, 5.0)
    assert not torch.equal(c_lo, c_hi)


def test_per_sample_snr_matches_scalar_calls():
    model = randomize_module(_model(), seed=8)
    x = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(9))
    with torch.no_grad():
        c_vec, d_vec = model(x, torch.tensor([-4.0, 3.0]))
        c0, d0 = model(x[:1], -4.0)
        c1, d1 = model(x[1:], 3.0)
    assert torch.allclose(c_vec[0], c0[0], atol=1e-6)
    assert torch.allclose(d_vec[1], d1[0], atol=1e-6)


def test_cond_block_neutral_gate_at_init():
    block = CondBlock(4)
    block.reset_parameters()
    x = torch.randn(2, 4, 6, 6, generator=torch.Generator().manual_seed(10))
    # alpha(snr) == 1 regardless of snr right after reset
    a = block(x, torch.full((2, 1), -0.5))
    b = block(x, torch.full((2, 1), 0.5))
    assert torch.equal(a, b)


def test_loss_gradient_reaches_all_coupling_nets():
    model = randomize_module(_model(), seed=11)
    g = torch.Generator().manual_seed(12)
    x = torch.randn(4, 3, 8, 8, generator=g)
    y = torch.randn(4, 3, 4, 4, generator=g)
    c, _ = model(x, 0.0)
    loss = inn_loss(c, y)
    loss.backward()
    for net in list(model.pnets) + list(model.unets):
        total = sum(float(p.grad.abs().sum()) for p in net.parameters() if p.grad is not None)
        assert total > 0


def test_train_inn_deterministic_and_resample_hook():
    g = torch.Generator().manual_seed(13)
    x = torch.randn(6, 3, 8, 8, generator=g)
    y = torch.randn(6, 3, 4, 4, generator=g)
    calls = []

    def resample(epoch):
        calls.append(epoch)
        return x, y, torch.zeros(6)

    histories = []
    for _ in range(2):
        model = _model()
        histories.append(
            train_inn(model, x, y, torch.zeros(6), epochs=3, batch_size=4, lr=1e-3,
                      seed=14, resample=resample)
        )
    assert histories[0] == histories[1]
    assert len(histories[0]) == 3
    assert calls == [0, 1, 2, 0, 1, 2]


def test_double_precision_supported():
    model = _model().double()
    x = torch.randn(1, 3, 8, 8, dtype=torch.float64)
    with torch.no_grad():
        c, d = model(x, 0.0)
        back = model.inverse(c, d, 0.0)
    assert back.dtype == torch.float64
    assert float((back - x).abs().max()) <= 1e-12
