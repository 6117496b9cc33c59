"""Tests for the temporal shift, RTSM and channel attention blocks"""
import numpy as np
import pytest
import torch
from torch import nn

from stvad.blocks import (
    ChannelAttention,
    ConvBlock,
    ResidualChannelAttention,
    ResidualTemporalShift,
    cab_weights,
    shifted_channels,
    temporal_shift,
)
from stvad.config import ConfigurationError
from stvad.schemas import BlockParams, ShiftMode


def shift_oracle(x, fraction, bidirectional=True, reverse=False):
    """Scalar loop over (b, t, c) following the shift rule."""
    batch, steps, channels = x.shape[:3]
    nf = int(np.floor(fraction * channels))
    out = np.array(x, copy=True)
    for b in range(batch):
        for t in range(steps):
            for c in range(channels):
                if c < nf:
                    source = t + 1 if reverse else t - 1
                elif bidirectional and c < 2 * nf:
                    source = t - 1 if reverse else t + 1
                else:
                    continue
                if 0 <= source < steps:
                    out[b, t, c] = x[b, source, c]
                else:
                    out[b, t, c] = 0.0
    return out


@pytest.mark.parametrize("mode", list(ShiftMode))
@pytest.mark.parametrize("reverse", (False, True))
def test_temporal_shift_matches_oracle(mode, reverse):
    rng = np.random.default_rng(1)
    for _ in range(25):
        steps = int(rng.integers(1, 6))
        channels = int(rng.integers(1, 17))
        fraction = float(rng.choice([0.0, 0.125, 0.25, 0.5]))
        x = rng.normal(size=(2, steps, channels, 3, 2))
        got = temporal_shift(torch.from_numpy(x), fraction, mode, reverse).numpy()
        expected = shift_oracle(
            x, fraction, bidirectional=mode == ShiftMode.BIDIRECTIONAL, reverse=reverse
        )
        np.testing.assert_array_equal(got, expected)


def test_temporal_shift_example():
    """With C=8 and f=0.125, channel 0 comes from the past and channel 1 from the future."""
    x = torch.arange(3, dtype=torch.float64).reshape(1, 3, 1, 1, 1).repeat(1, 1, 8, 1, 1)
    out = temporal_shift(x, 0.125).flatten(2)
    assert out[0, :, 0].tolist() == [0.0, 0.0, 1.0]
    assert out[0, :, 1].tolist() == [1.0, 2.0, 0.0]
    assert out[0, :, 2].tolist() == [0.0, 1.0, 2.0]


def test_temporal_shift_without_shifted_channels_is_identity():
    x = torch.randn(2, 4, 4, 3, 3)
    assert shifted_channels(4, 0.125) == 0
    assert torch.equal(temporal_shift(x, 0.125), x)


@pytest.mark.parametrize("fraction", (-0.1, 0.51))
def test_temporal_shift_rejects_fraction(fraction):
    with pytest.raises(ValueError, match="shift_fraction"):
        temporal_shift(torch.zeros(1, 2, 8, 2, 2), fraction)


def test_temporal_shift_rejects_non_finite():
    x = torch.zeros(1, 2, 8, 2, 2)
    x[0, 1, 3, 0, 0] = float("nan")
    with pytest.raises(ValueError, match="NaN"):
        temporal_shift(x)


def test_temporal_shift_rejects_frames():
    with pytest.raises(ValueError, match="clip"):
        temporal_shift(torch.zeros(2, 8, 4, 4))


def test_rtsm_keeps_shape():
    block = ResidualTemporalShift(16)
    x = torch.randn(2, 4, 16, 8, 8)
    assert block(x).shape == x.shape


def test_rtsm_channel_mismatch():
    block = ResidualTemporalShift(16)
    with pytest.raises(ConfigurationError, match="16 channels"):
        block(torch.randn(1, 4, 8, 4, 4))


def test_rtsm_residual_with_zero_branch():
    """With w2 zeroed, RTSM reduces to the leaky rectifier of its input."""
    block = ResidualTemporalShift(8, BlockParams(leaky_slope=0.2))
    nn.init.zeros_(block.w2.weight)
    nn.init.zeros_(block.w2.bias)
    x = torch.randn(1, 3, 8, 4, 4)
    expected = torch.where(x > 0, x, 0.2 * x)
    assert torch.allclose(block(x), expected)


def cab_oracle(u, block):
    """Pool, 1x1 conv, leaky, 1x1 conv, sigmoid, one channel at a time."""
    w3 = block.w3.weight.detach().numpy()[:, :, 0, 0]
    b3 = block.w3.bias.detach().numpy()
    w4 = block.w4.weight.detach().numpy()[:, :, 0, 0]
    b4 = block.w4.bias.detach().numpy()
    slope = block.leaky_slope
    out = np.zeros((u.shape[0], u.shape[1]))
    for b in range(u.shape[0]):
        z = [u[b, c].mean() for c in range(u.shape[1])]
        hidden = []
        for j in range(w3.shape[0]):
            value = b3[j] + sum(w3[j, c] * z[c] for c in range(len(z)))
            hidden.append(value if value > 0 else slope * value)
        for c in range(w4.shape[0]):
            value = b4[c] + sum(w4[c, j] * hidden[j] for j in range(len(hidden)))
            out[b, c] = 1.0 / (1.0 + np.exp(-value))
    return out


def test_channel_attention_matches_oracle():
    torch.manual_seed(0)
    rng = np.random.default_rng(2)
    for _ in range(10):
        channels = int(rng.choice([4, 8, 16]))
        block = ChannelAttention(channels, BlockParams(reduction_ratio=4)).double()
        u = rng.normal(size=(2, channels, 3, 5))
        got = cab_weights(torch.from_numpy(u), block).detach().numpy()
        np.testing.assert_allclose(got, cab_oracle(u, block), atol=1e-6)


def test_channel_attention_weights_in_unit_interval():
    block = ChannelAttention(16)
    weights = cab_weights(torch.randn(4, 16, 6, 6) * 10, block)
    assert weights.shape == (4, 16)
    assert bool(((weights > 0) & (weights < 1)).all())


def test_channel_attention_ratio_must_divide():
    with pytest.raises(ConfigurationError, match="reduction_ratio 16"):
        ChannelAttention(24)


def test_conv_block_norm_is_optional():
    assert isinstance(ConvBlock(8, BlockParams()).norm, nn.BatchNorm2d)
    assert isinstance(
        ConvBlock(8, BlockParams(conv_batchnorm=False)).norm, nn.Identity
    )


def test_rcam_is_residual():
    block = ResidualChannelAttention(8, BlockParams(reduction_ratio=4))
    nn.init.zeros_(block.conv_block.w2.weight)
    nn.init.zeros_(block.conv_block.w2.bias)
    block.eval()
    q = torch.randn(2, 8, 4, 4)
    assert torch.equal(block(q), q)


@pytest.mark.parametrize("mode", list(ShiftMode))
def test_shift_then_reverse_restores_interior_frames(mode):
    torch.manual_seed(4)
    x = torch.randn(2, 6, 16, 3, 3)
    restored = temporal_shift(temporal_shift(x, 0.25, mode), 0.25, mode, reverse=True)
    assert torch.equal(restored[:, 1:-1], x[:, 1:-1])


def test_rtsm_gradient_matches_finite_differences():
    torch.manual_seed(0)
    block = ResidualTemporalShift(8, BlockParams(shift_fraction=0.25)).double()
    q = torch.randn(1, 2, 8, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (q,), eps=1e-6, atol=1e-5, rtol=1e-3)


@pytest.mark.parametrize("batchnorm", [True, False])
def test_conv_block_gradient_matches_finite_differences(batchnorm):
    torch.manual_seed(1)
    block = ConvBlock(8, BlockParams(conv_batchnorm=batchnorm)).double().eval()
    q = torch.randn(1, 8, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (q,), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_rcam_gradient_matches_finite_differences():
    torch.manual_seed(2)
    block = ResidualChannelAttention(8, BlockParams(reduction_ratio=4)).double().eval()
    q = torch.randn(1, 8, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (q,), eps=1e-6, atol=1e-5, rtol=1e-3)
