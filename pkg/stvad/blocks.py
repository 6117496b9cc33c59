"""
Reusable network blocks: temporal shift, RTSM, conv block, CAB and RCAM.

Clip tensors are (B, T, C, H, W); single-frame tensors are (B, C, H, W).
"""

import math
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from stvad.config import ConfigurationError
from stvad.schemas import BlockParams, ShiftMode


def check_finite(x: torch.Tensor, name: str = "input") -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains NaN or Inf values")


def shifted_channels(channels: int, shift_fraction: float) -> int:
    """Number of channels moved per temporal direction."""
    return int(math.floor(shift_fraction * channels))


def temporal_shift(
    x: torch.Tensor,
    shift_fraction: float = 0.125,
    mode: ShiftMode = ShiftMode.BIDIRECTIONAL,
    reverse: bool = False,
) -> torch.Tensor:
    """
    Shift part of the channels along the time axis of a (B, T, C, H, W) clip.

    With nf = floor(shift_fraction * C), channels [0, nf) of frame t come from
    frame t-1 and, in bidirectional mode, channels [nf, 2nf) come from frame
    t+1. Out-of-range frames contribute zeros. ``reverse`` swaps the two
    directions. No parameters are involved.
    """
    if not 0 <= shift_fraction <= 0.5:
        raise ValueError(f"shift_fraction {shift_fraction} is outside [0, 0.5]")
    if x.dim() != 5:
        raise ValueError(f"expected a (B, T, C, H, W) clip, got shape {tuple(x.shape)}")
    check_finite(x)
    nf = shifted_channels(x.shape[2], shift_fraction)
    if nf == 0:
        return x.clone()

    out = x.clone()
    groups = [slice(0, nf)]
    if mode == ShiftMode.BIDIRECTIONAL:
        groups.append(slice(nf, 2 * nf))
    for position, group in enumerate(groups):
        from_past = (position == 0) != reverse
        out[:, :, group] = 0
        if from_past:
            out[:, 1:, group] = x[:, :-1, group]
        else:
            out[:, :-1, group] = x[:, 1:, group]
    return out


def conv3x3(in_channels: int, out_channels: int) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=1, padding=1)


class ResidualTemporalShift(nn.Module):
    """RTSM: q'' = δ(q + w2 δ(w1 shift(q))) on (B, T, C, H, W) clips."""

    def __init__(self, channels: int, params: Optional[BlockParams] = None):
        super().__init__()
        params = params or BlockParams()
        self.channels = channels
        self.shift_fraction = params.shift_fraction
        self.shift_mode = params.shift_mode
        self.leaky_slope = params.leaky_slope
        self.w1 = conv3x3(channels, channels)
        self.w2 = conv3x3(channels, channels)

    def forward(self, q: torch.Tensor) -> torch.Tensor:
        if q.dim() != 5 or q.shape[2] != self.channels:
            raise ConfigurationError(
                f"RTSM built for {self.channels} channels got shape {tuple(q.shape)}"
            )
        batch, steps, channels, height, width = q.shape
        shifted = temporal_shift(q, self.shift_fraction, self.shift_mode)
        frames = shifted.reshape(batch * steps, channels, height, width)
        branch = self.w2(F.leaky_relu(self.w1(frames), self.leaky_slope))
        branch = branch.reshape(batch, steps, channels, height, width)
        return F.leaky_relu(q + branch, self.leaky_slope)


class ConvBlock(nn.Module):
    """U = W2 δ(BN(W1 q)); BN is optional."""

    def __init__(self, channels: int, params: Optional[BlockParams] = None):
        super().__init__()
        params = params or BlockParams()
        self.channels = channels
        self.leaky_slope = params.leaky_slope
        self.w1 = conv3x3(channels, channels)
        self.norm: nn.Module = (
            nn.BatchNorm2d(channels) if params.conv_batchnorm else nn.Identity()
        )
        self.w2 = conv3x3(channels, channels)

    def forward(self, q: torch.Tensor) -> torch.Tensor:
        if q.dim() != 4 or q.shape[1] != self.channels:
            raise ConfigurationError(
                f"conv block built for {self.channels} channels got shape {tuple(q.shape)}"
            )
        return self.w2(F.leaky_relu(self.norm(self.w1(q)), self.leaky_slope))


class ChannelAttention(nn.Module):
    """CAB: s(U) = σ(W4 δ(W3 GAP(U))), one weight in (0, 1) per channel."""

    def __init__(self, channels: int, params: Optional[BlockParams] = None):
        super().__init__()
        params = params or BlockParams()
        ratio = params.reduction_ratio
        if channels % ratio:
            raise ConfigurationError(
                f"reduction_ratio {ratio} does not divide channel count {channels}"
            )
        self.leaky_slope = params.leaky_slope
        self.w3 = nn.Conv2d(channels, channels // ratio, kernel_size=1)
        self.w4 = nn.Conv2d(channels // ratio, channels, kernel_size=1)

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        """Return the (B, C, 1, 1) channel weights."""
        check_finite(u, "U")
        z = u.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.w4(F.leaky_relu(self.w3(z), self.leaky_slope)))


class ResidualChannelAttention(nn.Module):
    """RCAM: q' = q + U * s(U) with U = ConvBlock(q)."""

    def __init__(self, channels: int, params: Optional[BlockParams] = None):
        super().__init__()
        self.conv_block = ConvBlock(channels, params)
        self.attention = ChannelAttention(channels, params)

    def forward(self, q: torch.Tensor) -> torch.Tensor:
        u = self.conv_block(q)
        return q + u * self.attention(u)


def cab_weights(u: torch.Tensor, block: ChannelAttention) -> torch.Tensor:
    """Channel weights as a (B, C) matrix."""
    return block(u).flatten(1)
