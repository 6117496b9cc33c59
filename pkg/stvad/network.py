"""
The dual-stream predictor.

Each subnetwork is a U-shaped autoencoder: stride-2 convolutions followed by
RTSM blocks on the (B, T, C, H, W) input clip, a memory module on the
time-merged bottleneck and one inside every skip connection, and a decoder of
transposed convolutions followed by RCAM blocks. The spatial subnetwork
predicts the next frame from frames, the temporal subnetwork predicts the next
frame difference from differences.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from stvad.blocks import ResidualChannelAttention, ResidualTemporalShift
from stvad.memory import MemoryBank, MemoryModule, ReadResult
from stvad.schemas import FusionMode, ModelConfig


@dataclass
class SubnetOutput:
    """
    What one subnetwork produced for a batch.

    ``level_features`` hold the normalized (B, N, C) memory queries of each
    module, skips first (shallow to deep) and the bottleneck last.
    """

    prediction: torch.Tensor
    level_features: List[torch.Tensor] = field(default_factory=list)
    level_read_results: List[ReadResult] = field(default_factory=list)
    banks: List[MemoryBank] = field(default_factory=list)

    @property
    def bottleneck_distance_features(self) -> Optional[torch.Tensor]:
        return self.level_features[-1] if self.level_features else None


class Subnetwork(nn.Module):
    def __init__(self, config: ModelConfig, seed: int):
        super().__init__()
        params = config.block_params()
        if not config.use_rtsm:
            params = params.copy(update={"shift_fraction": 0.0})
        self.config = config
        self.leaky_slope = config.leaky_slope
        steps = config.num_inputs
        channels = config.channels

        self.down = nn.ModuleList()
        self.rtsm = nn.ModuleList()
        in_channels = config.image_channels
        for count in channels:
            self.down.append(nn.Conv2d(in_channels, count, 3, stride=2, padding=1))
            self.rtsm.append(ResidualTemporalShift(count, params))
            in_channels = count

        # Time steps are concatenated on channels before the skips and bottleneck
        self.skip_merge = nn.ModuleList(
            nn.Conv2d(steps * count, count, kernel_size=1) for count in channels
        )
        deepest = channels[-1]
        self.bottleneck = nn.Conv2d(steps * deepest, deepest, 3, padding=1)
        self.bottleneck_fuse = nn.Conv2d(2 * deepest, deepest, kernel_size=1)

        self.memories = nn.ModuleList()
        if config.use_memory:
            for level, count in enumerate(list(channels) + [deepest]):
                self.memories.append(
                    MemoryModule(config.memory_items, count, seed=seed * 1000 + level)
                )

        self.up = nn.ModuleList()
        self.rcam = nn.ModuleList()
        for level in reversed(range(config.levels)):
            out_channels = channels[level - 1] if level > 0 else channels[0]
            self.up.append(
                nn.ConvTranspose2d(2 * channels[level], out_channels, 2, stride=2)
            )
            self.rcam.append(
                ResidualChannelAttention(out_channels, params)
                if config.use_rcam
                else nn.Identity()
            )
        self.head = nn.Conv2d(channels[0], config.image_channels, 3, padding=1)

    def _remember(self, index: int, features: torch.Tensor, output: SubnetOutput):
        if not self.memories:
            return features
        memory = self.memories[index]
        read_map, queries, result = memory(features)
        output.level_features.append(queries)
        output.level_read_results.append(result)
        output.banks.append(memory.bank)
        return read_map

    def forward(self, inputs: torch.Tensor) -> SubnetOutput:
        expected = (
            self.config.num_inputs,
            self.config.image_channels,
            *self.config.input_size,
        )
        if inputs.dim() != 5 or tuple(inputs.shape[1:]) != expected:
            raise ValueError(
                f"expected inputs of shape (B, {', '.join(map(str, expected))}), "
                f"got {tuple(inputs.shape)}"
            )
        batch, steps = inputs.shape[:2]
        output = SubnetOutput(prediction=inputs.new_empty(0))

        x = inputs
        skips = []
        for down, rtsm in zip(self.down, self.rtsm):
            frames = x.reshape(batch * steps, *x.shape[2:])
            frames = F.leaky_relu(down(frames), self.leaky_slope)
            x = rtsm(frames.reshape(batch, steps, *frames.shape[1:]))
            skips.append(x.reshape(batch, -1, *x.shape[3:]))

        z = self.bottleneck(skips[-1])
        skip_reads = [
            self._remember(level, merge(skip), output)
            for level, (merge, skip) in enumerate(zip(self.skip_merge, skips))
        ]
        z_read = self._remember(len(skips), z, output)

        x = F.leaky_relu(self.bottleneck_fuse(torch.cat([z, z_read], 1)), self.leaky_slope)
        for up, rcam, skip_read in zip(self.up, self.rcam, reversed(skip_reads)):
            x = torch.cat([x, skip_read], dim=1)
            x = rcam(F.leaky_relu(up(x), self.leaky_slope))
        output.prediction = torch.tanh(self.head(x))
        return output

    def apply_memory_updates(self) -> None:
        for memory in self.memories:
            memory.apply_pending_updates()

    def discard_memory_updates(self) -> None:
        for memory in self.memories:
            memory.discard_pending_updates()


def fuse_frames(
    i_hat: torch.Tensor,
    x_hat: torch.Tensor,
    i_last: torch.Tensor,
    mode: FusionMode = FusionMode.MEAN_MOTION_COMPENSATED,
) -> torch.Tensor:
    """
    Combine the spatial prediction Î and the temporal prediction X̂.

    mean_motion_compensated averages Î with I_last + X̂; literal_sum adds the
    two predictions; spatial and temporal keep a single stream. The result is
    clamped to [-1, 1].
    """
    if not i_hat.shape == x_hat.shape == i_last.shape:
        raise ValueError(
            f"cannot fuse shapes {tuple(i_hat.shape)}, {tuple(x_hat.shape)}, "
            f"{tuple(i_last.shape)}"
        )
    mode = FusionMode(mode)
    if mode == FusionMode.MEAN_MOTION_COMPENSATED:
        fused = 0.5 * (i_hat + (i_last + x_hat))
    elif mode == FusionMode.LITERAL_SUM:
        fused = i_hat + x_hat
    elif mode == FusionMode.SPATIAL:
        fused = i_hat
    else:
        fused = i_last + x_hat
    return fused.clamp(-1.0, 1.0)


class DualStreamNetwork(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.spatial = Subnetwork(config, seed=2 * seed)
        self.temporal = Subnetwork(config, seed=2 * seed + 1)

    def forward(
        self, frames: torch.Tensor, diffs: torch.Tensor
    ) -> Tuple[torch.Tensor, SubnetOutput, SubnetOutput]:
        return dual_forward(self, frames, diffs)

    def apply_memory_updates(self) -> None:
        self.spatial.apply_memory_updates()
        self.temporal.apply_memory_updates()

    def discard_memory_updates(self) -> None:
        self.spatial.discard_memory_updates()
        self.temporal.discard_memory_updates()

    def memory_modules(self) -> List[MemoryModule]:
        return list(self.spatial.memories) + list(self.temporal.memories)


def build_model(config: ModelConfig, seed: int = 0) -> DualStreamNetwork:
    """Build both subnetworks with parameters drawn from ``seed`` only."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return DualStreamNetwork(config, seed)


def subnet_forward(subnet: Subnetwork, inputs: torch.Tensor) -> SubnetOutput:
    return subnet(inputs)


def dual_forward(
    model: DualStreamNetwork,
    frames: torch.Tensor,
    diffs: torch.Tensor,
    mode: Optional[FusionMode] = None,
) -> Tuple[torch.Tensor, SubnetOutput, SubnetOutput]:
    """Run the spatial stream on frames, the temporal stream on differences, fuse."""
    spatial = model.spatial(frames)
    temporal = model.temporal(diffs)
    fused = fuse_frames(
        spatial.prediction,
        temporal.prediction,
        frames[:, -1],
        mode or model.config.fusion_mode,
    )
    return fused, spatial, temporal
