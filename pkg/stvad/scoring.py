"""Per-frame anomaly scores: PSNR, memory distances, normalization and fusion."""

from typing import Sequence, Union

import numpy as np
import torch

from stvad.memory import MemoryBank, nearest_items
from stvad.schemas import PsnrConvention

PSNR_CAP = 100.0
MIN_MSE = 1e-10

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


def to_numpy(values: ArrayLike) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().numpy().astype(np.float64)
    return np.asarray(values, dtype=np.float64)


def to_unit_range(frame: ArrayLike) -> np.ndarray:
    """Map a frame from [-1, 1] to [0, 1]."""
    return (to_numpy(frame) + 1.0) / 2.0


def psnr(
    pred: ArrayLike,
    target: ArrayLike,
    convention: PsnrConvention = PsnrConvention.PAPER,
) -> float:
    """
    PSNR in dB of frames already rescaled to [0, 1].

    The ``paper`` convention uses the unsquared max(pred) as the numerator,
    the standard one max(pred)**2. Zero error is capped at 100 dB and an
    all-black prediction uses a numerator of 1.
    """
    pred = to_numpy(pred)
    target = to_numpy(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} != {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse < MIN_MSE:
        return PSNR_CAP
    peak = float(pred.max())
    if peak <= 0:
        peak = 1.0
    if PsnrConvention(convention) == PsnrConvention.STANDARD:
        peak = peak ** 2
    return float(10.0 * np.log10(peak / mse))


def memory_distance(features: torch.Tensor, bank: MemoryBank) -> float:
    """Mean Euclidean distance between each feature and its most similar item."""
    nearest = nearest_items(features, bank, 1)[:, 0]
    with torch.no_grad():
        distances = torch.linalg.norm(features - bank.items[nearest], dim=1)
    return float(distances.mean())


def minmax_normalize(series: ArrayLike) -> np.ndarray:
    """Rescale to [0, 1]; a constant series maps to zeros."""
    values = to_numpy(series)
    if values.size == 0:
        raise ValueError("cannot normalize an empty series")
    low = values.min()
    high = values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def fuse_scores(
    psnr_series: ArrayLike,
    d_i_series: ArrayLike,
    d_x_series: ArrayLike,
    lam: float = 0.8,
) -> np.ndarray:
    """S_t = λ(1 - g(P_t)) + (1-λ)/2 g(D_i,t) + (1-λ)/2 g(D_x,t)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} is outside [0, 1]")
    psnr_values = to_numpy(psnr_series)
    d_i = to_numpy(d_i_series)
    d_x = to_numpy(d_x_series)
    if not psnr_values.shape == d_i.shape == d_x.shape:
        raise ValueError(
            f"series lengths differ: {psnr_values.shape}, {d_i.shape}, {d_x.shape}"
        )
    half = (1.0 - lam) / 2.0
    fused = (
        lam * (1.0 - minmax_normalize(psnr_values))
        + half * minmax_normalize(d_i)
        + half * minmax_normalize(d_x)
    )
    return np.clip(fused, 0.0, 1.0)
