"""Prediction loss, feature discretization loss and the weighted objective."""

from typing import Sequence, Tuple, Union

import torch

from stvad.config import ConfigurationError
from stvad.memory import MIN_ITEMS, MemoryBank, nearest_items
from stvad.schemas import LossWeights, Reduction

Scalar = Union[float, torch.Tensor]


def prediction_loss(
    pred: torch.Tensor, target: torch.Tensor, reduction: Reduction = Reduction.MEAN
) -> torch.Tensor:
    """Squared L2 distance, averaged per element unless ``reduction`` is sum."""
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}"
        )
    squared = (pred - target) ** 2
    if reduction == Reduction.SUM:
        return squared.sum()
    return squared.mean()


def discretization_loss(
    features: torch.Tensor,
    bank: MemoryBank,
    margin_a: float = 2.0,
    margin_b: float = 1.0,
    hinge: bool = True,
    square_pair_distance: bool = False,
) -> torch.Tensor:
    """
    Margin loss pulling each feature to its nearest item p_p.

    term1 = ||q - p_p||^2 - ||q - p_n1||^2 + a
    term2 = ||q - p_p||^2 - ||p_n2 - p_n1|| + b

    where p_n1 and p_n2 are the second and third nearest items. The pair
    distance is unsquared unless ``square_pair_distance``. Returns the mean of
    term1 + term2 over the K features.
    """
    if bank.num_items < MIN_ITEMS:
        raise ConfigurationError(
            f"discretization needs at least {MIN_ITEMS} memory items, got {bank.num_items}"
        )
    order = nearest_items(features, bank, MIN_ITEMS)
    nearest = bank.items[order[:, 0]]
    second = bank.items[order[:, 1]]
    third = bank.items[order[:, 2]]

    d_nearest = ((features - nearest) ** 2).sum(dim=1)
    d_second = ((features - second) ** 2).sum(dim=1)
    pair = ((third - second) ** 2).sum(dim=1)
    if not square_pair_distance:
        pair = pair.sqrt()

    term1 = d_nearest - d_second + margin_a
    term2 = d_nearest - pair + margin_b
    if hinge:
        term1 = torch.relu(term1)
        term2 = torch.relu(term2)
    return (term1 + term2).mean()


def module_discretization_loss(
    queries: Sequence[torch.Tensor], banks: Sequence[MemoryBank], weights: LossWeights
) -> torch.Tensor:
    """Average discretization loss over every memory module of one subnetwork."""
    terms = [
        discretization_loss(
            q.reshape(-1, q.shape[-1]),
            bank,
            weights.margin_a,
            weights.margin_b,
            weights.hinge,
            weights.square_pair_distance,
        )
        for q, bank in zip(queries, banks)
    ]
    return torch.stack(terms).mean()


def total_loss(
    spatial: Tuple[Scalar, Scalar], temporal: Tuple[Scalar, Scalar], w: LossWeights
) -> Scalar:
    """L = γ_i (L_p1 + α_s L_s1) + γ_x (L_p2 + β_s L_s2)."""
    lp1, ls1 = spatial
    lp2, ls2 = temporal
    spatial_term = lp1 + w.alpha_s * ls1
    temporal_term = lp2 + w.beta_s * ls2
    return w.gamma_i * spatial_term + w.gamma_x * temporal_term
