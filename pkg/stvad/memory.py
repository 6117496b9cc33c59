"""
Memory enhancement: a bank of unit-norm normal-pattern prototypes.

Features are (K, C) matrices and a bank holds M items of dimension C. Reading
is differentiable; updating is a non-gradient refresh run after each training
batch.
"""

from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn.functional as F
from torch import nn

from stvad.config import ConfigurationError

MIN_ITEMS = 3


@dataclass(frozen=True)
class MemoryBank:
    items: torch.Tensor

    @property
    def num_items(self) -> int:
        return self.items.shape[0]

    @property
    def dim(self) -> int:
        return self.items.shape[1]


@dataclass(frozen=True)
class ReadResult:
    q_hat: torch.Tensor
    weights: torch.Tensor
    similarity: torch.Tensor


def init_bank(
    num_items: int, dim: int, seed: int, dtype: torch.dtype = torch.float32
) -> MemoryBank:
    """Draw M isotropic Gaussian rows and L2-normalize them."""
    if num_items < MIN_ITEMS:
        raise ConfigurationError(
            f"a memory bank needs at least {MIN_ITEMS} items, got {num_items}"
        )
    if dim < 1:
        raise ConfigurationError(f"memory dimension must be positive, got {dim}")
    generator = torch.Generator().manual_seed(seed)
    items = torch.randn(num_items, dim, generator=generator, dtype=torch.float64)
    return MemoryBank(F.normalize(items, dim=1).to(dtype))


def _check_features(q: torch.Tensor, bank: MemoryBank) -> None:
    if q.dim() != 2 or q.shape[1] != bank.dim:
        raise ValueError(
            f"features of shape {tuple(q.shape)} do not match a bank of dimension {bank.dim}"
        )
    if not torch.isfinite(q).all():
        raise ValueError("features contain NaN or Inf values")


def cosine_similarity(q: torch.Tensor, bank: MemoryBank) -> torch.Tensor:
    """(K, M) cosine similarities; bank rows are already unit norm."""
    return F.normalize(q, dim=1) @ bank.items.t()


def read(q: torch.Tensor, bank: MemoryBank) -> ReadResult:
    """Per-feature soft read: weights are a softmax over items of the similarity."""
    _check_features(q, bank)
    similarity = cosine_similarity(q, bank)
    weights = torch.softmax(similarity, dim=1)
    return ReadResult(q_hat=weights @ bank.items, weights=weights, similarity=similarity)


def update(q: torch.Tensor, bank: MemoryBank) -> MemoryBank:
    """
    Refresh each item with the features that chose it as their nearest item.

    Column softmax over features gives v; v is renormalized within each item's
    assigned set and the weighted features are added to the item before
    re-normalizing. Items nobody chose are returned unchanged.
    """
    _check_features(q, bank)
    with torch.no_grad():
        similarity = cosine_similarity(q, bank)
        v = torch.softmax(similarity, dim=0)
        nearest = similarity.argmax(dim=1)
        assigned = F.one_hot(nearest, bank.num_items).to(v.dtype)
        masked = v * assigned
        totals = masked.sum(dim=0)
        v_prime = masked / totals.clamp_min(torch.finfo(v.dtype).tiny)
        refreshed = F.normalize(bank.items + v_prime.t() @ q, dim=1)
        chosen = (totals > 0).unsqueeze(1)
        items = torch.where(chosen, refreshed, bank.items)
    return MemoryBank(items)


def nearest_items(q: torch.Tensor, bank: MemoryBank, n: int) -> torch.Tensor:
    """Indices of the n most similar items per feature; ties go to the lower index."""
    if n > bank.num_items:
        raise ValueError(f"asked for {n} nearest items from a bank of {bank.num_items}")
    _check_features(q, bank)
    order = torch.sort(-cosine_similarity(q, bank), dim=1, stable=True).indices
    return order[:, :n]


class MemoryModule(nn.Module):
    """
    A memory bank inside the network.

    The items live in a buffer so they are saved with the model but never
    touched by the optimizer. In training mode each forward pass queues its
    detached features; ``apply_pending_updates`` consumes the queue.
    """

    def __init__(self, num_items: int, dim: int, seed: int):
        super().__init__()
        self.register_buffer("items", init_bank(num_items, dim, seed).items)
        self._pending: List[torch.Tensor] = []

    @property
    def bank(self) -> MemoryBank:
        return MemoryBank(self.items)

    def forward(self, features: torch.Tensor):
        """
        Read a (B, C, H, W) feature map.

        Returns the read map (same shape), the normalized queries as
        (B, H*W, C) and the ReadResult over all B*H*W queries.
        """
        batch, channels, height, width = features.shape
        queries = F.normalize(
            features.permute(0, 2, 3, 1).reshape(batch, height * width, channels),
            dim=2,
        )
        flat = queries.reshape(-1, channels)
        result = read(flat, self.bank)
        if self.training:
            self._pending.append(flat.detach())
        read_map = result.q_hat.reshape(batch, height, width, channels).permute(
            0, 3, 1, 2
        )
        return read_map, queries, result

    def apply_pending_updates(self) -> Optional[MemoryBank]:
        if not self._pending:
            return None
        queued = torch.cat(self._pending, dim=0).to(self.items.dtype)
        self._pending = []
        updated = update(queued, self.bank)
        self.items.copy_(updated.items)
        return updated

    def discard_pending_updates(self) -> None:
        self._pending = []
