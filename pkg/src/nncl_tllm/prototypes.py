"""Learnable prototype bank trained toward neighborhoods of a frozen
vocabulary embedding matrix.

Each vocabulary row is assigned to its nearest prototype by Euclidean
distance; the prototype loss is the mean squared distance between every
vocabulary row and its assigned prototype. Assignments are recomputed each
forward pass and held fixed for the backward pass (the standard k-means-style
treatment), so gradients flow only into the prototype matrix through the
squared-distance term. The vocabulary never receives gradients.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def distance(w: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
    """Euclidean distance between two equal-length vectors."""
    if w.shape != e.shape:
        raise ValueError(f"dimension mismatch: {tuple(w.shape)} vs {tuple(e.shape)}")
    return torch.linalg.vector_norm(w - e)


def nearest_prototype(w: torch.Tensor, bank: torch.Tensor) -> tuple[int, float]:
    """Index and distance of the bank row closest to w; ties break to the
    lowest row index."""
    if bank.ndim != 2 or bank.shape[0] == 0:
        raise ValueError("prototype bank is empty")
    if bank.shape[1] != w.shape[-1]:
        raise ValueError(f"dimension mismatch: {bank.shape[1]} vs {w.shape[-1]}")
    dists = torch.linalg.vector_norm(bank - w.unsqueeze(0), dim=1)
    idx = int(torch.argmin(dists))   # argmin returns the first minimum
    return idx, float(dists[idx])


def assign(vocab: torch.Tensor, bank: torch.Tensor) -> torch.Tensor:
    """Nearest-prototype index for every vocabulary row (V,) int64."""
    if vocab.shape[1] != bank.shape[1]:
        raise ValueError("vocabulary and bank widths differ")
    d2 = torch.cdist(vocab, bank, p=2.0)
    return torch.argmin(d2, dim=1)


def proto_loss(vocab: torch.Tensor, bank: torch.Tensor,
               sample: int = 0,
               generator: torch.Generator | None = None) -> torch.Tensor:
    """Mean over vocabulary rows of the squared distance to the assigned
    prototype. With sample > 0 a seeded minibatch of rows estimates the full
    mean (unbiased given a uniform draw)."""
    if vocab.ndim != 2 or vocab.shape[0] == 0:
        raise ValueError("empty vocabulary")
    if vocab.shape[1] != bank.shape[1]:
        raise ValueError("vocabulary and bank widths differ")
    rows = vocab.detach()
    if sample > 0 and sample < rows.shape[0]:
        idx = torch.randperm(rows.shape[0], generator=generator)[:sample]
        rows = rows[idx]
    with torch.no_grad():
        assigned = assign(rows, bank.detach())
    diff = rows - bank[assigned]
    return (diff * diff).sum(dim=1).mean()


class PrototypeBank(nn.Module):
    """U learnable rows initialized from a seeded sample of vocabulary rows."""

    def __init__(self, vocab: torch.Tensor, n_prototypes: int, seed: int = 0):
        super().__init__()
        V = vocab.shape[0]
        if not (1 <= n_prototypes < V):
            raise ValueError(f"need 1 <= n_prototypes < {V}, got {n_prototypes}")
        g = torch.Generator().manual_seed(seed)
        rows = torch.randperm(V, generator=g)[:n_prototypes]
        self.embeddings = nn.Parameter(vocab[rows].detach().clone())

    @property
    def n_prototypes(self) -> int:
        return self.embeddings.shape[0]
