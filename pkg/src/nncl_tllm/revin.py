"""Reversible instance normalization with a learnable per-channel affine.

Statistics are computed per window instance and treated as constants
(detached); only the affine parameters receive gradients. The state captured
at normalize time must be carried to denormalize time unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass
class RevinState:
    mean: torch.Tensor    # (B, 1), detached
    std: torch.Tensor     # (B, 1), detached
    gamma: torch.Tensor   # (B, 1), affine used at normalize time
    beta: torch.Tensor    # (B, 1)


class RevIN(nn.Module):
    def __init__(self, n_channels: int, eps: float = 1e-5, affine: bool = True):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.eps = eps
        self.affine = affine
        if affine:
            self.gamma = nn.Parameter(torch.ones(n_channels))
            self.beta = nn.Parameter(torch.zeros(n_channels))

    def normalize(self, x: torch.Tensor, channel_index: torch.Tensor
                  ) -> tuple[torch.Tensor, RevinState]:
        """x: (B, T) univariate windows; channel_index: (B,) ints selecting
        the affine parameters. Uses population variance."""
        if not torch.isfinite(x).all():
            raise ValueError("non-finite input to normalize")
        mean = x.mean(dim=1, keepdim=True).detach()
        var = x.var(dim=1, unbiased=False, keepdim=True).detach()
        std = torch.sqrt(var + self.eps)
        if self.affine:
            gamma = self.gamma[channel_index].unsqueeze(1)
            beta = self.beta[channel_index].unsqueeze(1)
        else:
            gamma = torch.ones_like(mean)
            beta = torch.zeros_like(mean)
        x_norm = gamma * (x - mean) / std + beta
        return x_norm, RevinState(mean=mean, std=std, gamma=gamma, beta=beta)

    def denormalize(self, y: torch.Tensor, state: RevinState) -> torch.Tensor:
        """Exact algebraic inverse of normalize with the stored statistics.
        y: (B, H)."""
        if torch.any(state.gamma == 0):
            raise ValueError("gamma is zero: affine is not invertible")
        return (y - state.beta) / state.gamma * state.std + state.mean
