"""GPT-2-shaped transformer over prompt embeddings with a frozen/trainable
parameter partition.

The backbone holds a frozen token-embedding matrix (the vocabulary used by
the prototype loss; it never enters the forward pass), learned positional
embeddings, and pre-norm blocks of causal self-attention plus a GELU MLP.
Only the layer norms and positional embeddings of the backbone train; the
attention, MLP and token-embedding weights stay frozen. Everything outside
the backbone (patch/series embeddings, prototypes, RevIN affine, output
head) is trainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class BackboneConfig:
    n_layers: int
    n_heads: int
    d_model: int
    max_positions: int
    vocab_size: int
    causal: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.max_positions < 1:
            raise ValueError("max_positions must be >= 1")


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, causal: bool):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.causal = causal
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, L, D = x.shape
        q, k, v = self.qkv(x).split(D, dim=2)
        q = q.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        att = (q @ k.transpose(2, 3)) / math.sqrt(self.head_dim)
        if self.causal:
            mask = torch.triu(torch.ones(L, L, dtype=torch.bool, device=x.device), 1)
            att = att.masked_fill(mask, float("-inf"))
        att = torch.softmax(att, dim=3)
        y = (att @ v).transpose(1, 2).reshape(B, L, D)
        return self.out(y)


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, causal: bool):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads, causal)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class Backbone(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.wte = nn.Embedding(cfg.vocab_size, cfg.d_model)   # frozen vocabulary
        self.wpe = nn.Embedding(cfg.max_positions, cfg.d_model)
        self.blocks = nn.ModuleList(
            Block(cfg.d_model, cfg.n_heads, cfg.causal) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)

    @property
    def vocabulary(self) -> torch.Tensor:
        return self.wte.weight

    def forward(self, prompt: torch.Tensor) -> torch.Tensor:
        """prompt: (B, L, D) continuous token sequence -> hidden (B, L, D)."""
        if prompt.ndim == 2:
            prompt = prompt.unsqueeze(0)
        L = prompt.shape[1]
        if L > self.cfg.max_positions:
            raise ValueError(f"prompt length {L} exceeds max positions {self.cfg.max_positions}")
        pos = torch.arange(L, device=prompt.device)
        x = prompt + self.wpe(pos)
        for block in self.blocks:
            x = block(x)
        return self.ln_f(x)


def formulate_prompt(patch_emb: torch.Tensor, neighbors: torch.Tensor) -> torch.Tensor:
    """Row-wise concatenation: patch embeddings first, retrieved neighbors
    after, in retrieval order. Accepts (N, D)+(k, D) or batched (B, N, D)+
    (B, k, D); k may be zero."""
    if neighbors.shape[-1] != patch_emb.shape[-1]:
        raise ValueError(
            f"width mismatch: {patch_emb.shape[-1]} vs {neighbors.shape[-1]}")
    return torch.cat([patch_emb, neighbors], dim=-2)


FROZEN_MARKERS = (".attn.", ".mlp.", "wte.")


def is_frozen_name(name: str) -> bool:
    """Frozen backbone parameters: attention, MLP and token-embedding
    weights. Names are matched on the backbone's own submodule paths."""
    return any(m in name or name.startswith(m.lstrip(".")) for m in FROZEN_MARKERS)


@dataclass
class ParamPartition:
    trainable: tuple[str, ...]
    frozen: tuple[str, ...]


def partition_parameters(model: nn.Module) -> ParamPartition:
    trainable, frozen = [], []
    for name, _ in model.named_parameters():
        (frozen if is_frozen_name(name) else trainable).append(name)
    return ParamPartition(trainable=tuple(trainable), frozen=tuple(frozen))


def apply_partition(model: nn.Module) -> ParamPartition:
    part = partition_parameters(model)
    frozen = set(part.frozen)
    for name, p in model.named_parameters():
        p.requires_grad_(name not in frozen)
    return part


def trainable_parameters(model: nn.Module) -> list[tuple[str, nn.Parameter]]:
    return [(n, p) for n, p in model.named_parameters() if not is_frozen_name(n)]


def parameter_counts(model: nn.Module) -> tuple[int, int]:
    trainable = sum(p.numel() for n, p in model.named_parameters()
                    if not is_frozen_name(n))
    total = sum(p.numel() for p in model.parameters())
    return trainable, total


class OutputProjection(nn.Module):
    """Flatten the backbone output positions and map them to the horizon."""

    def __init__(self, n_positions: int, d_model: int, horizon: int,
                 mode: str = "all", n_patches: int | None = None):
        super().__init__()
        if mode not in ("all", "patches"):
            raise ValueError(f"unknown projection mode {mode!r}")
        self.mode = mode
        self.n_patches = n_patches if n_patches is not None else n_positions
        used = n_positions if mode == "all" else self.n_patches
        self.proj = nn.Linear(used * d_model, horizon)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        if self.mode == "patches":
            hidden = hidden[:, :self.n_patches]
        flat = hidden.reshape(hidden.shape[0], -1)
        if flat.shape[1] != self.proj.in_features:
            raise ValueError(
                f"flattened width {flat.shape[1]} does not match projection "
                f"input {self.proj.in_features}")
        return self.proj(flat)


def forecast_loss(y_hat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Squared L2 norm of the per-sample forecast error, averaged over the
    batch (summed over the horizon, not per-element)."""
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    if y_hat.ndim == 1:
        y_hat, y = y_hat.unsqueeze(0), y.unsqueeze(0)
    diff = y_hat - y
    return (diff * diff).sum(dim=1).mean()
