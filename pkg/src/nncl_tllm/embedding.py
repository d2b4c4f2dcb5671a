"""Overlapping patching and the patch / series embedding layers.

A normalized window of length T is padded by replicating its final value
``stride`` times and sliced into overlapping patches of length ``patch_len``,
giving exactly (T - patch_len) // stride + 2 patches. Each patch is mapped to
d_model by a shared affine (equivalently a 1D convolution with kernel
patch_len and stride ``stride`` over the padded series), and the patch
embeddings are reduced to a single series embedding by either mean-pooling
followed by a linear layer or one affine map over the flattened patch matrix.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def patch_count(length: int, patch_len: int, stride: int) -> int:
    if length < patch_len:
        raise ValueError(f"window length {length} shorter than patch length {patch_len}")
    return (length - patch_len) // stride + 2


def patchify(x: torch.Tensor, patch_len: int, stride: int) -> torch.Tensor:
    """x: (B, T) -> patches (B, N, patch_len) with end-replication padding."""
    if x.ndim == 1:
        x = x.unsqueeze(0)
    T = x.shape[1]
    n = patch_count(T, patch_len, stride)
    pad = x[:, -1:].expand(-1, stride)
    padded = torch.cat([x, pad], dim=1)
    patches = padded.unfold(dimension=1, size=patch_len, step=stride)
    assert patches.shape[1] == n, (patches.shape, n)
    return patches


class PatchEmbedding(nn.Module):
    """Shared affine patch_len -> d_model applied to every patch."""

    def __init__(self, patch_len: int, d_model: int):
        super().__init__()
        self.proj = nn.Linear(patch_len, d_model)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.shape[-1] != self.proj.in_features:
            raise ValueError(
                f"patch length {patches.shape[-1]} does not match "
                f"embedding input size {self.proj.in_features}")
        return self.proj(patches)


class SeriesEmbedding(nn.Module):
    """Reduce (B, N, D) patch embeddings to one (B, D) series embedding.

    mode "mean": mean over patches then a D -> D linear layer.
    mode "flatten": a single (N*D) -> D affine over the flattened patches;
    N is fixed at construction time.
    """

    def __init__(self, n_patches: int, d_model: int, mode: str = "mean"):
        super().__init__()
        if mode not in ("mean", "flatten"):
            raise ValueError(f"unknown series embedding mode {mode!r}")
        self.mode = mode
        self.n_patches = n_patches
        if mode == "mean":
            self.proj = nn.Linear(d_model, d_model)
        else:
            self.proj = nn.Linear(n_patches * d_model, d_model)

    def forward(self, patch_emb: torch.Tensor) -> torch.Tensor:
        if patch_emb.shape[1] != self.n_patches:
            raise ValueError(
                f"got {patch_emb.shape[1]} patches, layer built for {self.n_patches}")
        if self.mode == "mean":
            return self.proj(patch_emb.mean(dim=1))
        return self.proj(patch_emb.reshape(patch_emb.shape[0], -1))
