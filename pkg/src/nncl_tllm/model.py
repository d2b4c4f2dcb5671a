"""The full forecasting model: RevIN -> patching -> embeddings -> prompt ->
backbone -> projection -> denormalized forecast.

The model owns every parameter of the pipeline; the support queue lives in
the trainer because it is training-schedule state, not a parameter.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .backbone import (Backbone, BackboneConfig, OutputProjection,
                       apply_partition, formulate_prompt, parameter_counts)
from .config import RunConfig
from .embedding import PatchEmbedding, SeriesEmbedding, patchify
from .prototypes import PrototypeBank
from .revin import RevIN, RevinState


def torch_dtype(name: str) -> torch.dtype:
    return {"float32": torch.float32, "float64": torch.float64}[name]


class ForecastModel(nn.Module):
    def __init__(self, cfg: RunConfig, n_channels: int):
        super().__init__()
        self.cfg = cfg
        self.n_channels = n_channels
        torch.manual_seed(cfg.seed)

        self.revin = RevIN(n_channels, eps=cfg.revin_eps, affine=cfg.revin_affine)
        self.patch_embed = PatchEmbedding(cfg.patch_len, cfg.d_model)
        self.series_embed = SeriesEmbedding(cfg.n_patches, cfg.d_model,
                                            mode=cfg.series_pooling)
        self.backbone = Backbone(BackboneConfig(
            n_layers=cfg.n_layers,
            n_heads=cfg.n_heads,
            d_model=cfg.d_model,
            max_positions=cfg.positions(),
            vocab_size=cfg.vocab_size,
            causal=cfg.causal,
        ))
        self.prototypes = PrototypeBank(self.backbone.vocabulary,
                                        cfg.n_prototypes, seed=cfg.seed)
        self.head = OutputProjection(cfg.prompt_len, cfg.d_model, cfg.horizon,
                                     mode=cfg.project_positions,
                                     n_patches=cfg.n_patches)
        self.to(torch_dtype(cfg.dtype))
        self.partition = apply_partition(self)

    @property
    def vocabulary(self) -> torch.Tensor:
        return self.backbone.vocabulary

    @property
    def bank(self) -> torch.Tensor:
        return self.prototypes.embeddings

    def embed(self, x: torch.Tensor, channel_index: torch.Tensor
              ) -> tuple[torch.Tensor, torch.Tensor, RevinState]:
        """x: (B, T) raw windows -> (patch embeddings (B, N, D),
        series embeddings (B, D), revin state)."""
        x_norm, state = self.revin.normalize(x, channel_index)
        patches = patchify(x_norm, self.cfg.patch_len, self.cfg.stride)
        p = self.patch_embed(patches)
        z = self.series_embed(p)
        return p, z, state

    def forecast(self, patch_emb: torch.Tensor, neighbors: torch.Tensor,
                 state: RevinState) -> torch.Tensor:
        """Assemble the prompt, run the backbone, project and denormalize."""
        prompt = formulate_prompt(patch_emb, neighbors)
        hidden = self.backbone(prompt)
        y_norm = self.head(hidden)
        return self.revin.denormalize(y_norm, state)

    def parameter_counts(self) -> tuple[int, int]:
        return parameter_counts(self)
