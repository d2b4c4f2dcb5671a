import numpy as np
import pytest
import torch

from nncl_tllm.config import RunConfig


def tiny_config(**overrides) -> RunConfig:
    base = dict(
        lookback=32, horizon=8, patch_len=8, stride=4,
        d_model=8, n_layers=1, n_heads=2, vocab_size=20,
        n_prototypes=4, queue_size=16, top_k=2, tau=1.0,
        loss_weight=0.01, lr=1e-2, batch_size=2, epochs=1,
        seed=0, dtype="float64",
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
