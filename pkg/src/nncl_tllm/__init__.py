"""Nearest-neighbor contrastive prompt learning for time series forecasting.

Pipeline: channel-independent windowing -> reversible instance
normalization -> overlapping patch embeddings -> series embedding ->
prototype retrieval from a FIFO support set -> soft prompt -> small
GPT-2-shaped backbone with only layer norms and positional embeddings
trainable -> flattened linear projection to the forecast horizon.
"""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig

__all__ = ["ConfigError", "RunConfig", "__version__"]
