"""Checkpoint persistence on top of the named-tensor archive.

Model parameters are stored under "model/<state-dict-name>" in f64, the
support queue under "support/Q". Externally converted weights can be
imported by writing an archive with the same name convention; in particular
"model/backbone.wte.weight" populates the frozen vocabulary matrix.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .archive import load_archive, save_archive
from .config import RunConfig
from .model import torch_dtype
from .trainer import Trainer


def save_checkpoint(path: str | Path, trainer: Trainer,
                    extra_meta: dict | None = None) -> None:
    tensors = {f"model/{name}": value.detach().cpu().numpy()
               for name, value in trainer.model.state_dict().items()}
    tensors["support/Q"] = trainer.queue.buffer.numpy()
    meta = {
        "config": trainer.cfg.to_dict(),
        "n_channels": trainer.model.n_channels,
        "queue_fill": trainer.queue.fill,
        "step": trainer.step,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_archive(path, tensors, meta=meta, dtype="f64")


def load_checkpoint(path: str | Path) -> Trainer:
    tensors, meta = load_archive(path)
    if "config" not in meta or "n_channels" not in meta:
        raise ValueError(f"archive {path} is not a checkpoint (missing metadata)")
    cfg = RunConfig.from_dict(meta["config"])
    trainer = Trainer(cfg, int(meta["n_channels"]))
    dt = torch_dtype(cfg.dtype)
    state = {}
    for name, value in tensors.items():
        if name.startswith("model/"):
            state[name[len("model/"):]] = torch.as_tensor(value, dtype=dt)
    missing = set(trainer.model.state_dict()) - set(state)
    if missing:
        raise ValueError(f"checkpoint {path} missing tensors: {sorted(missing)}")
    trainer.model.load_state_dict(state)
    trainer.queue.load_state({
        "buffer": torch.as_tensor(tensors["support/Q"], dtype=dt),
        "fill": int(meta.get("queue_fill", 0)),
    })
    trainer.step = int(meta.get("step", 0))
    return trainer


def export_embeddings(trainer: Trainer, what: str, out_path: str | Path,
                      allow_empty: bool = False) -> tuple[str, tuple]:
    """Export one matrix: prototypes -> "tctp/E", queue -> "support/Q",
    vocabulary -> "vocab/W". Returns (tensor name, shape)."""
    if what == "prototypes":
        name, arr = "tctp/E", trainer.model.bank.detach().numpy()
    elif what == "queue":
        arr = trainer.queue.filled().numpy()
        if arr.shape[0] == 0 and not allow_empty:
            raise ValueError("support queue is empty; pass allow_empty to export anyway")
        name = "support/Q"
    elif what == "vocabulary":
        name, arr = "vocab/W", trainer.model.vocabulary.detach().numpy()
    else:
        raise ValueError(f"unknown export selector {what!r}")
    arr = np.ascontiguousarray(arr)
    save_archive(out_path, {name: arr}, meta={"export": what})
    return name, arr.shape
