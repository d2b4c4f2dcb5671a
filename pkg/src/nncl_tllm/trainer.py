"""Training loop: total loss assembly, the support-set update schedule,
early stopping, and evaluation.

Per step: normalize -> patchify/embed -> series embedding -> retrieve top-k
neighbors from the support queue -> prompt -> backbone -> projection ->
losses -> one optimizer step over the trainable parameters -> push the
updated prototype snapshot into the queue.

Until the queue holds at least k rows (and under the contrastive-loss
ablation) the contrastive term contributes zero and the prompt's neighbor
slots are filled from the live prototype bank by the same top-k rule, which
keeps the prompt shape constant and lets forecast gradients reach the bank.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch

from . import metrics as M
from .backbone import forecast_loss
from .config import RunConfig
from .data import SeriesFrame, few_shot_subset, samples_to_arrays, window
from .model import ForecastModel, torch_dtype
from .prototypes import proto_loss
from .support import SupportQueue, nncl_loss, top_k_nn


@dataclass
class StepReport:
    step: int
    loss_forecast: float
    loss_nncl: float
    loss_proto: float
    loss_total: float

    CSV_HEADER = "step,loss_forecast,loss_nncl,loss_proto,loss_total"

    def csv_row(self) -> str:
        return (f"{self.step},{self.loss_forecast:.17g},{self.loss_nncl:.17g},"
                f"{self.loss_proto:.17g},{self.loss_total:.17g}")


class Trainer:
    def __init__(self, cfg: RunConfig, n_channels: int):
        self.cfg = cfg
        self.model = ForecastModel(cfg, n_channels)
        self.queue = SupportQueue(cfg.queue_size, cfg.d_model,
                                  cfg.n_prototypes,
                                  dtype=torch_dtype(cfg.dtype))
        self.optimizer = torch.optim.Adam(
            (p for p in self.model.parameters() if p.requires_grad), lr=cfg.lr)
        self.step = 0
        self._proto_gen = torch.Generator().manual_seed(cfg.seed)

    # -- loss assembly -----------------------------------------------------

    def compute_losses(self, x: torch.Tensor, y: torch.Tensor,
                       ch: torch.Tensor) -> dict[str, torch.Tensor]:
        cfg = self.cfg
        p, z, state = self.model.embed(x, ch)
        zero = torch.zeros((), dtype=p.dtype)

        if cfg.top_k == 0:
            neighbors = p.new_zeros(p.shape[0], 0, p.shape[2])
            l_nncl = zero
        elif cfg.disable_nncl or self.queue.fill < cfg.top_k:
            _, neighbors = top_k_nn(z, self.model.bank, cfg.top_k)
            l_nncl = zero
        else:
            _, neighbors = top_k_nn(z, self.queue.filled(), cfg.top_k)
            l_nncl = nncl_loss(z, neighbors, cfg.tau)

        y_hat = self.model.forecast(p, neighbors, state)
        l_forecast = forecast_loss(y_hat, y)

        if cfg.disable_proto:
            l_proto = zero
        else:
            l_proto = proto_loss(self.model.vocabulary, self.model.bank,
                                 sample=cfg.vocab_sample,
                                 generator=self._proto_gen)

        total = l_forecast + cfg.loss_weight * (l_nncl + l_proto)
        return {"forecast": l_forecast, "nncl": l_nncl,
                "proto": l_proto, "total": total}

    def train_step(self, x: torch.Tensor, y: torch.Tensor,
                   ch: torch.Tensor) -> StepReport:
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        losses = self.compute_losses(x, y, ch)
        if not torch.isfinite(losses["total"]):
            raise RuntimeError(
                f"training diverged at step {self.step}: "
                f"forecast={float(losses['forecast'].detach())} "
                f"nncl={float(losses['nncl'].detach())} "
                f"proto={float(losses['proto'].detach())}")
        self.optimizer.zero_grad()
        losses["total"].backward()
        self.optimizer.step()
        self.queue.push(self.model.bank.detach())
        report = StepReport(
            step=self.step,
            loss_forecast=float(losses["forecast"].detach()),
            loss_nncl=float(losses["nncl"].detach()),
            loss_proto=float(losses["proto"].detach()),
            loss_total=float(losses["total"].detach()),
        )
        self.step += 1
        return report

    # -- inference ---------------------------------------------------------

    @torch.no_grad()
    def predict(self, x: torch.Tensor, ch: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        p, z, state = self.model.embed(x, ch)
        if cfg.top_k == 0:
            neighbors = p.new_zeros(p.shape[0], 0, p.shape[2])
        elif cfg.disable_nncl or self.queue.fill < cfg.top_k:
            _, neighbors = top_k_nn(z, self.model.bank, cfg.top_k)
        else:
            _, neighbors = top_k_nn(z, self.queue.filled(), cfg.top_k)
        return self.model.forecast(p, neighbors, state)

    def predict_frame(self, frame: SeriesFrame) -> tuple[np.ndarray, np.ndarray]:
        """Forecast every window of a frame. Returns (Y_hat, Y) of shape
        (n_samples, H), channel-major in window order."""
        samples = window(frame, self.cfg.lookback, self.cfg.horizon)
        x, y, ch = samples_to_arrays(samples)
        dt = torch_dtype(self.cfg.dtype)
        outs = []
        for lo in range(0, len(x), 256):
            hi = lo + 256
            out = self.predict(torch.as_tensor(x[lo:hi], dtype=dt),
                               torch.as_tensor(ch[lo:hi]))
            outs.append(out.numpy())
        return np.concatenate(outs), y


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[lo:lo + batch_size] for lo in range(0, n, batch_size)]


def fit(cfg: RunConfig, train_frame: SeriesFrame,
        val_frame: SeriesFrame | None = None
        ) -> tuple[Trainer, list[StepReport]]:
    """Train on all windows of ``train_frame`` (after the few-shot prefix
    rule), early-stopping on validation MSE, and return the trainer restored
    to the best-validation state plus the per-step loss history."""
    trainer = Trainer(cfg, train_frame.n_channels)
    samples = window(train_frame, cfg.lookback, cfg.horizon)
    if cfg.few_shot_fraction < 1.0:
        samples = few_shot_subset(samples, cfg.few_shot_fraction)
    x, y, ch = samples_to_arrays(samples)
    dt = torch_dtype(cfg.dtype)
    x_t = torch.as_tensor(x, dtype=dt)
    y_t = torch.as_tensor(y, dtype=dt)
    ch_t = torch.as_tensor(ch)

    rng = np.random.default_rng(cfg.seed)
    history: list[StepReport] = []
    best_val = float("inf")
    best_state = None
    bad_epochs = 0

    for _epoch in range(cfg.epochs):
        for idx in make_batches(len(x), cfg.batch_size, rng):
            report = trainer.train_step(x_t[idx], y_t[idx], ch_t[idx])
            history.append(report)
            if cfg.max_steps and trainer.step >= cfg.max_steps:
                break
        if val_frame is not None:
            y_hat, y_true = trainer.predict_frame(val_frame)
            val_mse = M.mse(y_true.ravel(), y_hat.ravel())
            if val_mse < best_val:
                best_val = val_mse
                best_state = (copy.deepcopy(trainer.model.state_dict()),
                              trainer.queue.state())
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > cfg.patience:
                    break
        if cfg.max_steps and trainer.step >= cfg.max_steps:
            break

    if best_state is not None:
        trainer.model.load_state_dict(best_state[0])
        trainer.queue.load_state(best_state[1])
    return trainer, history


def evaluate(trainer: Trainer, frame: SeriesFrame,
             horizons: list[int] | None = None,
             seasonality: int | None = None) -> dict:
    """Metric report over every test window, denormalized scale. Horizons
    must be prefixes of the trained horizon; each row reports metrics over
    the first h forecast steps, plus an Avg row across horizons."""
    y_hat, y = trainer.predict_frame(frame)
    if y.size == 0:
        raise ValueError("empty test set")
    hs = horizons or [trainer.cfg.horizon]
    rows = []
    for h in hs:
        if not (1 <= h <= trainer.cfg.horizon):
            raise ValueError(f"horizon {h} incompatible with trained horizon "
                             f"{trainer.cfg.horizon}")
        row = {
            "horizon": h,
            "mse": M.mse(y[:, :h].ravel(), y_hat[:, :h].ravel()),
            "mae": M.mae(y[:, :h].ravel(), y_hat[:, :h].ravel()),
        }
        if seasonality is not None:
            row["smape"] = M.smape(y[:, :h].ravel(), y_hat[:, :h].ravel())
            vals = [M.mase(yt, yh, seasonality) for yt, yh in
                    zip(y[:, :h], y_hat[:, :h])] if seasonality < h else []
            if vals:
                row["mase"] = float(np.mean(vals))
        rows.append(row)
    avg = {"horizon": "avg"}
    for key in rows[0]:
        if key != "horizon":
            avg[key] = float(np.mean([r[key] for r in rows if key in r]))
    return {"rows": rows, "avg": avg}


def reassemble(frame: SeriesFrame, y_hat: np.ndarray, lookback: int,
               horizon: int, window_start: int) -> np.ndarray:
    """Pick the per-channel forecasts for one window start out of the
    channel-major prediction stream, as an (M, H) matrix."""
    n_starts = frame.length - lookback - horizon + 1
    if not (0 <= window_start < n_starts):
        raise ValueError(f"window start {window_start} out of range")
    rows = [y_hat[ch * n_starts + window_start] for ch in range(frame.n_channels)]
    return np.stack(rows)
