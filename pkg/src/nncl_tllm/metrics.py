"""Forecast-quality metrics.

MASE follows the printed formula whose scaling denominator is computed over
the target window itself; pass a history array to use the conventional
in-sample denominator instead.
"""

from __future__ import annotations

import numpy as np

# Standard M4 seasonal periodicities per sampling frequency.
M4_PERIODICITY = {
    "yearly": 1,
    "quarterly": 4,
    "monthly": 12,
    "weekly": 1,
    "daily": 1,
    "hourly": 24,
}


def _check(y: np.ndarray, y_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, y_hat


def mse(y: np.ndarray, y_hat: np.ndarray) -> float:
    y, y_hat = _check(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y: np.ndarray, y_hat: np.ndarray) -> float:
    y, y_hat = _check(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def smape(y: np.ndarray, y_hat: np.ndarray) -> float:
    y, y_hat = _check(y, y_hat)
    denom = np.abs(y) + np.abs(y_hat)
    zero = denom == 0
    if zero.any():
        raise ValueError(f"zero denominator in smape at index {int(np.argmax(zero))}")
    return float(200.0 / y.size * np.sum(np.abs(y - y_hat) / denom))


def mape(y: np.ndarray, y_hat: np.ndarray) -> float:
    y, y_hat = _check(y, y_hat)
    zero = y == 0
    if zero.any():
        raise ValueError(f"zero target in mape at index {int(np.argmax(zero))}")
    return float(100.0 / y.size * np.sum(np.abs(y - y_hat) / np.abs(y)))


def mase(y: np.ndarray, y_hat: np.ndarray, s: int,
         history: np.ndarray | None = None) -> float:
    """Mean absolute error scaled by the mean absolute seasonal difference.
    By default the scaling is computed over the target window (requires
    s < H); with ``history`` it is computed over the historical series."""
    y, y_hat = _check(y, y_hat)
    H = y.size
    if s < 1:
        raise ValueError("periodicity must be >= 1")
    if history is None:
        if s >= H:
            raise ValueError(f"need periodicity {s} < horizon {H} without history")
        scale = np.mean(np.abs(y[s:] - y[:-s]))
    else:
        history = np.asarray(history, dtype=np.float64)
        if history.size <= s:
            raise ValueError("history shorter than the periodicity")
        scale = np.mean(np.abs(history[s:] - history[:-s]))
    if scale == 0:
        raise ValueError("zero seasonal-difference denominator")
    return float(np.mean(np.abs(y - y_hat)) / scale)


def owa(smape_val: float, mase_val: float,
        smape_naive2: float, mase_naive2: float) -> float:
    """Average of SMAPE and MASE, each normalized by a reference method."""
    if smape_naive2 <= 0 or mase_naive2 <= 0:
        raise ValueError("reference metric values must be > 0")
    return 0.5 * (smape_val / smape_naive2 + mase_val / mase_naive2)


def seasonal_naive(history: np.ndarray, s: int, horizon: int) -> np.ndarray:
    """Repeat the last observed seasonal cycle for ``horizon`` steps."""
    history = np.asarray(history, dtype=np.float64)
    if s < 1:
        raise ValueError("periodicity must be >= 1")
    if history.size < s:
        raise ValueError(f"history of length {history.size} shorter than periodicity {s}")
    base = history.size - s
    idx = base + (np.arange(horizon) % s)
    return history[idx]
