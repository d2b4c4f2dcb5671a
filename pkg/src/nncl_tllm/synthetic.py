"""Seeded synthetic benchmark: sum of two sinusoids plus trend plus noise."""

from __future__ import annotations

import numpy as np

from .data import SeriesFrame

DOMINANT_PERIOD = 24


def make_synthetic(n_steps: int = 10_000, n_channels: int = 2, seed: int = 0,
                   noise: float = 0.1) -> SeriesFrame:
    """Each channel is a1*sin(2*pi*t/24) + a2*sin(2*pi*t/67 + phase) + trend
    + Gaussian noise, with per-channel amplitudes, phase and slope drawn from
    the seeded generator. Period 24 dominates by construction."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_steps, dtype=np.float64)
    rows = []
    for _ in range(n_channels):
        a1 = rng.uniform(1.5, 2.5)
        a2 = rng.uniform(0.4, 0.8)
        phase = rng.uniform(0, 2 * np.pi)
        slope = rng.uniform(-1.0, 1.0) * 1e-4
        row = (a1 * np.sin(2 * np.pi * t / DOMINANT_PERIOD)
               + a2 * np.sin(2 * np.pi * t / 67 + phase)
               + slope * t
               + rng.normal(0.0, noise, size=n_steps))
        rows.append(row)
    values = np.stack(rows)
    return SeriesFrame(values=values,
                       timestamps=np.arange(n_steps, dtype=np.int64),
                       frequency="hourly",
                       channel_names=tuple(f"ch{i}" for i in range(n_channels)))
