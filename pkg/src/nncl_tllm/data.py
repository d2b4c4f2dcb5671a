"""Series ingestion, chronological splits, and channel-independent windowing.

A multivariate series is always broken into univariate windows before it
reaches the model: every :class:`WindowSample` references exactly one channel
and all channels share model parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

FREQUENCIES = (
    "hourly", "15min", "10min", "daily", "weekly",
    "monthly", "quarterly", "yearly", "other",
)


@dataclass(frozen=True)
class SeriesFrame:
    """A multivariate time series: (M, T_total) values plus timestamps."""

    values: np.ndarray            # shape (M, T_total), float64
    timestamps: np.ndarray        # shape (T_total,), datetime64 or int64
    frequency: str = "other"
    channel_names: tuple = ()

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"values must be a non-empty (M, T) matrix, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("series contains non-finite values")
        if len(self.timestamps) != v.shape[1]:
            raise ValueError("timestamps length does not match series length")
        if len(self.timestamps) > 1 and np.any(self.timestamps[1:] <= self.timestamps[:-1]):
            raise ValueError("timestamps are not strictly increasing")
        if self.frequency not in FREQUENCIES:
            raise ValueError(f"unknown frequency {self.frequency!r}")
        if self.channel_names and len(self.channel_names) != v.shape[0]:
            raise ValueError("channel_names length does not match channel count")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowSample:
    """One univariate look-back window and the horizon that follows it."""

    input: np.ndarray      # length T
    target: np.ndarray     # length H
    channel_index: int
    window_start: int


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split borders, either absolute step indices or fractions."""

    train_end: float
    val_end: float
    mode: str = "absolute"    # "absolute" or "ratio"

    def resolve(self, total: int) -> tuple[int, int]:
        if self.mode == "ratio":
            tr = int(total * self.train_end)
            va = int(total * self.val_end)
        elif self.mode == "absolute":
            tr, va = int(self.train_end), int(self.val_end)
        else:
            raise ValueError(f"unknown split mode {self.mode!r}")
        if not (0 < tr < va < total):
            raise ValueError(f"invalid split borders train_end={tr} val_end={va} total={total}")
        return tr, va


# Standard ETT borders: 12 months train, 4 validation, 4 test.
def ett_split(minutes_per_step: int) -> SplitSpec:
    steps_per_month = 30 * 24 * 60 // minutes_per_step
    return SplitSpec(12 * steps_per_month, 16 * steps_per_month, mode="absolute")


ETT_HOURLY_SPLIT = ett_split(60)
ETT_15MIN_SPLIT = ett_split(15)


def load_csv(path: str | Path, forward_fill: bool = False,
             frequency: str = "other") -> SeriesFrame:
    """Load a CSV whose first column is a timestamp (or integer index) and
    whose remaining columns are numeric channels. Missing values are an error
    unless ``forward_fill`` is set."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path)
    if df.shape[1] < 2:
        raise ValueError("CSV needs a timestamp column plus at least one value column")

    ts_col = df.columns[0]
    ts_raw = df[ts_col]
    if pd.api.types.is_numeric_dtype(ts_raw):
        timestamps = ts_raw.to_numpy(np.int64)
    else:
        try:
            timestamps = pd.to_datetime(ts_raw).to_numpy()
        except (ValueError, TypeError) as exc:
            raise ValueError(f"cannot parse timestamp column {ts_col!r}: {exc}") from None

    channels = []
    names = []
    for col in df.columns[1:]:
        series = pd.to_numeric(df[col], errors="coerce")
        bad = series.isna() & df[col].notna()
        if bad.any():
            row = int(bad.idxmax())
            raise ValueError(
                f"non-numeric value at row {row}, column {col!r}: {df[col][row]!r}")
        if series.isna().any():
            if forward_fill:
                series = series.ffill()
                if series.isna().any():
                    raise ValueError(f"column {col!r} starts with a missing value")
            else:
                row = int(series.isna().idxmax())
                raise ValueError(f"missing value at row {row}, column {col!r}")
        channels.append(series.to_numpy(np.float64))
        names.append(str(col))

    values = np.stack(channels, axis=0)
    return SeriesFrame(values=values, timestamps=timestamps,
                       frequency=frequency, channel_names=tuple(names))


def load_m4(values_path: str | Path, meta_path: str | Path) -> list[dict]:
    """Load M4-style data: one comma-separated series per line, plus a
    metadata CSV mapping series-id -> frequency and horizon."""
    values_path, meta_path = Path(values_path), Path(meta_path)
    meta = {}
    for _, row in pd.read_csv(meta_path).iterrows():
        meta[str(row.iloc[0])] = {
            "frequency": str(row.iloc[1]),
            "horizon": int(row.iloc[2]),
        }
    out = []
    with open(values_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            sid, _, rest = line.partition(",")
            if sid not in meta:
                raise ValueError(f"line {lineno}: series id {sid!r} missing from metadata")
            try:
                series = np.array([float(v) for v in rest.split(",") if v != ""])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            out.append({"id": sid, "values": series, **meta[sid]})
    return out


def split(frame: SeriesFrame, spec: SplitSpec, lookback: int
          ) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Chronological train/val/test partitions. Val and test are extended
    backward by ``lookback`` steps so their first forecastable window draws
    history from the preceding partition."""
    train_end, val_end = spec.resolve(frame.length)
    parts = []
    for lo, hi in ((0, train_end),
                   (train_end - lookback, val_end),
                   (val_end - lookback, frame.length)):
        lo = max(lo, 0)
        if hi - lo < lookback + 1:
            raise ValueError(f"partition [{lo}, {hi}) too short for lookback {lookback}")
        parts.append(SeriesFrame(
            values=frame.values[:, lo:hi],
            timestamps=frame.timestamps[lo:hi],
            frequency=frame.frequency,
            channel_names=frame.channel_names,
        ))
    return tuple(parts)


def window(frame: SeriesFrame, lookback: int, horizon: int) -> list[WindowSample]:
    """Enumerate all stride-1 univariate windows: one sample per
    (channel, start) pair, channels never mixed."""
    T, H = lookback, horizon
    if frame.length < T + H:
        raise ValueError(
            f"series of length {frame.length} too short for lookback {T} + horizon {H}")
    samples = []
    n_starts = frame.length - T - H + 1
    for ch in range(frame.n_channels):
        row = frame.values[ch]
        for start in range(n_starts):
            samples.append(WindowSample(
                input=row[start:start + T],
                target=row[start + T:start + T + H],
                channel_index=ch,
                window_start=start,
            ))
    return samples


def few_shot_subset(samples: list[WindowSample], fraction: float) -> list[WindowSample]:
    """Keep the chronologically first ceil(fraction * count) samples per
    channel. Deterministic; fraction 1.0 is the identity."""
    if not samples:
        raise ValueError("empty sample list")
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    per_channel: dict[int, list[WindowSample]] = {}
    order: list[int] = []
    for s in samples:
        if s.channel_index not in per_channel:
            per_channel[s.channel_index] = []
            order.append(s.channel_index)
        per_channel[s.channel_index].append(s)
    kept = []
    for ch in order:
        group = sorted(per_channel[ch], key=lambda s: s.window_start)
        keep = math.ceil(fraction * len(group))
        kept.extend(group[:keep])
    return kept


def samples_to_arrays(samples: list[WindowSample]
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (X, Y, channel_index) arrays for batched training."""
    x = np.stack([s.input for s in samples])
    y = np.stack([s.target for s in samples])
    ch = np.array([s.channel_index for s in samples], dtype=np.int64)
    return x, y, ch
