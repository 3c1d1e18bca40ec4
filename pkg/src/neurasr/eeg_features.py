"""Windowed statistical EEG features at the 100 Hz feature rate.

Five statistics per channel and window: root mean square, zero crossing
rate, moving window average, excess kurtosis, and normalized spectral
entropy. Windows are 100 ms with a 10 ms hop, so a 31-channel recording
yields 155 feature dimensions per frame.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ChannelMap, RecordingSession, EEG_RATE_HZ

log = logging.getLogger(__name__)

FRAME_RATE_HZ = 100
WINDOW_SECONDS = 0.100
HOP_SECONDS = 0.010
STAT_NAMES = ("rms", "zcr", "moving_avg", "kurtosis", "spectral_entropy")


@dataclass
class FeatureSequence:
    """Time-major feature frames with one label per dimension."""

    frames: np.ndarray  # [T, D]
    dim_labels: list[str]
    source: str  # EEG | MFCC | FUSED
    frame_rate_hz: int = FRAME_RATE_HZ

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"frames must be a [T>=1, D] matrix, got {self.frames.shape}")
        if len(self.dim_labels) != self.frames.shape[1]:
            raise ValueError(
                f"{len(self.dim_labels)} labels for {self.frames.shape[1]} dimensions")
        if not np.isfinite(self.frames).all():
            raise ValueError("feature frames contain non-finite values")
        if self.source not in ("EEG", "MFCC", "FUSED"):
            raise ValueError(f"unknown feature source {self.source!r}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_dims(self) -> int:
        return self.frames.shape[1]


def _windowed_stats(windows: np.ndarray) -> np.ndarray:
    """Stats for a [n_windows, width] batch; returns [n_windows, 5]."""
    n, width = windows.shape
    rms = np.sqrt(np.mean(windows ** 2, axis=1))
    zcr = np.count_nonzero(windows[:, 1:] * windows[:, :-1] < 0, axis=1) / (width - 1)
    mean = windows.mean(axis=1)

    centered = windows - mean[:, None]
    m2 = np.mean(centered ** 2, axis=1)
    m4 = np.mean(centered ** 4, axis=1)
    flat = m2 == 0.0
    if flat.any():
        log.debug("kurtosis fallback to 0 for %d constant window(s)", int(flat.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        kurtosis = np.where(flat, 0.0, m4 / np.where(flat, 1.0, m2) ** 2 - 3.0)

    spectrum = np.abs(np.fft.rfft(windows, axis=1)) ** 2
    power = spectrum[:, 1:]  # positive-frequency bins, DC excluded
    total = power.sum(axis=1)
    empty = total == 0.0
    if empty.any():
        log.debug("spectral entropy fallback to 0 for %d empty-spectrum window(s)",
                  int(empty.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = power / np.where(empty, 1.0, total)[:, None]
        plogp = np.where(p > 0, p * np.log(p), 0.0)
        entropy = np.where(empty, 0.0, -plogp.sum(axis=1) / np.log(power.shape[1]))

    return np.column_stack([rms, zcr, mean, kurtosis, entropy])


def window_stats(window: np.ndarray) -> np.ndarray:
    """(rms, zcr, moving_avg, kurtosis, spectral_entropy) of one window."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1 or window.size < 8:
        raise ValueError(f"window must be 1-D with at least 8 samples, got {window.shape}")
    return _windowed_stats(window[None, :])[0]


def select_channels(channel_map: ChannelMap, names: list[str]) -> list[int]:
    """Indices of ``names`` in map order."""
    unknown = [n for n in names if n not in channel_map.names]
    if unknown:
        raise ValueError(f"unknown channel name(s): {unknown}")
    if not names:
        raise ValueError("channel selection must not be empty")
    return sorted(channel_map.index(n) for n in names)


def extract_eeg_features(session: RecordingSession,
                         selection: list[int] | None = None,
                         channel_map: ChannelMap = ChannelMap()) -> FeatureSequence:
    """Per-channel window statistics at 100 Hz (hop 10 ms, window 100 ms)."""
    if selection is None:
        selection = list(range(len(channel_map.names)))
    if not selection:
        raise ValueError("channel selection must not be empty")

    width = int(WINDOW_SECONDS * EEG_RATE_HZ)
    hop = int(HOP_SECONDS * EEG_RATE_HZ)
    n = session.eeg.shape[1]
    if n < width:
        raise ValueError(f"recording has {n} samples, shorter than one {width}-sample window")
    n_frames = (n - width) // hop + 1

    blocks, labels = [], []
    for ch in selection:
        x = np.ascontiguousarray(session.eeg[ch])
        windows = np.lib.stride_tricks.sliding_window_view(x, width)[::hop][:n_frames]
        blocks.append(_windowed_stats(windows))
        labels.extend(f"{channel_map.names[ch]}.{stat}" for stat in STAT_NAMES)

    frames = np.concatenate(blocks, axis=1)
    return FeatureSequence(frames=frames, dim_labels=labels, source="EEG")


def save_features_csv(seq: FeatureSequence, path: str | Path) -> Path:
    """One row per frame, header row of dimension labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(seq.dim_labels)
        for row in seq.frames:
            writer.writerow([f"{v:.17g}" for v in row])
    return path
