"""MFCC extraction and temporal differentials, frame-locked to 100 Hz.

Pipeline per frame: pre-emphasis, Hamming window, power spectrum, mel
filterbank (HTK-style bin triangles), floored log, orthonormal DCT-II,
first 13 coefficients kept (c0 included). The 10 ms hop is pinned so
acoustic frames align one-to-one with EEG feature frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eeg_features import FeatureSequence

AUDIO_RATE_HZ = 16000


@dataclass(frozen=True)
class MfccConfig:
    frame_ms: int = 25
    hop_ms: int = 10
    n_mels: int = 26
    n_ceps: int = 13
    preemphasis: float = 0.97
    low_hz: float = 0.0
    high_hz: float = 8000.0
    sample_rate_hz: int = AUDIO_RATE_HZ
    n_fft: int = 512

    def __post_init__(self):
        if self.hop_ms != 10:
            raise ValueError("hop is pinned to 10 ms (100 Hz frame rate)")
        if self.n_ceps > self.n_mels:
            raise ValueError(f"n_ceps ({self.n_ceps}) must not exceed n_mels ({self.n_mels})")
        if self.high_hz > self.sample_rate_hz / 2:
            raise ValueError("high_hz above Nyquist")

    @property
    def frame_len(self) -> int:
        return self.frame_ms * self.sample_rate_hz // 1000

    @property
    def hop_len(self) -> int:
        return self.hop_ms * self.sample_rate_hz // 1000


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """[n_mels, n_fft//2 + 1] triangular filters on the mel scale."""
    points = np.linspace(hz_to_mel(cfg.low_hz), hz_to_mel(cfg.high_hz), cfg.n_mels + 2)
    bins = np.floor((cfg.n_fft + 1) * mel_to_hz(points) / cfg.sample_rate_hz).astype(int)
    fb = np.zeros((cfg.n_mels, cfg.n_fft // 2 + 1))
    for j in range(cfg.n_mels):
        for i in range(bins[j], bins[j + 1]):
            fb[j, i] = (i - bins[j]) / (bins[j + 1] - bins[j])
        for i in range(bins[j + 1], bins[j + 2]):
            fb[j, i] = (bins[j + 2] - i) / (bins[j + 2] - bins[j + 1])
    return fb


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are output coefficients."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    m = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    m *= np.sqrt(2.0 / n_in)
    m[0] /= np.sqrt(2.0)
    return m


def mfcc(audio: np.ndarray, cfg: MfccConfig = MfccConfig()) -> FeatureSequence:
    """13 mel-frequency cepstral coefficients per 10 ms frame."""
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 1 or audio.size < cfg.frame_len:
        raise ValueError(
            f"audio must be at least one frame ({cfg.frame_len} samples), got {audio.shape}")

    emphasized = np.empty_like(audio)
    emphasized[0] = audio[0]
    emphasized[1:] = audio[1:] - cfg.preemphasis * audio[:-1]

    n_frames = (audio.size - cfg.frame_len) // cfg.hop_len + 1
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop_len * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(cfg.frame_len)

    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2 / cfg.n_fft
    mel_energy = power @ mel_filterbank(cfg).T
    log_mel = np.log(np.maximum(mel_energy, 1e-10))
    ceps = log_mel @ dct_matrix(cfg.n_ceps, cfg.n_mels).T

    labels = [f"mfcc{k}" for k in range(cfg.n_ceps)]
    return FeatureSequence(frames=ceps, dim_labels=labels, source="MFCC")


def add_deltas(seq: FeatureSequence) -> FeatureSequence:
    """Append regression deltas and delta-deltas (half-window 2, edge replication)."""
    def delta(x: np.ndarray) -> np.ndarray:
        padded = np.concatenate([x[:1], x[:1], x, x[-1:], x[-1:]], axis=0)
        t = np.arange(2, 2 + x.shape[0])
        return (1 * (padded[t + 1] - padded[t - 1]) + 2 * (padded[t + 2] - padded[t - 2])) / 10.0

    d1 = delta(seq.frames)
    d2 = delta(d1)
    frames = np.concatenate([seq.frames, d1, d2], axis=1)
    labels = (list(seq.dim_labels)
              + [f"{l}.d" for l in seq.dim_labels]
              + [f"{l}.dd" for l in seq.dim_labels])
    return FeatureSequence(frames=frames, dim_labels=labels, source=seq.source)


def align_lengths(a: FeatureSequence, b: FeatureSequence) -> tuple[FeatureSequence, FeatureSequence]:
    """Truncate both sequences to the shorter frame count."""
    if a.frame_rate_hz != b.frame_rate_hz:
        raise ValueError("sequences must share a frame rate")
    t = min(a.n_frames, b.n_frames)
    if t < 1:
        raise ValueError("cannot align empty sequences")
    if t == a.n_frames and t == b.n_frames:
        return a, b
    return (
        FeatureSequence(a.frames[:t], list(a.dim_labels), a.source, a.frame_rate_hz),
        FeatureSequence(b.frames[:t], list(b.dim_labels), b.source, b.frame_rate_hz),
    )


def fuse(a: FeatureSequence, b: FeatureSequence) -> FeatureSequence:
    """Frame-wise concatenation after length alignment."""
    a, b = align_lengths(a, b)
    return FeatureSequence(
        frames=np.concatenate([a.frames, b.frames], axis=1),
        dim_labels=list(a.dim_labels) + list(b.dim_labels),
        source="FUSED",
        frame_rate_hz=a.frame_rate_hz,
    )
