"""EEG signal conditioning: band-pass, power-line notch, cleaning hook.

Filters are Butterworth (band-pass) and second-order IIR (notch) designs
realized as cascaded second-order sections via the bilinear transform;
a direct high-order form would be numerically fragile with a 0.1 Hz edge
at a 1000 Hz rate. Filtering is single-pass causal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import signal as sps

from .corpus import RecordingSession
from .errors import FilterDesignError


@dataclass(frozen=True)
class FilterSpec:
    """Specification of a band-pass or notch filter."""

    kind: str  # "bandpass" | "notch"
    sample_rate_hz: float
    order: int = 4
    low_hz: float | None = None
    high_hz: float | None = None
    center_hz: float | None = None
    q: float = 30.0

    def __post_init__(self):
        nyquist = self.sample_rate_hz / 2.0
        if self.kind == "bandpass":
            if self.low_hz is None or self.high_hz is None:
                raise ValueError("bandpass needs low_hz and high_hz")
            if not 0 < self.low_hz < self.high_hz < nyquist:
                raise ValueError(
                    f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) < Nyquist ({nyquist})")
            if self.order < 2 or self.order % 2:
                raise ValueError(f"order must be even and >= 2, got {self.order}")
        elif self.kind == "notch":
            if self.center_hz is None:
                raise ValueError("notch needs center_hz")
            if not 0 < self.center_hz < nyquist:
                raise ValueError(f"notch center {self.center_hz} must be below Nyquist {nyquist}")
            if self.q <= 0:
                raise ValueError("notch quality factor must be positive")
        else:
            raise ValueError(f"unknown filter kind {self.kind!r}")


def design_filter(spec: FilterSpec) -> np.ndarray:
    """Return a stable cascade of second-order sections for ``spec``."""
    if spec.kind == "bandpass":
        sos = sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
                         fs=spec.sample_rate_hz, output="sos")
    else:
        b, a = sps.iirnotch(spec.center_hz, spec.q, fs=spec.sample_rate_hz)
        sos = sps.tf2sos(b, a)

    for section in sos:
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise FilterDesignError(
                f"unstable design for {spec}: pole magnitude {np.abs(poles).max():.9f}")
    return sos


def apply_filter(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Causal filtering; output length equals input length."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 1:
        raise ValueError("signal must contain at least one sample")
    if not np.isfinite(x).all():
        raise ValueError("signal contains non-finite samples")
    return sps.sosfilt(coeffs, x)


def default_bandpass(sample_rate_hz: float = 1000.0) -> FilterSpec:
    return FilterSpec(kind="bandpass", sample_rate_hz=sample_rate_hz,
                      order=4, low_hz=0.1, high_hz=70.0)


def default_notch(sample_rate_hz: float = 1000.0) -> FilterSpec:
    return FilterSpec(kind="notch", sample_rate_hz=sample_rate_hz, center_hz=60.0, q=30.0)


def clean_artifacts(session: RecordingSession,
                    cleaner: Callable[[RecordingSession], RecordingSession] | None = None
                    ) -> RecordingSession:
    """Artifact-cleaning hook; the default is the identity pass-through.

    Plug in a replacement (for example channel-mean subtraction) by passing
    ``cleaner``; it receives and returns a RecordingSession.
    """
    if cleaner is None:
        return session
    return cleaner(session)


def preprocess_session(session: RecordingSession,
                       bandpass: FilterSpec | None = None,
                       notch: FilterSpec | None = None,
                       cleaner: Callable[[RecordingSession], RecordingSession] | None = None
                       ) -> RecordingSession:
    """Band-pass + notch each EEG channel, then run the cleaning hook."""
    bandpass = bandpass or default_bandpass()
    notch = notch or default_notch()
    sos_band = design_filter(bandpass)
    sos_notch = design_filter(notch)
    eeg = np.empty_like(session.eeg)
    for c in range(session.eeg.shape[0]):
        eeg[c] = apply_filter(sos_notch, apply_filter(sos_band, session.eeg[c]))
    filtered = replace(session, eeg=eeg)
    return clean_artifacts(filtered, cleaner)
