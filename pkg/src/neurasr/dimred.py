"""Polynomial-kernel PCA for EEG feature reduction (155 -> 30 -> 90 dims).

The kernel matrix K_ij = (gamma x_i.x_j + coef0)^degree is double-centered
and eigendecomposed symmetrically; eigenvectors are normalized so that
lambda_i * alpha_i.alpha_i = 1, making projections kernel-space inner
products. New points are projected with training-row kernel means for
centering. Models serialize to plain JSON (matrices as nested arrays).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustic_features import add_deltas
from .eeg_features import FeatureSequence

DEFAULT_COMPONENTS = 30
DEFAULT_DEGREE = 3
DEFAULT_COEF0 = 1.0
MAX_FIT_FRAMES = 2000


@dataclass
class KpcaModel:
    """Fitted kernel-PCA state, sufficient to project new frames."""

    training_frames: np.ndarray      # [N, D]
    degree: int
    gamma: float
    coef0: float
    eigenvalues: np.ndarray          # all N, descending, clamped at 0
    alphas: np.ndarray               # [N, n_components], lambda-normalized
    n_components: int
    explained_variance_ratio: np.ndarray  # over all positive eigenvalues
    training_scores: np.ndarray      # [N, n_components]
    kernel_row_means: np.ndarray     # [N]
    kernel_total_mean: float
    subsample_seed: int | None = None

    @property
    def n_training(self) -> int:
        return self.training_frames.shape[0]

    @property
    def input_dim(self) -> int:
        return self.training_frames.shape[1]


def _poly_kernel(a: np.ndarray, b: np.ndarray, degree: int, gamma: float, coef0: float) -> np.ndarray:
    return (gamma * (a @ b.T) + coef0) ** degree


def kpca_fit(frames: np.ndarray, n_components: int = DEFAULT_COMPONENTS,
             degree: int = DEFAULT_DEGREE, gamma: float | None = None,
             coef0: float = DEFAULT_COEF0, subsample_seed: int | None = None) -> KpcaModel:
    """Fit kernel PCA on ``frames`` [N, D], retaining ``n_components``."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError(f"frames must be [N, D], got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise ValueError("frames contain non-finite values")
    n = frames.shape[0]
    if not 1 <= n_components <= n:
        raise ValueError(f"need N >= n_components >= 1, got N={n}, n_components={n_components}")
    if gamma is None:
        gamma = 1.0 / frames.shape[1]

    k = _poly_kernel(frames, frames, degree, gamma, coef0)
    ones = np.full((n, n), 1.0 / n)
    kc = k - ones @ k - k @ ones + ones @ k @ ones

    eigenvalues, vectors = np.linalg.eigh(kc)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    vectors = vectors[:, order]

    # Fixed sign convention: the largest-magnitude entry of each vector is positive.
    for i in range(n):
        j = np.argmax(np.abs(vectors[:, i]))
        if vectors[j, i] < 0:
            vectors[:, i] = -vectors[:, i]

    total = eigenvalues.sum()
    ratios = eigenvalues / total if total > 0 else np.zeros(n)

    retained = eigenvalues[:n_components]
    alphas = np.zeros((n, n_components))
    nonzero = retained > 0
    alphas[:, nonzero] = vectors[:, :n_components][:, nonzero] / np.sqrt(retained[nonzero])

    return KpcaModel(
        training_frames=frames,
        degree=degree,
        gamma=float(gamma),
        coef0=float(coef0),
        eigenvalues=eigenvalues,
        alphas=alphas,
        n_components=n_components,
        explained_variance_ratio=ratios,
        training_scores=kc @ alphas,
        kernel_row_means=k.mean(axis=0),
        kernel_total_mean=float(k.mean()),
        subsample_seed=subsample_seed,
    )


def kpca_fit_subsampled(frames: np.ndarray, n_components: int = DEFAULT_COMPONENTS,
                        max_frames: int = MAX_FIT_FRAMES, seed: int = 0,
                        **kernel_kwargs) -> KpcaModel:
    """Fit on a uniform random subsample of at most ``max_frames`` rows."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] > max_frames:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(frames.shape[0], size=max_frames, replace=False))
        frames = frames[idx]
    return kpca_fit(frames, n_components, subsample_seed=seed, **kernel_kwargs)


def kpca_transform(model: KpcaModel, frames: np.ndarray) -> np.ndarray:
    """Project [M, D] frames onto the retained components; M may be 0."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.input_dim:
        raise ValueError(
            f"frames must be [M, {model.input_dim}], got shape {frames.shape}")
    if frames.shape[0] == 0:
        return np.zeros((0, model.n_components))
    k_new = _poly_kernel(frames, model.training_frames, model.degree, model.gamma, model.coef0)
    kc = (k_new
          - model.kernel_row_means[None, :]
          - k_new.mean(axis=1, keepdims=True)
          + model.kernel_total_mean)
    return kc @ model.alphas


def build_final_eeg_features(seq: FeatureSequence, model: KpcaModel) -> FeatureSequence:
    """155-dim EEG frames -> 30 kernel components -> 90 dims with deltas."""
    scores = kpca_transform(model, seq.frames)
    labels = [f"kpc{i + 1}" for i in range(model.n_components)]
    reduced = FeatureSequence(frames=scores, dim_labels=labels, source="EEG",
                              frame_rate_hz=seq.frame_rate_hz)
    return add_deltas(reduced)


# -- persistence ---------------------------------------------------------------


def save_kpca_model(model: KpcaModel, path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "format": "neurasr-kpca-v1",
        "degree": model.degree,
        "gamma": model.gamma,
        "coef0": model.coef0,
        "n_components": model.n_components,
        "subsample_seed": model.subsample_seed,
        "training_frames": model.training_frames.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "alphas": model.alphas.tolist(),
        "explained_variance_ratio": model.explained_variance_ratio.tolist(),
        "training_scores": model.training_scores.tolist(),
        "kernel_row_means": model.kernel_row_means.tolist(),
        "kernel_total_mean": model.kernel_total_mean,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True))
    return path


def load_kpca_model(path: str | Path) -> KpcaModel:
    doc = json.loads(Path(path).read_text())
    return KpcaModel(
        training_frames=np.array(doc["training_frames"], dtype=np.float64),
        degree=int(doc["degree"]),
        gamma=float(doc["gamma"]),
        coef0=float(doc["coef0"]),
        eigenvalues=np.array(doc["eigenvalues"], dtype=np.float64),
        alphas=np.array(doc["alphas"], dtype=np.float64),
        n_components=int(doc["n_components"]),
        explained_variance_ratio=np.array(doc["explained_variance_ratio"], dtype=np.float64),
        training_scores=np.array(doc["training_scores"], dtype=np.float64),
        kernel_row_means=np.array(doc["kernel_row_means"], dtype=np.float64),
        kernel_total_mean=float(doc["kernel_total_mean"]),
        subsample_seed=doc.get("subsample_seed"),
    )


def save_explained_variance_csv(model: KpcaModel, path: str | Path) -> Path:
    """Component index, variance ratio and cumulative ratio, one row each."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cumulative = np.cumsum(model.explained_variance_ratio)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "explained_variance_ratio", "cumulative"])
        for i, (r, c) in enumerate(zip(model.explained_variance_ratio, cumulative), start=1):
            writer.writerow([i, f"{r:.12g}", f"{c:.12g}"])
    return path
