"""Character-level CTC recognizer: GRU encoder, dense head, beam decoding."""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from . import ctc as ctc_ops
from . import nn
from .autodiff import Tensor
from .ctc import StepDistribution, TokenSet
from .eeg_features import FeatureSequence
from .nn import AdamState, GruParameters

log = logging.getLogger(__name__)

GRAD_CLIP = 5.0


class CtcModel:
    """Frame-synchronous character recognizer trained with the CTC loss."""

    def __init__(self, input_dim: int, tokens: TokenSet = TokenSet(),
                 hidden_dim: int = 128, seed: int = 0, lr: float = 1e-3):
        self.tokens = tokens
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rng = np.random.default_rng(seed)
        self.encoder = GruParameters.create(rng, input_dim, hidden_dim)
        self.out_w = nn.uniform_init(rng, (tokens.size, hidden_dim), hidden_dim)
        self.out_b = nn.uniform_init(rng, (tokens.size,), hidden_dim)
        self.adam = AdamState(lr=lr)
        self.seed = seed

    def parameters(self) -> dict[str, Tensor]:
        params = dict(self.encoder.named("enc"))
        params.update({"out.w": self.out_w, "out.b": self.out_b})
        return params

    def _frame_logits(self, features: FeatureSequence) -> Tensor:
        if features.n_dims != self.input_dim:
            raise ValueError(
                f"model expects {self.input_dim}-dim features, got {features.n_dims}")
        states = nn.gru_sequence(self.encoder, features.frames)
        return ad.add(ad.matmul(states, ad.transpose(self.out_w)), self.out_b)

    def train_step(self, features: FeatureSequence, transcript: str) -> float:
        """One CTC update on a single utterance; returns the loss value.

        An infeasible pairing (more required label frames than encoder steps)
        reports an infinite loss and applies no update.
        """
        labels = self.tokens.encode(transcript)
        params = self.parameters()
        for p in params.values():
            p.zero_grad()
        logits = self._frame_logits(features)
        loss = ctc_ops.ctc_loss_from_logits(logits, labels)
        value = float(loss.data)
        if not np.isfinite(value):
            log.warning("skipping update: %d label frames cannot fit in %d encoder steps",
                        len(labels), features.n_frames)
            return value
        ad.backward(loss)
        nn.clip_gradients(params, GRAD_CLIP)
        nn.apply_adam(self.adam, params)
        return value

    def step_distribution(self, features: FeatureSequence) -> StepDistribution:
        logits = self._frame_logits(features).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return StepDistribution(e / e.sum(axis=1, keepdims=True))

    def decode(self, features: FeatureSequence, width: int = 8) -> tuple[str, float]:
        """Beam-decode one utterance into text with its log score."""
        labels, score = ctc_ops.ctc_beam_decode(self.step_distribution(features), width)
        return self.tokens.decode(labels), score
