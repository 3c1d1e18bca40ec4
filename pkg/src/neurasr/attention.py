"""Word-level GRU encoder-decoder with additive attention.

The encoder consumes every feature frame; the decoder is teacher-forced,
one step per transcript word plus a terminator step, with Bahdanau-style
scores V.tanh(W1 h_t + W2 s_prev) softmax-normalized over encoder frames.
The context vector (attention-weighted sum of encoder states) is
concatenated with the previous word embedding as decoder input. Inference
is a length-normalized beam search that also scores the plain greedy
rollout, so widening the beam never returns a worse hypothesis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .eeg_features import FeatureSequence
from .nn import AdamState, GruParameters

SOS, EOS, UNK = 0, 1, 2
SPECIALS = ("<sos>", "<eos>", "<unk>")

DEFAULT_HIDDEN = 128
DEFAULT_ATTENTION_DIM = 64
DEFAULT_EMBED_DIM = 64
DEFAULT_MAX_LEN = 20
GRAD_CLIP = 5.0


@dataclass(frozen=True)
class WordVocabulary:
    """Training-split word inventory plus reserved SOS/EOS/UNK tokens."""

    words: tuple[str, ...]

    @classmethod
    def from_transcripts(cls, transcripts: list[str]) -> "WordVocabulary":
        seen = dict.fromkeys(w for t in transcripts for w in t.split())
        return cls(words=tuple(seen))

    @property
    def size(self) -> int:
        return len(self.words) + len(SPECIALS)

    def word_id(self, word: str) -> int:
        try:
            return self.words.index(word) + len(SPECIALS)
        except ValueError:
            return UNK

    def encode(self, transcript: str) -> list[int]:
        return [self.word_id(w) for w in transcript.split()]

    def decode(self, token_id: int) -> str:
        if token_id < len(SPECIALS):
            return SPECIALS[token_id]
        return self.words[token_id - len(SPECIALS)]


@dataclass
class AttentionParams:
    """Learnable additive-attention weights."""

    w1: Tensor  # [A, H] applied to encoder states
    w2: Tensor  # [A, H] applied to the previous decoder state
    v: Tensor   # [A]

    @classmethod
    def create(cls, rng: np.random.Generator, hidden_dim: int, attn_dim: int) -> "AttentionParams":
        return cls(
            w1=nn.uniform_init(rng, (attn_dim, hidden_dim), hidden_dim),
            w2=nn.uniform_init(rng, (attn_dim, hidden_dim), hidden_dim),
            v=nn.uniform_init(rng, (attn_dim,), attn_dim),
        )


@dataclass
class Hypothesis:
    """A (possibly partial) decode with per-step attention rows."""

    token_ids: list[int]
    words: list[str]
    log_prob: float                    # length-normalized
    attention: np.ndarray              # [steps, encoder frames]
    ended_by_eos: bool = False


def attention_score(h_t: Tensor, s_prev: Tensor, p: AttentionParams) -> Tensor:
    """Additive alignment score for one encoder state."""
    if h_t.shape != (p.w1.shape[1],) or s_prev.shape != (p.w2.shape[1],):
        raise ValueError(
            f"attention_score: shapes h_t{h_t.shape}, s_prev{s_prev.shape} do not match "
            f"W1{p.w1.shape}, W2{p.w2.shape}")
    hidden = ad.tanh(ad.add(ad.matmul(p.w1, h_t), ad.matmul(p.w2, s_prev)))
    return ad.matmul(p.v, hidden)


def attention_weights(states: Tensor, s_prev: Tensor, p: AttentionParams
                      ) -> tuple[Tensor, Tensor]:
    """Softmax weights over encoder frames and the context vector.

    ``states`` is the [T, H] matrix of encoder outputs. Returns (alpha [T],
    context [H]) with alpha summing to one.
    """
    projected = ad.add(ad.matmul(states, ad.transpose(p.w1)), ad.matmul(p.w2, s_prev))
    scores = ad.matmul(ad.tanh(projected), p.v)
    alpha = ad.softmax(scores)
    context = ad.matmul(alpha, states)
    return alpha, context


class AttentionModel:
    """Attention encoder-decoder over word tokens, batch size one."""

    def __init__(self, input_dim: int, vocab: WordVocabulary,
                 hidden_dim: int = DEFAULT_HIDDEN, attn_dim: int = DEFAULT_ATTENTION_DIM,
                 embed_dim: int = DEFAULT_EMBED_DIM, seed: int = 0, lr: float = 1e-3):
        self.vocab = vocab
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rng = np.random.default_rng(seed)
        self.encoder = GruParameters.create(rng, input_dim, hidden_dim)
        self.decoder = GruParameters.create(rng, embed_dim + hidden_dim, hidden_dim)
        self.attention = AttentionParams.create(rng, hidden_dim, attn_dim)
        self.embedding = nn.uniform_init(rng, (vocab.size, embed_dim), embed_dim)
        self.out_w = nn.uniform_init(rng, (vocab.size, hidden_dim), hidden_dim)
        self.out_b = nn.uniform_init(rng, (vocab.size,), hidden_dim)
        self.adam = AdamState(lr=lr)
        self.seed = seed
        self.last_attention_rows: list[np.ndarray] = []

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        params.update(self.encoder.named("enc"))
        params.update(self.decoder.named("dec"))
        params.update({"attn.w1": self.attention.w1, "attn.w2": self.attention.w2,
                       "attn.v": self.attention.v,
                       "embedding": self.embedding,
                       "out.w": self.out_w, "out.b": self.out_b})
        return params

    def encode(self, features: FeatureSequence) -> tuple[Tensor, Tensor]:
        """Run the encoder over all frames; returns ([T, H] states, final state)."""
        if features.n_dims != self.input_dim:
            raise ValueError(
                f"model expects {self.input_dim}-dim features, got {features.n_dims}")
        states = nn.gru_sequence(self.encoder, features.frames)
        return states, ad.take_row(states, features.n_frames - 1)

    def _decode_step(self, token_id: int, s_prev: Tensor, states: Tensor
                     ) -> tuple[Tensor, Tensor, Tensor]:
        alpha, context = attention_weights(states, s_prev, self.attention)
        x = ad.concat([ad.take_row(self.embedding, token_id), context])
        s = nn.gru_step(self.decoder, x, s_prev)
        probs = nn.dense_softmax(self.out_w, self.out_b, s)
        return probs, s, alpha

    def train_step(self, features: FeatureSequence, transcript: str) -> float:
        """One teacher-forced update; returns the mean per-step cross entropy.

        The decoder runs one step per transcript word plus a terminator step
        whose target is EOS, so inference can learn where to stop.
        """
        words = transcript.split()
        if not words:
            raise ValueError("transcript must contain at least one word")
        ids = []
        for w in words:
            wid = self.vocab.word_id(w)
            if wid == UNK:
                raise ValueError(f"word {w!r} is not in the training vocabulary")
            ids.append(wid)
        targets = ids + [EOS]
        inputs = [SOS] + ids

        params = self.parameters()
        for p in params.values():
            p.zero_grad()

        states, s = self.encode(features)
        self.last_attention_rows = []
        losses = []
        for token_in, target in zip(inputs, targets):
            probs, s, alpha = self._decode_step(token_in, s, states)
            self.last_attention_rows.append(alpha.data.copy())
            losses.append(nn.cross_entropy(probs, target))
        total = losses[0]
        for term in losses[1:]:
            total = ad.add(total, term)
        loss = ad.mul(total, 1.0 / len(targets))

        ad.backward(loss)
        nn.clip_gradients(params, GRAD_CLIP)
        nn.apply_adam(self.adam, params)
        return float(loss.data)

    def _rollout(self, states: Tensor, s0: Tensor, max_len: int, width: int
                 ) -> list[Hypothesis]:
        """Beam expansion; completed hypotheses leave the beam."""
        start = {"ids": [], "logp": 0.0, "state": s0, "prev": SOS,
                 "alphas": [], "steps": 0}
        beam = [start]
        completed: list[Hypothesis] = []

        for _ in range(max_len):
            if not beam:
                break
            candidates = []
            for item in beam:
                probs, s, alpha = self._decode_step(item["prev"], item["state"], states)
                logp_row = np.log(np.maximum(probs.data, nn.PROB_FLOOR))
                for token in range(self.vocab.size):
                    if token == SOS:
                        continue
                    candidates.append({
                        "ids": item["ids"] + [token],
                        "logp": item["logp"] + float(logp_row[token]),
                        "state": s,
                        "prev": token,
                        "alphas": item["alphas"] + [alpha.data.copy()],
                        "steps": item["steps"] + 1,
                    })
            candidates.sort(key=lambda c: (c["logp"] / c["steps"], -len(c["ids"]), tuple(c["ids"])),
                            reverse=True)
            beam = []
            for cand in candidates[:width]:
                if cand["prev"] == EOS:
                    completed.append(self._to_hypothesis(cand, ended_by_eos=True))
                else:
                    beam.append(cand)

        completed.extend(self._to_hypothesis(item, ended_by_eos=False) for item in beam)
        return completed

    def _to_hypothesis(self, item: dict, ended_by_eos: bool) -> Hypothesis:
        word_ids = [t for t in item["ids"] if t != EOS]
        # attention rows for word-emitting steps only
        rows = [a for a, t in zip(item["alphas"], item["ids"]) if t != EOS]
        attention = np.array(rows) if rows else np.zeros((0, item["alphas"][0].size if item["alphas"] else 0))
        return Hypothesis(
            token_ids=list(item["ids"]),
            words=[self.vocab.decode(t) for t in word_ids],
            log_prob=item["logp"] / max(item["steps"], 1),
            attention=attention,
            ended_by_eos=ended_by_eos,
        )

    def beam_decode(self, features: FeatureSequence, width: int = 4,
                    max_len: int = DEFAULT_MAX_LEN) -> Hypothesis:
        """Best hypothesis under length-normalized log probability.

        The width-1 (greedy) rollout always joins the candidate pool, so the
        returned score is non-decreasing in the width.
        """
        if width < 1:
            raise ValueError("beam width must be >= 1")
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        states, s0 = self.encode(features)
        pool = self._rollout(states, s0, max_len, width)
        if width > 1:
            pool.extend(self._rollout(states, s0, max_len, 1))
        pool.sort(key=lambda h: (h.log_prob, -len(h.token_ids), tuple(h.token_ids)),
                  reverse=True)
        return pool[0]


def export_attention(hyp: Hypothesis, path: str | Path) -> Path:
    """Write the attention grid: one row per decoder step, one column per frame."""
    if hyp.attention.shape[0] < 1:
        raise ValueError("hypothesis has no attention rows to export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"frame{t}" for t in range(hyp.attention.shape[1])])
        for row in hyp.attention:
            writer.writerow([f"{v:.12g}" for v in row])
    return path
