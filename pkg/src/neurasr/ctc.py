"""Character-level connectionist temporal classification.

The collapse map merges adjacent duplicate tokens and removes blanks.
The loss is the negative log of the total probability of every frame path
that collapses to the target, computed with log-space forward (and, for
gradients, backward) recursions over the blank-interleaved label sequence.
``enumerate_extensions`` is the brute-force oracle for desk-scale lengths;
decoding is a prefix beam search that merges paths by collapsed prefix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEG_INF = -np.inf

CHARACTERS = "abcdefghijklmnopqrstuvwxyz "


@dataclass(frozen=True)
class TokenSet:
    """Prediction units: blank at index 0, then the characters in order."""

    characters: str = CHARACTERS
    blank: int = 0

    def __post_init__(self):
        if len(set(self.characters)) != len(self.characters):
            raise ValueError("token characters must be unique")

    @property
    def size(self) -> int:
        return len(self.characters) + 1

    def encode(self, text: str) -> list[int]:
        try:
            return [self.characters.index(c) + 1 for c in text]
        except ValueError:
            bad = sorted(set(text) - set(self.characters))
            raise ValueError(f"characters {bad} are not in the token set") from None

    def decode(self, indices: list[int]) -> str:
        out = []
        for i in indices:
            if not 1 <= i < self.size:
                raise ValueError(f"token index {i} out of range (blank is not decodable)")
            out.append(self.characters[i - 1])
        return "".join(out)


@dataclass
class StepDistribution:
    """Per-time-step probability rows over the token set."""

    probs: np.ndarray  # [T, K]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("StepDistribution expects a [T, K] matrix")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be non-negative")
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("each row must sum to 1 within 1e-9")

    @property
    def n_steps(self) -> int:
        return self.probs.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.probs.shape[1]


def collapse(path, blank: int = 0) -> list[int]:
    """Merge adjacent duplicates, then delete blanks (the CTC mapping)."""
    out: list[int] = []
    prev = None
    for tok in path:
        if tok != prev:
            out.append(tok)
        prev = tok
    return [t for t in out if t != blank]


def _min_path_length(y: list[int]) -> int:
    repeats = sum(1 for a, b in zip(y, y[1:]) if a == b)
    return len(y) + repeats


def enumerate_extensions(y, T: int, blank: int = 0) -> list[tuple[int, ...]]:
    """All length-T token paths that collapse to ``y``. Oracle for small T."""
    y = list(y)
    if blank in y:
        raise ValueError("target labels must not contain the blank token")
    if T < 0:
        raise ValueError("T must be non-negative")
    results: list[tuple[int, ...]] = []
    U = len(y)

    # Remaining cost if i labels are consumed and the previous path token is `last`.
    def lower_bound(i: int, last: int) -> int:
        need = _min_path_length(y[i:])
        if i < U and last == y[i]:
            need += 1  # a separating blank is forced before a repeat
        return need

    def walk(prefix: list[int], i: int, last: int, t: int) -> None:
        if t == T:
            if i == U:
                results.append(tuple(prefix))
            return
        if T - t < lower_bound(i, last):
            return
        # At most three continuations keep the collapse on target: a blank,
        # a repeat of the previous token, or the next unconsumed label.
        prefix.append(blank)
        walk(prefix, i, blank, t + 1)
        prefix.pop()
        if last != blank:
            prefix.append(last)
            walk(prefix, i, last, t + 1)
            prefix.pop()
        if i < U and (last == blank or y[i] != last):
            prefix.append(y[i])
            walk(prefix, i + 1, y[i], t + 1)
            prefix.pop()

    walk([], 0, blank, 0)
    return results


# -- forward/backward recursions ----------------------------------------------


def _interleaved(y: list[int], blank: int) -> np.ndarray:
    ext = np.full(2 * len(y) + 1, blank, dtype=np.int64)
    ext[1::2] = y
    return ext


def _log_alpha(logp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """Forward log-probabilities over the interleaved label states."""
    T, S = logp.shape[0], ext.shape[0]
    lp = logp[:, ext]  # [T, S]
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[2:] = (ext[2:] != ext[:-2]) & (ext[2:] != ext[0])  # ext[0] is blank
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp[0, 0]
    if S > 1:
        alpha[0, 1] = lp[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        if S > 2:
            with np.errstate(invalid="ignore"):
                acc[2:] = np.where(skip_ok[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + lp[t]
    return alpha


def _log_beta_inclusive(logp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """Backward log-probabilities, including the emission at time t."""
    T, S = logp.shape[0], ext.shape[0]
    lp = logp[:, ext]
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[:-2] = (ext[:-2] != ext[2:]) & (ext[2:] != ext[0])
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = lp[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = lp[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        if S > 2:
            acc[:-2] = np.where(skip_ok[:-2], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + lp[t]
    return beta


def _log_total(alpha: np.ndarray) -> float:
    S = alpha.shape[1]
    total = alpha[-1, S - 1]
    if S > 1:
        total = np.logaddexp(total, alpha[-1, S - 2])
    return float(total)


def log_sequence_probability(logp: np.ndarray, y: list[int], blank: int = 0) -> float:
    """log P(y | frame log-probabilities); -inf when no path of length T exists."""
    T = logp.shape[0]
    if T < _min_path_length(y):
        return NEG_INF
    if len(y) == 0:
        return float(logp[:, blank].sum())
    ext = _interleaved(list(y), blank)
    return _log_total(_log_alpha(logp, ext))


def ctc_loss(dist: StepDistribution | np.ndarray, y) -> float:
    """-ln P(y | dist). Infeasible targets (T too short) yield +inf, not an error."""
    probs = dist.probs if isinstance(dist, StepDistribution) else np.asarray(dist, dtype=np.float64)
    y = list(y)
    if any(t == 0 for t in y):
        raise ValueError("target labels must not contain the blank token")
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    return -log_sequence_probability(logp, y)


def ctc_loss_from_logits(logits: Tensor, y, blank: int = 0) -> Tensor:
    """Recorded CTC loss on pre-softmax frame logits [T, K].

    Backward uses the classic identity: d(-ln P)/d logit[t,k] equals the
    softmax probability minus the label-posterior mass at (t, k).
    """
    logits = ad.as_tensor(logits)
    y = [int(t) for t in y]
    if any(t == blank for t in y):
        raise ValueError("target labels must not contain the blank token")
    T, K = logits.data.shape
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    p = np.exp(logp)

    if T < _min_path_length(y):
        # Explicit infeasibility: infinite loss, zero gradient.
        def backward_inf(g):
            logits._accumulate(np.zeros_like(logits.data))

        return ad._make(np.asarray(np.inf), (logits,), backward_inf)

    ext = _interleaved(y, blank)
    alpha = _log_alpha(logp, ext)
    beta = _log_beta_inclusive(logp, ext)
    log_total = _log_total(alpha)

    def backward(g):
        # Posterior over (t, s), with the time-t emission counted once.
        occ = alpha + beta - logp[:, ext] - log_total
        gamma = np.zeros_like(p)
        w = np.exp(occ)
        for s, k in enumerate(ext):
            gamma[:, k] += w[:, s]
        logits._accumulate(float(g) * (p - gamma))

    return ad._make(np.asarray(-log_total), (logits,), backward)


# -- decoding ------------------------------------------------------------------


@dataclass
class _PrefixScore:
    blank: float = NEG_INF
    non_blank: float = NEG_INF

    def total(self) -> float:
        return np.logaddexp(self.blank, self.non_blank)


def _greedy_labels(probs: np.ndarray, blank: int) -> list[int]:
    return collapse(np.argmax(probs, axis=1).tolist(), blank)


def ctc_beam_decode(
    dist: StepDistribution | np.ndarray,
    width: int,
    blank: int = 0,
    debug_csv: str | Path | None = None,
    debug_topk: int = 5,
) -> tuple[list[int], float]:
    """Prefix beam search merging paths by collapsed prefix.

    Tracks blank/non-blank ending mass per collapsed prefix. Returns the best
    label sequence and its log score: the accumulated path mass of the prefix,
    which is a lower bound on its enumerated probability, exact whenever the
    width covers every live prefix. The collapsed greedy path enters the final
    candidate pool at its exact path-sum score, so the returned labeling never
    scores below greedy, and the score is non-decreasing in the width.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    probs = dist.probs if isinstance(dist, StepDistribution) else np.asarray(dist, dtype=np.float64)
    T, K = probs.shape
    with np.errstate(divide="ignore"):
        logp = np.log(probs)

    beams: dict[tuple[int, ...], _PrefixScore] = {(): _PrefixScore(blank=0.0)}
    for t in range(T):
        row = logp[t]
        nxt: dict[tuple[int, ...], _PrefixScore] = {}

        def bucket(prefix: tuple[int, ...]) -> _PrefixScore:
            sc = nxt.get(prefix)
            if sc is None:
                sc = nxt[prefix] = _PrefixScore()
            return sc

        for prefix, sc in beams.items():
            total = sc.total()
            b = bucket(prefix)
            b.blank = np.logaddexp(b.blank, total + row[blank])
            for k in range(K):
                if k == blank or row[k] == NEG_INF:
                    continue
                if prefix and prefix[-1] == k:
                    b.non_blank = np.logaddexp(b.non_blank, sc.non_blank + row[k])
                    ext = bucket(prefix + (k,))
                    ext.non_blank = np.logaddexp(ext.non_blank, sc.blank + row[k])
                else:
                    ext = bucket(prefix + (k,))
                    ext.non_blank = np.logaddexp(ext.non_blank, total + row[k])
        ranked = sorted(nxt.items(), key=lambda kv: kv[1].total(), reverse=True)
        beams = dict(ranked[:width])

    candidates = {prefix: sc.total() for prefix, sc in beams.items()}
    greedy = tuple(_greedy_labels(probs, blank))
    greedy_exact = log_sequence_probability(logp, list(greedy), blank)
    candidates[greedy] = max(candidates.get(greedy, NEG_INF), greedy_exact)
    scored = sorted(candidates.items(), key=lambda kv: (kv[1], -len(kv[0]), kv[0]), reverse=True)
    best_labels, best_score = list(scored[0][0]), float(scored[0][1])

    if debug_csv is not None:
        _write_debug_table(Path(debug_csv), probs, debug_topk)
    return best_labels, best_score


def _write_debug_table(path: Path, probs: np.ndarray, topk: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "rank", "token_index", "probability"])
        for t in range(probs.shape[0]):
            order = np.argsort(probs[t])[::-1][:topk]
            for rank, k in enumerate(order):
                writer.writerow([t, rank, int(k), f"{probs[t, k]:.10g}"])
