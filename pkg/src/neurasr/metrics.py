"""Word and character error rates via Levenshtein alignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict


@dataclass
class ErrorReport:
    """Corpus-level edit statistics: rate = 100 * (S + I + D) / reference length."""

    substitutions: int
    insertions: int
    deletions: int
    reference_length: int
    rate: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("substitutions", self.substitutions),
            ("insertions", self.insertions),
            ("deletions", self.deletions),
            ("reference length", self.reference_length),
            ("error rate (%)", f"{self.rate:.2f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def edit_distance(ref, hyp) -> tuple[int, int, int, int]:
    """Levenshtein distance with unit costs.

    Returns (distance, substitutions, insertions, deletions). The backtrace
    breaks ties preferring substitution over insertion over deletion, so the
    decomposition is deterministic.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = dp[i], dp[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ri == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, row[j - 1] + 1, prev[j] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif j > 0 and dp[i][j] == dp[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return dp[n][m], subs, ins, dels


def _pooled_report(ref_token_lists, hyp_token_lists) -> ErrorReport:
    if len(ref_token_lists) != len(hyp_token_lists):
        raise ValueError(
            f"reference and hypothesis counts differ: {len(ref_token_lists)} vs {len(hyp_token_lists)}")
    total_ref = sum(len(r) for r in ref_token_lists)
    if total_ref == 0:
        raise ValueError("references must contain at least one token")
    subs = ins = dels = 0
    for r, h in zip(ref_token_lists, hyp_token_lists):
        _, s, i, d = edit_distance(r, h)
        subs, ins, dels = subs + s, ins + i, dels + d
    rate = 100.0 * (subs + ins + dels) / total_ref
    return ErrorReport(subs, ins, dels, total_ref, rate)


def wer(ref_sentences: list[str], hyp_sentences: list[str]) -> ErrorReport:
    """Corpus word error rate: pooled edit distance over word tokens."""
    return _pooled_report([r.split() for r in ref_sentences],
                          [h.split() for h in hyp_sentences])


def cer(ref_sentences: list[str], hyp_sentences: list[str]) -> ErrorReport:
    """Corpus character error rate; spaces count as characters."""
    return _pooled_report([list(r) for r in ref_sentences],
                          [list(h) for h in hyp_sentences])
