"""CTC collapse/loss/decoder against the brute-force extension oracle."""

import numpy as np
import pytest

from neurasr import autodiff as ad
from neurasr import ctc
from neurasr.autodiff import Tensor
from neurasr.ctc import StepDistribution, TokenSet

from helpers import finite_difference_check


def random_distribution(rng, T, K):
    x = rng.uniform(0.05, 1.0, size=(T, K))
    return x / x.sum(axis=1, keepdims=True)


def oracle_probability(probs, y):
    """Path-probability sum via exhaustive extension enumeration."""
    total = 0.0
    for path in ctc.enumerate_extensions(y, probs.shape[0]):
        total += float(np.prod([probs[t, k] for t, k in enumerate(path)]))
    return total


class TestCollapse:
    def test_merges_duplicates(self):
        # c=3, u=21, t=20 in 1-based letter indexing
        assert ctc.collapse([3, 3, 21, 20]) == [3, 21, 20]

    def test_blanks_only(self):
        assert ctc.collapse([0, 0]) == []

    def test_blank_separates_repeats(self):
        assert ctc.collapse([3, 0, 3]) == [3, 3]


class TestEnumerateExtensions:
    def test_cut_T4_yields_the_seven_paths(self):
        c, u, t = 3, 21, 20
        got = set(ctc.enumerate_extensions([c, u, t], 4))
        expected = {
            (c, c, u, t), (c, u, u, t), (c, u, t, t),
            (0, c, u, t), (c, 0, u, t), (c, u, 0, t), (c, u, t, 0),
        }
        assert got == expected

    def test_exact_length_is_identity(self):
        assert ctc.enumerate_extensions([3, 21, 20], 3) == [(3, 21, 20)]

    def test_repeat_needs_blank_separator(self):
        assert ctc.enumerate_extensions([1, 1], 2) == []

    def test_all_extensions_collapse_back(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            y = rng.integers(1, 4, size=rng.integers(0, 4)).tolist()
            T = int(rng.integers(len(y), 7))
            for path in ctc.enumerate_extensions(y, T):
                assert len(path) == T
                assert ctc.collapse(list(path)) == y

    def test_rejects_blank_in_target(self):
        with pytest.raises(ValueError):
            ctc.enumerate_extensions([0, 1], 3)


class TestCtcLoss:
    def test_uniform_three_tokens(self):
        dist = StepDistribution(np.full((2, 3), 1.0 / 3.0))
        assert abs(ctc.ctc_loss(dist, [1]) - np.log(3.0)) < 1e-12

    def test_single_step_single_path(self):
        dist = StepDistribution(np.array([[0.1, 0.9]]))
        assert abs(ctc.ctc_loss(dist, [1]) + np.log(0.9)) < 1e-12

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(60):
            T = int(rng.integers(1, 7))
            K = int(rng.integers(2, 5))
            y = rng.integers(1, K, size=rng.integers(0, 4)).tolist()
            probs = random_distribution(rng, T, K)
            loss = ctc.ctc_loss(StepDistribution(probs), y)
            oracle = oracle_probability(probs, y)
            if oracle == 0.0:
                assert np.isinf(loss)
            else:
                assert abs(np.exp(-loss) - oracle) < 1e-9

    def test_infeasible_length_reports_infinite_loss(self):
        dist = StepDistribution(np.full((2, 4), 0.25))
        assert np.isinf(ctc.ctc_loss(dist, [1, 2, 3]))

    def test_total_probability_over_all_labelings(self):
        rng = np.random.default_rng(7)
        T, K = 4, 3  # tokens: blank + 2 labels
        probs = random_distribution(rng, T, K)
        total = 0.0
        seqs = [[]]
        for _ in range(T):
            seqs += [s + [k] for s in list(seqs) for k in (1, 2) if len(s) < T]
        seen = {tuple(s) for s in seqs}
        for y in seen:
            loss = ctc.ctc_loss(StepDistribution(probs), list(y))
            if np.isfinite(loss):
                total += np.exp(-loss)
        assert abs(total - 1.0) < 1e-6

    def test_rejects_blank_in_target(self):
        with pytest.raises(ValueError):
            ctc.ctc_loss(StepDistribution(np.full((2, 2), 0.5)), [0])


class TestCtcGradients:
    def test_loss_from_logits_matches_probability_route(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(size=(5, 4))
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        y = [1, 2]
        direct = ctc.ctc_loss(StepDistribution(p), y)
        recorded = ctc.ctc_loss_from_logits(Tensor(logits), y)
        assert abs(direct - float(recorded.data)) < 1e-10

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            T, K = 5, 4
            logits = Tensor(rng.normal(size=(T, K)), requires_grad=True)
            y = rng.integers(1, K, size=2).tolist()

            def make_loss():
                return ctc.ctc_loss_from_logits(logits, y)

            finite_difference_check(make_loss, {"logits": logits})

    def test_infeasible_target_gives_zero_gradient(self):
        logits = Tensor(np.zeros((2, 4)), requires_grad=True)
        loss = ctc.ctc_loss_from_logits(logits, [1, 2, 3])
        assert np.isinf(float(loss.data))
        ad.backward(loss)
        np.testing.assert_array_equal(logits.grad, np.zeros((2, 4)))


class TestBeamDecode:
    def test_two_step_binary_example(self):
        probs = np.array([[0.1, 0.9], [0.1, 0.9]])
        labels, score = ctc.ctc_beam_decode(StepDistribution(probs), width=4)
        assert labels == [1]
        assert abs(np.exp(score) - 0.99) < 1e-12

    def test_one_hot_rows_decode_to_argmax_collapse(self):
        path = [2, 2, 0, 1, 1, 0, 2]
        probs = np.zeros((len(path), 3))
        probs[np.arange(len(path)), path] = 1.0
        labels, score = ctc.ctc_beam_decode(StepDistribution(probs), width=2)
        assert labels == ctc.collapse(path)
        assert abs(score) < 1e-12

    def test_wide_beam_is_exact_argmax_labeling(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            T = int(rng.integers(1, 6))
            K = int(rng.integers(2, 4))
            probs = random_distribution(rng, T, K)
            labels, score = ctc.ctc_beam_decode(StepDistribution(probs), width=10_000)
            # exhaustive argmax over all labelings
            best_p, best_y = -1.0, None
            candidates = {()}
            for _ in range(T):
                candidates |= {c + (k,) for c in list(candidates) for k in range(1, K)}
            for y in candidates:
                p = oracle_probability(probs, list(y))
                if p > best_p:
                    best_p, best_y = p, list(y)
            assert abs(np.exp(score) - best_p) < 1e-9
            assert labels == best_y or abs(oracle_probability(probs, labels) - best_p) < 1e-12

    def test_score_never_below_greedy_and_monotone_in_width(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            probs = random_distribution(rng, 6, 4)
            dist = StepDistribution(probs)
            greedy = ctc.collapse(np.argmax(probs, axis=1).tolist())
            greedy_p = oracle_probability(probs, greedy)
            prev_score = -np.inf
            for width in (1, 2, 4, 16):
                labels, score = ctc.ctc_beam_decode(dist, width)
                assert oracle_probability(probs, labels) >= greedy_p - 1e-12
                assert score >= prev_score - 1e-12
                prev_score = score

    def test_invalid_width(self):
        with pytest.raises(ValueError):
            ctc.ctc_beam_decode(StepDistribution(np.full((1, 2), 0.5)), width=0)

    def test_debug_csv(self, tmp_path):
        probs = np.array([[0.6, 0.4], [0.3, 0.7]])
        out = tmp_path / "topk.csv"
        ctc.ctc_beam_decode(StepDistribution(probs), width=2, debug_csv=out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "step,rank,token_index,probability"
        assert len(lines) == 1 + 2 * 2


class TestTokenSet:
    def test_round_trip(self):
        ts = TokenSet()
        ids = ts.encode("the cat")
        assert ts.decode(ids) == "the cat"
        assert ts.size == 28
        assert 0 not in ids

    def test_rejects_unknown_characters(self):
        with pytest.raises(ValueError):
            TokenSet().encode("Hello!")


class TestStepDistribution:
    def test_rejects_unnormalized_rows(self):
        with pytest.raises(ValueError):
            StepDistribution(np.array([[0.5, 0.4]]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            StepDistribution(np.array([[1.1, -0.1]]))
