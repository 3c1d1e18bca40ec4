"""Attention scores/weights, teacher-forced training, and beam decoding."""

import numpy as np
import pytest

from neurasr import attention as att
from neurasr import autodiff as ad
from neurasr.attention import (AttentionModel, AttentionParams, WordVocabulary,
                               attention_score, attention_weights, export_attention)
from neurasr.autodiff import Tensor
from neurasr.eeg_features import FeatureSequence

from helpers import finite_difference_check


def feature_seq(rng, t=12, d=6):
    return FeatureSequence(rng.normal(size=(t, d)), [f"x{i}" for i in range(d)], "EEG")


def zero_attention(hidden, attn):
    p = AttentionParams(
        w1=Tensor(np.zeros((attn, hidden)), requires_grad=True),
        w2=Tensor(np.zeros((attn, hidden)), requires_grad=True),
        v=Tensor(np.ones(attn), requires_grad=True),
    )
    return p


class TestVocabulary:
    def test_from_transcripts_order_and_specials(self):
        vocab = WordVocabulary.from_transcripts(["the cat", "the dog ran"])
        assert vocab.words == ("the", "cat", "dog", "ran")
        assert vocab.size == 7
        assert vocab.decode(att.SOS) == "<sos>"
        assert vocab.word_id("cat") == 4

    def test_unknown_maps_to_unk(self):
        vocab = WordVocabulary.from_transcripts(["the cat"])
        assert vocab.word_id("zebra") == att.UNK
        assert vocab.decode(att.UNK) == "<unk>"


class TestAttentionScore:
    def test_zero_weight_matrices_give_zero_score(self):
        p = zero_attention(4, 3)
        rng = np.random.default_rng(0)
        s = attention_score(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)), p)
        assert float(s.data) == 0.0

    def test_zero_v_gives_zero_score(self):
        rng = np.random.default_rng(1)
        p = AttentionParams.create(rng, 4, 3)
        p.v.data[...] = 0.0
        s = attention_score(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)), p)
        assert float(s.data) == 0.0

    def test_shape_mismatch(self):
        p = zero_attention(4, 3)
        with pytest.raises(ValueError):
            attention_score(Tensor(np.zeros(5)), Tensor(np.zeros(4)), p)

    def test_gradient_check(self):
        rng = np.random.default_rng(2)
        p = AttentionParams.create(rng, 4, 3)
        h_t = Tensor(rng.normal(size=4), requires_grad=True)
        s_prev = Tensor(rng.normal(size=4), requires_grad=True)

        def make_loss():
            s = attention_score(h_t, s_prev, p)
            return ad.mul(s, s)

        finite_difference_check(make_loss, {"w1": p.w1, "w2": p.w2, "v": p.v,
                                            "h": h_t, "s": s_prev})


class TestAttentionWeights:
    def test_uniform_when_scores_flat(self):
        rng = np.random.default_rng(3)
        p = zero_attention(4, 3)
        states = Tensor(rng.normal(size=(5, 4)))
        alpha, context = attention_weights(states, Tensor(rng.normal(size=4)), p)
        np.testing.assert_allclose(alpha.data, np.full(5, 0.2), atol=1e-12)
        np.testing.assert_allclose(context.data, states.data.mean(axis=0), atol=1e-12)

    def test_single_frame(self):
        rng = np.random.default_rng(4)
        p = AttentionParams.create(rng, 4, 3)
        states = Tensor(rng.normal(size=(1, 4)))
        alpha, context = attention_weights(states, Tensor(rng.normal(size=4)), p)
        np.testing.assert_allclose(alpha.data, [1.0], atol=1e-15)
        np.testing.assert_allclose(context.data, states.data[0], atol=1e-15)

    def test_softmax_by_hand(self):
        # direct check of the normalization used for the score vector [ln 3, 0]
        probs = ad.softmax(Tensor([np.log(3.0), 0.0])).data
        np.testing.assert_allclose(probs, [0.75, 0.25], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        p = AttentionParams.create(rng, 6, 4)
        for _ in range(10):
            states = Tensor(rng.normal(size=(rng.integers(1, 9), 6)))
            alpha, _ = attention_weights(states, Tensor(rng.normal(size=6)), p)
            assert abs(alpha.data.sum() - 1.0) <= 1e-9

    def test_full_attention_path_gradients(self):
        rng = np.random.default_rng(6)
        p = AttentionParams.create(rng, 3, 2)
        states = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        s_prev = Tensor(rng.normal(size=3), requires_grad=True)
        target = rng.normal(size=3)

        def make_loss():
            _, context = attention_weights(states, s_prev, p)
            d = ad.sub(context, target)
            return ad.tsum(ad.mul(d, d))

        finite_difference_check(
            make_loss, {"w1": p.w1, "w2": p.w2, "v": p.v, "states": states, "s": s_prev})


class TestTrainStep:
    def test_zero_lr_keeps_parameters_and_finite_loss(self):
        rng = np.random.default_rng(7)
        vocab = WordVocabulary.from_transcripts(["the cat sat"])
        model = AttentionModel(6, vocab, hidden_dim=8, attn_dim=4, embed_dim=4,
                               seed=1, lr=0.0)
        before = {k: p.data.copy() for k, p in model.parameters().items()}
        loss = model.train_step(feature_seq(rng), "the cat sat")
        assert np.isfinite(loss)
        for k, p in model.parameters().items():
            np.testing.assert_array_equal(p.data, before[k])

    def test_initial_loss_near_log_vocab(self):
        rng = np.random.default_rng(8)
        transcripts = [" ".join(f"w{i}" for i in range(j, j + 5)) for j in range(0, 20, 5)]
        vocab = WordVocabulary.from_transcripts(transcripts)
        n_words = len(vocab.words)
        model = AttentionModel(6, vocab, hidden_dim=16, attn_dim=8, embed_dim=8, seed=3)
        loss = model.train_step(feature_seq(rng, t=20), transcripts[0])
        assert abs(loss - np.log(n_words)) <= 0.1 * np.log(n_words)

    def test_memorizes_single_example(self):
        rng = np.random.default_rng(9)
        vocab = WordVocabulary.from_transcripts(["the cat sat"])
        model = AttentionModel(6, vocab, hidden_dim=24, attn_dim=8, embed_dim=8,
                               seed=5, lr=5e-3)
        features = feature_seq(rng, t=15)
        loss = None
        for _ in range(200):
            loss = model.train_step(features, "the cat sat")
        assert loss < 0.01

        hyp = model.beam_decode(features, width=2)
        assert hyp.words == ["the", "cat", "sat"]
        assert hyp.ended_by_eos

    def test_decoder_steps_equal_words_plus_terminator(self):
        rng = np.random.default_rng(10)
        vocab = WordVocabulary.from_transcripts(["a b c d"])
        model = AttentionModel(6, vocab, hidden_dim=8, attn_dim=4, embed_dim=4, seed=2)
        model.train_step(feature_seq(rng), "a b c d")
        assert len(model.last_attention_rows) == 4 + 1
        for row in model.last_attention_rows:
            assert abs(row.sum() - 1.0) <= 1e-9

    def test_empty_transcript_rejected(self):
        vocab = WordVocabulary.from_transcripts(["a"])
        model = AttentionModel(6, vocab, hidden_dim=8, attn_dim=4, embed_dim=4)
        with pytest.raises(ValueError):
            model.train_step(feature_seq(np.random.default_rng(0)), "")

    def test_oov_word_rejected(self):
        vocab = WordVocabulary.from_transcripts(["a b"])
        model = AttentionModel(6, vocab, hidden_dim=8, attn_dim=4, embed_dim=4)
        with pytest.raises(ValueError, match="zebra"):
            model.train_step(feature_seq(np.random.default_rng(0)), "a zebra")


class TestFullModelGradient:
    def test_tiny_configuration_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        vocab = WordVocabulary.from_transcripts(["a b"])
        model = AttentionModel(2, vocab, hidden_dim=4, attn_dim=3, embed_dim=3, seed=7)
        features = FeatureSequence(rng.normal(size=(3, 2)), ["x0", "x1"], "EEG")
        ids = [vocab.word_id("a"), vocab.word_id("b")]
        targets = ids + [att.EOS]
        inputs = [att.SOS] + ids

        def make_loss():
            states, s = model.encode(features)
            total = None
            for tok, tgt in zip(inputs, targets):
                probs, s, _ = model._decode_step(tok, s, states)
                term = att.nn.cross_entropy(probs, tgt)
                total = term if total is None else ad.add(total, term)
            return ad.mul(total, 1.0 / len(targets))

        finite_difference_check(make_loss, model.parameters(), rel_tol=1e-3)


class TestBeamDecode:
    def setup_method(self):
        rng = np.random.default_rng(12)
        self.vocab = WordVocabulary.from_transcripts(["red green blue", "green red"])
        self.model = AttentionModel(5, self.vocab, hidden_dim=12, attn_dim=6,
                                    embed_dim=6, seed=13)
        self.features = feature_seq(rng, t=10, d=5)

    def test_width_one_is_greedy_rollout(self):
        hyp = self.model.beam_decode(self.features, width=1, max_len=6)
        # replay greedily by hand
        states, s = self.model.encode(self.features)
        tokens, prev = [], att.SOS
        for _ in range(6):
            probs, s, _ = self.model._decode_step(prev, s, states)
            order = np.argsort(probs.data)[::-1]
            choice = int(order[0]) if order[0] != att.SOS else int(order[1])
            tokens.append(choice)
            prev = choice
            if choice == att.EOS:
                break
        assert hyp.token_ids == tokens

    def test_wider_beam_never_scores_worse(self):
        s1 = self.model.beam_decode(self.features, width=1, max_len=6).log_prob
        s4 = self.model.beam_decode(self.features, width=4, max_len=6).log_prob
        assert s4 >= s1 - 1e-12

    def test_max_len_caps_hypothesis(self):
        hyp = self.model.beam_decode(self.features, width=2, max_len=3)
        assert len(hyp.token_ids) <= 3

    def test_attention_rows_normalized(self):
        hyp = self.model.beam_decode(self.features, width=2, max_len=5)
        assert hyp.attention.shape[1] == 10
        for row in hyp.attention:
            assert abs(row.sum() - 1.0) <= 1e-9

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            self.model.beam_decode(self.features, width=0)
        with pytest.raises(ValueError):
            self.model.beam_decode(self.features, width=1, max_len=0)


class TestExportAttention:
    def test_grid_shape_and_row_sums(self, tmp_path):
        rng = np.random.default_rng(14)
        raw = rng.uniform(0.1, 1.0, size=(3, 50))
        hyp = att.Hypothesis(token_ids=[3, 4, 5], words=["a", "b", "c"], log_prob=-0.5,
                             attention=raw / raw.sum(axis=1, keepdims=True))
        out = export_attention(hyp, tmp_path / "attn.csv")
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 3
        for line in lines[1:]:
            vals = [float(v) for v in line.split(",")]
            assert len(vals) == 50
            assert abs(sum(vals) - 1.0) <= 1e-6

    def test_reexport_byte_identical(self, tmp_path):
        hyp = att.Hypothesis(token_ids=[3], words=["a"], log_prob=0.0,
                             attention=np.array([[0.25, 0.75]]))
        p1 = export_attention(hyp, tmp_path / "a.csv")
        data1 = p1.read_bytes()
        p2 = export_attention(hyp, tmp_path / "b.csv")
        assert p2.read_bytes() == data1

    def test_empty_hypothesis_rejected(self, tmp_path):
        hyp = att.Hypothesis(token_ids=[], words=[], log_prob=0.0,
                             attention=np.zeros((0, 5)))
        with pytest.raises(ValueError):
            export_attention(hyp, tmp_path / "x.csv")
