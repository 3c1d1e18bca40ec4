"""Window statistics and EEG feature extraction contracts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurasr import eeg_features as ef
from neurasr.corpus import ChannelMap
from neurasr.eeg_features import (FeatureSequence, extract_eeg_features,
                                  select_channels, window_stats)

from test_corpus import make_session


class TestWindowStats:
    def test_alternating_window_closed_forms(self):
        w = np.array([3.0, -4.0, 3.0, -4.0, 3.0, -4.0, 3.0, -4.0])
        rms, zcr, avg, _, _ = window_stats(w)
        assert rms == pytest.approx(np.sqrt((9 + 16) / 2), abs=1e-12)
        assert zcr == 1.0
        assert avg == -0.5

    def test_square_wave_kurtosis(self):
        w = np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
        assert window_stats(w)[3] == pytest.approx(-2.0, abs=1e-12)

    def test_impulse_has_flat_spectrum(self):
        w = np.zeros(64)
        w[0] = 1.0
        assert window_stats(w)[4] == pytest.approx(1.0, abs=1e-6)

    def test_constant_window_fallbacks(self):
        w = np.full(16, 2.5)
        stats = window_stats(w)
        assert stats[3] == 0.0  # kurtosis of constant window
        assert stats[4] == 0.0  # positive-frequency spectrum is empty

    def test_all_zero_window(self):
        stats = window_stats(np.zeros(16))
        assert stats[0] == 0.0 and stats[4] == 0.0

    def test_too_short_window(self):
        with pytest.raises(ValueError):
            window_stats(np.ones(7))

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=8, max_size=64))
    def test_ranges(self, values):
        rms, zcr, _, _, entropy = window_stats(np.array(values))
        assert rms >= 0
        assert 0 <= zcr <= 1
        assert 0 <= entropy <= 1 + 1e-12

    def test_scaling_behaviour(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=32)
        base = window_stats(w)
        scaled = window_stats(3.5 * w)
        assert scaled[0] == pytest.approx(3.5 * base[0], rel=1e-9)
        assert abs(scaled[2]) == pytest.approx(3.5 * abs(base[2]), rel=1e-9)
        for i in (1, 3, 4):
            assert scaled[i] == pytest.approx(base[i], rel=1e-9, abs=1e-12)


class TestExtractFeatures:
    def test_two_second_session_gives_191_frames_155_dims(self):
        session = make_session(n_seconds=2.0)
        seq = extract_eeg_features(session)
        assert seq.n_frames == 191
        assert seq.n_dims == 155
        assert seq.source == "EEG"
        assert seq.dim_labels[0] == "Fp1.rms"
        assert seq.frame_rate_hz == 100

    def test_t7_t8_selection_gives_10_dims(self):
        session = make_session(n_seconds=1.2)
        cm = ChannelMap()
        sel = select_channels(cm, ["T7", "T8"])
        seq = extract_eeg_features(session, selection=sel, channel_map=cm)
        assert seq.n_dims == 10
        assert all(l.split(".")[0] in ("T7", "T8") for l in seq.dim_labels)

    def test_empty_selection_rejected(self):
        session = make_session()
        with pytest.raises(ValueError):
            extract_eeg_features(session, selection=[])

    def test_too_short_recording(self):
        session = make_session()
        session.eeg = session.eeg[:, :90]
        with pytest.raises(ValueError):
            extract_eeg_features(session)

    def test_dims_always_five_per_channel(self):
        session = make_session(n_seconds=1.1)
        cm = ChannelMap()
        for names in (["Cz"], ["T7", "T8", "Cz"], list(cm.names)):
            sel = select_channels(cm, names)
            assert extract_eeg_features(session, sel, cm).n_dims == 5 * len(names)

    def test_hop_shift_invariance(self):
        session = make_session(n_seconds=2.0)
        shifted = make_session(n_seconds=2.0)
        shifted.eeg = session.eeg[:, 30:]  # exactly 3 hops
        full = extract_eeg_features(session)
        late = extract_eeg_features(shifted)
        np.testing.assert_allclose(full.frames[3:3 + late.n_frames - 1],
                                   late.frames[:-1], atol=1e-12)


class TestSelectChannels:
    def test_pair(self):
        assert len(select_channels(ChannelMap(), ["T7", "T8"])) == 2

    def test_identity(self):
        cm = ChannelMap()
        assert select_channels(cm, list(cm.names)) == list(range(31))

    def test_unknown_name_listed(self):
        with pytest.raises(ValueError, match="T9"):
            select_channels(ChannelMap(), ["T7", "T9"])

    def test_map_order_preserved(self):
        cm = ChannelMap()
        sel = select_channels(cm, ["T8", "T7"])
        assert sel == sorted(sel)


class TestFeatureSequence:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FeatureSequence(np.array([[np.nan]]), ["x"], "EEG")

    def test_rejects_label_mismatch(self):
        with pytest.raises(ValueError):
            FeatureSequence(np.ones((2, 3)), ["a", "b"], "EEG")

    def test_rejects_unknown_source(self):
        with pytest.raises(ValueError):
            FeatureSequence(np.ones((1, 1)), ["a"], "RAW")

    def test_csv_export(self, tmp_path):
        seq = FeatureSequence(np.arange(6.0).reshape(2, 3), ["a", "b", "c"], "EEG")
        out = ef.save_features_csv(seq, tmp_path / "f.csv")
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "a,b,c"
        assert len(lines) == 3
