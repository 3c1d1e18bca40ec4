"""Continuous speech recognition from multichannel EEG and noisy audio.

End-to-end pipeline: synthetic corpus generation, IIR preprocessing,
windowed EEG statistics and MFCCs at 100 Hz, polynomial-kernel PCA,
hand-rolled reverse-mode autodiff with GRU sequence models (CTC and
attention encoder-decoder), beam-search decoding, and WER/CER scoring.
"""

__version__ = "0.1.0"

from .attention import AttentionModel, Hypothesis, WordVocabulary
from .corpus import (ChannelMap, CorpusManifest, RecordingSession,
                     load_manifest, load_session, save_session,
                     split_by_subject, synthesize_corpus)
from .ctc import StepDistribution, TokenSet, collapse, ctc_beam_decode, ctc_loss
from .ctc_model import CtcModel
from .dimred import KpcaModel, build_final_eeg_features, kpca_fit, kpca_transform
from .eeg_features import FeatureSequence, extract_eeg_features, select_channels, window_stats
from .acoustic_features import MfccConfig, add_deltas, align_lengths, fuse, mfcc
from .experiments import ExperimentConfig, run_experiment, run_grid
from .metrics import ErrorReport, cer, edit_distance, wer
from .preprocess import FilterSpec, apply_filter, clean_artifacts, design_filter

__all__ = [
    "AttentionModel", "Hypothesis", "WordVocabulary",
    "ChannelMap", "CorpusManifest", "RecordingSession",
    "load_manifest", "load_session", "save_session", "split_by_subject",
    "synthesize_corpus",
    "StepDistribution", "TokenSet", "collapse", "ctc_beam_decode", "ctc_loss",
    "CtcModel",
    "KpcaModel", "build_final_eeg_features", "kpca_fit", "kpca_transform",
    "FeatureSequence", "extract_eeg_features", "select_channels", "window_stats",
    "MfccConfig", "add_deltas", "align_lengths", "fuse", "mfcc",
    "ExperimentConfig", "run_experiment", "run_grid",
    "ErrorReport", "cer", "edit_distance", "wer",
    "FilterSpec", "apply_filter", "clean_artifacts", "design_filter",
]
