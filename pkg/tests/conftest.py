"""Shared fixtures: a small synthetic corpus reused across test modules."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neurasr.corpus import synthesize_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Two sentences, three subjects, one repeat: 6 sessions, 1/1/1 split."""
    root = tmp_path_factory.mktemp("corpus") / "small"
    manifest = synthesize_corpus(seed=42, n_sentences=2, n_subjects=3, repeats=1,
                                 out_dir=root)
    return manifest
