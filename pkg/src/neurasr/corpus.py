"""On-disk corpus format, synthetic corpus generation, and subject splits.

A corpus is a directory with a ``manifest.json`` and one subdirectory per
session holding ``eeg.csv`` (header row of 31 channel names, one row per
1000 Hz sample, microvolts), ``audio.wav`` (RIFF PCM16 mono, 16 kHz) and
``meta.json`` (ids + transcript).

The synthetic generator stands in for an unpublished recording campaign:
every word has a fixed random 31-channel mixing pattern and a
characteristic oscillation, amplitude-modulated at 8 Hz and buried in
AR(1) noise at roughly 0 dB SNR; audio is a per-word pure-tone chord in
white noise. Token identity is therefore recoverable from both
modalities, but not trivially separable.
"""

from __future__ import annotations

import json
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import CorpusError, SchemaError

EEG_RATE_HZ = 1000
AUDIO_RATE_HZ = 16000
N_CHANNELS = 31
WORD_SECONDS = 0.5
SIGNAL_AMPLITUDE_UV = 20.0
ENVELOPE_HZ = 8.0
AR_COEFF = 0.9

TRANSCRIPT_RE = re.compile(r"[a-z]+( [a-z]+)*")

# 10-20 placement for a 32-electrode cap, ground excluded.
CHANNEL_NAMES = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "FT9", "FC5", "FC1", "FC2", "FC6", "FT10",
    "T7", "C3", "Cz", "C4", "T8",
    "TP9", "CP5", "CP1", "CP2", "CP6", "TP10",
    "P7", "P3", "Pz", "P4", "P8", "O1", "O2",
)

# Fixed sentence inventory. The cumulative unique-word counts over the first
# 3/5/7/10/15/20 sentences are 19/29/42/59/84/106; sentences 21-30 reuse
# earlier words only, so the vocabulary saturates at 106.
SENTENCES = (
    "we can hear the birds sing now",
    "she will read the good book today",
    "our dog runs fast in the park",
    "you can see the small boat there",
    "they play soft music in the town",
    "he found two old coins by the tree",
    "what time does the next train leave",
    "her cat sleeps on the warm bed",
    "we must walk home before dark night",
    "this lake looks very cold today",
    "birds fly south when winter comes",
    "please bring some fresh water now",
    "his car made loud noise there",
    "children like to eat fresh fruit",
    "five stars shine bright at night",
    "people often ask about the news",
    "it might rain hard this evening",
    "the child got the red ball",
    "strong wind blew by the sea",
    "keep your hands clean now",
    "the birds sing in the park",
    "she will walk home at night",
    "he can see the old train",
    "they play music in the town",
    "the cat sleeps on the warm bed",
    "we must bring some water home",
    "the small child got the book",
    "you can read the good book now",
    "strong rain comes before dark",
    "keep the red ball by the tree",
)

# Word inventory in order of first appearance across SENTENCES.
WORDS: tuple[str, ...] = tuple(dict.fromkeys(w for s in SENTENCES for w in s.split()))

_WORD_INDEX = {w: i for i, w in enumerate(WORDS)}


@dataclass(frozen=True)
class ChannelMap:
    """Ordered electrode labels; lookup by name must resolve T7 and T8."""

    names: tuple[str, ...] = CHANNEL_NAMES

    def __post_init__(self):
        if len(self.names) != N_CHANNELS or len(set(self.names)) != N_CHANNELS:
            raise ValueError(f"channel map needs {N_CHANNELS} unique labels")
        for required in ("T7", "T8"):
            if required not in self.names:
                raise ValueError(f"channel map must include {required}")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown channel {name!r}") from None


@dataclass
class RecordingSession:
    """One utterance: raw EEG + simultaneous audio + transcript."""

    session_id: str
    subject_id: str
    sentence_id: int
    transcript: str
    eeg: np.ndarray    # [31, samples] microvolts at 1000 Hz
    audio: np.ndarray  # int16 samples at 16 kHz

    def validate(self) -> "RecordingSession":
        if self.eeg.ndim != 2 or self.eeg.shape[0] != N_CHANNELS:
            raise SchemaError(
                f"session {self.session_id}: eeg must have {N_CHANNELS} rows, got shape {self.eeg.shape}")
        if self.eeg.shape[1] < EEG_RATE_HZ:
            raise SchemaError(f"session {self.session_id}: under one second of EEG")
        if not self.transcript or not TRANSCRIPT_RE.fullmatch(self.transcript):
            raise SchemaError(
                f"session {self.session_id}: transcript must be lowercase words "
                f"separated by single spaces, got {self.transcript!r}")
        eeg_seconds = self.eeg.shape[1] / EEG_RATE_HZ
        audio_seconds = len(self.audio) / AUDIO_RATE_HZ
        if abs(audio_seconds - eeg_seconds) > 0.2 * eeg_seconds:
            raise SchemaError(
                f"session {self.session_id}: audio duration {audio_seconds:.3f}s is not "
                f"within 20% of EEG duration {eeg_seconds:.3f}s")
        return self


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    sentence_id: int
    transcript: str


@dataclass
class CorpusManifest:
    """Session index plus the subject-to-role split."""

    root: Path
    entries: list[ManifestEntry]
    split: dict[str, str] = field(default_factory=dict)

    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries})

    def entries_for_role(self, role: str) -> list[ManifestEntry]:
        return [e for e in self.entries if self.split.get(e.subject_id) == role]

    def validate(self) -> "CorpusManifest":
        for e in self.entries:
            if not (self.root / e.path).is_dir():
                raise CorpusError(f"manifest references missing session directory {e.path}")
        roles = set(self.split.values())
        if self.split:
            if not roles <= {"train", "validation", "test"}:
                raise SchemaError(f"unknown split roles: {sorted(roles)}")
            for role in ("validation", "test"):
                n = sum(1 for r in self.split.values() if r == role)
                if n != 1:
                    raise SchemaError(f"split must contain exactly one {role} subject, got {n}")
        return self


# -- session and manifest I/O ---------------------------------------------------


def save_session(session: RecordingSession, directory: str | Path,
                 channels: ChannelMap = ChannelMap()) -> Path:
    """Write eeg.csv / audio.wav / meta.json; float text round-trips exactly."""
    session.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    np.savetxt(directory / "eeg.csv", session.eeg.T, fmt="%.17g", delimiter=",",
               header=",".join(channels.names), comments="")

    with wave.open(str(directory / "audio.wav"), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(AUDIO_RATE_HZ)
        wav.writeframes(np.asarray(session.audio, dtype="<i2").tobytes())

    meta = {
        "session_id": session.session_id,
        "subject_id": session.subject_id,
        "sentence_id": session.sentence_id,
        "transcript": session.transcript,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_session(path: str | Path) -> RecordingSession:
    """Load one session directory into a validated RecordingSession."""
    path = Path(path)
    if not path.is_dir():
        raise CorpusError(f"session directory not found: {path}")
    for name in ("eeg.csv", "audio.wav", "meta.json"):
        if not (path / name).is_file():
            raise CorpusError(f"missing {name} in session directory {path}")

    eeg_path = path / "eeg.csv"
    with open(eeg_path) as fh:
        header = fh.readline().strip()
    names = header.split(",")
    if len(names) != N_CHANNELS:
        raise SchemaError(f"{eeg_path}: expected {N_CHANNELS} channel columns, found {len(names)}")
    eeg = np.loadtxt(eeg_path, delimiter=",", skiprows=1, ndmin=2).T

    with wave.open(str(path / "audio.wav"), "rb") as wav:
        if wav.getnchannels() != 1 or wav.getsampwidth() != 2 or wav.getframerate() != AUDIO_RATE_HZ:
            raise SchemaError(f"{path / 'audio.wav'}: expected mono PCM16 at {AUDIO_RATE_HZ} Hz")
        audio = np.frombuffer(wav.readframes(wav.getnframes()), dtype="<i2")

    try:
        meta = json.loads((path / "meta.json").read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path / 'meta.json'}: invalid JSON ({exc})") from exc
    try:
        session = RecordingSession(
            session_id=str(meta["session_id"]),
            subject_id=str(meta["subject_id"]),
            sentence_id=int(meta["sentence_id"]),
            transcript=str(meta["transcript"]),
            eeg=eeg,
            audio=audio,
        )
    except KeyError as exc:
        raise SchemaError(f"{path / 'meta.json'}: missing key {exc}") from exc
    return session.validate()


def save_manifest(manifest: CorpusManifest) -> Path:
    doc = {
        "schema_version": 1,
        "entries": [
            {"path": e.path, "subject_id": e.subject_id,
             "sentence_id": e.sentence_id, "transcript": e.transcript}
            for e in manifest.entries
        ],
        "split": dict(sorted(manifest.split.items())),
    }
    out = manifest.root / "manifest.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out


def load_manifest(corpus_dir: str | Path) -> CorpusManifest:
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "manifest.json"
    if not manifest_path.is_file():
        raise CorpusError(f"no manifest.json under {corpus_dir}")
    doc = json.loads(manifest_path.read_text())
    entries = [ManifestEntry(e["path"], e["subject_id"], int(e["sentence_id"]), e["transcript"])
               for e in doc.get("entries", [])]
    return CorpusManifest(root=corpus_dir, entries=entries,
                          split=dict(doc.get("split", {}))).validate()


# -- synthetic corpus ------------------------------------------------------------


def _word_pattern(seed: int, word_index: int) -> tuple[np.ndarray, float, float]:
    """Fixed per-word channel mixing vector, oscillation frequency and phase."""
    rng = np.random.default_rng([seed, 1001, word_index])
    mixing = rng.normal(size=N_CHANNELS)
    mixing /= np.linalg.norm(mixing)
    freq = float(rng.uniform(6.0, 45.0))  # inside the 0.1-70 Hz passband, off 60 Hz
    phase = float(rng.uniform(0.0, 2 * np.pi))
    return mixing, freq, phase


def _word_audio_tones(word_index: int) -> tuple[float, float]:
    base = 300.0 + 37.0 * word_index
    return base, 1.37 * base


def _synthesize_eeg(seed: int, subject_index: int, sentence_id: int, repeat: int,
                    words: list[str]) -> np.ndarray:
    n_word = int(WORD_SECONDS * EEG_RATE_HZ)
    n_total = n_word * len(words)
    t = np.arange(n_word) / EEG_RATE_HZ
    envelope = 0.5 * (1.0 - np.cos(2 * np.pi * ENVELOPE_HZ * t))

    gain = float(np.random.default_rng([seed, 1002, subject_index]).uniform(0.8, 1.25))
    clean = np.zeros((N_CHANNELS, n_total))
    for k, word in enumerate(words):
        mixing, freq, phase = _word_pattern(seed, _WORD_INDEX[word])
        burst = np.sin(2 * np.pi * freq * t + phase) * envelope
        clean[:, k * n_word:(k + 1) * n_word] = np.outer(mixing, burst)
    clean *= SIGNAL_AMPLITUDE_UV * gain

    # AR(1) channel noise with marginal power equal to the clean signal power.
    rng = np.random.default_rng([seed, 1003, subject_index, sentence_id, repeat])
    sigma_marginal = float(np.sqrt(np.mean(clean ** 2)))
    eps = rng.normal(scale=sigma_marginal * np.sqrt(1.0 - AR_COEFF ** 2),
                     size=(N_CHANNELS, n_total))
    noise = lfilter([1.0], [1.0, -AR_COEFF], eps, axis=1)
    return clean + noise


def _synthesize_audio(seed: int, subject_index: int, sentence_id: int, repeat: int,
                      words: list[str]) -> np.ndarray:
    n_word = int(WORD_SECONDS * AUDIO_RATE_HZ)
    t = np.arange(n_word) / AUDIO_RATE_HZ
    ramp = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.01)  # 10 ms edges against clicks

    chunks = []
    for word in words:
        f1, f2 = _word_audio_tones(_WORD_INDEX[word])
        chord = (0.6 * np.sin(2 * np.pi * f1 * t) + 0.4 * np.sin(2 * np.pi * f2 * t)) * ramp
        chunks.append(chord)
    clean = np.concatenate(chunks)

    rng = np.random.default_rng([seed, 1004, subject_index, sentence_id, repeat])
    noise = rng.normal(scale=float(np.sqrt(np.mean(clean ** 2))), size=clean.size)
    mix = clean + noise
    mix = mix / np.max(np.abs(mix)) * 0.45 * 32767.0
    return np.round(mix).astype(np.int16)


def synthesize_corpus(seed: int, n_sentences: int, n_subjects: int, repeats: int,
                      out_dir: str | Path) -> CorpusManifest:
    """Generate a deterministic synthetic corpus and write it under ``out_dir``.

    Produces ``n_sentences * n_subjects * repeats`` sessions. The default
    split is the first ``n_subjects - 2`` subjects for training and one
    subject each for validation and test.
    """
    if not 1 <= n_sentences <= len(SENTENCES):
        raise ValueError(f"n_sentences must be in [1, {len(SENTENCES)}], got {n_sentences}")
    if n_subjects < 3:
        raise ValueError(f"n_subjects must be >= 3, got {n_subjects}")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    channels = ChannelMap()

    entries: list[ManifestEntry] = []
    for si in range(1, n_subjects + 1):
        subject_id = f"sub{si:02d}"
        for sentence_id in range(n_sentences):
            words = SENTENCES[sentence_id].split()
            for rep in range(repeats):
                session_id = f"{subject_id}-sen{sentence_id:02d}-rep{rep:02d}"
                session = RecordingSession(
                    session_id=session_id,
                    subject_id=subject_id,
                    sentence_id=sentence_id,
                    transcript=SENTENCES[sentence_id],
                    eeg=_synthesize_eeg(seed, si, sentence_id, rep, words),
                    audio=_synthesize_audio(seed, si, sentence_id, rep, words),
                )
                rel = f"sessions/{session_id}"
                save_session(session, out_dir / rel, channels)
                entries.append(ManifestEntry(rel, subject_id, sentence_id, session.transcript))

    manifest = CorpusManifest(root=out_dir, entries=entries)
    manifest = split_by_subject(manifest, n_subjects - 2)
    save_manifest(manifest)
    return manifest.validate()


def split_by_subject(manifest: CorpusManifest, n_train: int) -> CorpusManifest:
    """Assign roles by sorted subject id: first n_train train, then one
    validation and one test subject; any surplus subjects are left out."""
    subjects = manifest.subjects()
    if n_train < 1:
        raise ValueError(f"n_train must be >= 1, got {n_train}")
    if len(subjects) < n_train + 2:
        raise ValueError(
            f"need at least {n_train + 2} subjects for an {n_train}/1/1 split, "
            f"got {len(subjects)}")
    split = {s: "train" for s in subjects[:n_train]}
    split[subjects[n_train]] = "validation"
    split[subjects[n_train + 1]] = "test"
    return CorpusManifest(root=manifest.root, entries=list(manifest.entries), split=split)
