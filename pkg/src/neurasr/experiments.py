"""Experiment orchestration: feature building, training, decoding, reporting.

A grid cell is one ExperimentConfig: feature source x model x sentence
count (x optional channel subset). Every run writes a self-contained results
directory keyed by the config hash: config copy, per-epoch loss curve,
metrics JSON, decoded/reference text, and the figure-equivalent CSVs
(explained variance, attention grid). Runs are deterministic per seed.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import attention as att
from .acoustic_features import add_deltas, fuse, mfcc
from .attention import AttentionModel, Hypothesis, WordVocabulary, export_attention
from .corpus import ChannelMap, CorpusManifest, load_manifest, load_session
from .ctc import TokenSet
from .ctc_model import CtcModel
from .dimred import (KpcaModel, build_final_eeg_features, kpca_fit_subsampled,
                     save_explained_variance_csv, save_kpca_model)
from .eeg_features import FeatureSequence, extract_eeg_features, select_channels
from .errors import ConfigError
from .metrics import ErrorReport, cer, wer
from .preprocess import preprocess_session
from . import nn

SCHEMA_VERSION = 1
BATCH_SIZE = 1  # both models train one utterance at a time
RESULTS_ENV = "NEURASR_RESULTS"

DEFAULT_EPOCHS = {"CTC": 500, "ATTENTION": 100}


@dataclass
class ExperimentConfig:
    corpus_dir: str
    feature_source: str = "EEG"          # EEG | MFCC | FUSED
    model: str = "ATTENTION"             # CTC | ATTENTION
    n_sentences: int = 3
    channel_subset: list[str] | None = None
    seed: int = 0
    epochs: int | None = None            # default: 500 for CTC, 100 for attention
    lr: float = 1e-3
    beam_width: int = 4
    max_len: int = 20
    hidden_dim: int = 128
    kpca_components: int = 30
    eval_split: str = "test"             # train | validation | test
    results_dir: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.feature_source not in ("EEG", "MFCC", "FUSED"):
            raise ConfigError(f"unknown feature source {self.feature_source!r}")
        if self.model not in ("CTC", "ATTENTION"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not 1 <= self.n_sentences <= 30:
            raise ConfigError(f"n_sentences must be in [1, 30], got {self.n_sentences}")
        if self.channel_subset is not None and self.feature_source != "EEG":
            raise ConfigError("channel_subset is only meaningful for EEG features")
        if self.eval_split not in ("train", "validation", "test"):
            raise ConfigError(f"unknown eval split {self.eval_split!r}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.beam_width < 1 or self.max_len < 1 or self.hidden_dim < 1:
            raise ConfigError("beam_width, max_len and hidden_dim must be positive")
        return self

    @property
    def resolved_epochs(self) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_EPOCHS[self.model]

    def canonical(self) -> dict:
        doc = asdict(self)
        doc["schema_version"] = SCHEMA_VERSION
        doc.pop("results_dir")
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def resolve_results_dir(self) -> Path:
        if self.results_dir is not None:
            return Path(self.results_dir)
        root = Path(os.environ.get(RESULTS_ENV, "results"))
        return root / self.config_hash()


@dataclass
class PreparedData:
    train: list[tuple[str, FeatureSequence, str]]   # (session_id, features, transcript)
    eval: list[tuple[str, FeatureSequence, str]]
    input_dim: int
    kpca: KpcaModel | None
    n_unique_words: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: ErrorReport
    metric: str
    loss_curve: list[float]
    refs: list[str]
    hyps: list[str]
    n_unique_words: int
    results_dir: Path
    first_hypothesis: Hypothesis | None = None
    kpca: KpcaModel | None = None


def expected_input_dim(cfg: ExperimentConfig) -> int:
    """Dimensional contract for each feature path."""
    if cfg.feature_source == "MFCC":
        return 39
    if cfg.channel_subset is not None:
        return 5 * len(cfg.channel_subset) * 3
    eeg = cfg.kpca_components * 3
    return eeg + 39 if cfg.feature_source == "FUSED" else eeg


def _sessions_for(manifest: CorpusManifest, role: str, n_sentences: int):
    return [e for e in manifest.entries_for_role(role) if e.sentence_id < n_sentences]


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load, preprocess and featurize the corpus for one experiment."""
    cfg.validate()
    manifest = load_manifest(cfg.corpus_dir)
    train_entries = _sessions_for(manifest, "train", cfg.n_sentences)
    eval_entries = _sessions_for(manifest, cfg.eval_split, cfg.n_sentences)
    if not train_entries:
        raise ConfigError("no training sessions match the configuration")
    if not eval_entries:
        raise ConfigError(f"no {cfg.eval_split} sessions match the configuration")
    available = {e.sentence_id for e in manifest.entries}
    if max(range(cfg.n_sentences), default=0) >= len(available):
        raise ConfigError(
            f"corpus holds {len(available)} sentences, config asks for {cfg.n_sentences}")

    channel_map = ChannelMap()
    selection = (select_channels(channel_map, cfg.channel_subset)
                 if cfg.channel_subset is not None else None)

    def eeg_features_of(entry) -> FeatureSequence:
        session = preprocess_session(load_session(manifest.root / entry.path))
        return extract_eeg_features(session, selection, channel_map)

    def mfcc_features_of(entry) -> FeatureSequence:
        session = load_session(manifest.root / entry.path)
        audio = np.asarray(session.audio, dtype=np.float64) / 32768.0
        return add_deltas(mfcc(audio))

    kpca_model: KpcaModel | None = None
    all_entries = train_entries + eval_entries

    if cfg.feature_source == "MFCC":
        feats = {e.path: mfcc_features_of(e) for e in all_entries}
    else:
        raw_eeg = {e.path: eeg_features_of(e) for e in all_entries}
        if selection is None:
            expected_raw = 5 * len(channel_map.names)
            for seq in raw_eeg.values():
                assert seq.n_dims == expected_raw, (
                    f"raw EEG features must be {expected_raw}-dim, got {seq.n_dims}")
            # Dimension reduction is fitted on training-split frames only.
            train_frames = np.concatenate([raw_eeg[e.path].frames for e in train_entries])
            kpca_model = kpca_fit_subsampled(train_frames, cfg.kpca_components,
                                             seed=cfg.seed)
            feats = {p: build_final_eeg_features(seq, kpca_model)
                     for p, seq in raw_eeg.items()}
        else:
            feats = {p: add_deltas(seq) for p, seq in raw_eeg.items()}
        if cfg.feature_source == "FUSED":
            feats = {e.path: fuse(feats[e.path], mfcc_features_of(e)) for e in all_entries}

    input_dim = expected_input_dim(cfg)
    for seq in feats.values():
        assert seq.n_dims == input_dim, (
            f"feature dimension contract violated: expected {input_dim}, got {seq.n_dims}")

    unique_words = sorted({w for e in train_entries for w in e.transcript.split()})

    def to_item(e):
        return Path(e.path).name, feats[e.path], e.transcript

    return PreparedData(
        train=[to_item(e) for e in train_entries],
        eval=[to_item(e) for e in eval_entries],
        input_dim=input_dim,
        kpca=kpca_model,
        n_unique_words=len(unique_words),
    )


def build_model(cfg: ExperimentConfig, data: PreparedData):
    if cfg.model == "ATTENTION":
        vocab = WordVocabulary.from_transcripts([t for _, _, t in data.train])
        return AttentionModel(data.input_dim, vocab, hidden_dim=cfg.hidden_dim,
                              seed=cfg.seed, lr=cfg.lr)
    return CtcModel(data.input_dim, TokenSet(), hidden_dim=cfg.hidden_dim,
                    seed=cfg.seed, lr=cfg.lr)


def train_model(cfg: ExperimentConfig, model, data: PreparedData,
                progress: bool = False) -> list[float]:
    """Batch-size-one training over the configured epoch count."""
    curve = []
    for epoch in range(cfg.resolved_epochs):
        losses = [model.train_step(seq, transcript)
                  for _, seq, transcript in data.train]
        curve.append(float(np.mean(losses)))
        if progress and (epoch + 1) % max(1, cfg.resolved_epochs // 10) == 0:
            print(f"epoch {epoch + 1}/{cfg.resolved_epochs}: loss {curve[-1]:.4f}")
    return curve


def decode_split(cfg: ExperimentConfig, model, data: PreparedData
                 ) -> tuple[list[str], list[str], Hypothesis | None]:
    refs, hyps = [], []
    first_hyp: Hypothesis | None = None
    for _, seq, transcript in data.eval:
        refs.append(transcript)
        if cfg.model == "ATTENTION":
            hyp = model.beam_decode(seq, width=cfg.beam_width, max_len=cfg.max_len)
            hyps.append(" ".join(hyp.words))
            if first_hyp is None:
                first_hyp = hyp
        else:
            text, _ = model.decode(seq, width=cfg.beam_width)
            hyps.append(text)
    return refs, hyps, first_hyp


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """Full pipeline: preprocess, featurize, train, decode, score, persist."""
    cfg.validate()
    data = prepare_data(cfg)
    model = build_model(cfg, data)
    curve = train_model(cfg, model, data, progress=progress)
    refs, hyps, first_hyp = decode_split(cfg, model, data)
    metric = "wer" if cfg.model == "ATTENTION" else "cer"
    report = wer(refs, hyps) if metric == "wer" else cer(refs, hyps)

    out = cfg.resolve_results_dir()
    out.mkdir(parents=True, exist_ok=True)
    _write_artifacts(cfg, out, report, metric, curve, refs, hyps, first_hyp,
                     data, model)
    return ExperimentResult(config=cfg, report=report, metric=metric,
                            loss_curve=curve, refs=refs, hyps=hyps,
                            n_unique_words=data.n_unique_words, results_dir=out,
                            first_hypothesis=first_hyp, kpca=data.kpca)


def _write_artifacts(cfg, out: Path, report, metric, curve, refs, hyps,
                     first_hyp, data: PreparedData, model) -> None:
    (out / "config.json").write_text(
        json.dumps(cfg.canonical(), indent=2, sort_keys=True) + "\n")

    with open(out / "loss_curve.csv", "w", newline="") as fh:
        fh.write("epoch,mean_loss\n")
        for i, v in enumerate(curve, start=1):
            fh.write(f"{i},{v:.12g}\n")

    metrics_doc = {
        "schema_version": SCHEMA_VERSION,
        "model": cfg.model,
        "feature_source": cfg.feature_source,
        "n_sentences": cfg.n_sentences,
        "n_unique_words": data.n_unique_words,
        "eval_split": cfg.eval_split,
        "seed": cfg.seed,
        "metric": metric,
        "error_rate_percent": report.rate,
        "substitutions": report.substitutions,
        "insertions": report.insertions,
        "deletions": report.deletions,
        "reference_length": report.reference_length,
        "final_train_loss": curve[-1],
    }
    (out / "metrics.json").write_text(json.dumps(metrics_doc, indent=2, sort_keys=True) + "\n")

    (out / "refs.txt").write_text("".join(r + "\n" for r in refs))
    (out / "hyps.txt").write_text("".join(h + "\n" for h in hyps))

    if first_hyp is not None and first_hyp.attention.shape[0] >= 1:
        export_attention(first_hyp, out / "attention.csv")
    if data.kpca is not None:
        save_explained_variance_csv(data.kpca, out / "explained_variance.csv")
        save_kpca_model(data.kpca, out / "kpca_model.json")

    meta = {"model": cfg.model, "seed": cfg.seed, "step": model.adam.step,
            "input_dim": data.input_dim, "hidden_dim": cfg.hidden_dim}
    if cfg.model == "ATTENTION":
        meta["vocab_words"] = list(model.vocab.words)
    nn.save_checkpoint(out / "checkpoint", model.parameters(), meta)


def load_model_from_checkpoint(cfg: ExperimentConfig, path: str | Path):
    """Rebuild a model and overwrite its parameters from a checkpoint."""
    params, meta = nn.load_checkpoint(path)
    if meta.get("model") != cfg.model:
        raise ConfigError(
            f"checkpoint holds a {meta.get('model')} model, config wants {cfg.model}")
    if cfg.model == "ATTENTION":
        vocab = WordVocabulary(words=tuple(meta["vocab_words"]))
        model = AttentionModel(int(meta["input_dim"]), vocab,
                               hidden_dim=int(meta["hidden_dim"]),
                               seed=int(meta["seed"]), lr=cfg.lr)
    else:
        model = CtcModel(int(meta["input_dim"]), TokenSet(),
                         hidden_dim=int(meta["hidden_dim"]),
                         seed=int(meta["seed"]), lr=cfg.lr)
    current = model.parameters()
    for name, tensor in params.items():
        if name not in current:
            raise ConfigError(f"checkpoint parameter {name!r} not in model")
        if current[name].data.shape != tensor.data.shape:
            raise ConfigError(f"checkpoint shape mismatch for {name!r}")
        current[name].data[...] = tensor.data
    return model


# -- grids ----------------------------------------------------------------------


def expand_grid(doc: dict) -> list[ExperimentConfig]:
    """Expand {"base": {...}, "axes": {...}} into one config per cell."""
    if "corpus_dir" not in doc.get("base", {}):
        raise ConfigError("grid config needs base.corpus_dir")
    base = dict(doc["base"])
    axes = doc.get("axes", {})
    cells = [dict(base)]
    for key, values in axes.items():
        cells = [dict(c, **{key: v}) for c in cells for v in values]
    return [ExperimentConfig(**cell).validate() for cell in cells]


def run_grid(doc: dict, results_root: Path | None = None,
             progress: bool = False) -> list[ExperimentResult]:
    """Run every grid cell and write per-model summary tables."""
    configs = expand_grid(doc)
    results = []
    for cfg in configs:
        if results_root is not None and cfg.results_dir is None:
            cfg.results_dir = str(Path(results_root) / cfg.config_hash())
        results.append(run_experiment(cfg, progress=progress))

    if results_root is not None:
        _write_grid_summaries(results, Path(results_root))
    return results


def _write_grid_summaries(results: list[ExperimentResult], root: Path) -> None:
    """One table per model: rows by sentence count, a column per feature source."""
    root.mkdir(parents=True, exist_ok=True)
    for model in sorted({r.config.model for r in results}):
        subset = [r for r in results if r.config.model == model]
        sources = sorted({r.config.feature_source for r in subset})
        rows = sorted({(r.config.n_sentences, r.n_unique_words) for r in subset})
        metric = subset[0].metric
        lines = ["n_sentences,n_unique_words," + ",".join(f"{s}_{metric}_percent" for s in sources)]
        for n_sent, n_words in rows:
            cells = []
            for source in sources:
                match = [r for r in subset
                         if r.config.n_sentences == n_sent and r.config.feature_source == source]
                cells.append(f"{match[0].report.rate:.2f}" if match else "")
            lines.append(f"{n_sent},{n_words}," + ",".join(cells))
        (root / f"summary_{model.lower()}.csv").write_text("\n".join(lines) + "\n")
