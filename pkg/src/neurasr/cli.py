"""Command-line interface: corpus synthesis through evaluation and plots."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .acoustic_features import add_deltas, fuse, mfcc
from .corpus import ChannelMap, load_manifest, load_session, save_manifest, synthesize_corpus
from .dimred import (build_final_eeg_features, kpca_fit_subsampled, load_kpca_model,
                     save_explained_variance_csv, save_kpca_model)
from .eeg_features import extract_eeg_features, save_features_csv, select_channels
from .errors import ConfigError
from .experiments import ExperimentConfig, run_experiment
from .metrics import cer, wer
from .preprocess import preprocess_session


def _add_synth(sub):
    p = sub.add_parser("synth-data", help="generate a synthetic speech-EEG corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)


def cmd_synth(args) -> int:
    manifest = synthesize_corpus(args.seed, args.sentences, args.subjects,
                                 args.repeats, args.out)
    print(f"wrote {len(manifest.entries)} sessions to {args.out}")
    return 0


def _add_preprocess(sub):
    p = sub.add_parser("preprocess", help="band-pass + notch filter a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_preprocess)


def cmd_preprocess(args) -> int:
    from dataclasses import replace
    from .corpus import CorpusManifest, save_session

    manifest = load_manifest(args.corpus)
    for entry in manifest.entries:
        session = preprocess_session(load_session(args.corpus / entry.path))
        save_session(session, args.out / entry.path)
    out_manifest = CorpusManifest(root=Path(args.out), entries=list(manifest.entries),
                                  split=dict(manifest.split))
    save_manifest(out_manifest)
    print(f"preprocessed {len(manifest.entries)} sessions into {args.out}")
    return 0


def _add_features(sub):
    p = sub.add_parser("features", help="export per-session feature CSVs")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--source", choices=["EEG", "MFCC", "FUSED"], required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--channels", type=str, default=None,
                   help="comma-separated channel subset, e.g. T7,T8")
    p.add_argument("--kpca", type=Path, default=None,
                   help="fitted model JSON (required for full-EEG and FUSED)")
    p.set_defaults(func=cmd_features)


def cmd_features(args) -> int:
    manifest = load_manifest(args.corpus)
    channel_map = ChannelMap()
    selection = (select_channels(channel_map, args.channels.split(","))
                 if args.channels else None)
    needs_kpca = args.source in ("EEG", "FUSED") and selection is None
    if needs_kpca and args.kpca is None:
        raise ConfigError(f"--kpca is required for {args.source} without --channels")
    model = load_kpca_model(args.kpca) if needs_kpca else None

    args.out.mkdir(parents=True, exist_ok=True)
    for entry in manifest.entries:
        session = load_session(args.corpus / entry.path)
        if args.source in ("EEG", "FUSED"):
            eeg = extract_eeg_features(preprocess_session(session), selection, channel_map)
            eeg = build_final_eeg_features(eeg, model) if model is not None else add_deltas(eeg)
        if args.source in ("MFCC", "FUSED"):
            audio = np.asarray(session.audio, dtype=np.float64) / 32768.0
            acoustic = add_deltas(mfcc(audio))
        seq = {"EEG": lambda: eeg, "MFCC": lambda: acoustic,
               "FUSED": lambda: fuse(eeg, acoustic)}[args.source]()
        name = Path(entry.path).name
        save_features_csv(seq, args.out / f"{name}.csv")
    print(f"wrote {len(manifest.entries)} feature files to {args.out}")
    return 0


def _add_kpca(sub):
    p = sub.add_parser("kpca", help="fit kernel PCA on training-split EEG features")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--sentences", type=int, default=30)
    p.add_argument("--components", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ev-csv", type=Path, default=None,
                   help="also write the explained-variance curve")
    p.set_defaults(func=cmd_kpca)


def cmd_kpca(args) -> int:
    manifest = load_manifest(args.corpus)
    entries = [e for e in manifest.entries_for_role("train")
               if e.sentence_id < args.sentences]
    if not entries:
        raise ConfigError("no training sessions in corpus")
    frames = np.concatenate([
        extract_eeg_features(preprocess_session(load_session(args.corpus / e.path))).frames
        for e in entries])
    model = kpca_fit_subsampled(frames, args.components, seed=args.seed)
    save_kpca_model(model, args.out)
    if args.ev_csv:
        save_explained_variance_csv(model, args.ev_csv)
    retained = model.explained_variance_ratio[:args.components].sum()
    print(f"fitted on {model.n_training} frames; "
          f"top {args.components} components explain {100 * retained:.1f}% variance")
    return 0


def _config_from_file(path: Path) -> ExperimentConfig:
    doc = json.loads(Path(path).read_text())
    doc.pop("schema_version", None)
    return ExperimentConfig(**doc).validate()


def _add_train(sub):
    p = sub.add_parser("train", help="train one experiment cell and checkpoint it")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)


def cmd_train(args) -> int:
    cfg = _config_from_file(args.config)
    result = run_experiment(cfg, progress=args.progress)
    print(f"final loss {result.loss_curve[-1]:.4f}; "
          f"{result.metric} {result.report.rate:.2f}% on {cfg.eval_split}; "
          f"results in {result.results_dir}")
    return 0


def _add_decode(sub):
    p = sub.add_parser("decode", help="decode the eval split with a saved checkpoint")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="hypotheses file")
    p.set_defaults(func=cmd_decode)


def cmd_decode(args) -> int:
    cfg = _config_from_file(args.config)
    data = experiments.prepare_data(cfg)
    model = experiments.load_model_from_checkpoint(cfg, args.checkpoint)
    refs, hyps, _ = experiments.decode_split(cfg, model, data)
    for ref, hyp in zip(refs, hyps):
        print(f"ref: {ref}\nhyp: {hyp}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text("".join(h + "\n" for h in hyps))
        args.out.with_suffix(".refs.txt").write_text("".join(r + "\n" for r in refs))
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="score hypothesis file against references")
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--hyp", type=Path, required=True)
    p.add_argument("--metric", choices=["wer", "cer"], default="wer")
    p.set_defaults(func=cmd_eval)


def cmd_eval(args) -> int:
    refs = args.ref.read_text().splitlines()
    hyps = args.hyp.read_text().splitlines()
    report = (wer if args.metric == "wer" else cer)(refs, hyps)
    print(f"{report.rate:.2f}")
    return 0


def _add_run_grid(sub):
    p = sub.add_parser("run-grid", help="run every cell of an experiment grid")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--results", type=Path, default=None,
                   help="results root (default: NEURASR_RESULTS or ./results)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_run_grid)


def cmd_run_grid(args) -> int:
    doc = json.loads(args.config.read_text())
    import os
    root = args.results or Path(os.environ.get(experiments.RESULTS_ENV, "results"))
    results = experiments.run_grid(doc, results_root=root, progress=args.progress)
    for r in results:
        print(f"{r.config.model:9s} {r.config.feature_source:5s} "
              f"sentences={r.config.n_sentences:2d} words={r.n_unique_words:3d} "
              f"{r.metric}={r.report.rate:.2f}%")
    return 0


def _add_export_plots(sub):
    p = sub.add_parser("export-plots", help="render PNG plots from result CSVs")
    p.add_argument("--results", type=Path, required=True)
    p.set_defaults(func=cmd_export_plots)


def cmd_export_plots(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = 0
    loss_csv = args.results / "loss_curve.csv"
    if loss_csv.is_file():
        data = np.loadtxt(loss_csv, delimiter=",", skiprows=1, ndmin=2)
        plt.figure()
        plt.plot(data[:, 0], data[:, 1])
        plt.xlabel("epoch")
        plt.ylabel("mean training loss")
        plt.savefig(args.results / "loss_curve.png", dpi=120)
        plt.close()
        made += 1
    ev_csv = args.results / "explained_variance.csv"
    if ev_csv.is_file():
        data = np.loadtxt(ev_csv, delimiter=",", skiprows=1, ndmin=2)
        plt.figure()
        plt.plot(data[:, 0], data[:, 2], marker=".")
        plt.xlabel("number of components")
        plt.ylabel("cumulative explained variance")
        plt.savefig(args.results / "explained_variance.png", dpi=120)
        plt.close()
        made += 1
    attn_csv = args.results / "attention.csv"
    if attn_csv.is_file():
        grid = np.loadtxt(attn_csv, delimiter=",", skiprows=1, ndmin=2)
        plt.figure()
        plt.imshow(grid, aspect="auto", origin="lower")
        plt.xlabel("encoder frame")
        plt.ylabel("decoder step")
        plt.colorbar(label="attention weight")
        plt.savefig(args.results / "attention.png", dpi=120)
        plt.close()
        made += 1
    if made == 0:
        print(f"no plottable CSVs found in {args.results}", file=sys.stderr)
        return 1
    print(f"wrote {made} plot(s) to {args.results}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurasr",
        description="Continuous speech recognition from EEG and noisy audio.")
    sub = parser.add_subparsers(dest="command", required=True)
    for register in (_add_synth, _add_preprocess, _add_features, _add_kpca,
                     _add_train, _add_decode, _add_eval, _add_run_grid,
                     _add_export_plots):
        register(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # corpus / schema / IO failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
