"""Command-line entry points.

Subcommands: ``folds`` (annotations -> fold plan), ``features`` (WAV +
annotations -> baseline store), ``synth`` (synthetic fixture generation),
``train`` (spec -> full nested cross-validation experiment), ``layerwise``
(spec -> per-layer linear-probe table), ``report`` (results file -> tables
and curves). Exit codes: 0 success, 1 partial failure, 2 invalid spec or
arguments.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import load_wav, wav_duration
from .dataset import build_segments, load_plan, make_fold_plan, read_annotations, save_plan
from .dsp import beans_config, beans_embedding, mfcc_config, mfcc_sequence
from .errors import CallprobeError, SpecError
from .evaluation import EvalReport, export_averaged_roc, export_curves
from .runner import ExperimentSpec, layerwise_sweep, run_experiment, write_summary_tables
from .store import EmbeddingSequence, SegmentMeta, StoreManifest, write_store
from .synth import SyntheticSpec, generate_synthetic_store

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


def _cmd_folds(args) -> int:
    annotations, class_names = read_annotations(args.annotations)
    audio_dir = Path(args.audio_dir)
    lengths = {}
    for a in annotations:
        if a.recording_id not in lengths:
            lengths[a.recording_id] = wav_duration(audio_dir / f"{a.recording_id}.wav")
    segments = build_segments(annotations, lengths, args.collar)
    plan = make_fold_plan(segments, args.folds, seed=args.seed)
    save_plan(args.out, plan, segments, class_names)
    print(f"wrote {args.out}: {len(segments)} segments, {args.folds} folds, "
          f"{len(class_names)} classes")
    return EXIT_OK


def _cmd_features(args) -> int:
    plan, segments, class_names = load_plan(args.fold_plan)
    if not segments:
        raise SpecError(f"{args.fold_plan} carries no segment table")
    audio_dir = Path(args.audio_dir)
    recordings = {}
    sequences = []
    metas = []
    for seg in segments:
        if seg.recording_id not in recordings:
            recordings[seg.recording_id] = load_wav(audio_dir / f"{seg.recording_id}.wav")
        clip = recordings[seg.recording_id].slice(seg.start, seg.end)
        if args.kind == "mfcc":
            cfg = mfcc_config(clip.sample_rate)
            frames = mfcc_sequence(clip, cfg).frames
        else:
            n_ceps = 20 if args.kind == "beans20" else 40
            cfg = beans_config(clip.sample_rate, n_ceps)
            frames = beans_embedding(mfcc_sequence(clip, cfg))[None, :]
        sequences.append(EmbeddingSequence(seg.segment_id,
                                           frames.astype(np.float32), args.layer_tag))
        metas.append(SegmentMeta(seg.segment_id, seg.primary_label, seg.fold,
                                 seg.recording_id, seg.start, seg.end,
                                 frames.shape[0]))
    manifest = StoreManifest(
        dim=sequences[0].dim,
        layer_tag=args.layer_tag,
        temporal=args.kind == "mfcc",  # aggregate embeddings carry no frame order
        classes=class_names,
        segments=metas,
    )
    write_store(args.out, sequences, manifest)
    print(f"wrote {args.out}: {len(sequences)} segments, dim {manifest.dim} "
          f"({args.kind})")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        t_min=args.t_min,
        t_max=args.t_max,
        separation=args.separation,
        seed=args.seed,
        k=args.folds,
    )
    paths = generate_synthetic_store(args.out_dir, spec)
    print(f"wrote {paths['store']}, {paths['manifest']}, {paths['fold_plan']}")
    return EXIT_OK


def _cmd_train(args) -> int:
    spec = ExperimentSpec.from_json(args.spec)
    if args.output_dir:
        spec.output_dir = args.output_dir
    if args.parallelism:
        spec.parallelism = args.parallelism
    outcome = run_experiment(spec)
    for family, summary in outcome.summaries.items():
        print(f"{family}: macro AUC {summary.mean_auc:.4f}, mAP {summary.mean_ap:.4f} "
              f"(over {len(summary.fold_aucs)} folds)")
    if outcome.partial_failure:
        print(f"failed turns: {outcome.failed_turns}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_layerwise(args) -> int:
    spec = ExperimentSpec.from_json(args.spec)
    if args.output_dir:
        spec.output_dir = args.output_dir
    rows = layerwise_sweep(spec)
    for index, tag, dev_map, lr in rows:
        print(f"{index:3d} {tag:<12} mAP {dev_map:.4f} (lr {lr:g})")
    return EXIT_OK


def _cmd_report(args) -> int:
    with open(args.results, encoding="utf-8") as fh:
        results = json.load(fh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_summary_tables(results, out_dir)
    curves_dir = out_dir / "curves"
    for family, doc in results["families"].items():
        reports = [EvalReport.from_dict(turn["test_report"])
                   for turn in doc["turns"] if turn["test_report"]]
        for report in reports:
            export_curves(report, curves_dir, prefix=f"{family}_")
        if reports:
            export_averaged_roc(reports, curves_dir, prefix=f"{family}_")
    print((out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="callprobe",
        description="Frozen-embedding probing toolkit for call-type classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("folds", help="build a nested cross-validation fold plan")
    p.add_argument("--annotations", required=True, help="tab-separated annotation file")
    p.add_argument("--audio-dir", required=True, help="directory of <recording_id>.wav files")
    p.add_argument("--collar", type=float, default=0.25, help="seconds added around each call")
    p.add_argument("--folds", "-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="fold plan JSON path")
    p.set_defaults(func=_cmd_folds)

    p = sub.add_parser("features", help="extract baseline spectral features into a store")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--fold-plan", required=True, help="plan JSON with the segment table")
    p.add_argument("--kind", choices=["mfcc", "beans20", "beans40"], default="mfcc")
    p.add_argument("--layer-tag", default="final")
    p.add_argument("--out", required=True, help="store path (.embs)")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("synth", help="generate a synthetic store, manifest and fold plan")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=125)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--t-min", type=int, default=5)
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", "-k", type=int, default=5)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="run the nested cross-validation experiment")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--output-dir", help="override the spec's output directory")
    p.add_argument("--parallelism", type=int, help="override the spec's worker count")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("layerwise", help="linear probing across layer stores")
    p.add_argument("--spec", required=True)
    p.add_argument("--output-dir", help="override the spec's output directory")
    p.set_defaults(func=_cmd_layerwise)

    p = sub.add_parser("report", help="re-render tables and curves from a results file")
    p.add_argument("--results", required=True, help="results.json from a train run")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CallprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
