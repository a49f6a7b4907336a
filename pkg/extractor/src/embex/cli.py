"""Command-line batch extraction tool."""

import argparse
import logging
import sys

from .extract import ModelSpec, extract, load_model, parse_layer_arg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="callprobe-extract",
        description="Run a frozen pretrained model over call segments and "
                    "write one embedding store per selected layer")
    parser.add_argument("--audio-dir", required=True,
                        help="directory of <recording_id>.wav files")
    parser.add_argument("--manifest", required=True,
                        help="fold-plan JSON carrying the segment table")
    parser.add_argument("--model", required=True,
                        help="checkpoint directory or hub identifier")
    parser.add_argument("--layers", default="final",
                        help="'final', 'all', or e.g. 'feat,1-12'")
    parser.add_argument("--sample-rate", type=int, default=16000,
                        help="model input rate; audio is resampled to it")
    parser.add_argument("--kind", choices=["sequence", "grid"], default="sequence")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--expected-dim", type=int,
                        help="published embedding width, asserted at write")
    parser.add_argument("--max-failure-rate", type=float, default=0.05)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    spec = ModelSpec(args.model, sample_rate=args.sample_rate,
                     layers=("final",), output_kind=args.kind)
    model = load_model(spec)
    depth = getattr(getattr(model, "config", None), "num_hidden_layers", None)
    spec.layers = parse_layer_arg(args.layers, depth)
    try:
        paths = extract(args.audio_dir, args.manifest, spec, args.out_dir,
                        max_failure_rate=args.max_failure_rate, model=model,
                        expected_dim=args.expected_dim)
    except RuntimeError as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return 1
    for tag, path in paths.items():
        print(f"{tag}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
