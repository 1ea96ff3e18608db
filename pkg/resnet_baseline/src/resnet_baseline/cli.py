"""Command line for the spectrogram-ResNet baseline."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import LABELS, load_manifest, load_split
from .gradcam import energy_fraction_above, export_cam, grad_cam_mean
from .model import ResNetSpec
from .training import emit_scores, load_checkpoint, save_checkpoint, train

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resnet-baseline",
        description="Spectrogram-ResNet detector with Grad-CAM analysis, "
        "trained on archives exported by `pathospeech export-spectrograms "
        "--pad-to-longest`.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and emit scores CSVs")
    p.add_argument("--manifest", required=True, help="core manifest CSV")
    p.add_argument("--archives", required=True, help="spectrogram archive dir")
    p.add_argument("--out-dir", required=True, help="checkpoint/scores output dir")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: 42)")
    p.add_argument(
        "--epochs", type=int, default=50, help="training epochs (default: 50)"
    )
    p.add_argument(
        "--batch-size", type=int, default=8, help="batch size (default: 8)"
    )

    p = sub.add_parser("grad-cam", help="mean class-activation maps per class")
    p.add_argument("--manifest", required=True, help="core manifest CSV")
    p.add_argument("--archives", required=True, help="spectrogram archive dir")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--out-dir", required=True, help="output dir for map archives")
    p.add_argument(
        "--split", default="test", choices=("train", "test"),
        help="manifest split to analyse (default: test)",
    )
    p.add_argument(
        "--nfft", type=int, default=512,
        help="FFT size behind the spectrograms (default: 512)",
    )
    return parser


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data = load_split(manifest, args.archives, "train")
    spec = ResNetSpec(epochs=args.epochs)
    result = train(
        train_data, spec=spec, seed=args.seed, batch_size=args.batch_size
    )
    save_checkpoint(out_dir / "checkpoint.pt", result)
    emit_scores(out_dir / "train_scores.csv", result.model, train_data)
    print(
        f"best epoch {result.best_epoch} "
        f"(val loss {result.metrics['best_val_loss']:.4f}); "
        f"train accuracy {result.train_accuracy:.4f}"
    )
    try:
        test_data = load_split(manifest, args.archives, "test")
    except ValueError:
        log.info("no test split in manifest; skipping test scores")
        return 0
    emit_scores(out_dir / "test_scores.csv", result.model, test_data)
    print(f"scores CSVs under {out_dir}; verify with `pathospeech eval`")
    return 0


def _cmd_grad_cam(args) -> int:
    manifest = load_manifest(args.manifest)
    data = load_split(manifest, args.archives, args.split)
    model = load_checkpoint(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sample_rate = 16000
    for label in LABELS:
        if label not in data.labels:
            log.warning("no %s samples in %s split; skipped", label, args.split)
            continue
        cam = grad_cam_mean(model, data, label)
        export_cam(
            out_dir / f"cam_{label}.psdf", cam, sample_rate,
            frame_hop_ms=10.0, frame_len_ms=25.0,
        )
        fraction = energy_fraction_above(cam, sample_rate, args.nfft)
        print(
            f"{label}: mean activation mass above 4 kHz = {fraction:.1%} "
            f"(map at cam_{label}.psdf)"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train":
        return _cmd_train(args)
    return _cmd_grad_cam(args)


if __name__ == "__main__":
    sys.exit(main())
