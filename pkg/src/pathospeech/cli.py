"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, experiment, explain, gmm, lasso
from .errors import DataError, NumericError
from .manifest import load_manifest

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2
    for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="manifest CSV path")
    p.add_argument(
        "--root", default=None,
        help="base directory for relative paths (default: none)",
    )
    p.add_argument(
        "--jobs", type=int, default=os.cpu_count() or 1,
        help="parallel workers (default: available cores)",
    )


def _add_vad_flags(p: argparse.ArgumentParser, default_on: bool) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--vad", dest="vad", action="store_true", default=default_on,
        help=f"apply energy VAD before backends (default: {default_on})",
    )
    group.add_argument("--no-vad", dest="vad", action="store_false")
    p.add_argument(
        "--vad-energy-offset", type=float, default=5.0,
        help="log-energy offset in the VAD threshold (default: 5.0)",
    )
    p.add_argument(
        "--vad-mean-scale", type=float, default=0.5,
        help="weight of the mean log-energy in the threshold (default: 0.5)",
    )


def _add_frontend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--frontend", required=True,
        choices=sorted(experiment.FRONTEND_PARAM_DEFAULTS),
        help="feature family to extract",
    )
    p.add_argument("--nfft", type=int, default=512, help="FFT size (default: 512)")
    p.add_argument(
        "--frame-ms", type=float, default=25.0, help="frame length in ms (default: 25)"
    )
    p.add_argument(
        "--hop-ms", type=float, default=10.0, help="frame hop in ms (default: 10)"
    )
    p.add_argument(
        "--n-mels", type=int, default=23, help="mel filters for MFCC (default: 23)"
    )
    p.add_argument(
        "--n-coeffs", type=int, default=13, help="MFCC coefficients (default: 13)"
    )
    p.add_argument(
        "--model-order", type=int, default=12, help="PLP LPC order (default: 12)"
    )
    p.add_argument(
        "--preemphasis", type=float, default=0.97,
        help="MFCC/PLP pre-emphasis coefficient (default: 0.97)",
    )
    p.add_argument(
        "--min-hz", type=float, default=60.0, help="pitch search floor (default: 60)"
    )
    p.add_argument(
        "--max-hz", type=float, default=400.0,
        help="pitch search ceiling (default: 400)",
    )


def _frontend_params(args) -> dict:
    params = dict(experiment.FRONTEND_PARAM_DEFAULTS[args.frontend])
    flag_values = {
        "nfft": args.nfft,
        "frame_ms": args.frame_ms,
        "hop_ms": args.hop_ms,
        "n_mels": args.n_mels,
        "n_coeffs": args.n_coeffs,
        "model_order": args.model_order,
        "preemphasis": args.preemphasis,
        "min_hz": args.min_hz,
        "max_hz": args.max_hz,
    }
    for key in params:
        if key in flag_values:
            params[key] = flag_values[key]
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pathospeech",
        description="Pathological-speech detection toolkit: prepare found "
        "audio, extract acoustic features, train GMM/LASSO detectors, "
        "evaluate, and emit explainability reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "prepare", parents=[], help="downmix, resample, normalize and chunk audio"
    )
    _add_common(p)
    p.add_argument("--out-dir", required=True, help="directory for prepared WAVs")
    p.add_argument(
        "--sample-rate", type=int, default=16000,
        help="target sample rate in Hz (default: 16000)",
    )
    p.add_argument(
        "--chunk-secs", type=float, default=5.0,
        help="chunk length in seconds (default: 5)",
    )
    p.add_argument(
        "--min-tail-secs", type=float, default=1.0,
        help="keep the final shorter chunk iff at least this long (default: 1)",
    )
    p.add_argument(
        "--peak-dbfs", type=float, default=-0.1,
        help="peak normalization target in dBFS (default: -0.1)",
    )

    p = sub.add_parser("extract", help="extract features into a cache directory")
    _add_common(p)
    p.add_argument("--out-dir", required=True, help="feature cache directory")
    _add_frontend_flags(p)
    _add_vad_flags(p, default_on=True)

    p = sub.add_parser("train", help="fit a detector at one hyperparameter")
    _add_common(p)
    p.add_argument("--cache-dir", required=True, help="feature cache directory")
    _add_frontend_flags(p)
    _add_vad_flags(p, default_on=True)
    p.add_argument("--backend", required=True, choices=("gmm", "lasso"))
    p.add_argument(
        "--param", type=float, required=True,
        help="mixture components (gmm) or alpha (lasso)",
    )
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: 42)")
    p.add_argument("--out", required=True, help="output model JSON path")

    p = sub.add_parser("sweep", help="train across a hyperparameter grid")
    _add_common(p)
    p.add_argument("--cache-dir", required=True, help="feature cache directory")
    _add_frontend_flags(p)
    _add_vad_flags(p, default_on=True)
    p.add_argument("--backend", required=True, choices=("gmm", "lasso"))
    p.add_argument(
        "--grid", default=None,
        help="comma-separated grid (default: 4,8,10,12,16 for gmm; "
        "0.1,0.01,0.001,0.0001 for lasso)",
    )
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: 42)")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument(
        "--report", default=None,
        help="optional sweep report JSON path (default: none)",
    )

    p = sub.add_parser("eval", help="accuracy/EER/per-speaker from a scores CSV")
    p.add_argument("--scores", required=True, help="scores CSV path")
    p.add_argument(
        "--out", default=None,
        help="optional report JSON path (default: none)",
    )

    p = sub.add_parser("analyze", help="explainability report for a trained model")
    p.add_argument("--model", required=True, help="model JSON from train/sweep/run")
    p.add_argument("--out-dir", required=True, help="directory for the reports")
    p.add_argument(
        "--cutoff", type=float, default=explain.DIFFERENCE_CUTOFF,
        help="|p| inclusion cutoff for the phone difference report "
        "(default: 0.005)",
    )
    p.add_argument(
        "--nfft", type=int, default=512,
        help="FFT size behind the LTAS features (default: 512)",
    )
    p.add_argument(
        "--sample-rate", type=int, default=16000,
        help="sample rate behind the LTAS features (default: 16000)",
    )

    p = sub.add_parser("run", help="full experiment from a TOML config")
    p.add_argument("--config", required=True, help="experiment TOML path")
    p.add_argument(
        "--manifest", default=None, help="override config manifest (default: config value)"
    )
    p.add_argument(
        "--out-dir", default=None, help="override config out_dir (default: config value)"
    )
    p.add_argument("--seed", type=int, default=None, help="override config seed (default: config value)")
    p.add_argument("--jobs", type=int, default=None, help="override config jobs (default: config value)")
    p.add_argument(
        "--frontend", default=None,
        choices=sorted(experiment.FRONTEND_PARAM_DEFAULTS),
        help="override config frontend (default: config value)",
    )
    p.add_argument(
        "--backend", default=None, choices=("gmm", "lasso"),
        help="override config backend (default: config value)",
    )
    p.add_argument(
        "--grid", default=None,
        help="override grid, comma-separated (default: config value)",
    )
    p.add_argument(
        "--dev-fraction", type=float, default=None,
        help="override tuning dev_fraction (default: config value)",
    )
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--vad", dest="vad", action="store_true", default=None,
        help="override config: enable VAD",
    )
    group.add_argument(
        "--no-vad", dest="vad", action="store_false",
        help="override config: disable VAD",
    )

    p = sub.add_parser(
        "export-spectrograms",
        help="spectrogram archives for the neural baseline",
    )
    _add_common(p)
    p.add_argument("--out-dir", required=True, help="archive output directory")
    p.add_argument("--nfft", type=int, default=512, help="FFT size (default: 512)")
    p.add_argument(
        "--frame-ms", type=float, default=25.0, help="frame length in ms (default: 25)"
    )
    p.add_argument(
        "--hop-ms", type=float, default=10.0, help="frame hop in ms (default: 10)"
    )
    p.add_argument(
        "--pad-to-longest", action="store_true", default=False,
        help="pad every archive to the corpus maximum frame count",
    )
    _add_vad_flags(p, default_on=False)

    return parser


def _cmd_prepare(args) -> int:
    manifest = load_manifest(args.manifest, root=args.root)
    prepared, failures = experiment.prepare_corpus(
        manifest, args.out_dir,
        sample_rate=args.sample_rate, chunk_secs=args.chunk_secs,
        min_tail_secs=args.min_tail_secs, peak_dbfs=args.peak_dbfs,
        jobs=args.jobs,
    )
    print(f"prepared {len(prepared)} chunks into {args.out_dir}")
    if failures:
        for utt_id, error in failures:
            print(f"FAILED {utt_id}: {error}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _vad_params(args) -> dict:
    return {
        "energy_offset": args.vad_energy_offset,
        "mean_scale": args.vad_mean_scale,
    }


def _cmd_extract(args) -> int:
    manifest = load_manifest(args.manifest, root=args.root)
    result = experiment.extract_all(
        manifest, args.frontend, _frontend_params(args), args.out_dir,
        jobs=args.jobs, use_vad=args.vad, vad_params=_vad_params(args),
    )
    print(
        f"extracted {args.frontend}: {result.n_computed} computed, "
        f"{result.n_cached} cached"
    )
    if result.failures:
        for utt_id, error in result.failures:
            print(f"FAILED {utt_id}: {error}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _load_split_items(args, manifest):
    result = experiment.extract_all(
        manifest, args.frontend, _frontend_params(args), args.cache_dir,
        jobs=args.jobs, use_vad=args.vad, vad_params=_vad_params(args),
    )
    for utt_id, error in result.failures:
        print(f"FAILED {utt_id}: {error}", file=sys.stderr)
    cache = Path(args.cache_dir)
    train_items, excl_train = experiment.split_items(
        manifest, "train", cache, result.index
    )
    test_items, excl_test = experiment.split_items(
        manifest, "test", cache, result.index
    )
    for utt_id, reason in excl_train + excl_test:
        print(f"excluded {utt_id}: {reason}", file=sys.stderr)
    return train_items, test_items


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest, root=args.root)
    train_items, _ = _load_split_items(args, manifest)
    if not train_items:
        raise DataError("no usable training utterances")
    if args.backend == "gmm":
        by_class = {}
        for label in ("healthy", "pathological"):
            blocks = [fm.data for _, _, lab, fm in train_items if lab == label]
            if not blocks:
                raise DataError(f"training data for class {label!r} is missing")
            by_class[label] = np.vstack(blocks)
        detector = gmm.GmmDetector(
            model_pathological=gmm.fit_gmm(
                by_class["pathological"], int(args.param), seed=args.seed,
                feature_kind=args.frontend,
            ),
            model_healthy=gmm.fit_gmm(
                by_class["healthy"], int(args.param), seed=args.seed,
                feature_kind=args.frontend,
            ),
        )
        gmm.save_detector(args.out, detector)
    else:
        X, y = experiment.lasso_design(train_items)
        model = lasso.fit_lasso(X, y, args.param, feature_kind=args.frontend)
        lasso.save_model(args.out, model)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest, root=args.root)
    train_items, test_items = _load_split_items(args, manifest)
    if not train_items or not test_items:
        raise DataError("need usable train and test utterances")
    if args.grid:
        grid = tuple(float(g) for g in args.grid.split(","))
    else:
        grid = experiment.DEFAULT_GRIDS[args.backend]
    print(experiment.TEST_TUNING_BANNER, file=sys.stderr)
    if args.backend == "gmm":
        by_class = {
            label: np.vstack(
                [fm.data for _, _, lab, fm in train_items if lab == label]
            )
            for label in ("healthy", "pathological")
        }
        model, rows = gmm.sweep_components(
            by_class, test_items, grid=tuple(int(g) for g in grid),
            seed=args.seed, feature_kind=args.frontend,
        )
        gmm.save_detector(args.out, model)
        chosen = model.m
    else:
        X, y = experiment.lasso_design(train_items)
        model, rows = lasso.sweep_alpha(
            (X, y), test_items, grid=grid, feature_kind=args.frontend
        )
        lasso.save_model(args.out, model)
        chosen = model.alpha
    for row in rows:
        eer_s = f"{row.eer:.4f}" if row.eer is not None else "n/a"
        print(f"param={row.param:g} accuracy={row.accuracy:.4f} eer={eer_s}")
    print(f"selected {chosen:g}; wrote {args.out}")
    if args.report:
        Path(args.report).write_text(
            json.dumps(
                {
                    "chosen_param": chosen,
                    "rows": [
                        {"param": r.param, "accuracy": r.accuracy, "eer": r.eer}
                        for r in rows
                    ],
                },
                indent=2,
            )
            + "\n"
        )
    return EXIT_OK


def _cmd_eval(args) -> int:
    scores = evaluation.read_scores(args.scores)
    report = evaluation.evaluation_report(scores)
    speaker_report = evaluation.per_speaker_accuracy(scores)
    print(f"utterances: {report['n_utterances']}")
    print(f"accuracy:   {report['accuracy']:.4f}")
    eer_s = f"{report['eer']:.4f}" if report["eer"] is not None else "n/a (one class)"
    print(f"eer:        {eer_s}")
    print(evaluation.per_speaker_table(speaker_report))
    if args.out:
        evaluation.write_report(args.out, report)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        doc = json.loads(Path(args.model).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from exc
    kind = doc.get("format")
    if kind == "gmm-detector":
        detector = gmm.load_detector(args.model)
        report = explain.gmm_phone_difference(
            detector.model_pathological, detector.model_healthy,
            cutoff=args.cutoff,
        )
        (out_dir / "phone_difference.json").write_text(report.to_json() + "\n")
        (out_dir / "phone_difference.txt").write_text(report.to_text() + "\n")
        print(report.to_text())
    elif kind == "lasso-model":
        model = lasso.load_model(args.model)
        report = explain.lasso_coefficients(
            model, nfft=args.nfft, sample_rate=args.sample_rate
        )
        (out_dir / "coefficients.json").write_text(report.to_json() + "\n")
        (out_dir / "coefficients.txt").write_text(report.to_text() + "\n")
        (out_dir / "coefficients.csv").write_text(report.to_csv())
        print(report.to_text())
    else:
        raise DataError(f"{args.model}: unrecognized model format {kind!r}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = experiment.load_config(args.config)
    if args.manifest is not None:
        config.manifest = Path(args.manifest)
    if args.out_dir is not None:
        config.out_dir = Path(args.out_dir)
    if args.seed is not None:
        config.seed = args.seed
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.frontend is not None:
        config.frontend = args.frontend
        config.frontend_params = {}
    if args.backend is not None:
        config.backend = args.backend
        config.grid = experiment.DEFAULT_GRIDS[args.backend]
    if args.grid is not None:
        config.grid = tuple(float(g) for g in args.grid.split(","))
    if args.vad is not None:
        config.vad = args.vad
    if args.dev_fraction is not None:
        config.dev_fraction = args.dev_fraction
    config.__post_init__()  # revalidate after overrides

    report = experiment.run(config)
    for line in report.warnings:
        print(line, file=sys.stderr)
    print(f"frontend={config.frontend} backend={config.backend}")
    print(f"chosen hyperparameter: {report.chosen_param:g}")
    print(
        f"train: accuracy={report.train_accuracy:.4f} "
        f"eer={report.train_eer if report.train_eer is not None else float('nan'):.4f}"
    )
    print(
        f"test:  accuracy={report.test_accuracy:.4f} "
        f"eer={report.test_eer if report.test_eer is not None else float('nan'):.4f}"
    )
    print(f"reports under {report.out_dir / 'reports'}")
    return EXIT_OK


def _cmd_export_spectrograms(args) -> int:
    manifest = load_manifest(args.manifest, root=args.root)
    lengths, failures = experiment.export_spectrograms(
        manifest, args.out_dir,
        nfft=args.nfft, frame_ms=args.frame_ms, hop_ms=args.hop_ms,
        pad_to_longest=args.pad_to_longest, use_vad=args.vad,
        vad_params=_vad_params(args), jobs=args.jobs,
    )
    print(f"exported {len(lengths)} spectrogram archives to {args.out_dir}")
    if failures:
        for utt_id, error in failures:
            print(f"FAILED {utt_id}: {error}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


_COMMANDS = {
    "prepare": _cmd_prepare,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "run": _cmd_run,
    "export-spectrograms": _cmd_export_spectrograms,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
