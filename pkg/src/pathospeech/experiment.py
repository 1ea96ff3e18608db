"""Experiment orchestration: prepare, extract (with caching), train,
evaluate, analyze.

Every stage is deterministic for a fixed (config, seed, input files):
extraction fans out per utterance, results are reduced in manifest
order, and all randomness flows from the single config seed. Reports
carry no timestamps so reruns are byte-comparable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import evaluation, explain, gmm, lasso
from .archive import read_archive, write_archive
from .audio import POWER_FLOOR, apply_vad, chunk, downmix, normalize_peak, resample, vad
from .errors import DataError, PathoSpeechError
from .features import FeatureMatrix
from .frontends import load_ppg, ltas, mfcc, pitch, plp, spectrogram
from .manifest import Manifest, UtteranceRecord, load_manifest, write_manifest
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

TEST_TUNING_BANNER = (
    "WARNING: hyperparameters were selected on the test split; use "
    "dev_fraction > 0 for a held-out tuning set"
)

DEFAULT_GRIDS = {"gmm": (4, 8, 10, 12, 16), "lasso": (0.1, 0.01, 0.001, 0.0001)}

FRONTEND_PARAM_DEFAULTS: dict[str, dict] = {
    "spectrogram": {"nfft": 512, "frame_ms": 25.0, "hop_ms": 10.0},
    "ltas": {"nfft": 512, "frame_ms": 25.0, "hop_ms": 10.0},
    "mfcc": {
        "n_coeffs": 13, "n_mels": 23, "nfft": 512,
        "frame_ms": 25.0, "hop_ms": 10.0, "preemphasis": 0.97,
    },
    "plp": {
        "model_order": 12, "n_bands": None, "nfft": 512,
        "frame_ms": 25.0, "hop_ms": 10.0, "preemphasis": 0.97,
    },
    "pitch": {"frame_ms": 25.0, "hop_ms": 10.0, "min_hz": 60.0, "max_hz": 400.0},
    "ppg": {},
}


@dataclass
class ExperimentConfig:
    manifest: Path
    out_dir: Path
    frontend: str
    backend: str
    root: Path | None = None
    frontend_params: dict = field(default_factory=dict)
    grid: tuple = ()
    seed: int = 42
    jobs: int = 1
    vad: bool = True
    vad_energy_offset: float = 5.0
    vad_mean_scale: float = 0.5
    prepare: bool = False
    sample_rate: int = 16000
    chunk_secs: float = 5.0
    min_tail_secs: float = 1.0
    peak_dbfs: float = -0.1
    dev_fraction: float = 0.0

    def __post_init__(self) -> None:
        self.manifest = Path(self.manifest)
        self.out_dir = Path(self.out_dir)
        self.root = Path(self.root) if self.root is not None else None
        if self.frontend not in FRONTEND_PARAM_DEFAULTS:
            raise DataError(f"unknown frontend {self.frontend!r}")
        if self.backend not in DEFAULT_GRIDS:
            raise DataError(f"unknown backend {self.backend!r}")
        if not self.grid:
            self.grid = DEFAULT_GRIDS[self.backend]
        self.grid = tuple(self.grid)
        unknown = set(self.frontend_params) - set(
            FRONTEND_PARAM_DEFAULTS[self.frontend]
        )
        if unknown:
            raise DataError(
                f"unknown {self.frontend} parameters: {sorted(unknown)}"
            )
        if self.jobs < 1:
            raise DataError("jobs must be >= 1")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise DataError("dev_fraction must be in [0, 1)")

    def resolved_frontend_params(self) -> dict:
        params = dict(FRONTEND_PARAM_DEFAULTS[self.frontend])
        params.update(self.frontend_params)
        return params

    def to_dict(self) -> dict:
        return {
            "manifest": str(self.manifest),
            "out_dir": str(self.out_dir),
            "frontend": self.frontend,
            "backend": self.backend,
            "root": str(self.root) if self.root else None,
            "frontend_params": self.resolved_frontend_params(),
            "grid": list(self.grid),
            "seed": self.seed,
            "jobs": self.jobs,
            "vad": self.vad,
            "vad_energy_offset": self.vad_energy_offset,
            "vad_mean_scale": self.vad_mean_scale,
            "prepare": self.prepare,
            "sample_rate": self.sample_rate,
            "chunk_secs": self.chunk_secs,
            "min_tail_secs": self.min_tail_secs,
            "peak_dbfs": self.peak_dbfs,
            "dev_fraction": self.dev_fraction,
        }


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML experiment config."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise DataError(f"config not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc

    known_top = {"manifest", "root", "out_dir", "seed", "jobs"}
    known_tables = {"frontend", "backend", "vad", "prepare", "tuning"}
    unknown = set(doc) - known_top - known_tables
    if unknown:
        raise DataError(f"{path}: unknown config keys {sorted(unknown)}")

    frontend_tbl = dict(doc.get("frontend", {}))
    backend_tbl = dict(doc.get("backend", {}))
    vad_tbl = dict(doc.get("vad", {}))
    prepare_tbl = dict(doc.get("prepare", {}))
    tuning_tbl = dict(doc.get("tuning", {}))
    try:
        return ExperimentConfig(
            manifest=doc["manifest"],
            out_dir=doc["out_dir"],
            root=doc.get("root"),
            seed=int(doc.get("seed", 42)),
            jobs=int(doc.get("jobs", 1)),
            frontend=frontend_tbl.pop("kind"),
            backend=backend_tbl.get("kind"),
            grid=tuple(backend_tbl.get("grid", ())),
            frontend_params=frontend_tbl,
            vad=bool(vad_tbl.get("enabled", True)),
            vad_energy_offset=float(vad_tbl.get("energy_offset", 5.0)),
            vad_mean_scale=float(vad_tbl.get("mean_scale", 0.5)),
            prepare=bool(prepare_tbl.get("enabled", False)),
            sample_rate=int(prepare_tbl.get("sample_rate", 16000)),
            chunk_secs=float(prepare_tbl.get("chunk_secs", 5.0)),
            min_tail_secs=float(prepare_tbl.get("min_tail_secs", 1.0)),
            peak_dbfs=float(prepare_tbl.get("peak_dbfs", -0.1)),
            dev_fraction=float(tuning_tbl.get("dev_fraction", 0.0)),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing required config key {exc}") from None


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _params_hash(frontend: str, params: dict, use_vad: bool, vad_params: dict) -> str:
    doc = json.dumps(
        {"frontend": frontend, "params": params, "vad": use_vad, **vad_params},
        sort_keys=True,
    )
    return hashlib.sha256(doc.encode()).hexdigest()


def _compute_features(
    src: Path,
    frontend: str,
    params: dict,
    use_vad: bool,
    vad_params: dict,
) -> FeatureMatrix:
    if frontend == "ppg":
        return load_ppg(src)
    samples, sr = read_wav(src)
    buf = downmix(samples, sr)
    if frontend in ("spectrogram", "ltas"):
        spec = spectrogram(
            buf, nfft=params["nfft"], frame_ms=params["frame_ms"],
            hop_ms=params["hop_ms"],
        )
        if use_vad:
            decision = vad(
                buf, frame_ms=params["frame_ms"], hop_ms=params["hop_ms"],
                **vad_params,
            )
            spec = apply_vad(spec, decision)
        return spec if frontend == "spectrogram" else ltas(spec)
    if frontend == "mfcc":
        fm = mfcc(buf, **params)
    elif frontend == "plp":
        fm = plp(buf, **params)
    elif frontend == "pitch":
        fm = pitch(buf, **params)
    else:
        raise DataError(f"unknown frontend {frontend!r}")
    if use_vad:
        decision = vad(
            buf, frame_ms=params["frame_ms"], hop_ms=params["hop_ms"], **vad_params
        )
        fm = apply_vad(fm, decision)
    return fm


def _extract_worker(task: tuple) -> tuple:
    """(utt_id, src, dst, frontend, params, use_vad, vad_params) ->
    (utt_id, content_hash, rows, error_message_or_None)."""
    utt_id, src, dst, frontend, params, use_vad, vad_params = task
    src, dst = Path(src), Path(dst)
    try:
        content_hash = _sha256_file(src)
        fm = _compute_features(src, frontend, params, use_vad, vad_params)
        write_archive(dst, fm)
        return utt_id, content_hash, fm.n_frames, None
    except PathoSpeechError as exc:
        return utt_id, None, 0, str(exc)
    except OSError as exc:
        return utt_id, None, 0, f"cannot read {src}: {exc}"


@dataclass
class ExtractionResult:
    index: dict[str, dict]
    failures: list[tuple[str, str]]
    n_computed: int
    n_cached: int


def extract_all(
    manifest: Manifest,
    frontend: str,
    params: dict,
    cache_dir: str | Path,
    jobs: int = 1,
    use_vad: bool = True,
    vad_params: dict | None = None,
) -> ExtractionResult:
    """One archive per utterance, reusing cache entries whose content
    and parameter hashes still match. Failures are collected, not fatal."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    vad_params = vad_params or {}
    phash = _params_hash(frontend, params, use_vad, vad_params)

    index_path = cache_dir / "index.json"
    index: dict[str, dict] = {}
    if index_path.exists():
        try:
            index = json.loads(index_path.read_text())
        except json.JSONDecodeError:
            log.warning("discarding unreadable cache index %s", index_path)
            index = {}

    tasks = []
    n_cached = 0
    new_index: dict[str, dict] = {}
    for rec in manifest.records:
        src = manifest.resolve_path(rec)
        dst = cache_dir / f"{rec.utt_id}.psdf"
        entry = index.get(rec.utt_id)
        if (
            entry
            and entry.get("params_hash") == phash
            and dst.exists()
            and src.exists()
            and entry.get("content_hash") == _sha256_file(src)
        ):
            n_cached += 1
            new_index[rec.utt_id] = entry
            continue
        tasks.append(
            (rec.utt_id, str(src), str(dst), frontend, params, use_vad, vad_params)
        )

    results = []
    if tasks:
        if jobs == 1:
            results = [_extract_worker(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_extract_worker, tasks))

    failures = []
    for utt_id, content_hash, rows, error in results:
        if error is not None:
            failures.append((utt_id, error))
            continue
        new_index[utt_id] = {
            "content_hash": content_hash,
            "params_hash": phash,
            "path": f"{utt_id}.psdf",
            "rows": rows,
        }

    index_path.write_text(json.dumps(new_index, indent=2, sort_keys=True) + "\n")
    return ExtractionResult(
        index=new_index,
        failures=sorted(failures),
        n_computed=len(results),
        n_cached=n_cached,
    )


def _prepare_one(task: tuple) -> tuple:
    """(record fields, src, out_dir, sample_rate, chunk_secs, min_tail_secs,
    peak_dbfs) -> (utt_id, [chunk rows], error)."""
    (utt_id, speaker, label, split, src, out_dir,
     sample_rate, chunk_secs, min_tail_secs, peak_dbfs) = task
    try:
        samples, sr = read_wav(src)
        buf = downmix(samples, sr)
        buf = resample(buf, sample_rate)
        buf = normalize_peak(buf, peak_dbfs)
        pieces = chunk(buf, chunk_secs, min_tail_secs)
        rows = []
        for i, piece in enumerate(pieces):
            chunk_id = f"{utt_id}_{i:03d}"
            wav_name = f"{chunk_id}.wav"
            write_wav(Path(out_dir) / wav_name, piece.samples, piece.sample_rate)
            rows.append(
                (chunk_id, speaker, label, split, wav_name, piece.duration_s)
            )
        return utt_id, rows, None
    except PathoSpeechError as exc:
        return utt_id, [], str(exc)


def prepare_corpus(
    manifest: Manifest,
    out_dir: str | Path,
    sample_rate: int = 16000,
    chunk_secs: float = 5.0,
    min_tail_secs: float = 1.0,
    peak_dbfs: float = -0.1,
    jobs: int = 1,
) -> tuple[Manifest, list[tuple[str, str]]]:
    """Downmix, resample, peak-normalize and chunk every utterance.

    Writes one WAV per chunk into out_dir plus a derived manifest with
    `_000`-style suffixed utt_ids. Returns (prepared manifest, failures).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (
            rec.utt_id, rec.speaker_id, rec.label, rec.split,
            str(manifest.resolve_path(rec)), str(out_dir),
            sample_rate, chunk_secs, min_tail_secs, peak_dbfs,
        )
        for rec in manifest.records
    ]
    if jobs == 1:
        results = [_prepare_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_prepare_one, tasks))

    records = []
    failures = []
    for utt_id, rows, error in results:
        if error is not None:
            failures.append((utt_id, error))
            continue
        for chunk_id, speaker, label, split, wav_name, duration in rows:
            records.append(
                UtteranceRecord(
                    utt_id=chunk_id, speaker_id=speaker, label=label,
                    split=split, path=wav_name, duration_s=duration,
                )
            )
    prepared = Manifest(records=tuple(records), root=out_dir)
    write_manifest(out_dir / "manifest.csv", prepared)
    return prepared, failures


@dataclass
class ExperimentReport:
    chosen_param: float
    train_accuracy: float
    train_eer: float | None
    test_accuracy: float
    test_eer: float | None
    sweep_rows: list
    warnings: list[str]
    excluded: list[tuple[str, str]]
    out_dir: Path
    scores_paths: dict[str, Path]


def split_items(
    manifest: Manifest, split: str, cache_dir: Path, index: dict[str, dict]
) -> tuple[list[tuple[str, str, str, FeatureMatrix]], list[tuple[str, str]]]:
    """Load cached features for a split in manifest order."""
    items = []
    excluded = []
    for rec in manifest.split_records(split):
        if rec.duration_s <= 0:
            raise DataError(
                f"{rec.utt_id}: duration_s must be > 0 for records admitted "
                "to training/evaluation"
            )
        entry = index.get(rec.utt_id)
        if entry is None:
            excluded.append((rec.utt_id, "extraction failed"))
            continue
        fm = read_archive(cache_dir / entry["path"])
        if fm.n_frames == 0:
            excluded.append((rec.utt_id, "no frames left after VAD"))
            continue
        items.append((rec.utt_id, rec.speaker_id, rec.label, fm))
    return items, excluded


def _score_items(backend: str, model, items) -> evaluation.ScoreSet:
    entries = []
    for utt_id, speaker, label, fm in items:
        if backend == "gmm":
            result = gmm.score_utterance(model, fm)
        else:
            result = lasso.predict_utterance(model, fm)
        entries.append(
            evaluation.ScoredUtterance(utt_id, speaker, label, result.score, result.label)
        )
    return evaluation.ScoreSet(entries=tuple(entries))


def lasso_design(items) -> tuple[np.ndarray, np.ndarray]:
    blocks = [fm.data for _, _, _, fm in items]
    labels = [
        np.full(fm.n_frames, 1.0 if label == "pathological" else 0.0)
        for _, _, label, fm in items
    ]
    return np.vstack(blocks), np.concatenate(labels)


def _dev_partition(
    items, dev_fraction: float, seed: int
) -> tuple[list, list]:
    """Speaker-disjoint (fit, dev) partition of the training items."""
    speakers = sorted({speaker for _, speaker, _, _ in items})
    rng = np.random.default_rng(seed)
    rng.shuffle(speakers)
    n_dev = max(1, int(round(dev_fraction * len(speakers))))
    dev_speakers = set(speakers[:n_dev])
    fit = [it for it in items if it[1] not in dev_speakers]
    dev = [it for it in items if it[1] in dev_speakers]
    if not fit or not dev:
        raise DataError("dev_fraction leaves an empty fit or dev set")
    return fit, dev


def run(config: ExperimentConfig) -> ExperimentReport:
    """Execute a full experiment as described by the config."""
    out_dir = config.out_dir
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []

    manifest = load_manifest(config.manifest, root=config.root)
    manifest_hash = _sha256_file(config.manifest)

    if config.prepare:
        manifest, prep_failures = prepare_corpus(
            manifest, out_dir / "prepared",
            sample_rate=config.sample_rate, chunk_secs=config.chunk_secs,
            min_tail_secs=config.min_tail_secs, peak_dbfs=config.peak_dbfs,
            jobs=config.jobs,
        )
        for utt_id, error in prep_failures:
            warnings.append(f"stage prepare: utt {utt_id}: {error}")

    params = config.resolved_frontend_params()
    vad_params = {
        "energy_offset": config.vad_energy_offset,
        "mean_scale": config.vad_mean_scale,
    }
    cache_dir = out_dir / "cache" / config.frontend
    extraction = extract_all(
        manifest, config.frontend, params, cache_dir,
        jobs=config.jobs, use_vad=config.vad, vad_params=vad_params,
    )
    for utt_id, error in extraction.failures:
        warnings.append(f"stage extract: utt {utt_id}: {error}")

    train_items, excluded_train = split_items(
        manifest, "train", cache_dir, extraction.index
    )
    test_items, excluded_test = split_items(
        manifest, "test", cache_dir, extraction.index
    )
    excluded = excluded_train + excluded_test
    if not train_items:
        raise DataError("stage train: no usable training utterances")
    if not test_items:
        raise DataError("stage evaluate: no usable test utterances")

    if config.dev_fraction > 0:
        fit_items, select_items = _dev_partition(
            train_items, config.dev_fraction, config.seed
        )
    else:
        fit_items, select_items = train_items, test_items
        warnings.append(TEST_TUNING_BANNER)

    try:
        if config.backend == "gmm":
            by_class = {
                label: np.vstack(
                    [fm.data for _, _, lab, fm in fit_items if lab == label]
                    or [np.empty((0, fit_items[0][3].n_dims))]
                )
                for label in ("healthy", "pathological")
            }
            model, sweep_rows = gmm.sweep_components(
                by_class, select_items, grid=tuple(int(g) for g in config.grid),
                seed=config.seed, feature_kind=config.frontend,
            )
            gmm.save_detector(out_dir / "model.json", model)
        else:
            X, y = lasso_design(fit_items)
            model, sweep_rows = lasso.sweep_alpha(
                (X, y), select_items, grid=tuple(float(g) for g in config.grid),
                feature_kind=config.frontend,
            )
            lasso.save_model(out_dir / "model.json", model)
    except PathoSpeechError as exc:
        raise type(exc)(f"stage train: {exc}") from exc

    train_scores = _score_items(config.backend, model, train_items)
    test_scores = _score_items(config.backend, model, test_items)
    scores_paths = {
        "train": reports_dir / "train_scores.csv",
        "test": reports_dir / "test_scores.csv",
    }
    evaluation.write_scores(scores_paths["train"], train_scores)
    evaluation.write_scores(scores_paths["test"], test_scores)

    train_report = evaluation.evaluation_report(train_scores)
    test_report = evaluation.evaluation_report(test_scores)
    evaluation.write_report(reports_dir / "evaluation_train.json", train_report)
    evaluation.write_report(reports_dir / "evaluation_test.json", test_report)

    chosen = (
        model.model_pathological.m if config.backend == "gmm" else model.alpha
    )
    column_names = next(
        (fm.column_names for _, _, _, fm in train_items if fm.column_names), None
    )
    _write_analyses(config, model, reports_dir, params, column_names)

    run_doc = {
        "config": config.to_dict(),
        "manifest_sha256": manifest_hash,
        "seed": config.seed,
        "chosen_param": chosen,
        "sweep": [
            {"param": r.param, "accuracy": r.accuracy, "eer": r.eer}
            for r in sweep_rows
        ],
        "train": {"accuracy": train_report["accuracy"], "eer": train_report["eer"]},
        "test": {"accuracy": test_report["accuracy"], "eer": test_report["eer"]},
        "warnings": warnings,
        "excluded": [{"utt_id": u, "reason": r} for u, r in excluded],
        # No cache-state counters here: reruns must be byte-comparable.
        "extraction_failures": [
            {"utt_id": u, "error": e} for u, e in extraction.failures
        ],
    }
    log.info(
        "extraction: %d computed, %d cached",
        extraction.n_computed,
        extraction.n_cached,
    )
    (reports_dir / "run.json").write_text(
        json.dumps(run_doc, indent=2, sort_keys=True) + "\n"
    )
    (reports_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    return ExperimentReport(
        chosen_param=chosen,
        train_accuracy=train_report["accuracy"],
        train_eer=train_report["eer"],
        test_accuracy=test_report["accuracy"],
        test_eer=test_report["eer"],
        sweep_rows=sweep_rows,
        warnings=warnings,
        excluded=excluded,
        out_dir=out_dir,
        scores_paths=scores_paths,
    )


def _write_analyses(
    config: ExperimentConfig,
    model,
    reports_dir: Path,
    params: dict,
    column_names=None,
) -> None:
    if config.backend == "gmm" and config.frontend == "ppg":
        report = explain.gmm_phone_difference(
            model.model_pathological, model.model_healthy,
            phone_labels=column_names,
        )
        (reports_dir / "phone_difference.json").write_text(report.to_json() + "\n")
        (reports_dir / "phone_difference.txt").write_text(report.to_text() + "\n")
    elif config.backend == "lasso" and config.frontend == "ltas":
        report = explain.lasso_coefficients(
            model, nfft=params["nfft"], sample_rate=config.sample_rate
        )
        (reports_dir / "coefficients.json").write_text(report.to_json() + "\n")
        (reports_dir / "coefficients.txt").write_text(report.to_text() + "\n")
        (reports_dir / "coefficients.csv").write_text(report.to_csv())


def export_spectrograms(
    manifest: Manifest,
    out_dir: str | Path,
    nfft: int = 512,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
    pad_to_longest: bool = False,
    use_vad: bool = False,
    vad_params: dict | None = None,
    jobs: int = 1,
) -> tuple[dict[str, int], list[tuple[str, str]]]:
    """Write one spectrogram archive per utterance for the neural
    baseline, optionally padded to the corpus maximum frame count with
    the log-floor value. A lengths.json sidecar records the original
    frame counts. Returns (lengths, failures)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = {"nfft": nfft, "frame_ms": frame_ms, "hop_ms": hop_ms}
    extraction = extract_all(
        manifest, "spectrogram", params, out_dir,
        jobs=jobs, use_vad=use_vad, vad_params=vad_params or {},
    )
    lengths = {
        utt_id: entry["rows"] for utt_id, entry in extraction.index.items()
    }
    if pad_to_longest and lengths:
        max_rows = max(lengths.values())
        floor = float(np.log(POWER_FLOOR))
        for utt_id, entry in extraction.index.items():
            path = out_dir / entry["path"]
            fm = read_archive(path)
            # Warm-cache archives may already be padded; top up, never shrink.
            if fm.n_frames >= max_rows:
                continue
            pad = np.full((max_rows - fm.n_frames, fm.n_dims), floor)
            write_archive(
                path,
                FeatureMatrix(
                    data=np.vstack([fm.data, pad]),
                    kind="spectrogram",
                    frame_hop_ms=fm.frame_hop_ms,
                    frame_len_ms=fm.frame_len_ms,
                    sample_rate=fm.sample_rate,
                ),
            )
    (out_dir / "lengths.json").write_text(
        json.dumps(lengths, indent=2, sort_keys=True) + "\n"
    )
    return lengths, extraction.failures
