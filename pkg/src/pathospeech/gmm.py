"""Diagonal-covariance Gaussian mixture models trained by EM.

One model per class; an utterance is classified by the difference of
the two models' frame-averaged log-likelihoods.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, EmptyFeatureError
from .evaluation import DetectionScore
from .features import FeatureMatrix

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
DEGENERATE_MASS = 1e-8
MODEL_FORMAT_VERSION = 1


def _as_array(frames) -> np.ndarray:
    if isinstance(frames, FeatureMatrix):
        return frames.data
    arr = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    return arr


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    feature_kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights <= 0):
            raise DataError("mixture weights must be positive and sum to 1")
        if np.any(self.variances < VARIANCE_FLOOR - 1e-12):
            raise DataError(f"variances must respect the {VARIANCE_FLOOR} floor")
        if not (len(self.weights) == len(self.means) == len(self.variances)):
            raise DataError("weights/means/variances component counts differ")

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class GmmDetector:
    model_pathological: GmmModel
    model_healthy: GmmModel

    def __post_init__(self) -> None:
        a, b = self.model_pathological, self.model_healthy
        if a.feature_kind != b.feature_kind:
            raise DataError("class models disagree on feature kind")
        if a.dim != b.dim:
            raise DataError("class models disagree on dimensionality")

    @property
    def m(self) -> int:
        return self.model_pathological.m


def _component_logliks(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(n, m) log of weight_j * N(x | mean_j, diag var_j)."""
    diff = x[:, np.newaxis, :] - model.means[np.newaxis, :, :]
    quad = np.sum(diff**2 / model.variances[np.newaxis, :, :], axis=2)
    log_norm = -0.5 * (
        model.dim * np.log(2.0 * np.pi) + np.sum(np.log(model.variances), axis=1)
    )
    return np.log(model.weights) + log_norm - 0.5 * quad


def loglik(model: GmmModel, frames) -> np.ndarray:
    """Per-frame mixture log-likelihood via log-sum-exp."""
    x = _as_array(frames)
    if x.shape[1] != model.dim:
        raise DataError(f"frames have {x.shape[1]} dims, model has {model.dim}")
    return logsumexp(_component_logliks(model, x), axis=1)


def _kmeanspp_means(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    means = np.empty((m, x.shape[1]))
    means[0] = x[rng.integers(n)]
    min_d2 = np.sum((x - means[0]) ** 2, axis=1)
    for j in range(1, m):
        total = min_d2.sum()
        if total <= 0:
            means[j] = x[rng.integers(n)]
        else:
            means[j] = x[rng.choice(n, p=min_d2 / total)]
        min_d2 = np.minimum(min_d2, np.sum((x - means[j]) ** 2, axis=1))
    return means


def fit_gmm(
    frames,
    m: int,
    seed: int = 42,
    max_iters: int = 100,
    tol: float = 1e-5,
    feature_kind: str | None = None,
) -> GmmModel:
    """EM for a diagonal-covariance mixture.

    Means are seeded k-means++ style from the data; variances start at
    the per-dimension data variance. Components whose responsibility
    mass collapses below 1e-8 are reinitialized at the frame the
    current mixture likes least (counted in meta). Stops when the mean
    log-likelihood changes by less than tol relative or at max_iters.
    """
    if isinstance(frames, FeatureMatrix) and feature_kind is None:
        feature_kind = frames.kind
    x = _as_array(frames)
    n, d = x.shape
    if n < 10 * m:
        raise DataError(f"need at least {10 * m} frames to fit m={m}, got {n}")

    rng = np.random.default_rng(seed)
    means = _kmeanspp_means(x, m, rng)
    global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    variances = np.tile(global_var, (m, 1))
    weights = np.full(m, 1.0 / m)

    model = GmmModel(weights, means, variances, feature_kind or "mfcc")
    ll_history: list[float] = []
    n_reinit = 0
    for _ in range(max_iters):
        comp_ll = _component_logliks(model, x)
        frame_ll = logsumexp(comp_ll, axis=1)
        mean_ll = float(np.mean(frame_ll))
        ll_history.append(mean_ll)
        if len(ll_history) > 1:
            prev = ll_history[-2]
            if abs(mean_ll - prev) <= tol * max(abs(prev), 1.0):
                break

        resp = np.exp(comp_ll - frame_ll[:, np.newaxis])
        mass = resp.sum(axis=0)
        degenerate = mass < DEGENERATE_MASS

        new_means = model.means.copy()
        new_vars = model.variances.copy()
        ok = ~degenerate
        new_means[ok] = (resp[:, ok].T @ x) / mass[ok][:, np.newaxis]
        second = (resp[:, ok].T @ x**2) / mass[ok][:, np.newaxis]
        new_vars[ok] = np.maximum(second - new_means[ok] ** 2, VARIANCE_FLOOR)
        new_weights = mass / n

        if np.any(degenerate):
            worst = int(np.argmin(frame_ll))
            for j in np.flatnonzero(degenerate):
                n_reinit += 1
                new_means[j] = x[worst]
                new_vars[j] = global_var
                new_weights[j] = 1.0 / m
            log.warning(
                "reinitialized %d degenerate component(s)",
                int(np.count_nonzero(degenerate)),
            )
        new_weights = np.maximum(new_weights, 1e-12)
        new_weights /= new_weights.sum()
        model = GmmModel(new_weights, new_means, new_vars, model.feature_kind)

    model.meta = {
        "seed": seed,
        "iterations": len(ll_history),
        "final_log_likelihood": ll_history[-1],
        "log_likelihoods": ll_history,
        "reinitialized_components": n_reinit,
    }
    if isinstance(frames, FeatureMatrix) and frames.column_names:
        model.meta["column_names"] = list(frames.column_names)
    return model


def score_utterance(detector: GmmDetector, frames) -> DetectionScore:
    """Frame-averaged log-likelihood difference (pathological - healthy).

    Positive scores predict pathological; ties break toward healthy.
    """
    x = _as_array(frames)
    if x.shape[0] == 0:
        raise EmptyFeatureError(
            "utterance has zero frames after VAD; exclude it from scoring"
        )
    score = float(
        np.mean(loglik(detector.model_pathological, x))
        - np.mean(loglik(detector.model_healthy, x))
    )
    label = "pathological" if score > 0 else "healthy"
    return DetectionScore(score=score, label=label)


@dataclass(frozen=True)
class SweepRow:
    param: float
    accuracy: float
    eer: float | None


def sweep_components(
    train_by_class: dict[str, np.ndarray],
    eval_items: list[tuple[str, str, str, FeatureMatrix]],
    grid: tuple[int, ...] = (4, 8, 10, 12, 16),
    seed: int = 42,
    max_iters: int = 100,
    tol: float = 1e-5,
    feature_kind: str | None = None,
) -> tuple[GmmDetector, list[SweepRow]]:
    """Train one detector per mixture size and keep the most accurate.

    eval_items are (utt_id, speaker_id, label, features) tuples; ties
    on accuracy go to the smaller m.
    """
    from .evaluation import ScoredUtterance, ScoreSet, accuracy as _acc, eer as _eer

    if not grid:
        raise DataError("component grid must be non-empty")
    for label in ("healthy", "pathological"):
        if label not in train_by_class or len(_as_array(train_by_class[label])) == 0:
            raise DataError(f"training data for class {label!r} is missing")

    rows: list[SweepRow] = []
    best: tuple[float, int, GmmDetector] | None = None
    for m in grid:
        detector = GmmDetector(
            model_pathological=fit_gmm(
                train_by_class["pathological"], m, seed=seed,
                max_iters=max_iters, tol=tol, feature_kind=feature_kind,
            ),
            model_healthy=fit_gmm(
                train_by_class["healthy"], m, seed=seed,
                max_iters=max_iters, tol=tol, feature_kind=feature_kind,
            ),
        )
        scored = ScoreSet(
            entries=tuple(
                ScoredUtterance(u, s, lab, *_score_pair(detector, fm))
                for u, s, lab, fm in eval_items
            )
        )
        acc = _acc(scored)
        two_sided = len({e.label for e in scored.entries}) == 2
        rows.append(SweepRow(param=m, accuracy=acc, eer=_eer(scored) if two_sided else None))
        if best is None or acc > best[0] or (acc == best[0] and m < best[1]):
            best = (acc, m, detector)
    assert best is not None
    return best[2], rows


def _score_pair(detector: GmmDetector, fm: FeatureMatrix) -> tuple[float, str]:
    result = score_utterance(detector, fm)
    return result.score, result.label


def _model_to_dict(model: GmmModel) -> dict:
    return {
        "feature_kind": model.feature_kind,
        "m": model.m,
        "d": model.dim,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "meta": model.meta,
    }


def _model_from_dict(doc: dict) -> GmmModel:
    return GmmModel(
        weights=np.array(doc["weights"]),
        means=np.array(doc["means"]),
        variances=np.array(doc["variances"]),
        feature_kind=doc["feature_kind"],
        meta=doc.get("meta", {}),
    )


def save_detector(path: str | Path, detector: GmmDetector) -> None:
    doc = {
        "format": "gmm-detector",
        "version": MODEL_FORMAT_VERSION,
        "pathological": _model_to_dict(detector.model_pathological),
        "healthy": _model_to_dict(detector.model_healthy),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_detector(path: str | Path) -> GmmDetector:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read detector {path}: {exc}") from exc
    if doc.get("format") != "gmm-detector" or doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: not a version-{MODEL_FORMAT_VERSION} gmm-detector")
    return GmmDetector(
        model_pathological=_model_from_dict(doc["pathological"]),
        model_healthy=_model_from_dict(doc["healthy"]),
    )
