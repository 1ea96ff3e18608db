"""L1-regularized linear regression by cyclic coordinate descent.

Minimizes (1/(2n)) ||y - Xw - b||^2 + alpha * ||w||_1 on internally
standardized features; detection thresholds the regression output at
0.5 with {0 healthy, 1 pathological} coding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyClassError, EmptyFeatureError
from .evaluation import DetectionScore
from .features import FeatureMatrix

MODEL_FORMAT_VERSION = 1
DECISION_THRESHOLD = 0.5


def soft_threshold(x: float, lam: float) -> float:
    """sign(x) * max(|x| - lam, 0)."""
    if lam < 0:
        raise DataError("soft-threshold shrinkage must be >= 0")
    return float(np.sign(x) * max(abs(x) - lam, 0.0))


@dataclass
class LassoModel:
    """Weights live in standardized feature space; feature_mean and
    feature_scale map raw features into it."""

    weights: np.ndarray
    intercept: float
    alpha: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    feature_kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)):
            raise DataError("non-finite weights")
        if np.any(self.feature_scale <= 0):
            raise DataError("feature_scale must be strictly positive")
        if self.alpha <= 0:
            raise DataError("alpha must be > 0")

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.weights))


def _standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, scale, pinned) with constant columns pinned at scale 1."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    pinned = scale == 0.0
    scale = np.where(pinned, 1.0, scale)
    return mean, scale, pinned


def lasso_objective(
    Xs: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, alpha: float
) -> float:
    n = len(y)
    resid = y - Xs @ w - b
    return float(resid @ resid / (2 * n) + alpha * np.abs(w).sum())


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    max_iters: int = 1000,
    tol: float = 1e-7,
    feature_kind: str = "ltas",
) -> LassoModel:
    """Cyclic coordinate descent from a zero start.

    y must contain both classes as {0, 1}. Columns are standardized
    with the training mean/std; constant columns get scale 1 and their
    weight pinned at 0. Convergence is declared when no coefficient
    moves more than tol in a full cycle.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError("X must be (n, d) with one label per row")
    n, d = X.shape
    if n < 2:
        raise DataError("need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    classes = set(np.unique(y))
    if not classes <= {0.0, 1.0}:
        raise DataError("labels must be coded {0 healthy, 1 pathological}")
    if len(classes) < 2:
        raise EmptyClassError("both classes must be present to fit")
    if alpha <= 0:
        raise DataError("alpha must be > 0")

    mean, scale, pinned = _standardization(X)
    Xs = (X - mean) / scale
    b = float(y.mean())
    w = np.zeros(d)
    r = y - b  # residual for w = 0
    col_sq = (Xs**2).sum(axis=0) / n
    active = np.flatnonzero(~pinned & (col_sq > 0))

    objective_path = [lasso_objective(Xs, y, w, b, alpha)]
    n_cycles = 0
    for _ in range(max_iters):
        n_cycles += 1
        max_delta = 0.0
        for j in active:
            w_old = w[j]
            if w_old != 0.0:
                r += Xs[:, j] * w_old
            rho = float(Xs[:, j] @ r) / n
            w[j] = soft_threshold(rho, alpha) / col_sq[j]
            if w[j] != 0.0:
                r -= Xs[:, j] * w[j]
            max_delta = max(max_delta, abs(w[j] - w_old))
        objective_path.append(lasso_objective(Xs, y, w, b, alpha))
        if max_delta <= tol:
            break

    return LassoModel(
        weights=w,
        intercept=b,
        alpha=alpha,
        feature_mean=mean,
        feature_scale=scale,
        feature_kind=feature_kind,
        meta={
            "cycles": n_cycles,
            "objective": objective_path[-1],
            "objective_path": objective_path,
            "n_nonzero": int(np.count_nonzero(w)),
        },
    )


def kkt_violation(model: LassoModel, X: np.ndarray, y: np.ndarray) -> float:
    """Largest violation of the LASSO stationarity conditions.

    At the optimum, gradient_j of the smooth part satisfies
    |gradient_j| <= alpha where w_j = 0 and gradient_j = -alpha *
    sign(w_j) elsewhere.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Xs = (X - model.feature_mean) / model.feature_scale
    n = len(y)
    r = y - Xs @ model.weights - model.intercept
    grad = -(Xs.T @ r) / n
    worst = 0.0
    for j, w_j in enumerate(model.weights):
        if w_j == 0.0:
            # Pinned constant columns have a zero gradient and pass trivially.
            worst = max(worst, abs(grad[j]) - model.alpha)
        else:
            worst = max(worst, abs(grad[j] + model.alpha * np.sign(w_j)))
    return worst


def predict_utterance(model: LassoModel, features) -> DetectionScore:
    """Mean of per-frame regression outputs; pathological iff >= 0.5.

    LTAS features have a single row, so the mean reduces to the plain
    linear prediction.
    """
    x = features.data if isinstance(features, FeatureMatrix) else np.atleast_2d(
        np.asarray(features, dtype=np.float64)
    )
    if x.shape[0] == 0:
        raise EmptyFeatureError("cannot predict on zero frames")
    if x.shape[1] != len(model.weights):
        raise DataError(
            f"features have {x.shape[1]} dims, model has {len(model.weights)}"
        )
    xs = (x - model.feature_mean) / model.feature_scale
    score = float(np.mean(xs @ model.weights + model.intercept))
    label = "pathological" if score >= DECISION_THRESHOLD else "healthy"
    return DetectionScore(score=score, label=label)


def sweep_alpha(
    train: tuple[np.ndarray, np.ndarray],
    eval_items: list[tuple[str, str, str, FeatureMatrix]],
    grid: tuple[float, ...] = (0.1, 0.01, 0.001, 0.0001),
    max_iters: int = 1000,
    tol: float = 1e-7,
    feature_kind: str = "ltas",
) -> tuple[LassoModel, list]:
    """Fit one model per alpha and keep the most accurate.

    Ties on accuracy go to the larger alpha (the sparser model). The
    report preserves grid order.
    """
    from .evaluation import ScoredUtterance, ScoreSet, accuracy as _acc, eer as _eer
    from .gmm import SweepRow

    if not grid:
        raise DataError("alpha grid must be non-empty")
    X, y = train
    rows: list[SweepRow] = []
    best: tuple[float, float, LassoModel] | None = None
    for alpha in grid:
        model = fit_lasso(
            X, y, alpha, max_iters=max_iters, tol=tol, feature_kind=feature_kind
        )
        predictions = [
            (u, s, lab, predict_utterance(model, fm)) for u, s, lab, fm in eval_items
        ]
        scored = ScoreSet(
            entries=tuple(
                ScoredUtterance(u, s, lab, pred.score, pred.label)
                for u, s, lab, pred in predictions
            )
        )
        acc = _acc(scored)
        two_sided = len({e.label for e in scored.entries}) == 2
        rows.append(
            SweepRow(param=alpha, accuracy=acc, eer=_eer(scored) if two_sided else None)
        )
        if best is None or acc > best[0] or (acc == best[0] and alpha > best[1]):
            best = (acc, alpha, model)
    assert best is not None
    return best[2], rows


def save_model(path: str | Path, model: LassoModel) -> None:
    nz = np.flatnonzero(model.weights)
    doc = {
        "format": "lasso-model",
        "version": MODEL_FORMAT_VERSION,
        "feature_kind": model.feature_kind,
        "alpha": model.alpha,
        "d": len(model.weights),
        "intercept": model.intercept,
        "weights": [[int(j), float(model.weights[j])] for j in nz],
        "feature_mean": model.feature_mean.tolist(),
        "feature_scale": model.feature_scale.tolist(),
        "meta": {k: v for k, v in model.meta.items() if k != "objective_path"},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: str | Path) -> LassoModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != "lasso-model" or doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: not a version-{MODEL_FORMAT_VERSION} lasso-model")
    weights = np.zeros(doc["d"])
    for j, value in doc["weights"]:
        weights[j] = value
    return LassoModel(
        weights=weights,
        intercept=doc["intercept"],
        alpha=doc["alpha"],
        feature_mean=np.array(doc["feature_mean"]),
        feature_scale=np.array(doc["feature_scale"]),
        feature_kind=doc["feature_kind"],
        meta=doc.get("meta", {}),
    )
