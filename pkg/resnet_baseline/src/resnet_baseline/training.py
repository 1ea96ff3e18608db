"""Training loop: Adam, best-validation-loss checkpointing, scores CSV
emission in the core toolkit's format."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .corpus import LABEL_INDEX, LABELS, SpectrogramSet, write_scores
from .model import ResNetSpec, SpectrogramResNet

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: SpectrogramResNet
    best_epoch: int
    val_losses: list[float]
    train_accuracy: float
    metrics: dict = field(default_factory=dict)


def _label_tensor(labels: list[str]) -> torch.Tensor:
    return torch.tensor([LABEL_INDEX[label] for label in labels], dtype=torch.long)


def split_by_speaker(
    data: SpectrogramSet, val_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Indices for a speaker-disjoint (fit, validation) partition."""
    speakers = sorted(set(data.speaker_ids))
    rng = np.random.default_rng(seed)
    rng.shuffle(speakers)
    n_val = max(1, int(round(val_fraction * len(speakers))))
    if n_val >= len(speakers):
        raise ValueError("validation split would swallow every speaker")
    val_speakers = set(speakers[:n_val])
    fit_idx = [i for i, s in enumerate(data.speaker_ids) if s not in val_speakers]
    val_idx = [i for i, s in enumerate(data.speaker_ids) if s in val_speakers]
    return fit_idx, val_idx


def train(
    train_data: SpectrogramSet,
    spec: ResNetSpec = ResNetSpec(),
    seed: int = 42,
    batch_size: int = 8,
    val_fraction: float = 0.1,
) -> TrainResult:
    """Fit the network, keeping the epoch with the best validation loss.

    Validation holds out ~val_fraction of the training utterances by
    speaker. All randomness (init, shuffling, the split) flows from
    seed.
    """
    torch.manual_seed(seed)
    x_all = torch.from_numpy(train_data.features)
    y_all = _label_tensor(train_data.labels)
    fit_idx, val_idx = split_by_speaker(train_data, val_fraction, seed)

    model = SpectrogramResNet(spec, tuple(train_data.features.shape[1:]))
    fit_x = x_all[fit_idx]
    model.input_mean.fill_(float(fit_x.mean()))
    model.input_scale.fill_(float(fit_x.std().clamp_min(1e-6)))

    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    generator = torch.Generator().manual_seed(seed)

    best_state = None
    best_loss = float("inf")
    best_epoch = -1
    val_losses = []
    for epoch in range(spec.epochs):
        model.train()
        order = torch.randperm(len(fit_idx), generator=generator)
        for start in range(0, len(order), batch_size):
            batch = [fit_idx[i] for i in order[start : start + batch_size]]
            optimizer.zero_grad()
            loss = loss_fn(model.logits(x_all[batch]), y_all[batch])
            loss.backward()
            optimizer.step()

        model.eval()
        with torch.no_grad():
            val_loss = float(loss_fn(model.logits(x_all[val_idx]), y_all[val_idx]))
        val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
        log.info("epoch %d: val loss %.4f", epoch, val_loss)

    model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        predictions = model(x_all).argmax(dim=1)
    train_accuracy = float((predictions == y_all).float().mean())
    return TrainResult(
        model=model,
        best_epoch=best_epoch,
        val_losses=val_losses,
        train_accuracy=train_accuracy,
        metrics={"best_val_loss": best_loss, "n_fit": len(fit_idx),
                 "n_val": len(val_idx)},
    )


def overfit_single_batch(
    data: SpectrogramSet,
    spec: ResNetSpec = ResNetSpec(),
    seed: int = 42,
    max_steps: int = 200,
) -> tuple[SpectrogramResNet, int]:
    """Sanity oracle: drive one batch to training accuracy 1.0.

    Returns (model, steps used); raises if max_steps is not enough.
    """
    torch.manual_seed(seed)
    x = torch.from_numpy(data.features)
    y = _label_tensor(data.labels)
    model = SpectrogramResNet(spec, tuple(data.features.shape[1:]))
    model.input_mean.fill_(float(x.mean()))
    model.input_scale.fill_(float(x.std().clamp_min(1e-6)))
    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    for step in range(1, max_steps + 1):
        model.train()
        optimizer.zero_grad()
        loss = loss_fn(model.logits(x), y)
        loss.backward()
        optimizer.step()
        model.eval()
        with torch.no_grad():
            if bool((model(x).argmax(dim=1) == y).all()):
                return model, step
    raise RuntimeError(f"single batch not fit after {max_steps} steps")


def score_set(
    model: SpectrogramResNet, data: SpectrogramSet, batch_size: int = 16
) -> list[tuple[str, str, str, float, str]]:
    """Scores-CSV rows: score = P(pathological), higher = more
    pathological, prediction = argmax class."""
    model.eval()
    rows = []
    x = torch.from_numpy(data.features)
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            probs = model(x[start : start + batch_size])
            for offset, p in enumerate(probs):
                i = start + offset
                score = float(p[LABEL_INDEX["pathological"]])
                predicted = LABELS[int(p.argmax())]
                rows.append(
                    (data.utt_ids[i], data.speaker_ids[i], data.labels[i],
                     score, predicted)
                )
    return rows


def emit_scores(
    path: str | Path, model: SpectrogramResNet, data: SpectrogramSet
) -> None:
    write_scores(path, score_set(model, data))


def save_checkpoint(path: str | Path, result: TrainResult) -> None:
    torch.save(
        {
            "state_dict": result.model.state_dict(),
            "spec": result.model.spec,
            "input_shape": result.model.input_shape,
            "best_epoch": result.best_epoch,
            "val_losses": result.val_losses,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> SpectrogramResNet:
    payload = torch.load(path, weights_only=False)
    model = SpectrogramResNet(payload["spec"], payload["input_shape"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
