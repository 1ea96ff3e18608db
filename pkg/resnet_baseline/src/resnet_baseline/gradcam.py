"""Grad-CAM mean class-activation maps.

For a sample and a target class, the class logit is backpropagated to
the final rectified convolutional feature map (every other class
gradient is zero, the target set to 1), channel weights are the
spatially averaged gradients, and the map is the rectified weighted
channel sum, upsampled to the spectrogram shape. The per-class report
averages the maps over all requested samples.
"""

from __future__ import annotations

import numpy as np
import torch
from torch.nn.functional import interpolate

from .corpus import LABEL_INDEX, SpectrogramSet
from .model import SpectrogramResNet
from .psdf import Archive, write_archive


def grad_cam(
    model: SpectrogramResNet, x: torch.Tensor, class_label: str
) -> np.ndarray:
    """(batch, frames, bins) activation maps for one target class."""
    model.eval()
    fmap = model.feature_map(x.detach())
    fmap.retain_grad()
    logits = model._head_from_map(fmap)
    target = torch.zeros_like(logits)
    target[:, LABEL_INDEX[class_label]] = 1.0
    logits.backward(gradient=target)
    grads = fmap.grad  # (batch, ch, t, f)

    weights = grads.mean(dim=(2, 3), keepdim=True)
    cam = torch.relu((weights * fmap).sum(dim=1, keepdim=True))
    cam = interpolate(
        cam, size=model.input_shape, mode="bilinear", align_corners=False
    )
    return cam.squeeze(1).detach().numpy()


def grad_cam_mean(
    model: SpectrogramResNet, data: SpectrogramSet, class_label: str,
    batch_size: int = 8,
) -> np.ndarray:
    """Mean activation map over every sample of the requested class."""
    idx = [i for i, label in enumerate(data.labels) if label == class_label]
    if not idx:
        raise ValueError(f"no {class_label!r} samples in the set")
    x = torch.from_numpy(data.features[idx])
    total = np.zeros(model.input_shape, dtype=np.float64)
    for start in range(0, len(x), batch_size):
        maps = grad_cam(model, x[start : start + batch_size], class_label)
        total += maps.sum(axis=0)
    return (total / len(idx)).astype(np.float32)


def energy_fraction_above(
    cam: np.ndarray, sample_rate: int, nfft: int, cutoff_hz: float = 4000.0
) -> float:
    """Fraction of activation mass above cutoff_hz (reported, not
    asserted: a qualitative statistic about where the network looks)."""
    n_bins = cam.shape[1]
    bin_hz = sample_rate / nfft
    cutoff_bin = int(np.ceil(cutoff_hz / bin_hz))
    total = float(cam.sum())
    if total == 0.0:
        return 0.0
    return float(cam[:, cutoff_bin:].sum()) / total


def export_cam(
    path, cam: np.ndarray, sample_rate: int, frame_hop_ms: float,
    frame_len_ms: float,
) -> None:
    """Write a mean map as a spectrogram-kind archive readable by the
    core toolchain."""
    write_archive(
        path,
        Archive(
            data=cam.astype(np.float32),
            kind="spectrogram",
            frame_hop_ms=frame_hop_ms,
            frame_len_ms=frame_len_ms,
            sample_rate=sample_rate,
        ),
    )
