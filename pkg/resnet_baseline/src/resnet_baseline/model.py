"""Dilated residual network over padded spectrograms.

Four dilated residual blocks with nominal (time x freq) kernels
(240x100, 8 filters), (120x200, 16), (60x100, 32), (30x50, 64), a
100-unit fully connected layer and a 2-way softmax head. Nominal
kernels routinely exceed the feature-map extent for short utterances;
they are capped at the current map size (and the cap logged) while the
nominal sizes stay in the spec.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import torch
from torch import nn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockSpec:
    kernel: tuple[int, int]  # (time, freq)
    filters: int
    dilation: int
    pool: tuple[int, int]


@dataclass(frozen=True)
class ResNetSpec:
    blocks: tuple[BlockSpec, ...] = (
        BlockSpec(kernel=(240, 100), filters=8, dilation=2, pool=(2, 2)),
        BlockSpec(kernel=(120, 200), filters=16, dilation=4, pool=(2, 2)),
        BlockSpec(kernel=(60, 100), filters=32, dilation=4, pool=(2, 2)),
        BlockSpec(kernel=(30, 50), filters=64, dilation=8, pool=(1, 2)),
    )
    hidden_units: int = 100
    n_classes: int = 2
    learning_rate: float = 1e-3
    epochs: int = 50


class DilatedResBlock(nn.Module):
    def __init__(self, in_ch: int, spec: BlockSpec, map_size: tuple[int, int]):
        super().__init__()
        kt = min(spec.kernel[0], map_size[0])
        kf = min(spec.kernel[1], map_size[1])
        if (kt, kf) != spec.kernel:
            log.info(
                "capping %sx%s kernel to %dx%d for a %dx%d feature map",
                spec.kernel[0], spec.kernel[1], kt, kf, map_size[0], map_size[1],
            )
        self.conv1 = nn.Conv2d(
            in_ch, spec.filters, (kt, kf), padding="same", dilation=spec.dilation
        )
        self.conv2 = nn.Conv2d(
            spec.filters, spec.filters, (kt, kf), padding="same",
            dilation=spec.dilation,
        )
        self.skip = (
            nn.Identity() if in_ch == spec.filters
            else nn.Conv2d(in_ch, spec.filters, 1)
        )
        self.pool = nn.MaxPool2d(spec.pool, ceil_mode=True)

    def forward(self, x):
        h = torch.relu(self.conv1(x))
        h = self.conv2(h)
        # Rectified residual map; Grad-CAM hooks attach here.
        h = torch.relu(h + self.skip(x))
        return self.pool(h)


def _pooled(size: int, pool: int) -> int:
    return math.ceil(size / pool)


class SpectrogramResNet(nn.Module):
    """Classifier over (batch, frames, bins) log-power spectrograms.

    forward() returns softmax probabilities; logits() the pre-softmax
    scores used by the loss and by Grad-CAM.
    """

    def __init__(self, spec: ResNetSpec, input_shape: tuple[int, int]):
        super().__init__()
        self.spec = spec
        self.input_shape = tuple(input_shape)
        blocks = []
        in_ch = 1
        t, f = input_shape
        for block_spec in spec.blocks:
            blocks.append(DilatedResBlock(in_ch, block_spec, (t, f)))
            in_ch = block_spec.filters
            t = _pooled(t, block_spec.pool[0])
            f = _pooled(f, block_spec.pool[1])
        self.blocks = nn.ModuleList(blocks)
        self.fc = nn.Linear(in_ch * t * f, spec.hidden_units)
        self.head = nn.Linear(spec.hidden_units, spec.n_classes)
        # Standardization constants learned from the training corpus.
        self.register_buffer("input_mean", torch.zeros(()))
        self.register_buffer("input_scale", torch.ones(()))

    def _check(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 3 or tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"expected (batch, {self.input_shape[0]}, "
                f"{self.input_shape[1]}) spectrograms, got {tuple(x.shape)}"
            )
        return (x.unsqueeze(1) - self.input_mean) / self.input_scale

    def feature_map(self, x: torch.Tensor) -> torch.Tensor:
        """Final rectified convolutional feature map (pre-pooling)."""
        h = self._check(x)
        for block in self.blocks[:-1]:
            h = block(h)
        last = self.blocks[-1]
        inner = torch.relu(last.conv1(h))
        inner = last.conv2(inner)
        return torch.relu(inner + last.skip(h))

    def _head_from_map(self, rectified: torch.Tensor) -> torch.Tensor:
        pooled = self.blocks[-1].pool(rectified)
        flat = pooled.flatten(1)
        return self.head(torch.relu(self.fc(flat)))

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self._head_from_map(self.feature_map(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(x), dim=1)
