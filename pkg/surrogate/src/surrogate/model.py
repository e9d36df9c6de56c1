"""Regression CNN: four conv blocks into a small dense head.

One network per property. The stack is deliberately modest (about 210k
parameters at 96 px input): the task is closer to reading an area
fraction plus local arrangement than to natural-image classification,
and a deeper net would only slow single-core training down.
"""

from __future__ import annotations

import torch
from torch import nn

CONV_CHANNELS = (16, 32, 64, 64)
DENSE_UNITS = 64
MAX_PARAMETERS = 2_000_000


class SurrogateNet(nn.Module):
    """Conv(3x3)+ReLU+MaxPool(2) blocks, then Flatten-Dense-Linear(1)."""

    def __init__(self, resolution: int):
        super().__init__()
        if resolution < 32 or resolution % 16:
            raise ValueError("resolution must be >= 32 and a multiple of 16")
        self.resolution = resolution
        blocks = []
        c_in = 1
        for c in CONV_CHANNELS:
            blocks += [nn.Conv2d(c_in, c, kernel_size=3, padding=1),
                       nn.ReLU(),
                       nn.MaxPool2d(2)]
            c_in = c
        self.features = nn.Sequential(*blocks)
        side = resolution // 2 ** len(CONV_CHANNELS)
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(CONV_CHANNELS[-1] * side * side, DENSE_UNITS),
            nn.ReLU(),
            nn.Linear(DENSE_UNITS, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


def build_model(resolution: int, seed: int = 0) -> SurrogateNet:
    """Construct a freshly initialized network.

    Initialization depends only on the seed and the architecture, never
    on any data seen so far, so identical seeds give identical weights.
    """
    torch.manual_seed(seed)
    model = SurrogateNet(resolution)
    n = parameter_count(model)
    if n >= MAX_PARAMETERS:
        raise ValueError(f"model has {n} parameters, limit is {MAX_PARAMETERS}")
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
