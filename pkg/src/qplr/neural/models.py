"""Fixed architectures: the LeNet student and plain MLPs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .layers import Conv2d, Dense, Dropout, Flatten, MaxPool2d, ReLU, Sequential


@dataclass(frozen=True)
class LeNetSpec:
    conv1_filters: int = 6
    conv2_filters: int = 16
    kernel_size: int = 5
    fc1: int = 120
    fc2: int = 84
    num_classes: int = 10
    input_size: int = 28
    dropout: float = 0.0

    @property
    def flatten_size(self) -> int:
        side = ((self.input_size - self.kernel_size + 1) // 2 - self.kernel_size + 1) // 2
        return self.conv2_filters * side * side


def lenet(spec: LeNetSpec = LeNetSpec(), rng: Optional[np.random.Generator] = None) -> Sequential:
    """LeNet: conv(6,5x5)-relu-pool-conv(16,5x5)-relu-pool-fc120-fc84-fc10.

    With ``spec.dropout > 0`` a dropout layer follows each hidden FC layer
    (the MC-dropout teacher).
    """
    rng = rng or np.random.default_rng(0)
    k = spec.kernel_size
    layers = [
        Conv2d(1, spec.conv1_filters, k, rng), ReLU(), MaxPool2d(2),
        Conv2d(spec.conv1_filters, spec.conv2_filters, k, rng), ReLU(), MaxPool2d(2),
        Flatten(),
        Dense(spec.flatten_size, spec.fc1, rng), ReLU(),
    ]
    if spec.dropout > 0:
        layers.append(Dropout(spec.dropout))
    layers += [Dense(spec.fc1, spec.fc2, rng), ReLU()]
    if spec.dropout > 0:
        layers.append(Dropout(spec.dropout))
    layers.append(Dense(spec.fc2, spec.num_classes, rng))
    return Sequential(layers, name="lenet")


def mlp(sizes: Sequence[int], rng: Optional[np.random.Generator] = None, name: str = "mlp") -> Sequential:
    """Dense stack with ReLU between layers and a linear output."""
    rng = rng or np.random.default_rng(0)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense(fan_in, fan_out, rng))
        if i < len(sizes) - 2:
            layers.append(ReLU())
    return Sequential(layers, name=name)
