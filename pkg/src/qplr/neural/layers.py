"""Layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward``; calling
``backward`` accumulates parameter gradients and returns the gradient with
respect to the layer input. Tensors are batch-first; images are
``(B, C, H, W)``.
"""
from __future__ import annotations

from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractViolation
from .tensor import Tensor


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ContractViolation(f"dense input {x.shape} does not match weight {weight.shape}")
    return x @ weight.T + bias


def dense_backward(grad_out, x, weight):
    """Returns ``(grad_x, grad_weight, grad_bias)``."""
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    b, c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, H', W', k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * (h - k + 1) * (w - k + 1), c * k * k)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Valid, stride-1 cross-correlation. Returns ``(out, cols)``."""
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ContractViolation(f"conv input {x.shape} does not match weight {weight.shape}")
    f, _, k, _ = weight.shape
    b, _, h, w = x.shape
    if h < k or w < k:
        raise ContractViolation(f"input {h}x{w} smaller than kernel {k}x{k}")
    cols = _im2col(x, k)
    out = cols @ weight.reshape(f, -1).T + bias
    return out.reshape(b, h - k + 1, w - k + 1, f).transpose(0, 3, 1, 2), cols


def conv2d_backward(grad_out, cols, x_shape, weight):
    f, c, k, _ = weight.shape
    b, _, h, w = x_shape
    ho, wo = h - k + 1, w - k + 1
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, f)
    grad_w = (g.T @ cols).reshape(weight.shape)
    grad_b = g.sum(axis=0)
    dcols = (g @ weight.reshape(f, -1)).reshape(b, ho, wo, c, k, k)
    grad_x = np.zeros(x_shape)
    for i in range(k):
        for j in range(k):
            grad_x[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return grad_x, grad_w, grad_b


def maxpool_forward(x: np.ndarray, size: int = 2):
    """Non-overlapping max pooling. Returns ``(out, argmax)``; ties go to the first element."""
    b, c, h, w = x.shape
    if h % size or w % size:
        raise ContractViolation(f"pool size {size} does not divide {h}x{w}")
    blocks = x.reshape(b, c, h // size, size, w // size, size).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, h // size, w // size, size * size)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def maxpool_backward(grad_out, arg, x_shape, size: int = 2):
    b, c, h, w = x_shape
    blocks = np.zeros((b, c, h // size, w // size, size * size))
    np.put_along_axis(blocks, arg[..., None], grad_out[..., None], axis=-1)
    blocks = blocks.reshape(b, c, h // size, w // size, size, size).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(x_shape)


def dropout_forward(x: np.ndarray, rate: float, training: bool, seed=None):
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` is None when inactive.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not 0.0 <= rate < 1.0:
        raise ContractViolation(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind = "layer"

    def params(self) -> List[Tensor]:
        return []

    def config(self) -> dict:
        return {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None):
        self.in_features, self.out_features = in_features, out_features
        rng = rng or np.random.default_rng(0)
        self.weight = Tensor(kaiming_uniform(rng, (out_features, in_features), in_features), name="weight")
        self.bias = Tensor(np.zeros(out_features), name="bias")

    def params(self):
        return [self.weight, self.bias]

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def forward(self, x, training=False, rng=None):
        self._x = x
        return dense_forward(x, self.weight.data, self.bias.data)

    def backward(self, grad):
        gx, gw, gb = dense_backward(grad, self._x, self.weight.data)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        return gx


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None):
        self.in_channels, self.out_channels, self.kernel_size = in_channels, out_channels, kernel_size
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Tensor(kaiming_uniform(rng, shape, fan_in), name="weight")
        self.bias = Tensor(np.zeros(out_channels), name="bias")

    def params(self):
        return [self.weight, self.bias]

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size}

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        out, self._cols = conv2d_forward(x, self.weight.data, self.bias.data)
        return out

    def backward(self, grad):
        gx, gw, gb = conv2d_backward(grad, self._cols, self._shape, self.weight.data)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        return gx


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, size: int = 2):
        self.size = size

    def config(self):
        return {"size": self.size}

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        out, self._arg = maxpool_forward(x, self.size)
        return out

    def backward(self, grad):
        return maxpool_backward(grad, self._arg, self._shape, self.size)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout, active only when ``training`` is set (also used for MC sampling)."""

    kind = "dropout"

    def __init__(self, rate: float = 0.5):
        if not 0.0 <= rate < 1.0:
            raise ContractViolation(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if training and self.rate > 0 and rng is None:
            raise ContractViolation("active dropout needs an rng")
        out, self._mask = dropout_forward(x, self.rate, training, rng)
        return out

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2d, MaxPool2d, ReLU, Flatten, Dropout)}


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: List[Layer], name: str = ""):
        self.layers = list(layers)
        self.name = name

    def params(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def predict_proba(self, x, batch_size: int = 500) -> np.ndarray:
        """Softmax outputs in inference mode, evaluated in chunks."""
        return np.concatenate([softmax(self.forward(x[i:i + batch_size]))
                               for i in range(0, len(x), batch_size)]) if len(x) else np.zeros((0,))

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params())

    def manifest(self) -> list:
        return [{"kind": layer.kind, **layer.config()} for layer in self.layers]

    @classmethod
    def from_manifest(cls, manifest: list, name: str = "") -> "Sequential":
        layers = []
        for entry in manifest:
            entry = dict(entry)
            kind = entry.pop("kind")
            if kind not in LAYER_TYPES:
                raise ContractViolation(f"unknown layer kind {kind!r}")
            layers.append(LAYER_TYPES[kind](**entry))
        return cls(layers, name)
