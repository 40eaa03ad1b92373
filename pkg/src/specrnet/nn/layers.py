"""Dense-tensor layers with analytic backward passes.

Each layer caches whatever its backward formula needs during forward;
calling backward before any forward raises NoForwardRecorded. Gradients
accumulate into Parameter.grad until zero_grad() is called, so repeated
backward calls double them.

All arrays are plain numpy ndarrays; float32 in normal operation, float64
when a model is built in check mode.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateBatch, NoForwardRecorded, OutputEmpty, ShapeMismatch
from .backend import kernels

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class Parameter:
    """Named value/grad pair; `trainable=False` marks running statistics."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Layer:
    def parameters(self) -> list[Parameter]:
        return []

    def _cache_or_raise(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise NoForwardRecorded(f"{type(self).__name__}.backward before forward")
        return cache


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# --- activations (functional forms) -----------------------------------------


def selu(x: np.ndarray) -> np.ndarray:
    neg = SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    return np.where(x > 0, SELU_LAMBDA * x, neg).astype(x.dtype, copy=False)


def leaky_relu(x: np.ndarray, slope: float = 0.3) -> np.ndarray:
    return np.where(x > 0, x, slope * x).astype(x.dtype, copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Selu(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = selu(x)
        self._cache = (x, y)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, y = self._cache_or_raise()
        grad = np.where(x > 0, SELU_LAMBDA, y + SELU_LAMBDA * SELU_ALPHA)
        return (dy * grad).astype(dy.dtype, copy=False)


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.3):
        self.slope = slope

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._cache = x > 0
        return leaky_relu(x, self.slope)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        pos = self._cache_or_raise()
        return (dy * np.where(pos, 1.0, self.slope)).astype(dy.dtype, copy=False)


class Sigmoid(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y = self._cache_or_raise()
        return (dy * y * (1.0 - y)).astype(dy.dtype, copy=False)


# --- trainable layers --------------------------------------------------------


class Conv2d(Layer):
    """Cross-correlation with per-channel bias. Kernel 3 uses zero padding 1,
    kernel 1 no padding; both preserve the spatial extent."""

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel: int, rng: np.random.Generator, dtype=np.float32):
        if kernel not in (1, 3):
            raise ValueError(f"kernel must be 1 or 3, got {kernel}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        bound = 1.0 / np.sqrt(in_channels * kernel * kernel)
        self.weight = Parameter(f"{name}.weight",
                                _uniform(rng, (out_channels, in_channels, kernel, kernel),
                                         bound, dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"{self.weight.name}: input {x.shape} incompatible "
                                f"with {self.in_channels} input channels")
        if self.kernel == 1:
            B, C, H, W = x.shape
            xm = x.reshape(B, C, H * W)
            y = np.matmul(self.weight.value[:, :, 0, 0], xm).reshape(B, -1, H, W)
            self._cache = x
        else:
            xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
            y = kernels().conv3x3_forward(xp, self.weight.value)
            self._cache = xp
        y += self.bias.value[None, :, None, None]
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cached = self._cache_or_raise()
        self.bias.grad += dy.sum(axis=(0, 2, 3))
        if self.kernel == 1:
            x = cached
            B, C, H, W = x.shape
            dym = dy.reshape(B, self.out_channels, H * W)
            xm = x.reshape(B, C, H * W)
            self.weight.grad[:, :, 0, 0] += np.matmul(dym, xm.transpose(0, 2, 1)).sum(axis=0)
            return np.matmul(self.weight.value[:, :, 0, 0].T, dym).reshape(B, C, H, W)
        xp = cached
        self.weight.grad += kernels().conv3x3_weight_grad(dy, xp)
        dxp = kernels().conv3x3_input_grad(dy, self.weight.value, xp.shape)
        return np.ascontiguousarray(dxp[:, :, 1:-1, 1:-1])


class BatchNorm2d(Layer):
    """Per-channel batch normalization over (B, H, W), with affine gamma/beta.

    Train mode normalizes with biased batch statistics and updates the running
    stats (unbiased variance); eval mode uses the running stats and never
    mutates them.
    """

    def __init__(self, name: str, channels: int, dtype=np.float32,
                 eps: float = 1e-5, momentum: float = 0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = Parameter(f"{name}.running_mean",
                                      np.zeros(channels, dtype=dtype), trainable=False)
        self.running_var = Parameter(f"{name}.running_var",
                                     np.ones(channels, dtype=dtype), trainable=False)

    def parameters(self):
        return [self.gamma, self.beta, self.running_mean, self.running_var]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeMismatch(f"{self.gamma.name}: input {x.shape} vs "
                                f"{self.channels} channels")
        B, C, H, W = x.shape
        n = B * H * W
        if train:
            if n < 2:
                raise DegenerateBatch(f"{self.gamma.name}: train-mode batch norm "
                                      f"needs at least 2 elements per channel, got {n}")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))  # biased
            m = self.momentum
            self.running_mean.value[...] = (1 - m) * self.running_mean.value + m * mean
            self.running_var.value[...] = ((1 - m) * self.running_var.value
                                           + m * var * n / (n - 1))
        else:
            mean = self.running_mean.value
            var = self.running_var.value
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train, n)
        return (self.gamma.value[None, :, None, None] * xhat
                + self.beta.value[None, :, None, None]).astype(x.dtype, copy=False)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, train, n = self._cache_or_raise()
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        g = self.gamma.value[None, :, None, None] * inv_std[None, :, None, None]
        if not train:
            return (dy * g).astype(dy.dtype, copy=False)
        # train mode: gradient flows through the batch statistics as well
        sum_dy = dy.sum(axis=(0, 2, 3), keepdims=True)
        sum_dy_xhat = (dy * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = g * (dy - sum_dy / n - xhat * sum_dy_xhat / n)
        return dx.astype(dy.dtype, copy=False)


class MaxPool2d(Layer):
    """2x2 window, stride 2, floor semantics (trailing odd row/column dropped).
    Ties route the gradient to the first maximal element in scan order."""

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        B, C, H, W = x.shape
        if H // 2 == 0 or W // 2 == 0:
            raise OutputEmpty(f"maxpool on {x.shape} would produce an empty map")
        y, idx = kernels().maxpool2_forward(x)
        self._cache = (idx, H, W)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        idx, H, W = self._cache_or_raise()
        return kernels().maxpool2_backward(dy, idx, H, W)


class Linear(Layer):
    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(f"{name}.weight",
                                _uniform(rng, (out_features, in_features), bound, dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"{self.weight.name}: input {x.shape} vs "
                                f"{self.in_features} features")
        self._cache = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache_or_raise()
        self.weight.grad += dy.T @ x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value


class BiGRU(Layer):
    """Bidirectional GRU over (B, T, I) -> (B, T, 2H).

    Gate order (reset, update, candidate); separate input and hidden biases.
    Both directions start from a zero state; the backward direction scans the
    reversed sequence and its outputs are re-reversed before concatenation.
    """

    def __init__(self, name: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.input_size = input_size
        self.hidden_size = hidden_size
        bound = 1.0 / np.sqrt(hidden_size)
        self._params = []
        for direction in ("fwd", "bwd"):
            p = {
                "wi": Parameter(f"{name}.{direction}.w_input",
                                _uniform(rng, (3 * hidden_size, input_size), bound, dtype)),
                "wh": Parameter(f"{name}.{direction}.w_hidden",
                                _uniform(rng, (3 * hidden_size, hidden_size), bound, dtype)),
                "bi": Parameter(f"{name}.{direction}.b_input",
                                np.zeros(3 * hidden_size, dtype=dtype)),
                "bh": Parameter(f"{name}.{direction}.b_hidden",
                                np.zeros(3 * hidden_size, dtype=dtype)),
            }
            self._params.append(p)

    def parameters(self):
        out = []
        for p in self._params:
            out.extend([p["wi"], p["wh"], p["bi"], p["bh"]])
        return out

    def _scan(self, x: np.ndarray, p: dict):
        B, T, _ = x.shape
        gi = (x.reshape(B * T, self.input_size) @ p["wi"].value.T
              + p["bi"].value).reshape(B, T, 3 * self.hidden_size)
        h, r, z, n, ghn = kernels().gru_forward(gi, p["wh"].value, p["bh"].value)
        return h, (x, h, r, z, n, ghn)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatch(f"BiGRU: input {x.shape} vs {self.input_size} features")
        h_f, cache_f = self._scan(x, self._params[0])
        x_rev = np.ascontiguousarray(x[:, ::-1])
        h_b_rev, cache_b = self._scan(x_rev, self._params[1])
        h_b = h_b_rev[:, ::-1]
        self._cache = (cache_f, cache_b)
        return np.concatenate([h_f, h_b], axis=2)

    def _scan_backward(self, dh: np.ndarray, cache, p: dict) -> np.ndarray:
        x, h, r, z, n, ghn = cache
        B, T, _ = x.shape
        dgi, dwh, dbh = kernels().gru_backward(
            np.ascontiguousarray(dh), h, r, z, n, ghn, p["wh"].value)
        p["wh"].grad += dwh
        p["bh"].grad += dbh
        dgi_m = dgi.reshape(B * T, 3 * self.hidden_size)
        p["wi"].grad += dgi_m.T @ x.reshape(B * T, self.input_size)
        p["bi"].grad += dgi_m.sum(axis=0)
        return (dgi_m @ p["wi"].value).reshape(B, T, self.input_size)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cache_f, cache_b = self._cache_or_raise()
        H = self.hidden_size
        dx = self._scan_backward(dy[:, :, :H], cache_f, self._params[0])
        dx_rev = self._scan_backward(dy[:, ::-1, H:], cache_b, self._params[1])
        return dx + dx_rev[:, ::-1]

    @property
    def final_state_slices(self):
        """Output columns holding the final state of each direction:
        forward at t = T-1, backward at t = 0."""
        return (slice(0, self.hidden_size), slice(self.hidden_size, 2 * self.hidden_size))
