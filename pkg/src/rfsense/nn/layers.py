"""1D layers with explicit forward/backward passes.

Tensors are laid out ``(batch, channels, length)``. Every layer keeps the
activations it needs in ``self._cache`` during ``forward`` and writes
parameter gradients into ``self.grads`` during ``backward``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import kernels
from ..errors import ConfigurationError, DegenerateInputError, InputError, StateError


class Layer:
    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}
        self._cache = None

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d(Layer):
    """Cross-correlation with zero 'same' padding (odd kernels only)."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, rng=None, dtype=np.float32,
                 init_std: float | None = None):
        super().__init__()
        if kernel % 2 == 0 or kernel < 1:
            raise ConfigurationError(f"kernel must be odd, got {kernel}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels, self.kernel = in_channels, out_channels, kernel
        shape = (out_channels, in_channels, kernel)
        if init_std is None:
            w = he_uniform(rng, shape, in_channels * kernel, dtype)
        else:
            w = (rng.standard_normal(shape) * init_std).astype(dtype)
        self.params = {"W": w, "b": np.zeros(out_channels, dtype=dtype)}
        self.zero_grad()

    def forward(self, x, train=False):
        n, c, length = x.shape
        if c != self.in_channels:
            raise ConfigurationError(f"Conv1d expected {self.in_channels} channels, got {c}")
        k = self.kernel
        pad = k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
        cols = sliding_window_view(xp, k, axis=2)  # (n, c, L, k)
        cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(n * length, c * k)
        w = self.params["W"].reshape(self.out_channels, c * k)
        out = cols @ w.T + self.params["b"]
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(out.reshape(n, length, self.out_channels).transpose(0, 2, 1))

    def backward(self, dout):
        cols, (n, c, length) = self._need_cache()
        k = self.kernel
        pad = k // 2
        d2 = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(n * length, self.out_channels)
        w = self.params["W"].reshape(self.out_channels, c * k)
        self.grads["W"] = (d2.T @ cols).reshape(self.params["W"].shape).astype(self.params["W"].dtype, copy=False)
        self.grads["b"] = dout.sum(axis=(0, 2)).astype(self.params["b"].dtype, copy=False)
        dcols = (d2 @ w).reshape(n, length, c, k)
        dxp = np.zeros((n, c, length + 2 * pad), dtype=dout.dtype)
        for j in range(k):
            dxp[:, :, j : j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dxp[:, :, pad : pad + length] if pad else dxp


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng=None, dtype=np.float32, init_std: float | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        if init_std is None:
            w = he_uniform(rng, (out_features, in_features), in_features, dtype)
        else:
            w = (rng.standard_normal((out_features, in_features)) * init_std).astype(dtype)
        self.params = {"W": w, "b": np.zeros(out_features, dtype=dtype)}
        self.in_features, self.out_features = in_features, out_features
        self.zero_grad()

    def forward(self, x, train=False):
        if x.shape[-1] != self.in_features:
            raise ConfigurationError(f"Linear expected {self.in_features} features, got {x.shape[-1]}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dout):
        x = self._need_cache()
        self.grads["W"] = (dout.T @ x).astype(self.params["W"].dtype, copy=False)
        self.grads["b"] = dout.sum(axis=0).astype(self.params["b"].dtype, copy=False)
        return dout @ self.params["W"]


class ReLU(Layer):
    def forward(self, x, train=False):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


class Sigmoid(Layer):
    def forward(self, x, train=False):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, dout):
        y = self._need_cache()
        return dout * y * (1.0 - y)


class Softmax(Layer):
    """Softmax over the last axis."""

    def forward(self, x, train=False):
        y = softmax(x)
        self._cache = y
        return y

    def backward(self, dout):
        y = self._need_cache()
        return y * (dout - np.sum(dout * y, axis=-1, keepdims=True))


class MaxPool1d(Layer):
    """Width-2, stride-2 max pooling."""

    def forward(self, x, train=False):
        n, c, length = x.shape
        if length % 2:
            raise InputError(f"MaxPool1d needs an even length, got {length}")
        xr = x.reshape(n, c, length // 2, 2)
        take_right = xr[..., 1] > xr[..., 0]
        self._cache = (take_right, x.shape)
        return np.where(take_right, xr[..., 1], xr[..., 0])

    def backward(self, dout):
        take_right, shape = self._need_cache()
        dx = np.zeros(shape[:2] + (shape[2] // 2, 2), dtype=dout.dtype)
        dx[..., 1] = dout * take_right
        dx[..., 0] = dout * ~take_right
        return dx.reshape(shape)


class BatchNorm1d(Layer):
    """Per-channel normalization over batch and length axes."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.params = {"gamma": np.ones(channels, dtype=dtype), "beta": np.zeros(channels, dtype=dtype)}
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum, self.eps = momentum, eps
        self.zero_grad()

    def forward(self, x, train=False):
        g = self.params["gamma"][None, :, None]
        b = self.params["beta"][None, :, None]
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        self._cache = (xhat, inv, train)
        return g * xhat + b

    def backward(self, dout):
        xhat, inv, train = self._need_cache()
        self.grads["gamma"] = (dout * xhat).sum(axis=(0, 2)).astype(self.params["gamma"].dtype, copy=False)
        self.grads["beta"] = dout.sum(axis=(0, 2)).astype(self.params["beta"].dtype, copy=False)
        dxhat = dout * self.params["gamma"][None, :, None]
        if not train:
            return dxhat * inv[None, :, None]
        m = dout.shape[0] * dout.shape[2]
        return (inv[None, :, None] / m) * (
            m * dxhat - dxhat.sum(axis=(0, 2), keepdims=True) - xhat * (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        )

    def state(self) -> dict:
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class RoiPool1d(Layer):
    """Max-pool each region of a single feature map into ``out_len`` cells.

    Regions are given in input-bin units and mapped to feature cells by
    dividing by ``stride`` (start floored, end ceiled); sub-bin boundaries
    are rounded outward.
    """

    def __init__(self, stride: int, out_len: int = 7):
        super().__init__()
        self.stride, self.out_len = stride, out_len

    def forward(self, features, rois, train=False):
        if features.ndim == 3:
            if features.shape[0] != 1:
                raise InputError("RoiPool1d expects a single feature map")
            features = features[0]
        c, n_cells = features.shape
        bins = kernels.roi_bins(np.asarray(rois, dtype=np.float64).reshape(-1, 2), n_cells, float(self.stride), self.out_len)
        if np.any(bins[:, 0, 0] < 0):
            raise DegenerateInputError("region maps to no feature cells")
        pooled, arg = kernels.roi_pool_forward(features, bins)
        self._cache = (arg, n_cells)
        return pooled

    def backward(self, dout):
        arg, n_cells = self._need_cache()
        return kernels.roi_pool_backward(np.ascontiguousarray(dout), arg, n_cells)[None]


def roi_pool_1d(features, region, stride: int = 1, out_len: int = 7):
    """Functional ROI max pooling of a ``(C, L)`` map over one region; returns ``(C, out_len)``."""
    lo, hi = (region.start, region.end) if hasattr(region, "start") else region
    return RoiPool1d(stride, out_len).forward(np.asarray(features), [(lo, hi)])[0]


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Sequential(Layer):
    def __init__(self, layers, names=None):
        super().__init__()
        self.layers = list(layers)
        self.names = list(names) if names else [f"{i}" for i in range(len(self.layers))]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def named_layers(self, prefix=""):
        for name, layer in zip(self.names, self.layers):
            full = f"{prefix}{name}"
            if hasattr(layer, "named_layers"):
                yield from layer.named_layers(full + ".")
            else:
                yield full, layer


class ParameterTable:
    """Named view over the parameters, gradients and running buffers of a set of layers.

    Names are ``<layer path>.<param>``. Arrays are shared with the layers, so
    in-place updates (the optimizer) are visible to them.
    """

    def __init__(self, named_layers):
        self._params = {}
        self._buffers = {}
        for name, layer in named_layers:
            for k in layer.params:
                self._params[f"{name}.{k}"] = (layer, k)
            if isinstance(layer, BatchNorm1d):
                self._buffers[f"{name}.running_mean"] = (layer, "running_mean")
                self._buffers[f"{name}.running_var"] = (layer, "running_var")

    def names(self):
        return list(self._params)

    def params(self) -> dict:
        return {n: layer.params[k] for n, (layer, k) in self._params.items()}

    def grads(self) -> dict:
        return {n: layer.grads[k] for n, (layer, k) in self._params.items()}

    def buffers(self) -> dict:
        return {n: getattr(layer, k) for n, (layer, k) in self._buffers.items()}

    def state_dict(self) -> dict:
        out = self.params()
        out.update(self.buffers())
        return out

    def load_state_dict(self, state: dict, strict: bool = True):
        for n, (layer, k) in self._params.items():
            if n not in state:
                if strict:
                    raise KeyError(f"missing parameter {n}")
                continue
            arr = np.asarray(state[n])
            if arr.shape != layer.params[k].shape:
                raise ConfigurationError(f"{n}: shape {arr.shape} != {layer.params[k].shape}")
            layer.params[k][...] = arr
        for n, (layer, k) in self._buffers.items():
            if n in state:
                getattr(layer, k)[...] = np.asarray(state[n])
            elif strict:
                raise KeyError(f"missing buffer {n}")

    def zero_grad(self):
        seen = set()
        for layer, _ in self._params.values():
            if id(layer) not in seen:
                layer.zero_grad()
                seen.add(id(layer))
