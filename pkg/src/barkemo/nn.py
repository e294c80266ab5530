"""Small float64 neural-network kernel with hand-written backward passes.

Tensors are plain numpy arrays. Layouts: sequences are ``[batch, channels,
time]``; dense inputs are ``[batch, features]``. Every backward function
returns exact gradients of its forward map; see ``grad_check``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateBatch, LabelOutOfRange, ShapeMismatch

PROB_FLOOR = 1e-12


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


HEAD_INIT_STD = 0.01


# --------------------------------------------------------------------------
# layers


@dataclass
class Conv1d:
    weight: np.ndarray  # [out_channels, in_channels, kernel_len]
    bias: np.ndarray  # [out_channels]
    stride: int = 1

    def __post_init__(self):
        if self.weight.ndim != 3 or self.weight.shape[2] < 1:
            raise ShapeMismatch(f"conv weight must be [out, in, kernel>=1], got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch("conv bias must have one entry per output channel")
        if self.stride < 1:
            raise ShapeMismatch("stride must be >= 1")

    @classmethod
    def init(cls, rng, in_channels, out_channels, kernel_len, stride=1):
        w = he_normal(rng, (out_channels, in_channels, kernel_len), in_channels * kernel_len)
        return cls(w, np.zeros(out_channels), stride)

    @property
    def kernel_len(self):
        return self.weight.shape[2]

    def out_len(self, length: int) -> int:
        return conv_out_len(length, self.kernel_len, self.stride)


@dataclass
class BatchNorm1d:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def init(cls, channels, eps=1e-5, momentum=0.1):
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), eps, momentum)


@dataclass
class Dense:
    weight: np.ndarray  # [out_features, in_features]
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"dense weight {self.weight.shape} and bias {self.bias.shape} disagree")

    @classmethod
    def init(cls, rng, in_features, out_features, std=None):
        """He-normal weights unless ``std`` is given."""
        if std is None:
            w = he_normal(rng, (out_features, in_features), in_features)
        else:
            w = rng.standard_normal((out_features, in_features)) * std
        return cls(w, np.zeros(out_features))


# --------------------------------------------------------------------------
# convolution (cross-correlation, valid padding)


def conv_out_len(length: int, kernel_len: int, stride: int) -> int:
    return (length - kernel_len) // stride + 1 if length >= kernel_len else 0


def _check_conv_input(layer: Conv1d, x: np.ndarray):
    if x.ndim != 3 or x.shape[1] != layer.weight.shape[1]:
        raise ShapeMismatch(f"expected [batch, {layer.weight.shape[1]}, time], got {x.shape}")
    if x.shape[2] < layer.kernel_len:
        raise ShapeMismatch(f"input length {x.shape[2]} shorter than kernel {layer.kernel_len}")


def _windows(x, kernel_len, stride):
    # [B, C, T, K] strided view, no copy
    return sliding_window_view(x, kernel_len, axis=2)[:, :, ::stride, :]


def conv1d_forward(layer: Conv1d, x: np.ndarray) -> np.ndarray:
    _check_conv_input(layer, x)
    cols = _windows(x, layer.kernel_len, layer.stride)
    y = np.tensordot(cols, layer.weight, axes=([1, 3], [1, 2]))  # [B, T, O]
    return np.ascontiguousarray(y.transpose(0, 2, 1)) + layer.bias[None, :, None]


def conv1d_backward(layer: Conv1d, x: np.ndarray, grad_out: np.ndarray, input_grad: bool = True):
    """Return ``(grad_x, grad_w, grad_b)``; ``grad_x`` is None when not requested."""
    _check_conv_input(layer, x)
    k, s = layer.kernel_len, layer.stride
    t_out = conv_out_len(x.shape[2], k, s)
    if grad_out.shape != (x.shape[0], layer.weight.shape[0], t_out):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match forward output")
    cols = _windows(x, k, s)
    grad_b = grad_out.sum(axis=(0, 2))
    grad_w = np.tensordot(grad_out, cols, axes=([0, 2], [0, 2]))  # [O, C, K]
    grad_x = None
    if input_grad:
        grad_x = _conv_input_grad(grad_out, layer.weight, s, x.shape[2])
    return grad_x, grad_w, grad_b


def _conv_input_grad(grad_out, weight, s, length):
    # Kernel tap j = q*s + r lands on input position (t + q)*s + r, so with the
    # input viewed as [blocks, s] each q is one shifted block add.
    bsz, _, t_out = grad_out.shape
    _, c, k = weight.shape
    q_taps = -(-k // s)
    w = weight
    if q_taps * s != k:
        w = np.concatenate([w, np.zeros((w.shape[0], c, q_taps * s - k))], axis=2)
    w = w.reshape(-1, c, q_taps, s).transpose(0, 2, 1, 3)  # [O, Q, C, s]
    gcols = np.tensordot(grad_out, w, axes=([1], [0]))  # [B, T, Q, C, s]
    n_blocks = max(-(-length // s), t_out - 1 + q_taps)
    buf = np.zeros((bsz, n_blocks, c, s))
    for q in range(q_taps):
        buf[:, q:q + t_out] += gcols[:, :, q]
    return buf.transpose(0, 2, 1, 3).reshape(bsz, c, n_blocks * s)[:, :, :length].copy()


# --------------------------------------------------------------------------
# batch normalization over (batch, time) per channel


def batchnorm_forward(layer: BatchNorm1d, x: np.ndarray, mode: str = "train"):
    """Return ``(y, cache)``. Train mode uses population batch statistics and
    updates the running averages in place; ``cache`` is None in infer mode."""
    g = layer.gamma[None, :, None]
    b = layer.beta[None, :, None]
    if mode == "infer":
        inv = 1.0 / np.sqrt(layer.running_var + layer.eps)
        return (x - layer.running_mean[None, :, None]) * inv[None, :, None] * g + b, None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if x.shape[0] * x.shape[2] < 2:
        raise DegenerateBatch("train-mode batch norm needs at least two values per channel")
    mean = x.mean(axis=(0, 2))
    centered = x - mean[None, :, None]
    var = (centered ** 2).mean(axis=(0, 2))
    inv = 1.0 / np.sqrt(var + layer.eps)
    xhat = centered * inv[None, :, None]
    m = layer.momentum
    layer.running_mean[:] = (1 - m) * layer.running_mean + m * mean
    layer.running_var[:] = (1 - m) * layer.running_var + m * var
    return xhat * g + b, (xhat, inv)


def batchnorm_backward(layer: BatchNorm1d, cache, grad_out: np.ndarray):
    xhat, inv = cache
    if grad_out.shape != xhat.shape:
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match cached {xhat.shape}")
    n = xhat.shape[0] * xhat.shape[2]
    grad_beta = grad_out.sum(axis=(0, 2))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2))
    dxhat = grad_out * layer.gamma[None, :, None]
    sum_d = dxhat.sum(axis=(0, 2))[None, :, None]
    sum_dx = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    grad_x = (inv[None, :, None] / n) * (n * dxhat - sum_d - xhat * sum_dx)
    return grad_x, grad_gamma, grad_beta


# --------------------------------------------------------------------------
# pointwise, pooling, dense


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(x > 0, grad_out, 0.0)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] < 1:
        raise ShapeMismatch("cannot pool an empty time axis")
    return x.mean(axis=-1)


def global_avg_pool_backward(grad_out: np.ndarray, length: int) -> np.ndarray:
    return np.repeat(grad_out[..., None] / length, length, axis=-1)


def dense_forward(layer: Dense, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.weight.shape[1]:
        raise ShapeMismatch(f"expected [batch, {layer.weight.shape[1]}], got {x.shape}")
    return x @ layer.weight.T + layer.bias


def dense_backward(layer: Dense, x: np.ndarray, grad_out: np.ndarray):
    if grad_out.shape != (x.shape[0], layer.weight.shape[0]):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match forward output")
    return grad_out @ layer.weight, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the pre-softmax logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"need one label per row, got {labels.shape} for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in 0..{k - 1}")
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, labels], PROB_FLOOR)).mean())
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return loss, grad / n


# --------------------------------------------------------------------------
# optimizers


def _check_pairs(params, grads):
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("parameter and gradient shapes differ")


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
    _check_pairs(params, grads)
    for p, g in zip(params, grads):
        p -= lr * g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """Bias-corrected Adam update, applied in place. Moments are created lazily."""
    _check_pairs(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif any(m.shape != p.shape for m, p in zip(state.m, params)) or len(state.m) != len(params):
        raise ShapeMismatch("Adam moments do not match the parameters")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --------------------------------------------------------------------------
# finite-difference verification


def relative_error(analytic, numeric) -> np.ndarray:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))


def numeric_grad(f: Callable[[], float], p: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``p`` (mutated and restored)."""
    grad = np.zeros_like(p)
    flat = p.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def grad_check(f: Callable[[], float], params: Sequence[np.ndarray], analytic: Sequence[np.ndarray],
               h: float = 1e-5) -> float:
    """Max relative error between ``analytic`` gradients and central differences.

    ``f`` must read the arrays in ``params`` (which are perturbed in place).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for p, a in zip(params, analytic):
        if p.size:
            worst = max(worst, float(relative_error(a, numeric_grad(f, p, h)).max()))
    return worst
