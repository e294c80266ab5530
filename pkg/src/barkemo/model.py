"""BarkNet: conv-BN-ReLU x2, global average pooling, dense(5), softmax.

Checkpoint layout (all little-endian)::

    b"BARK1"  uint32 version=1
    int32 x 9 config: fragment_len, in_channels, conv1 (out, kernel, stride),
                      conv2 (out, kernel, stride), n_classes
    float64 parameters: conv1 w,b; bn1 gamma,beta,running_mean,running_var;
                        conv2 w,b; bn2 gamma,beta,running_mean,running_var;
                        dense w,b
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import nn
from .data import N_CLASSES, EmotionClass
from .errors import BadConfig, BadMagic, CheckpointError, CheckpointTruncated, ShapeMismatch, VersionMismatch

MAGIC = b"BARK1"
VERSION = 1
_HEADER = struct.Struct("<5sI9i")


@dataclass(frozen=True)
class BarkNetConfig:
    fragment_len: int = 12000
    conv1_channels: int = 16
    conv1_kernel: int = 64
    conv1_stride: int = 8
    conv2_channels: int = 32
    conv2_kernel: int = 32
    conv2_stride: int = 4
    seed: int = 0

    in_channels = 1
    n_classes = N_CLASSES

    def shape_chain(self) -> Tuple[int, int, int, int, int]:
        """(input length, conv1 length, conv2 length, pooled features, classes)."""
        l1 = nn.conv_out_len(self.fragment_len, self.conv1_kernel, self.conv1_stride)
        l2 = nn.conv_out_len(l1, self.conv2_kernel, self.conv2_stride)
        return self.fragment_len, l1, l2, self.conv2_channels, self.n_classes

    def validate(self):
        ints = (self.fragment_len, self.conv1_channels, self.conv1_kernel, self.conv1_stride,
                self.conv2_channels, self.conv2_kernel, self.conv2_stride)
        if min(ints) < 1:
            raise BadConfig(f"all sizes must be positive: {self}")
        _, l1, l2, _, _ = self.shape_chain()
        if l1 < 1 or l2 < 1:
            raise BadConfig(f"fragment_len {self.fragment_len} too short: conv lengths {l1}, {l2}")


class BarkNet:
    def __init__(self, config: BarkNetConfig, conv1, bn1, conv2, bn2, head):
        self.config = config
        self.conv1, self.bn1 = conv1, bn1
        self.conv2, self.bn2 = conv2, bn2
        self.head = head

    @classmethod
    def init(cls, config: BarkNetConfig = BarkNetConfig()) -> "BarkNet":
        """Seeded init: He for the convs, a near-zero head (see ``nn.HEAD_INIT_STD``)."""
        config.validate()
        rng = nn.seeded_rng(config.seed)
        conv1 = nn.Conv1d.init(rng, config.in_channels, config.conv1_channels, config.conv1_kernel,
                               config.conv1_stride)
        conv2 = nn.Conv1d.init(rng, config.conv1_channels, config.conv2_channels, config.conv2_kernel,
                               config.conv2_stride)
        # He scale here would turn the shared positive offset of pooled ReLU
        # features into large per-class logit offsets; keep the head near zero.
        head = nn.Dense.init(rng, config.conv2_channels, config.n_classes, std=nn.HEAD_INIT_STD)
        return cls(config, conv1, nn.BatchNorm1d.init(config.conv1_channels), conv2,
                   nn.BatchNorm1d.init(config.conv2_channels), head)

    def parameters(self) -> List[np.ndarray]:
        """Trainable arrays, in the order ``backward`` returns their gradients."""
        return [self.conv1.weight, self.conv1.bias, self.bn1.gamma, self.bn1.beta,
                self.conv2.weight, self.conv2.bias, self.bn2.gamma, self.bn2.beta,
                self.head.weight, self.head.bias]

    def state_arrays(self) -> List[np.ndarray]:
        """Every stored array in checkpoint order (parameters plus running statistics)."""
        return [self.conv1.weight, self.conv1.bias,
                self.bn1.gamma, self.bn1.beta, self.bn1.running_mean, self.bn1.running_var,
                self.conv2.weight, self.conv2.bias,
                self.bn2.gamma, self.bn2.beta, self.bn2.running_mean, self.bn2.running_var,
                self.head.weight, self.head.bias]

    def copy(self) -> "BarkNet":
        other = BarkNet.init(self.config)
        other.load_state(self.state_arrays())
        return other

    def load_state(self, arrays) -> None:
        for dst, src in zip(self.state_arrays(), arrays):
            dst[...] = src

    # -- forward / backward ------------------------------------------------

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.config.fragment_len:
            raise ShapeMismatch(f"expected [batch, 1, {self.config.fragment_len}], got {x.shape}")

    def logits(self, x: np.ndarray, mode: str = "infer"):
        """Pre-softmax scores and the cache ``backward`` needs."""
        self._check_input(x)
        z1 = nn.conv1d_forward(self.conv1, x)
        b1, bn1_cache = nn.batchnorm_forward(self.bn1, z1, mode)
        a1 = nn.relu(b1)
        z2 = nn.conv1d_forward(self.conv2, a1)
        b2, bn2_cache = nn.batchnorm_forward(self.bn2, z2, mode)
        a2 = nn.relu(b2)
        pooled = nn.global_avg_pool(a2)
        out = nn.dense_forward(self.head, pooled)
        return out, (x, bn1_cache, b1, a1, bn2_cache, b2, pooled)

    def forward(self, x: np.ndarray, mode: str = "infer") -> np.ndarray:
        return nn.softmax(self.logits(x, mode)[0])

    def backward(self, cache, grad_logits: np.ndarray, input_grad: bool = False):
        """Gradients for ``parameters()`` (and the input if requested) from a train-mode cache."""
        x, bn1_cache, b1, a1, bn2_cache, b2, pooled = cache
        g_pooled, g_hw, g_hb = nn.dense_backward(self.head, pooled, grad_logits)
        g_a2 = nn.global_avg_pool_backward(g_pooled, b2.shape[-1])
        g_b2 = nn.relu_backward(b2, g_a2)
        g_z2, g_gamma2, g_beta2 = nn.batchnorm_backward(self.bn2, bn2_cache, g_b2)
        g_a1, g_w2, g_cb2 = nn.conv1d_backward(self.conv2, a1, g_z2)
        g_b1 = nn.relu_backward(b1, g_a1)
        g_z1, g_gamma1, g_beta1 = nn.batchnorm_backward(self.bn1, bn1_cache, g_b1)
        g_x, g_w1, g_cb1 = nn.conv1d_backward(self.conv1, x, g_z1, input_grad=input_grad)
        grads = [g_w1, g_cb1, g_gamma1, g_beta1, g_w2, g_cb2, g_gamma2, g_beta2, g_hw, g_hb]
        return (grads, g_x) if input_grad else grads

    def loss_and_grads(self, x: np.ndarray, labels):
        """Train-mode forward, softmax cross-entropy, and parameter gradients."""
        out, cache = self.logits(x, "train")
        loss, g = nn.cross_entropy(nn.softmax(out), labels)
        return loss, self.backward(cache, g)

    def predict(self, fragment) -> Tuple[EmotionClass, np.ndarray]:
        """Most confident class (lowest ordinal on ties) and all five confidences."""
        probs = self.forward(np.asarray(fragment, dtype=np.float64).reshape(1, 1, -1), "infer")[0]
        return EmotionClass(int(np.argmax(probs))), probs


def init(cfg: BarkNetConfig = BarkNetConfig()) -> BarkNet:
    return BarkNet.init(cfg)


def forward(net: BarkNet, batch: np.ndarray, mode: str = "infer") -> np.ndarray:
    return net.forward(batch, mode)


def predict(net: BarkNet, fragment) -> Tuple[EmotionClass, np.ndarray]:
    return net.predict(fragment)


def predict_batch(net: BarkNet, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Infer-mode probabilities for ``x`` of shape ``[n, 1, fragment_len]``."""
    return np.concatenate([net.forward(x[s:s + batch_size], "infer") for s in range(0, len(x), batch_size)]) \
        if len(x) else np.zeros((0, N_CLASSES))


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: BarkNet) -> bytes:
    c = net.config
    header = _HEADER.pack(MAGIC, VERSION, c.fragment_len, c.in_channels,
                          c.conv1_channels, c.conv1_kernel, c.conv1_stride,
                          c.conv2_channels, c.conv2_kernel, c.conv2_stride, c.n_classes)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in net.state_arrays())
    return header + body


def load_checkpoint(data: bytes) -> BarkNet:
    """Rebuild a BarkNet from ``save_checkpoint`` output; never returns a partial model."""
    data = bytes(data)
    if data[:5] != MAGIC:
        raise BadMagic("not a BarkNet checkpoint")
    if len(data) < _HEADER.size:
        raise CheckpointTruncated("checkpoint header is incomplete")
    _, version, frag, in_ch, c1, k1, s1, c2, k2, s2, n_cls = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    if in_ch != 1 or n_cls != N_CLASSES:
        raise CheckpointError(f"unsupported topology: {in_ch} input channels, {n_cls} classes")
    try:
        config = BarkNetConfig(frag, c1, k1, s1, c2, k2, s2)
        net = BarkNet.init(config)
    except BadConfig as exc:
        raise CheckpointError(f"invalid config block: {exc}") from None
    arrays = net.state_arrays()
    need = _HEADER.size + 8 * sum(a.size for a in arrays)
    if len(data) < need:
        raise CheckpointTruncated(f"checkpoint has {len(data)} bytes, expected {need}")
    if len(data) > need:
        raise CheckpointError(f"{len(data) - need} trailing bytes after parameters")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    offset = 0
    for a in arrays:
        a[...] = flat[offset:offset + a.size].reshape(a.shape)
        offset += a.size
    return net
