"""Small convolutional score-map network with hand-written backprop and SGD.

Parameters are stored as float32; every forward/backward pass runs in
float64. Images are NHWC arrays in [0, 1].

Two heads share the trunk:

* ``map``: dense layer to M*M logits, logistic squashing -> (M, M) map in (0, 1)
* ``softmax``: dense layer to ``n_classes`` logits, softmax
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import (ArchMismatchError, CheckpointNotFoundError, ConfigError, ContractError,
                     CorruptCheckpointError, TrainingDivergedError)

PROB_EPS = 1e-7


@dataclass(frozen=True)
class Arch:
    input_hw: tuple = (64, 64)
    in_channels: int = 3
    # (kernel, stride, out_channels), each followed by ReLU
    convs: tuple = ((5, 2, 16), (3, 2, 32), (3, 2, 32), (3, 1, 32))
    head: str = "map"
    M: int = 11
    n_classes: int = 3
    # "center": image - 0.5; "standardize": per-image zero mean, unit variance
    input_norm: str = "standardize"

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        object.__setattr__(self, "convs", tuple(tuple(int(v) for v in c) for c in self.convs))
        if self.input_norm not in ("center", "standardize"):
            raise ConfigError(f"unknown input_norm {self.input_norm!r}")
        if self.head not in ("map", "softmax"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == "map" and (self.M < 3 or self.M % 2 == 0):
            raise ConfigError("map head needs odd M >= 3")
        if self.head == "softmax" and self.n_classes < 2:
            raise ConfigError("softmax head needs >= 2 classes")
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ConfigError("input_hw must be (height, width)")
        for k, s, c in self.convs:
            if k < 1 or k % 2 == 0 or s < 1 or c < 1:
                raise ConfigError(f"bad conv layer {(k, s, c)}: odd kernel, positive stride/channels")

    def feature_shapes(self):
        h, w = self.input_hw
        c = self.in_channels
        shapes = [(h, w, c)]
        for k, s, co in self.convs:
            h, w, c = (h - 1) // s + 1, (w - 1) // s + 1, co
            shapes.append((h, w, c))
        return shapes

    @property
    def n_out(self) -> int:
        return self.M * self.M if self.head == "map" else self.n_classes

    def param_shapes(self):
        shapes = {}
        cin = self.in_channels
        for i, (k, s, c) in enumerate(self.convs):
            shapes[f"conv{i}.w"] = (k, k, cin, c)
            shapes[f"conv{i}.b"] = (c,)
            cin = c
        h, w, c = self.feature_shapes()[-1]
        shapes["head.w"] = (h * w * c, self.n_out)
        shapes["head.b"] = (self.n_out,)
        return shapes

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "Arch":
        d = json.loads(s)
        d["input_hw"] = tuple(d["input_hw"])
        d["convs"] = tuple(tuple(c) for c in d["convs"])
        return cls(**d)


@dataclass
class NetParams:
    arch: Arch
    tensors: dict

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        if list(self.tensors) != list(shapes):
            raise ConfigError("tensor names do not match the architecture")
        for name, shape in shapes.items():
            t = self.tensors[name]
            if tuple(t.shape) != shape:
                raise ConfigError(f"{name}: shape {t.shape} != {shape}")
            if not np.all(np.isfinite(t)):
                raise ConfigError(f"{name}: non-finite values")

    def copy(self) -> "NetParams":
        return NetParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def equal(self, other: "NetParams") -> bool:
        return self.arch == other.arch and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)


def init_params(arch: Arch, seed: int) -> NetParams:
    """He-scaled conv kernels, fan-in-scaled head, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name.startswith("conv"):
            fan_in = shape[0] * shape[1] * shape[2]
            tensors[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        else:
            tensors[name] = (rng.standard_normal(shape) * np.sqrt(1.0 / shape[0])).astype(np.float32)
    return NetParams(arch, tensors)


def _im2col(x, k, s):
    p = k // 2
    n, h, w, c = x.shape
    ho, wo = (h - 1) // s + 1, (w - 1) // s + 1
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    # (n, ho, wo, c, k, k) -> (n, ho, wo, k, k, c)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, k * k * c)
    return cols, ho, wo


def _col2im(dcols, x_shape, k, s, ho, wo):
    p = k // 2
    n, h, w, c = x_shape
    d = dcols.reshape(n, ho, wo, k, k, c)
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += d[:, :, :, i, j, :]
    return dxp[:, p:p + h, p:p + w, :]


def _as_batch(params: NetParams, images):
    x = np.asarray(images)
    single = x.ndim == 3
    if single:
        x = x[None]
    h, w = params.arch.input_hw
    if x.ndim != 4 or x.shape[1:] != (h, w, params.arch.in_channels):
        raise ContractError(f"expected images of shape {(h, w, params.arch.in_channels)}, "
                            f"got {x.shape[-3:]}")
    return x.astype(np.float64), single


def _normalize(arch: Arch, x):
    if arch.input_norm == "center":
        return x - 0.5
    mu = x.mean(axis=(1, 2, 3), keepdims=True)
    sd = x.std(axis=(1, 2, 3), keepdims=True)
    return (x - mu) / (sd + 0.05)


def _trunk(params: NetParams, x, keep: bool):
    a = _normalize(params.arch, x)
    caches = []
    for i, (k, s, c) in enumerate(params.arch.convs):
        wt = params.tensors[f"conv{i}.w"].astype(np.float64).reshape(-1, c)
        b = params.tensors[f"conv{i}.b"].astype(np.float64)
        cols, ho, wo = _im2col(a, k, s)
        z = cols @ wt + b
        if keep:
            caches.append((a.shape, cols, z > 0, ho, wo))
        a = np.maximum(z, 0.0).reshape(a.shape[0], ho, wo, c)
    return a, caches


def features(params: NetParams, images) -> np.ndarray:
    """Trunk activations before the head, (N, h, w, c)."""
    x, _ = _as_batch(params, images)
    return _trunk(params, x, keep=False)[0]


def logits(params: NetParams, images) -> np.ndarray:
    x, single = _as_batch(params, images)
    f, _ = _trunk(params, x, keep=False)
    z = f.reshape(f.shape[0], -1) @ params.tensors["head.w"].astype(np.float64) \
        + params.tensors["head.b"].astype(np.float64)
    return z[0] if single else z


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: NetParams, images) -> np.ndarray:
    """Score map(s) in (0, 1) for a map head, class probabilities for softmax.

    Accepts one image (H, W, 3) or a batch (N, H, W, 3).
    """
    z = logits(params, images)
    if params.arch.head == "softmax":
        return _softmax(z)
    M = params.arch.M
    p = np.clip(expit(z), PROB_EPS, 1.0 - PROB_EPS)
    return p.reshape(z.shape[:-1] + (M, M))


def loss(pred, target, mask) -> float:
    """Masked mean binary cross-entropy with soft targets."""
    p = np.clip(np.asarray(pred, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(target, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if p.shape != y.shape or p.shape != m.shape:
        raise ContractError("pred, target and mask shapes must match")
    total = m.sum()
    if not total > 0:
        raise ContractError("mask selects nothing")
    bce = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float((m * bce).sum() / total)


def softmax_loss(probs, target) -> float:
    """Mean cross-entropy; ``target`` is class indices or probability rows."""
    p = np.clip(np.asarray(probs, dtype=np.float64), 1e-12, 1.0)
    y = _onehot(target, p.shape[-1])
    return float(-(y * np.log(p)).sum(axis=-1).mean())


def _onehot(target, n):
    t = np.asarray(target)
    if t.ndim == 1 and np.issubdtype(t.dtype, np.integer):
        return np.eye(n)[t]
    return t.astype(np.float64)


def backward(params: NetParams, images, target, mask=None):
    """Exact gradients of the batch loss; returns (grads, loss value).

    Map heads use the pooled masked BCE over the whole batch (sum of masked
    terms / sum of mask); softmax heads use mean cross-entropy.
    """
    x, single = _as_batch(params, images)
    arch = params.arch
    f, caches = _trunk(params, x, keep=True)
    n = x.shape[0]
    flat = f.reshape(n, -1)
    hw = params.tensors["head.w"].astype(np.float64)
    z = flat @ hw + params.tensors["head.b"].astype(np.float64)
    if arch.head == "map":
        y = np.asarray(target, dtype=np.float64).reshape(n, -1)
        m = np.ones_like(y) if mask is None else np.asarray(mask, dtype=np.float64).reshape(n, -1)
        p = expit(z)
        value = loss(np.clip(p, PROB_EPS, 1 - PROB_EPS), y, m)
        dz = m * (p - y) / m.sum()
    else:
        probs = _softmax(z)
        yy = _onehot(target, arch.n_classes)
        value = softmax_loss(probs, yy)
        dz = (probs - yy) / n
    grads = {}
    grads["head.w"] = flat.T @ dz
    grads["head.b"] = dz.sum(axis=0)
    da = (dz @ hw.T).reshape(f.shape)
    for i in range(len(arch.convs) - 1, -1, -1):
        k, s, c = arch.convs[i]
        a_shape, cols, active, ho, wo = caches[i]
        dzl = da.reshape(-1, c) * active
        grads[f"conv{i}.w"] = (cols.T @ dzl).reshape(arch.param_shapes()[f"conv{i}.w"])
        grads[f"conv{i}.b"] = dzl.sum(axis=0)
        if i > 0:
            wt = params.tensors[f"conv{i}.w"].astype(np.float64).reshape(-1, c)
            da = _col2im(dzl @ wt.T, a_shape, k, s, ho, wo)
    ordered = {name: grads[name] for name in arch.param_shapes()}
    return ordered, value


def sgd_step(params: NetParams, grads: dict, lr: float, momentum: float = 0.0,
             velocity: Optional[dict] = None):
    """Classic momentum SGD: v <- momentum * v - lr * g; p <- p + v.

    Returns (new params, new velocity); inputs are not modified.
    """
    if not lr >= 0:
        raise ContractError("learning rate must be >= 0")
    new_t, new_v = {}, {}
    for name, p in params.tensors.items():
        g = np.asarray(grads[name], dtype=np.float64)
        v_prev = 0.0 if velocity is None else velocity[name]
        v = momentum * v_prev - lr * g
        new_v[name] = v
        new_t[name] = (p.astype(np.float64) + v).astype(np.float32)
    return NetParams(params.arch, new_t), new_v


def train_epochs(params: NetParams, images, targets, masks=None, *, epochs: int, lr: float,
                 momentum: float = 0.9, batch_size: int = 32, seed: int = 0,
                 log: Optional[Callable[[int, float], None]] = None):
    """Minibatch SGD over a fixed dataset; returns (params, per-epoch mean losses)."""
    n = len(images)
    rng = np.random.default_rng(seed)
    velocity = None
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, batch_size):
            idx = np.sort(order[start:start + batch_size])
            m = None if masks is None else masks[idx]
            grads, value = backward(params, images[idx], targets[idx], m)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {start}")
            params, velocity = sgd_step(params, grads, lr, momentum, velocity)
            total += value * len(idx)
            count += len(idx)
        history.append(total / count)
        if log is not None:
            log(epoch, history[-1])
    return params, history


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"SIMFLNET"
FORMAT_VERSION = 1


def save_checkpoint(params: NetParams, path) -> None:
    """Layout: magic, u32 version, u32 len + arch JSON, u32 tensor count, then per
    tensor u16 len + name, u8 ndim, u32 dims, little-endian float32 data; u32
    CRC32 of everything before it."""
    out = bytearray(MAGIC)
    out += struct.pack("<I", FORMAT_VERSION)
    arch = params.arch.to_json().encode()
    out += struct.pack("<I", len(arch)) + arch
    out += struct.pack("<I", len(params.tensors))
    for name, t in params.tensors.items():
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
        out += np.ascontiguousarray(t, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path, expected_arch: Optional[Arch] = None) -> NetParams:
    path = Path(path)
    if not path.is_file():
        raise CheckpointNotFoundError(f"no checkpoint at {path}")
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic or truncated header")
    body, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError(f"{path}: checksum mismatch (truncated or damaged)")
    try:
        pos = len(MAGIC)
        (version,) = struct.unpack_from("<I", body, pos)
        pos += 4
        if version != FORMAT_VERSION:
            raise CorruptCheckpointError(f"{path}: unsupported version {version}")
        (alen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        arch = Arch.from_json(body[pos:pos + alen].decode())
        pos += alen
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) * 4
            if pos + size > len(body):
                raise CorruptCheckpointError(f"{path}: tensor {name} truncated")
            tensors[name] = np.frombuffer(body, dtype="<f4", count=size // 4,
                                          offset=pos).reshape(shape).astype(np.float32)
            pos += size
        if pos != len(body):
            raise CorruptCheckpointError(f"{path}: trailing bytes")
        params = NetParams(arch, tensors)
    except CorruptCheckpointError:
        raise
    except (struct.error, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: {exc}") from exc
    if expected_arch is not None and arch != expected_arch:
        raise ArchMismatchError(f"checkpoint architecture {arch} does not match {expected_arch}")
    return params
