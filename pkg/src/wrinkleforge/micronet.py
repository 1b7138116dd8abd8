"""A desk-scale U-Net with hand-rolled reverse-mode differentiation.

The network runs entirely on numpy. Encoder blocks are two 3x3 convolutions
with ReLU followed by 2x2 max-pooling; decoder blocks upsample by nearest
neighbor, concatenate the skip connection, and apply two 3x3 convolutions.
A final 1x1 convolution maps to the output channels: a single channel gets a
sigmoid (bounded regression, the pretraining head), two or more channels emit
raw logits for a softmax in the loss.

Checkpoints are a binary container: magic bytes, a length-prefixed JSON
header (spec, parameter names and shapes, epoch, config hash), then the raw
little-endian float32 blobs in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    CorruptCheckpointError,
    HashMismatchError,
    IncompatibleCheckpointError,
    IndivisibleSpatialDimsError,
    InvalidSpecError,
    NoForwardPassError,
    ShapeMismatchError,
    ShrinkNotSupportedError,
)

_MAGIC = b"WRNK1"
# dedicated entropy stream for head re-initialization, distinct from the
# sequential build stream
_HEAD_STREAM = 0x68656164


@dataclass(frozen=True)
class UNetSpec:
    in_channels: int
    out_channels: int
    base_width: int
    depth: int
    seed: int

    def __post_init__(self):
        if self.depth < 1:
            raise InvalidSpecError(f"depth must be >= 1, got {self.depth}")
        if self.base_width < 1:
            raise InvalidSpecError(f"base_width must be >= 1, got {self.base_width}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidSpecError("channel counts must be >= 1")

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "base_width": self.base_width, "depth": self.depth, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "UNetSpec":
        return cls(**d)


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad: np.ndarray | None = None

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


def _he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int,
             dtype) -> np.ndarray:
    fan_in = in_ch * k * k
    return (rng.standard_normal((out_ch, in_ch, k, k)) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _conv_bias(rng: np.random.Generator, out_ch: int, in_ch: int, k: int,
               dtype) -> np.ndarray:
    # uniform fan-in init; zero biases would leave ReLU preactivations of
    # all-zero receptive fields sitting exactly on the kink, which breaks
    # finite-difference verification
    bound = 1.0 / np.sqrt(in_ch * k * k)
    return rng.uniform(-bound, bound, out_ch).astype(dtype)


class _Conv2d:
    """Same-padding convolution (k = 3 or 1) via im2col, with exact backward."""

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = Parameter(w)
        self.b = Parameter(b)
        self.ksize = w.shape[2]
        self.pad = self.ksize // 2
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, wd = x.shape
        k = self.ksize
        if k == 1:
            cols = x.reshape(n, c, h * wd)
        else:
            p = self.pad
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
            v = sliding_window_view(xp, (k, k), axis=(2, 3))
            # channels-first column layout avoids transposing activations
            cols = np.ascontiguousarray(v.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * k * k, h * wd)
        f = self.w.value.shape[0]
        wmat = self.w.value.reshape(f, -1)
        out = wmat @ cols + self.b.value[:, None]
        self._cache = (cols, x.shape)
        return out.reshape(n, f, h, wd)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, xshape = self._cache
        n, c, h, wd = xshape
        k, p = self.ksize, self.pad
        f = self.w.value.shape[0]
        dyr = dy.reshape(n, f, h * wd)
        dwmat = (dyr @ cols.transpose(0, 2, 1)).sum(axis=0)
        self.w.add_grad(dwmat.reshape(self.w.value.shape))
        self.b.add_grad(dyr.sum(axis=(0, 2)))
        dcols = self.w.value.reshape(f, -1).T @ dyr
        if k == 1:
            return dcols.reshape(xshape)
        dc = dcols.reshape(n, c, k, k, h, wd)
        dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + h, j:j + wd] += dc[:, :, i, j]
        return dxp[:, :, p:p + h, p:p + wd]


class _ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class _MaxPool2x2:
    def __init__(self):
        self._cache = None

    def forward(self, x):
        n, c, h, w = x.shape
        r = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        r = np.ascontiguousarray(r).reshape(n, c, h // 2, w // 2, 4)
        idx = r.argmax(axis=-1)  # first max wins: deterministic tie-break
        self._cache = (idx, x.shape)
        return np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, (n, c, h, w) = self._cache
        dr = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(dr, idx[..., None], dy[..., None], axis=-1)
        dr = dr.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return np.ascontiguousarray(dr).reshape(n, c, h, w)


class _UpNearest2x:
    def forward(self, x):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dy):
        n, c, h, w = dy.shape
        return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class _Sigmoid:
    def __init__(self):
        self._out = None

    def forward(self, x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, dy):
        return dy * self._out * (1.0 - self._out)


class _ConvBlock:
    """conv 3x3 -> ReLU, twice."""

    def __init__(self, rng, in_ch, out_ch, dtype):
        self.conv1 = _Conv2d(_he_conv(rng, out_ch, in_ch, 3, dtype),
                             _conv_bias(rng, out_ch, in_ch, 3, dtype))
        self.relu1 = _ReLU()
        self.conv2 = _Conv2d(_he_conv(rng, out_ch, out_ch, 3, dtype),
                             _conv_bias(rng, out_ch, out_ch, 3, dtype))
        self.relu2 = _ReLU()

    def forward(self, x):
        return self.relu2.forward(self.conv2.forward(self.relu1.forward(self.conv1.forward(x))))

    def backward(self, dy):
        return self.conv1.backward(self.relu1.backward(self.conv2.backward(self.relu2.backward(dy))))


class Model:
    """U-Net instance owning parameters and the activation caches.

    Forward/backward mutate the caches, so a single instance must not be
    shared across threads; distinct instances are independent.
    """

    def __init__(self, spec: UNetSpec, dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(spec.seed)
        widths = [spec.base_width * 2**i for i in range(spec.depth)]

        self.encoders = []
        in_ch = spec.in_channels
        for w in widths:
            self.encoders.append(_ConvBlock(rng, in_ch, w, self.dtype))
            in_ch = w
        self.pools = [_MaxPool2x2() for _ in widths]
        bott_w = spec.base_width * 2**spec.depth
        self.bottleneck = _ConvBlock(rng, widths[-1], bott_w, self.dtype)
        # decoders run deepest-first; dec[i] restores encoder level i
        self.ups = {}
        self.decoders = {}
        for i in reversed(range(spec.depth)):
            self.ups[i] = _UpNearest2x()
            self.decoders[i] = _ConvBlock(rng, 3 * widths[i], widths[i], self.dtype)
        self.head = _Conv2d(_he_conv(rng, spec.out_channels, spec.base_width, 1, self.dtype),
                            _conv_bias(rng, spec.out_channels, spec.base_width, 1, self.dtype))
        self.sigmoid = _Sigmoid() if spec.out_channels == 1 else None

        self._params: dict[str, Parameter] = {}
        for i, enc in enumerate(self.encoders):
            self._register(f"enc{i}", enc)
        self._register("bottleneck", self.bottleneck)
        for i in reversed(range(spec.depth)):
            self._register(f"dec{i}", self.decoders[i])
        self._params["head/w"] = self.head.w
        self._params["head/b"] = self.head.b
        self._out_shape = None

    def _register(self, prefix: str, block: _ConvBlock) -> None:
        self._params[f"{prefix}/conv1/w"] = block.conv1.w
        self._params[f"{prefix}/conv1/b"] = block.conv1.b
        self._params[f"{prefix}/conv2/w"] = block.conv2.w
        self._params[f"{prefix}/conv2/b"] = block.conv2.b

    # ---- inference and training ----

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeMismatchError(
                f"expected (n, {self.spec.in_channels}, h, w) input, got {x.shape}")
        div = 2**self.spec.depth
        if x.shape[2] % div or x.shape[3] % div:
            raise IndivisibleSpatialDimsError(
                f"spatial dims {x.shape[2]}x{x.shape[3]} must be divisible by {div}")
        skips = []
        h = x
        for enc, pool in zip(self.encoders, self.pools):
            h = enc.forward(h)
            skips.append(h)
            h = pool.forward(h)
        h = self.bottleneck.forward(h)
        self._concat_splits = {}
        for i in reversed(range(self.spec.depth)):
            up = self.ups[i].forward(h)
            self._concat_splits[i] = up.shape[1]
            h = np.concatenate([up, skips[i]], axis=1)
            h = self.decoders[i].forward(h)
        out = self.head.forward(h)
        if self.sigmoid is not None:
            out = self.sigmoid.forward(out)
        self._out_shape = out.shape
        return out

    def backward(self, loss_grad: np.ndarray) -> None:
        if self._out_shape is None:
            raise NoForwardPassError("backward called before forward")
        if loss_grad.shape != self._out_shape:
            raise ShapeMismatchError(
                f"loss_grad {loss_grad.shape} vs output {self._out_shape}")
        dy = np.ascontiguousarray(loss_grad, dtype=self.dtype)
        if self.sigmoid is not None:
            dy = self.sigmoid.backward(dy)
        dy = self.head.backward(dy)
        dskips = {}
        for i in range(self.spec.depth):
            dy = self.decoders[i].backward(dy)
            split = self._concat_splits[i]
            dskips[i] = dy[:, split:]
            dy = self.ups[i].backward(dy[:, :split])
        dy = self.bottleneck.backward(dy)
        for i in reversed(range(self.spec.depth)):
            dy = self.pools[i].backward(dy)
            dy = dy + dskips[i]
            dy = self.encoders[i].backward(dy)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def parameters(self) -> dict[str, Parameter]:
        return self._params

    def param_values(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self._params.items()}

    def param_grads(self) -> dict[str, np.ndarray]:
        return {k: (p.grad if p.grad is not None else np.zeros_like(p.value))
                for k, p in self._params.items()}

    def param_count(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            raise IncompatibleCheckpointError("parameter names do not match the spec inventory")
        for name, arr in values.items():
            p = self._params[name]
            if arr.shape != p.value.shape:
                raise IncompatibleCheckpointError(
                    f"{name}: shape {arr.shape} vs expected {p.value.shape}")
            p.value = arr.astype(self.dtype)


def build(spec: UNetSpec, dtype=np.float64) -> Model:
    """Construct a U-Net with He-initialized parameters drawn from spec.seed."""
    return Model(spec, dtype=dtype)


# ---- softmax bridging model logits to the dice loss ----

def softmax_channels(logits: np.ndarray) -> np.ndarray:
    """Softmax across the channel axis of an (n, c, h, w) tensor."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_channels_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Gradient through softmax_channels given grad w.r.t. the probabilities."""
    inner = (probs * dprobs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


# ---- checkpoints ----

@dataclass
class Checkpoint:
    spec: UNetSpec
    parameters: dict[str, np.ndarray]
    optimizer_state: dict[str, np.ndarray]
    epoch: int
    config_hash: str


def checkpoint_from_model(model: Model, optimizer_state: dict[str, np.ndarray] | None,
                          epoch: int, config_hash: str) -> Checkpoint:
    params = {k: v.astype(np.float32) for k, v in model.param_values().items()}
    opt = {k: np.asarray(v, dtype=np.float32)
           for k, v in (optimizer_state or {}).items()}
    return Checkpoint(model.spec, params, opt, epoch, config_hash)


def model_from_checkpoint(ckpt: Checkpoint, dtype=np.float64) -> Model:
    model = build(ckpt.spec, dtype=dtype)
    model.load_values(ckpt.parameters)
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "spec": ckpt.spec.to_dict(),
        "parameters": [[k, list(v.shape)] for k, v in ckpt.parameters.items()],
        "optimizer_state": [[k, list(v.shape)] for k, v in ckpt.optimizer_state.items()],
        "epoch": ckpt.epoch,
        "config_hash": ckpt.config_hash,
    }
    hj = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(hj)))
        f.write(hj)
        for k, _ in header["parameters"]:
            f.write(ckpt.parameters[k].astype("<f4").tobytes())
        for k, _ in header["optimizer_state"]:
            f.write(ckpt.optimizer_state[k].astype("<f4").tobytes())


def load_checkpoint(path, expect_hash: str | None = None, force: bool = False) -> Checkpoint:
    """Read a checkpoint; verifies magic, structure, and optionally the config hash."""
    raw = Path(path).read_bytes()
    if len(raw) < len(_MAGIC) + 8 or raw[:len(_MAGIC)] != _MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic bytes")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if off + hlen > len(raw):
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + hlen].decode())
        spec = UNetSpec.from_dict(header["spec"])
        param_list = header["parameters"]
        opt_list = header["optimizer_state"]
        epoch = int(header["epoch"])
        config_hash = str(header["config_hash"])
    except (KeyError, ValueError, TypeError) as e:
        raise CorruptCheckpointError(f"{path}: malformed header: {e}") from e
    off += hlen

    def read_blobs(entries):
        nonlocal off
        out = {}
        for name, shape in entries:
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * 4
            if off + nbytes > len(raw):
                raise CorruptCheckpointError(f"{path}: truncated blob for {name}")
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape)
            out[name] = arr.copy()
            off += nbytes
        return out

    params = read_blobs(param_list)
    opt = read_blobs(opt_list)
    if off != len(raw):
        raise CorruptCheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    if expect_hash is not None and config_hash != expect_hash and not force:
        raise HashMismatchError(
            f"{path}: checkpoint hash {config_hash} != expected {expect_hash}")
    return Checkpoint(spec, params, opt, epoch, config_hash)


# ---- transfer surgery ----

def expand_input_channels(ckpt: Checkpoint, new_in: int) -> Checkpoint:
    """Grow the first convolution to accept extra input channels.

    New kernel slices are zero-initialized, so the expanded network computes
    exactly the original function on the original channels. Optimizer moments
    are dropped (their shapes are stale after surgery).
    """
    old_in = ckpt.spec.in_channels
    if new_in <= old_in:
        raise ShrinkNotSupportedError(f"cannot go from {old_in} to {new_in} input channels")
    params = {k: v.copy() for k, v in ckpt.parameters.items()}
    w = params["enc0/conv1/w"]
    grown = np.zeros((w.shape[0], new_in, w.shape[2], w.shape[3]), dtype=w.dtype)
    grown[:, :old_in] = w
    params["enc0/conv1/w"] = grown
    return Checkpoint(replace(ckpt.spec, in_channels=new_in), params, {},
                      ckpt.epoch, ckpt.config_hash)


def replace_head(ckpt: Checkpoint, new_out: int, seed: int) -> Checkpoint:
    """Swap the final 1x1 convolution for a freshly He-initialized one.

    Every non-head parameter is copied bit-exactly. The head is drawn from a
    dedicated stream keyed by `seed`, so it never coincides with the original
    build even when the seeds match.
    """
    params = {k: v.copy() for k, v in ckpt.parameters.items()}
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, _HEAD_STREAM)))
    dtype = params["head/w"].dtype
    params["head/w"] = _he_conv(rng, new_out, ckpt.spec.base_width, 1, dtype)
    params["head/b"] = _conv_bias(rng, new_out, ckpt.spec.base_width, 1, dtype)
    return Checkpoint(replace(ckpt.spec, out_channels=new_out), params, {},
                      ckpt.epoch, ckpt.config_hash)
