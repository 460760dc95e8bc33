"""MLP encoder producing contrastive features ``f(x)`` and their projection ``z(x)``.

The projection head is folded into the last layers of the MLP, so ``embed``
returns the final feature that the outlier-exposure penalty acts on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, ParseError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"OECLPAR1"


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 8
    hidden_widths: tuple[int, ...] = (64, 64)
    feature_dim: int = 16
    normalize_output: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("encoder widths must be positive")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be at least 2")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.feature_dim)


@dataclass(frozen=True)
class EncoderParams:
    """Per-layer ``(weight, bias)`` pairs; weights are ``(fan_in, fan_out)``."""

    weights: tuple[Tensor, ...]
    biases: tuple[Tensor, ...] = field(default=())

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias per weight and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {i} fan-in {w.shape[0]} != previous fan-out")

    @property
    def tensors(self) -> list[Tensor]:
        """Weights and biases interleaved in declaration order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    @classmethod
    def from_arrays(cls, arrays, requires_grad: bool = False) -> EncoderParams:
        ts = [Tensor(a, requires_grad=requires_grad) for a in arrays]
        return cls(tuple(ts[0::2]), tuple(ts[1::2]))

    def arrays(self) -> list[np.ndarray]:
        return [t.numpy() for t in self.tensors]

    def with_grad(self) -> EncoderParams:
        """Fresh leaf copies that record gradients."""
        return EncoderParams.from_arrays(self.arrays(), requires_grad=True)


def init_params(config: EncoderConfig, seed: int) -> EncoderParams:
    """Uniform ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights and zero biases."""
    rng = np.random.default_rng(seed)
    arrays = []
    widths = config.widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        arrays.append(np.zeros(fan_out))
    return EncoderParams.from_arrays(arrays)


def embed(params: EncoderParams, batch) -> Tensor:
    """Contrastive feature ``f(x)`` for each row of ``batch``."""
    x = T.as_tensor(batch)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(f"batch shape {x.shape} does not match input_dim {params.input_dim}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = T.add(T.matmul(x, w), b)
        if i < last:
            x = T.relu(x)
    return x


def embed_array(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Graph-free forward pass for evaluation; same arithmetic as :func:`embed`."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(f"batch shape {x.shape} does not match input_dim {params.input_dim}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w.data + b.data
        if i < last:
            x = np.where(x > 0.0, x, 0.0)
    return x


def project(features) -> Tensor:
    """Map features onto the unit hypersphere, ``z = f / |f|``."""
    return T.row_normalize(features, eps=1e-12)


def represent(params: EncoderParams, batch, config: EncoderConfig) -> tuple[Tensor, Tensor]:
    """Return ``(f, z)`` where ``z`` is projected only if the config asks for it."""
    f = embed(params, batch)
    return f, (project(f) if config.normalize_output else f)


# ---------------------------------------------------------------------------
# checkpoint container: magic, then per tensor <u64 rank> <u64 extents...> <f64 data...>
# ---------------------------------------------------------------------------


def save_params(params: EncoderParams, path) -> None:
    chunks = [CHECKPOINT_MAGIC]
    for t in params.tensors:
        chunks.append(struct.pack("<Q", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        chunks.append(t.data.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> EncoderParams:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not an OECLPAR1 checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    arrays = []
    try:
        while pos < len(raw):
            (rank,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            shape = struct.unpack_from(f"<{rank}Q", raw, pos)
            pos += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            if pos + 8 * count > len(raw):
                raise ParseError(f"{path}: truncated tensor record")
            arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64))
            pos += 8 * count
    except struct.error as exc:
        raise ParseError(f"{path}: truncated record header") from exc
    if not arrays or len(arrays) % 2:
        raise ParseError(f"{path}: expected weight/bias pairs, found {len(arrays)} tensors")
    try:
        return EncoderParams.from_arrays(arrays)
    except DimensionError as exc:
        raise ParseError(f"{path}: {exc}") from exc
