"""Synthetic datasets, augmentations ``T`` and distribution-shifting transforms ``S_oe``.

Vectors stand in for images.  Augmentations keep the structure "a positive
pair is two random transforms of one sample":

* ``gaussian-noise(s)``   additive isotropic noise, the colour-jitter analogue
* ``random-scale(lo,hi)`` multiply by ``U(lo, hi)``, the crop/zoom analogue
* ``coordinate-mask(p)``  zero each coordinate with probability ``p``
* ``planar-rotation(deg)`` rotate every coordinate pair ``(0,1), (2,3), ...``
* ``reflection(axis)``    negate one coordinate

The last two are exact linear maps and double as shifting transforms.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ParseError

ORIGINS = ("normal", "oe-near", "oe-far", "anomaly")

NOISE = "gaussian-noise"
SCALE = "random-scale"
MASK = "coordinate-mask"
ROTATION = "planar-rotation"
REFLECTION = "reflection"
KINDS = (NOISE, SCALE, MASK, ROTATION, REFLECTION)
SHIFT_KINDS = (ROTATION, REFLECTION)


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        arity = {NOISE: 1, SCALE: 2, MASK: 1, ROTATION: 1, REFLECTION: 1}
        if self.kind not in arity:
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        if len(self.params) != arity[self.kind]:
            raise ConfigError(f"{self.kind} takes {arity[self.kind]} parameter(s), got {len(self.params)}")
        p = self.params
        if self.kind == NOISE and p[0] < 0:
            raise ConfigError("noise std must be non-negative")
        if self.kind == SCALE and not 0 <= p[0] <= p[1]:
            raise ConfigError(f"scale range must satisfy 0 <= lo <= hi, got {p}")
        if self.kind == MASK and not 0.0 <= p[0] <= 1.0:
            raise ConfigError(f"mask probability must lie in [0, 1], got {p[0]}")
        if self.kind == REFLECTION and (p[0] < 0 or p[0] != int(p[0])):
            raise ConfigError(f"reflection axis must be a non-negative integer, got {p[0]}")

    @property
    def is_identity(self) -> bool:
        if self.kind == ROTATION:
            return math.remainder(self.params[0], 360.0) == 0.0
        if self.kind == NOISE:
            return self.params[0] == 0.0
        if self.kind == SCALE:
            return self.params == (1.0, 1.0)
        if self.kind == MASK:
            return self.params[0] == 0.0
        return False

    def __str__(self):
        return f"{self.kind}({','.join(_fmt(p) for p in self.params)})"


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


_TRANSFORM_RE = re.compile(r"^\s*([a-z-]+)\s*\(([^)]*)\)\s*$")


def parse_transforms(text: str) -> tuple[TransformSpec, ...]:
    """Parse ``"gaussian-noise(0.1); random-scale(0.8,1.2)"``; blank means empty."""
    out = []
    for part in text.split(";"):
        if not part.strip():
            continue
        m = _TRANSFORM_RE.match(part)
        if not m:
            raise ConfigError(f"cannot parse transform {part.strip()!r}")
        args = [a for a in m.group(2).split(",") if a.strip()]
        try:
            out.append(TransformSpec(m.group(1), tuple(float(a) for a in args)))
        except ValueError as exc:
            raise ConfigError(f"bad transform parameter in {part.strip()!r}") from exc
    return tuple(out)


def format_transforms(transforms: Iterable[TransformSpec]) -> str:
    return "; ".join(str(t) for t in transforms)


def validate_shift_set(shifts: Sequence[TransformSpec]) -> None:
    """Outlier-exposure shifts must be non-empty exact maps that are not the identity."""
    if not shifts:
        raise ConfigError("the outlier-exposure shift set is empty")
    for s in shifts:
        if s.kind not in SHIFT_KINDS:
            raise ConfigError(f"{s} is not a distribution-shifting transform")
        if s.is_identity:
            raise ConfigError(f"{s} is the identity, which always belongs to the augmentation closure")


@dataclass(frozen=True)
class Mode:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    label: int = 0
    origin: str = "normal"

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != len(self.std):
            raise ConfigError("mode mean and std lengths differ")
        if any(s <= 0 for s in self.std):
            raise ConfigError("mode standard deviations must be positive")
        if self.origin not in ORIGINS:
            raise ConfigError(f"origin must be one of {ORIGINS}")


@dataclass(frozen=True)
class SyntheticSpec:
    input_dim: int
    modes: tuple[Mode, ...]
    samples_per_mode: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.input_dim < 2:
            raise ConfigError("input_dim must be at least 2")
        if not self.modes:
            raise ConfigError("need at least one mode")
        for m in self.modes:
            if len(m.mean) != self.input_dim:
                raise ConfigError(f"mode of length {len(m.mean)} in a {self.input_dim}-d spec")


@dataclass(frozen=True)
class LabeledSample:
    vector: np.ndarray
    label: int
    origin: str = "normal"

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ContractError(f"origin must be one of {ORIGINS}, got {self.origin!r}")


def stack(samples: Sequence[LabeledSample]) -> np.ndarray:
    if not samples:
        return np.zeros((0, 0))
    return np.stack([s.vector for s in samples])


def sample_dataset(spec: SyntheticSpec) -> list[LabeledSample]:
    """Gaussian draws, ``samples_per_mode`` per mode, in mode order."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for mode in spec.modes:
        x = np.asarray(mode.mean) + np.asarray(mode.std) * rng.standard_normal((spec.samples_per_mode, spec.input_dim))
        out += [LabeledSample(row, mode.label, mode.origin) for row in x]
    return out


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def _rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    if x.shape[-1] < 2:
        raise ContractError("planar rotation needs at least 2 coordinates")
    theta = math.radians(degrees)
    # exact values at multiples of 90 degrees keep shifted samples bit-clean
    quarter = math.remainder(degrees, 90.0) == 0.0
    c = float(round(math.cos(theta))) if quarter else math.cos(theta)
    s = float(round(math.sin(theta))) if quarter else math.sin(theta)
    out = x.copy()
    even = x.shape[-1] - x.shape[-1] % 2
    a, b = x[..., 0:even:2], x[..., 1:even:2]
    out[..., 0:even:2] = c * a - s * b
    out[..., 1:even:2] = s * a + c * b
    return out


def _reflect(x: np.ndarray, axis: int) -> np.ndarray:
    if axis >= x.shape[-1]:
        raise ContractError(f"reflection axis {axis} out of range for dimension {x.shape[-1]}")
    out = x.copy()
    out[..., axis] = -out[..., axis]
    return out


def apply_shift_batch(batch: np.ndarray, shift: TransformSpec) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if shift.kind == ROTATION:
        return _rotate(batch, shift.params[0])
    if shift.kind == REFLECTION:
        return _reflect(batch, int(shift.params[0]))
    raise ContractError(f"{shift.kind} is not a shifting transform")


def apply_shift(x, shift: TransformSpec) -> np.ndarray:
    """Exact linear shift of a single vector."""
    return apply_shift_batch(np.asarray(x, dtype=np.float64)[None, :], shift)[0]


def _apply_random(batch: np.ndarray, t: TransformSpec, rng: np.random.Generator) -> np.ndarray:
    n, d = batch.shape
    if t.kind == NOISE:
        sigma = t.params[0]
        noise = rng.standard_normal((n, d))
        return batch + sigma * noise if sigma > 0 else batch.copy()
    if t.kind == SCALE:
        lo, hi = t.params
        factor = rng.uniform(lo, hi, size=(n, 1)) if hi > lo else np.full((n, 1), lo)
        return batch * factor
    if t.kind == MASK:
        keep = rng.random((n, d)) >= t.params[0]
        return np.where(keep, batch, 0.0)
    return apply_shift_batch(batch, t)


def augment_batch(batch: np.ndarray, transforms: Sequence[TransformSpec], rng: np.random.Generator) -> np.ndarray:
    """Apply ``transforms`` in order to every row, one independent stream per transform."""
    out = np.array(batch, dtype=np.float64, copy=True)
    if not transforms:
        return out
    for t, stream in zip(transforms, rng.spawn(len(transforms))):
        out = _apply_random(out, t, stream)
    return out


def augment(x, transforms: Sequence[TransformSpec], seed: int) -> np.ndarray:
    return augment_batch(np.asarray(x, dtype=np.float64)[None, :], transforms, np.random.default_rng(seed))[0]


# ---------------------------------------------------------------------------
# benchmark geometry
# ---------------------------------------------------------------------------


def _directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    if count == 0:
        return np.zeros((0, dim))
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class ModeLayout:
    """Mean and signal coordinates of one mode of a :class:`BenchmarkSpec`."""

    mean: np.ndarray
    signal: tuple[int, ...]


@dataclass(frozen=True)
class BenchmarkSpec:
    """Geometry of a synthetic detection benchmark (a union of subspaces).

    Every class varies strongly (std ``mode_std``) along its own
    ``signal_dims`` coordinates and weakly (std ``minor_std``) along the rest,
    the vector analogue of classes that differ in which features carry their
    variation.  Normal modes are centred at the origin.  An anomaly or near
    outlier mode shares ``*_overlap`` signal coordinates with a normal mode,
    draws the others from outside it, and is offset along those private
    coordinates by ``*_distance * mode_std``.  The far pool is an isotropic
    shell of radius ``far_distance`` to ``far_distance + far_width`` (again in
    units of ``mode_std``) around the normal means.
    """

    input_dim: int = 8
    n_normal_modes: int = 1
    signal_dims: int = 4
    mode_std: float = 2.0
    minor_std: float = 0.3
    n_train: int = 512
    n_val: int = 256
    n_test: int = 256
    n_anomaly_modes: int = 3
    anomaly_overlap: int = 2
    anomaly_distance: float = 3.0
    n_near_modes: int = 3
    near_overlap: int = 2
    near_distance: float = 3.0
    near_pool_size: int = 1024
    far_distance: float = 10.0
    far_width: float = 5.0
    far_pool_size: int = 1024
    seed: int = 0
    augment: tuple[TransformSpec, ...] = field(default_factory=tuple)
    augment_oe: tuple[TransformSpec, ...] | None = None
    shifts: tuple[TransformSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("augment", "shifts"):
            v = getattr(self, name)
            object.__setattr__(self, name, parse_transforms(v) if isinstance(v, str) else tuple(v))
        if isinstance(self.augment_oe, str):
            parsed = parse_transforms(self.augment_oe)
            object.__setattr__(self, "augment_oe", parsed if parsed else None)
        elif self.augment_oe is not None:
            object.__setattr__(self, "augment_oe", tuple(self.augment_oe))
        if self.input_dim < 2:
            raise ConfigError("input_dim must be at least 2")
        if self.n_normal_modes < 1:
            raise ConfigError("need at least one normal mode")
        if not 1 <= self.signal_dims < self.input_dim:
            raise ConfigError("signal_dims must lie in [1, input_dim)")
        if self.mode_std <= 0 or self.minor_std <= 0:
            raise ConfigError("mode_std and minor_std must be positive")
        for name in ("anomaly_overlap", "near_overlap"):
            o = getattr(self, name)
            if not 0 <= o < self.signal_dims or self.signal_dims - o > self.input_dim - self.signal_dims:
                raise ConfigError(f"{name} = {o} leaves no room for private signal coordinates")
        for name in ("n_train", "n_val", "n_test", "near_pool_size", "far_pool_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.anomaly_distance < 0 or self.near_distance < 0 or self.far_distance < 0 or self.far_width < 0:
            raise ConfigError("distances must be non-negative")

    @property
    def oe_transforms(self) -> tuple[TransformSpec, ...]:
        """``T_oe``; defaults to the in-distribution family ``T``."""
        return self.augment if self.augment_oe is None else self.augment_oe

    def geometry(self) -> dict[str, list[ModeLayout]]:
        """Mode layouts keyed by role; deterministic in ``seed``."""
        rng = np.random.default_rng([self.seed, 0])
        d, k = self.input_dim, self.signal_dims
        normal = []
        for i in range(self.n_normal_modes):
            dims = tuple(range(k)) if i == 0 else tuple(sorted(rng.choice(d, size=k, replace=False)))
            normal.append(ModeLayout(np.zeros(d), dims))

        def around(count: int, overlap: int, dist: float) -> list[ModeLayout]:
            out = []
            for j in range(count):
                base = normal[j % len(normal)]
                inside = rng.choice(base.signal, size=overlap, replace=False)
                rest = np.setdiff1d(np.arange(d), base.signal)
                private = rng.choice(rest, size=k - overlap, replace=False)
                step = np.zeros(d)
                step[private] = np.abs(rng.standard_normal(len(private)))
                step *= dist * self.mode_std / np.linalg.norm(step)
                signal = tuple(sorted(int(i) for i in np.concatenate([inside, private])))
                out.append(ModeLayout(base.mean + step, signal))
            return out

        return {
            "normal": normal,
            "anomaly": around(self.n_anomaly_modes, self.anomaly_overlap, self.anomaly_distance),
            "near": around(self.n_near_modes, self.near_overlap, self.near_distance),
        }

    def _modes(self, layouts: Sequence[ModeLayout], origin: str, label0: int) -> tuple[Mode, ...]:
        out = []
        for i, lay in enumerate(layouts):
            std = np.full(self.input_dim, self.minor_std)
            std[list(lay.signal)] = self.mode_std
            out.append(Mode(lay.mean, std, label0 + i, origin))
        return tuple(out)

    def _draw(self, layouts, origin, label0, total, stream) -> list[LabeledSample]:
        per_mode = max(1, -(-total // len(layouts)))
        spec = SyntheticSpec(self.input_dim, self._modes(layouts, origin, label0), per_mode, seed=_seed(self.seed, stream))
        return sample_dataset(spec)[:total]

    def normal_split(self, split: str) -> list[LabeledSample]:
        """``split`` is ``train``, ``val`` or ``test``; the three draws are independent."""
        sizes = {"train": self.n_train, "val": self.n_val, "test": self.n_test}
        if split not in sizes:
            raise ContractError(f"unknown split {split!r}")
        stream = {"train": 1, "val": 2, "test": 3}[split]
        return self._draw(self.geometry()["normal"], "normal", 0, sizes[split], stream)

    def anomaly_split(self, split: str) -> list[LabeledSample]:
        sizes = {"val": self.n_val, "test": self.n_test}
        if split not in sizes:
            raise ContractError(f"unknown anomaly split {split!r}")
        stream = {"val": 4, "test": 5}[split]
        g = self.geometry()
        if not g["anomaly"]:
            raise ConfigError("benchmark has no anomaly modes")
        return self._draw(g["anomaly"], "anomaly", 100, sizes[split], stream)

    def near_pool(self) -> list[LabeledSample]:
        g = self.geometry()
        if not g["near"]:
            raise ConfigError("benchmark has no near outlier modes")
        return self._draw(g["near"], "oe-near", 200, self.near_pool_size, 6)

    def far_pool(self) -> list[LabeledSample]:
        rng = np.random.default_rng(_seed(self.seed, 7))
        g = np.stack([m.mean for m in self.geometry()["normal"]])
        n = self.far_pool_size
        centers = g[np.arange(n) % len(g)]
        radius = self.mode_std * (self.far_distance + self.far_width * rng.random((n, 1)))
        x = centers + radius * _directions(rng, n, self.input_dim)
        return [LabeledSample(row, 300, "oe-far") for row in x]


def _seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def make_oe_pool(kind: str, base: Sequence[LabeledSample], spec: BenchmarkSpec) -> list[LabeledSample]:
    """Outlier pool: ``near`` and ``far`` come from the benchmark geometry, ``shift`` from ``base``."""
    if kind == "near":
        return spec.near_pool()
    if kind == "far":
        return spec.far_pool()
    if kind == "shift":
        validate_shift_set(spec.shifts)
        x = stack(base)
        if x.size == 0:
            return []
        out = []
        for s in spec.shifts:
            out += [LabeledSample(row, -1, "oe-near") for row in apply_shift_batch(x, s)]
        return out
    raise ContractError(f"unknown OE pool kind {kind!r}")


def select_subset(pool: Sequence[LabeledSample], k: int, seed: int) -> list[LabeledSample]:
    """Choose ``k`` distinct samples, deterministic in ``seed``."""
    if not 0 <= k <= len(pool):
        raise ContractError(f"cannot select {k} samples from a pool of {len(pool)}")
    idx = np.sort(np.random.default_rng(seed).choice(len(pool), size=k, replace=False))
    return [pool[i] for i in idx]


def subsample(samples: Sequence[LabeledSample], fraction: float, seed: int) -> list[LabeledSample]:
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"fraction must lie in (0, 1], got {fraction}")
    k = max(2, int(round(fraction * len(samples))))
    return select_subset(samples, min(k, len(samples)), seed)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^# oecl-dataset v1 dim=(\d+)$")


def save_dataset(path, samples: Sequence[LabeledSample], dim: int | None = None) -> None:
    if dim is None:
        if not samples:
            raise ContractError("dimension is required to save an empty dataset")
        dim = len(samples[0].vector)
    lines = [f"# oecl-dataset v1 dim={dim}", ",".join(["label", "origin"] + [f"x{i}" for i in range(dim)])]
    for s in samples:
        if len(s.vector) != dim:
            raise ContractError(f"vector of length {len(s.vector)} in a {dim}-d dataset")
        lines.append(",".join([str(int(s.label)), s.origin] + [f"{v:.17g}" for v in s.vector]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> list[LabeledSample]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError("empty file, missing dataset header", line=1)
    m = _HEADER_RE.match(lines[0].strip())
    if not m:
        raise ParseError(f"bad dataset header {lines[0]!r}", line=1)
    dim = int(m.group(1))
    expected = ",".join(["label", "origin"] + [f"x{i}" for i in range(dim)])
    if len(lines) < 2 or lines[1].strip() != expected:
        raise ParseError("bad column header", line=2)
    out = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise ParseError(f"expected {dim + 2} columns, got {len(cells)}", line=lineno)
        if cells[1] not in ORIGINS:
            raise ParseError(f"unknown origin {cells[1]!r}", line=lineno)
        try:
            label = int(cells[0])
            vec = np.array([float(c) for c in cells[2:]])
        except ValueError as exc:
            raise ParseError(f"unparseable value: {exc}", line=lineno) from None
        out.append(LabeledSample(vec, label, cells[1]))
    return out
