"""Multi-layer perceptron classifier, EMA teacher tracking and parameter files."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndgrad as nd
from .errors import ConfigError, DimensionError, ParseError
from .ndgrad import Tensor

MAGIC = b"NTPM"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ConfigError("widths: need at least an input and an output layer")
        if any(w < 1 for w in self.widths):
            raise ConfigError(f"widths: all widths must be >= 1, got {self.widths}")
        if self.activation != "relu":
            raise ConfigError(f"activation: only 'relu' is supported, got {self.activation!r}")


@dataclass
class MlpParams:
    weights: list[Tensor]
    biases: list[Tensor] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise DimensionError("MlpParams: weight and bias counts differ")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"MlpParams: layer {l} has weight {w.shape} and bias {b.shape}")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"MlpParams: layer {l} input width does not match previous output")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def tensors(self) -> list[Tensor]:
        """Flat list: every weight followed by every bias."""
        return [*self.weights, *self.biases]

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors()]

    @classmethod
    def from_arrays(cls, arrays, requires_grad=True) -> "MlpParams":
        arrays = list(arrays)
        n = len(arrays) // 2
        return cls(
            [Tensor(a, requires_grad=requires_grad) for a in arrays[:n]],
            [Tensor(a, requires_grad=requires_grad) for a in arrays[n:]],
        )

    def replace(self, tensors) -> "MlpParams":
        tensors = list(tensors)
        n = self.n_layers
        return MlpParams(tensors[:n], tensors[n:])


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> MlpParams:
    """He-initialised weights, zero biases.  ``rng`` defaults to one seeded from ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.widths[:-1], config.widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        weights.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return MlpParams(weights, biases)


def _as_batch(X) -> Tensor:
    X = nd.as_tensor(X)
    if X.ndim == 1:
        X = nd.reshape(X, (1, X.shape[0]))
    return X


def activations(params: MlpParams, X, upto: int | None = None) -> list[Tensor]:
    """Post-activation outputs of each layer; the last entry is the logits.

    ``upto`` stops after that many layers.
    """
    h = _as_batch(X)
    if h.ndim != 2 or h.shape[1] != params.widths[0]:
        raise DimensionError(f"predict: input shape {h.shape} does not match input width {params.widths[0]}")
    upto = params.n_layers if upto is None else upto
    outs = []
    for l in range(upto):
        h = h @ params.weights[l] + params.biases[l]
        if l < params.n_layers - 1:
            h = nd.relu(h)
        outs.append(h)
    return outs


def logits(params: MlpParams, X) -> Tensor:
    return activations(params, X)[-1]


def predict_proba(params: MlpParams, X) -> Tensor:
    return nd.softmax(logits(params, X))


def ema_update(teacher: MlpParams, student: MlpParams, decay: float) -> MlpParams:
    """teacher' = decay * teacher + (1 - decay) * student, returned as constant tensors."""
    if not 0.0 <= decay <= 1.0:
        raise ConfigError(f"decay must lie in [0, 1], got {decay}")
    if teacher.widths != student.widths:
        raise DimensionError(f"ema_update: teacher widths {teacher.widths} != student widths {student.widths}")
    return MlpParams.from_arrays(
        [decay * t + (1.0 - decay) * s for t, s in zip(teacher.arrays(), student.arrays())],
        requires_grad=False,
    )


def save_params(params: MlpParams, path) -> None:
    widths = params.widths
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(widths)), struct.pack(f"<{len(widths)}I", *widths)]
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path, requires_grad: bool = True) -> MlpParams:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise ParseError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    offset = 12 + 4 * count
    if len(raw) < offset:
        raise ParseError(f"{path}: truncated width list")
    widths = struct.unpack_from(f"<{count}I", raw, 12)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        nbytes = 8 * (fan_in * fan_out + fan_out)
        if len(raw) < offset + nbytes:
            raise ParseError(f"{path}: truncated parameter block")
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset).reshape(fan_in, fan_out)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(Tensor(w, requires_grad=requires_grad))
        biases.append(Tensor(b, requires_grad=requires_grad))
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes")
    return MlpParams(weights, biases)
