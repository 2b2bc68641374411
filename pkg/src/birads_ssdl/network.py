"""Shared-encoder reconstruction + classification network and its checkpoints.

Layout (input ``1 x S x S``)::

    encoder     conv1..conv4 (3x3, ReLU, 2x2 max-pool after each), fc1, fc2
    classifier  fc3 (softmax over 2 classes)
    decoder     fc4, fc5, reshape, four (3x3 conv + ReLU, 2x upsample), 3x3 output conv (linear)

The encoder parameters exist once and feed both heads.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import (Parameter, ShapeError, Tensor, conv2d, dense, dropout, flatten, maxpool2d, relu,
                       reshape, softmax, upsample2d)

CHECKPOINT_MAGIC = b"BSDL"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(Exception):
    """Base class for checkpoint loading failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or unsupported version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended before all declared content was read."""


class ArchitectureMismatchError(CheckpointError):
    """The stored architecture differs from what the caller expects."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ArchitectureConfig:
    input_side: int = 64
    conv_channels: tuple[int, ...] = (8, 16, 32, 64)
    fc_sizes: tuple[int, ...] = (256, 64)
    num_classes: int = 2
    dropout_p: float = 0.5
    decoder_channels: tuple[int, ...] = (64, 32, 16, 8)
    kernel_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_sizes", tuple(int(c) for c in self.fc_sizes))
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        self.validate()

    def validate(self) -> None:
        n_pool = len(self.conv_channels)
        if not _is_power_of_two(self.input_side) or self.input_side < 2 ** n_pool:
            raise ConfigError(
                f"input_side must be a power of two >= {2 ** n_pool}, got {self.input_side}")
        if self.num_classes != 2:
            raise ConfigError(f"num_classes must be 2, got {self.num_classes}")
        if len(self.fc_sizes) != 2:
            raise ConfigError("fc_sizes needs exactly two entries (FC1, FC2)")
        if len(self.decoder_channels) != n_pool:
            raise ConfigError("decoder_channels must have one entry per encoder conv")
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    @property
    def bottleneck_side(self) -> int:
        return self.input_side // 2 ** len(self.conv_channels)

    @property
    def flatten_size(self) -> int:
        return self.conv_channels[-1] * self.bottleneck_side ** 2

    @property
    def bottleneck_dim(self) -> int:
        return self.fc_sizes[-1]

    def to_header(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            else:
                value = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_header(cls, text: str) -> "ArchitectureConfig":
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointFormatError(f"malformed header line {line!r}")
            values[key.strip()] = value.strip()
        kwargs = {}
        try:
            for key, default in asdict(cls()).items():
                if key not in values:
                    raise CheckpointFormatError(f"header is missing {key!r}")
                raw = values[key]
                if isinstance(default, tuple):
                    kwargs[key] = tuple(int(v) for v in raw.split(",") if v)
                elif isinstance(default, float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = int(raw)
        except ValueError as exc:
            raise CheckpointFormatError(f"bad header value: {exc}") from None
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            raise ArchitectureMismatchError(f"stored architecture is invalid: {exc}") from None


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _layer_shapes(cfg: ArchitectureConfig) -> dict[str, tuple[int, ...]]:
    k = cfg.kernel_size
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for i, c in enumerate(cfg.conv_channels, 1):
        shapes[f"encoder/conv{i}/weight"] = (c, c_in, k, k)
        shapes[f"encoder/conv{i}/bias"] = (c,)
        c_in = c
    fc1, fc2 = cfg.fc_sizes
    shapes["encoder/fc1/weight"] = (fc1, cfg.flatten_size)
    shapes["encoder/fc1/bias"] = (fc1,)
    shapes["encoder/fc2/weight"] = (fc2, fc1)
    shapes["encoder/fc2/bias"] = (fc2,)
    shapes["classifier/fc3/weight"] = (cfg.num_classes, fc2)
    shapes["classifier/fc3/bias"] = (cfg.num_classes,)
    shapes["decoder/fc4/weight"] = (fc1, fc2)
    shapes["decoder/fc4/bias"] = (fc1,)
    shapes["decoder/fc5/weight"] = (cfg.flatten_size, fc1)
    shapes["decoder/fc5/bias"] = (cfg.flatten_size,)
    c_in = cfg.conv_channels[-1]
    for i, c in enumerate(cfg.decoder_channels, 1):
        shapes[f"decoder/conv{i}/weight"] = (c, c_in, k, k)
        shapes[f"decoder/conv{i}/bias"] = (c,)
        c_in = c
    shapes["decoder/out/weight"] = (1, c_in, k, k)
    shapes["decoder/out/bias"] = (1,)
    return shapes


def parameter_count(cfg: ArchitectureConfig) -> int:
    return sum(int(np.prod(s)) for s in _layer_shapes(cfg).values())


class SsdlModel:
    """Parameters plus forward passes; ``training`` toggles dropout."""

    def __init__(self, cfg: ArchitectureConfig, params: dict[str, Parameter], seed: int = 0):
        self.cfg = cfg
        self.params = params
        self.training = False
        self.rng = np.random.default_rng(seed)

    # ----------------------------------------------------------------- modes
    def train(self) -> "SsdlModel":
        self.training = True
        return self

    def eval(self) -> "SsdlModel":
        self.training = False
        return self

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    # ------------------------------------------------------------- parameters
    def parameters(self, prefix: str = "") -> list[Parameter]:
        return [self.params[n] for n in sorted(self.params) if n.startswith(prefix)]

    def encoder_parameters(self) -> list[Parameter]:
        return self.parameters("encoder/")

    def classifier_parameters(self) -> list[Parameter]:
        return self.parameters("classifier/")

    def decoder_parameters(self) -> list[Parameter]:
        return self.parameters("decoder/")

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: self.params[n].data.copy() for n in sorted(self.params)}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ArchitectureMismatchError("parameter names differ from the model's")
        for name, value in state.items():
            p = self.params[name]
            if value.shape != p.shape:
                raise ArchitectureMismatchError(
                    f"{name}: stored shape {value.shape} != model shape {p.shape}")
            p.data = np.array(value, dtype=np.float32)

    # --------------------------------------------------------------- forward
    def _p(self, name: str) -> Parameter:
        return self.params[name]

    def _as_input(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float32))
        s = self.cfg.input_side
        if x.ndim == 3:
            x = reshape(x, (x.shape[0], 1, s, s)) if x.shape[1:] == (s, s) else x
        if x.ndim != 4 or x.shape[1:] != (1, s, s):
            raise ShapeError(f"expected a batch of 1x{s}x{s} images, got {x.shape}")
        return x

    def encode(self, x) -> Tensor:
        x = self._as_input(x)
        h = x
        for i in range(1, len(self.cfg.conv_channels) + 1):
            h = conv2d(h, self._p(f"encoder/conv{i}/weight"), self._p(f"encoder/conv{i}/bias"))
            h = maxpool2d(relu(h))
        h = flatten(h)
        for name in ("fc1", "fc2"):
            h = relu(dense(h, self._p(f"encoder/{name}/weight"), self._p(f"encoder/{name}/bias")))
            h = dropout(h, self.cfg.dropout_p, self.training, self.rng)
        return h

    def classify(self, h: Tensor) -> Tensor:
        return softmax(self.logits(h))

    def logits(self, h: Tensor) -> Tensor:
        return dense(h, self._p("classifier/fc3/weight"), self._p("classifier/fc3/bias"))

    def decode(self, h: Tensor) -> Tensor:
        cfg = self.cfg
        d = relu(dense(h, self._p("decoder/fc4/weight"), self._p("decoder/fc4/bias")))
        d = relu(dense(d, self._p("decoder/fc5/weight"), self._p("decoder/fc5/bias")))
        s = cfg.bottleneck_side
        d = reshape(d, (d.shape[0], cfg.conv_channels[-1], s, s))
        for i in range(1, len(cfg.decoder_channels) + 1):
            d = relu(conv2d(d, self._p(f"decoder/conv{i}/weight"), self._p(f"decoder/conv{i}/bias")))
            d = upsample2d(d, 2)
        return conv2d(d, self._p("decoder/out/weight"), self._p("decoder/out/bias"))

    def predict_proba(self, x, batch_size: int = 64) -> np.ndarray:
        """Eval-mode class probabilities, ``(N, 2)``."""
        was_training = self.training
        self.eval()
        x = np.asarray(x, dtype=np.float32)
        out = []
        for start in range(0, len(x), batch_size):
            out.append(self.classify(self.encode(x[start:start + batch_size])).data)
        self.training = was_training
        return np.concatenate(out, axis=0) if out else np.zeros((0, 2), dtype=np.float32)

    def reconstruct(self, x, batch_size: int = 64) -> np.ndarray:
        was_training = self.training
        self.eval()
        x = np.asarray(x, dtype=np.float32)
        out = [self.decode(self.encode(x[s:s + batch_size])).data
               for s in range(0, len(x), batch_size)]
        self.training = was_training
        return np.concatenate(out, axis=0)


def build_model(cfg: ArchitectureConfig | None = None, seed: int = 0) -> SsdlModel:
    """Fresh model: He-uniform (fan-in) weights, zero biases, all from ``seed``."""
    cfg = cfg or ArchitectureConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, Parameter] = {}
    for name, shape in sorted(_layer_shapes(cfg).items()):
        if name.endswith("/bias"):
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = _he_uniform(rng, shape, int(np.prod(shape[1:])))
        params[name] = Parameter(data, name)
    # dropout draws from a stream independent of the init stream
    return SsdlModel(cfg, params, seed=seed + 1_000_003)


# ------------------------------------------------------------------ checkpoints
def checkpoint_bytes(model: SsdlModel) -> bytes:
    header = model.cfg.to_header().encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for name in sorted(model.params):
        data = model.params[name].data
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(model: SsdlModel, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(checkpoint_bytes(model))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expected: ArchitectureConfig | None = None) -> SsdlModel:
    """Read a checkpoint; with ``expected`` the stored architecture must match it."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic = data[:4]
    if len(magic) < 4:
        raise CheckpointTruncatedError("file too short for a checkpoint header")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    r.take(4)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    header_len = r.u32()
    cfg = ArchitectureConfig.from_header(r.take(header_len).decode("utf-8"))
    if expected is not None and cfg != expected:
        raise ArchitectureMismatchError(f"checkpoint holds {cfg}, expected {expected}")
    shapes = _layer_shapes(cfg)
    state = {}
    while r.pos < len(data):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = tuple(struct.unpack(f"<{rank}I", r.take(4 * rank)))
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        if shapes.get(name) != dims:
            raise ArchitectureMismatchError(f"unexpected parameter {name} with shape {dims}")
        state[name] = arr.astype(np.float32)
    if set(state) != set(shapes):
        missing = sorted(set(shapes) - set(state))
        raise CheckpointTruncatedError(f"checkpoint lacks parameters: {missing[:3]}")
    model = build_model(cfg, seed=0)
    model.load_state_dict(state)
    return model
