"""Declarative layer specs and the per-feature (or per-group) processing tower."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

LAYER_KINDS = ("conv1d", "maxpool", "fc", "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int | None = None
    kernel: int | None = None
    stride: int = 1
    window: int | None = None
    units: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        required = {
            "conv1d": ("channels", "kernel", "stride"),
            "maxpool": ("window", "stride"),
            "fc": ("units",),
            "relu": (),
        }[self.kind]
        for key in required:
            value = getattr(self, key)
            if value is None or int(value) < 1:
                raise ConfigError(f"{self.kind} layer needs a positive {key}, got {value!r}")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        unknown = set(d) - {"kind", "channels", "kernel", "stride", "window", "units"}
        if unknown:
            raise ConfigError(f"unknown layer keys {sorted(unknown)}")
        return cls(**d)


def Conv1D(channels: int, kernel: int, stride: int = 1) -> LayerSpec:
    return LayerSpec("conv1d", channels=channels, kernel=kernel, stride=stride)


def MaxPool(window: int, stride: int | None = None) -> LayerSpec:
    return LayerSpec("maxpool", window=window, stride=window if stride is None else stride)


def FC(units: int) -> LayerSpec:
    return LayerSpec("fc", units=units)


def ReLU() -> LayerSpec:
    return LayerSpec("relu")


# Shared by every architecture so the towers match across models.
DEFAULT_TOWER = (Conv1D(8, 5, 1), ReLU(), MaxPool(2, 2), FC(32), ReLU())


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """A fully connected layer ``x @ W + b`` with ``W`` of shape ``(in, out)``."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "fc"):
        self.weight = Tensor(glorot_uniform(rng, (n_in, n_out), n_in, n_out),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(n_out), requires_grad=True, name=f"{name}.bias")

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            x = ad.reshape(x, (1, x.shape[0]))
            return ad.reshape(ad.add(ad.matmul(x, self.weight), self.bias), (self.n_out,))
        return ad.add(ad.matmul(x, self.weight), self.bias)


class TowerOutput(NamedTuple):
    stage1: Tensor  # flattened output of the conv/pool stage, before any FC layer
    pre: Tensor  # output before a trailing ReLU (equal to ``out`` otherwise)
    out: Tensor


class FeatureTower:
    """An ordered chain of layers applied to one ``C x T`` input window."""

    def __init__(self, spec: Sequence[LayerSpec], input_shape: tuple[int, int],
                 rng: np.random.Generator, name: str = "tower"):
        self.spec = tuple(spec)
        self.input_shape = (int(input_shape[0]), int(input_shape[1]))
        self.name = name
        self.params: list[dict[str, Tensor]] = []
        self.stage1_width = 0
        shape: tuple[int, ...] = self.input_shape
        for i, layer in enumerate(self.spec):
            where = f"{name} layer {i} ({layer.kind})"
            p: dict[str, Tensor] = {}
            if layer.kind == "conv1d":
                if len(shape) != 2:
                    raise ConfigError(f"{where}: convolution after a fully connected layer")
                c, t = shape
                if layer.kernel > t:
                    raise ConfigError(f"{where}: kernel {layer.kernel} longer than input {t}")
                k, o = layer.kernel, layer.channels
                p["weight"] = Tensor(glorot_uniform(rng, (o, c, k), c * k, o * k),
                                     requires_grad=True, name=f"{name}.layers.{i}.weight")
                p["bias"] = Tensor(np.zeros(o), requires_grad=True, name=f"{name}.layers.{i}.bias")
                shape = (o, (t - k) // layer.stride + 1)
            elif layer.kind == "maxpool":
                if len(shape) != 2:
                    raise ConfigError(f"{where}: pooling after a fully connected layer")
                c, t = shape
                if layer.window > t:
                    raise ConfigError(f"{where}: window {layer.window} longer than input {t}")
                shape = (c, (t - layer.window) // layer.stride + 1)
            elif layer.kind == "fc":
                width = int(np.prod(shape))
                if len(shape) == 2:
                    self.stage1_width = width
                dense = Dense(width, layer.units, rng, name=f"{name}.layers.{i}")
                p["weight"], p["bias"] = dense.weight, dense.bias
                shape = (layer.units,)
            self.params.append(p)
        if len(shape) == 2:
            self.stage1_width = int(np.prod(shape))
        self.output_shape = shape
        self.output_width = int(np.prod(shape))

    def parameters(self) -> list[Tensor]:
        return [t for p in self.params for t in p.values()]

    def named_parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.parameters()}

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def run(self, x: Tensor) -> TowerOutput:
        """Forward ``x`` (``C x T`` or ``B x C x T``), exposing intermediate taps."""
        batched = x.ndim == 3
        if tuple(x.shape[-2:]) != self.input_shape or x.ndim not in (2, 3):
            raise DimensionError(f"{self.name} expects input {self.input_shape}, got {x.shape}")
        start = 1 if batched else 0
        h = x
        stage1 = None
        pre = None
        for layer, p in zip(self.spec, self.params):
            if layer.kind == "conv1d":
                h = ad.conv1d(h, p["weight"], p["bias"], layer.stride)
            elif layer.kind == "maxpool":
                h = ad.maxpool1d(h, layer.window, layer.stride)
            elif layer.kind == "relu":
                pre = h
                h = ad.relu(h)
                continue
            else:
                if h.ndim == start + 2:
                    h = ad.flatten(h, start)
                    stage1 = h
                h = ad.add(ad.matmul(h if batched else ad.reshape(h, (1, -1)), p["weight"]),
                           p["bias"])
                if not batched:
                    h = ad.reshape(h, (layer.units,))
            pre = None
        if h.ndim == start + 2:
            h = ad.flatten(h, start)
            stage1 = h
        if stage1 is None:
            stage1 = ad.flatten(x, start)
        return TowerOutput(stage1, h if pre is None else _flat(pre, start), h)

    def __call__(self, x: Tensor) -> Tensor:
        return self.run(x).out


def _flat(t: Tensor, start: int) -> Tensor:
    return ad.flatten(t, start) if t.ndim > start + 1 else t


def build_tower(spec: Sequence[LayerSpec], input_shape: tuple[int, int],
                rng: np.random.Generator | int | None = None, name: str = "tower") -> FeatureTower:
    """Allocate a tower for ``input_shape`` (channels, length); raises ConfigError on a bad chain."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return FeatureTower(spec, input_shape, rng, name=name)


def tower_forward(tower: FeatureTower, x: Tensor) -> Tensor:
    return tower(x)
