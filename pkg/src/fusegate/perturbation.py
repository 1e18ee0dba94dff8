"""Corruption models: multiplicative Gaussian noise and random single-sensor failure.

Both act on a raw :class:`SensorStream` (samples ``T x N``) by default, so every
window cut from the stream later sees the same corrupted samples.  They also
accept a :class:`WindowedDataset` (windows ``B x N x T``), where each window's
timestamps are corrupted independently.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .data import SensorStream, WindowedDataset
from .errors import ConfigError

PERTURBATION_KINDS = ("none", "noise", "failure")
SCOPES = ("train", "test", "both")
STAGES = ("raw", "normalized")
FEATURE_AXIS = 1  # (T, N) streams and (B, N, T) windows alike


def parse_gamma(value) -> float:
    """Accept a fraction (``0.05``) or a percent string (``"5%"``)."""
    if isinstance(value, str):
        text = value.strip()
        try:
            gamma = float(text[:-1]) / 100.0 if text.endswith("%") else float(text)
        except ValueError:
            raise ConfigError(f"cannot parse noise level {value!r}") from None
    else:
        gamma = float(value)
    if not np.isfinite(gamma) or gamma < 0:
        raise ConfigError(f"noise level must be nonnegative, got {value!r}")
    return gamma


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = "none"
    gamma: float = 0.0
    seed: int = 0
    scope: str = "both"
    features: tuple[int, ...] | None = None  # noise only; None means every feature
    stage: str = "raw"

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        object.__setattr__(self, "gamma", parse_gamma(self.gamma))
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.features is not None:
            object.__setattr__(self, "features", tuple(int(i) for i in self.features))

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "clean"
        if self.kind == "failure":
            return "failure"
        pct = f"{self.gamma * 100:g}%"
        if self.features is not None:
            pct += "@" + ",".join(str(i) for i in self.features)
        return pct

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = list(self.features) if self.features is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown perturbation keys {sorted(unknown)}")
        return cls(**d)

    def apply(self, data, seed: int | None = None):
        seed = self.seed if seed is None else seed
        if self.kind == "noise":
            return apply_noise(data, self.gamma, seed, self.features)
        if self.kind == "failure":
            return apply_failures(data, seed)
        return data


def _values(data) -> np.ndarray:
    if isinstance(data, SensorStream):
        return data.samples
    if isinstance(data, WindowedDataset):
        return data.windows
    return np.asarray(data, dtype=np.float64)


def _rebuild(data, values: np.ndarray):
    if isinstance(data, SensorStream):
        return data.with_samples(values)
    if isinstance(data, WindowedDataset):
        return replace(data, windows=values)
    return values


def apply_noise(data, gamma, seed: int, features: Sequence[int] | None = None):
    """Replace each value ``v`` by ``v * (1 + gamma * eps)`` with i.i.d. ``eps ~ N(0, 1)``.

    ``features`` restricts the noise to a subset of feature indices.
    """
    gamma = parse_gamma(gamma)
    values = _values(data)
    if gamma == 0:
        return _rebuild(data, values.copy())
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(values.shape)
    factor = 1.0 + gamma * eps
    if features is not None:
        keep = np.ones(values.shape[FEATURE_AXIS], dtype=bool)
        keep[list(features)] = False
        shape = [1] * values.ndim
        shape[FEATURE_AXIS] = -1
        factor = np.where(keep.reshape(shape), 1.0, factor)
    return _rebuild(data, values * factor)


def failure_mask(n_steps: int, n_features: int, seed: int) -> np.ndarray:
    """Boolean ``n_steps x n_features`` mask with exactly one uniformly chosen True per row."""
    if n_features < 1:
        raise ConfigError("failure injection needs at least one feature")
    rng = np.random.default_rng(seed)
    chosen = rng.integers(0, n_features, size=n_steps)
    mask = np.zeros((n_steps, n_features), dtype=bool)
    mask[np.arange(n_steps), chosen] = True
    return mask


def apply_failures(data, seed: int, fill: float | np.ndarray = 0.0):
    """At every timestamp, wipe one uniformly chosen feature to ``fill`` (zero by default)."""
    values = _values(data).copy()
    if isinstance(data, WindowedDataset) or values.ndim == 3:
        b, n, t = values.shape
        mask = failure_mask(b * t, n, seed).reshape(b, t, n).transpose(0, 2, 1)
        fill_arr = np.broadcast_to(np.asarray(fill, dtype=np.float64).reshape(-1, 1), (n, t))
        values[mask] = np.broadcast_to(fill_arr, values.shape)[mask]
    else:
        t, n = values.shape
        mask = failure_mask(t, n, seed)
        values[mask] = np.broadcast_to(np.asarray(fill, dtype=np.float64), (t, n))[mask]
    return _rebuild(data, values)
