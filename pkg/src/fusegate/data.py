"""Sensor streams, sliding windows, feature-wise normalization and grouping."""

from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .architectures import GroupSpec
from .errors import ConfigError, DataError, LabelError

DRIVING_FEATURES = ("RPM", "SPEED", "D_SPEED", "GYRO_Y", "D_HEADING")
DRIVING_CLASSES = ("idle", "eco", "normal")
HAR_FEATURES = ("ACC_X", "ACC_Y", "ACC_Z", "GYRO_X", "GYRO_Y", "GYRO_Z")
HAR_CLASSES = ("WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING",
               "LAYING")


@dataclass
class SensorStream:
    feature_names: list[str]
    samples: np.ndarray  # (T_total, N)
    sample_period: float
    labels: np.ndarray  # (T_total,) class indices
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.feature_names):
            raise DataError(
                f"samples shape {self.samples.shape} does not match "
                f"{len(self.feature_names)} features"
            )
        if self.labels.shape != (self.samples.shape[0],):
            raise DataError("one label per timestamp is required")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("stream contains missing or non-finite values")

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples: np.ndarray) -> "SensorStream":
        return replace(self, samples=samples)


@dataclass
class WindowedDataset:
    windows: np.ndarray  # (B, N, T)
    labels: np.ndarray  # (B,)
    end_index: np.ndarray  # stream index of each window's last sample
    feature_names: list[str]
    window_len: int
    horizon: int
    group_spec: GroupSpec | None = None
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def n_features(self) -> int:
        return self.windows.shape[1]

    def subset(self, index) -> "WindowedDataset":
        return replace(self, windows=self.windows[index], labels=self.labels[index],
                       end_index=self.end_index[index])


# ---------------------------------------------------------------------------
# windowing and normalization
# ---------------------------------------------------------------------------

def window_count(total: int, window_len: int, horizon: int, stride: int) -> int:
    return (total - window_len - horizon) // stride + 1


def make_windows(stream: SensorStream, window_len: int, horizon: int = 0, stride: int = 1,
                 group_spec: GroupSpec | None = None) -> WindowedDataset:
    """Cut ``stream`` into windows ending at ``t`` labelled with the class at ``t + horizon``."""
    if window_len < 1 or horizon < 0 or stride < 1:
        raise ConfigError(
            f"window_len and stride must be positive and horizon nonnegative, "
            f"got {window_len}, {horizon}, {stride}"
        )
    total = len(stream)
    if window_len + horizon > total:
        raise DataError(
            f"stream of {total} samples is too short for window {window_len} + horizon {horizon}"
        )
    ends = np.arange(window_len - 1, total - horizon, stride)
    view = np.lib.stride_tricks.sliding_window_view(stream.samples, window_len, axis=0)
    # view[s] is (N, window_len) covering samples s .. s + window_len - 1
    windows = np.ascontiguousarray(view[ends - window_len + 1])
    return WindowedDataset(
        windows=windows,
        labels=stream.labels[ends + horizon].copy(),
        end_index=ends,
        feature_names=list(stream.feature_names),
        window_len=window_len,
        horizon=horizon,
        group_spec=group_spec,
    )


def feature_stats(ds: WindowedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and standard deviation over every value in ``ds``."""
    return ds.windows.mean(axis=(0, 2)), ds.windows.std(axis=(0, 2))


def normalize_array(values: np.ndarray, mean: np.ndarray, std: np.ndarray, axis: int) -> np.ndarray:
    shape = [1] * values.ndim
    shape[axis] = -1
    safe = np.where(std > 0, std, 1.0)
    return (values - mean.reshape(shape)) / safe.reshape(shape)


def normalize_featurewise(ds: WindowedDataset,
                          stats: tuple[np.ndarray, np.ndarray] | None = None) -> WindowedDataset:
    """Standardize each feature with ``stats`` (computed from ``ds`` itself when omitted).

    Pass the training split's stats when normalizing a test split.  A feature
    with zero spread is only centered.
    """
    mean, std = feature_stats(ds) if stats is None else (np.asarray(stats[0]), np.asarray(stats[1]))
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
        raise DataError("normalization stats must be finite")
    flat = [ds.feature_names[i] for i in np.flatnonzero(std <= 0)]
    if flat:
        warnings.warn(f"zero standard deviation for {flat}; centering only", RuntimeWarning,
                      stacklevel=2)
    return replace(ds, windows=normalize_array(ds.windows, mean, std, axis=1),
                   mean=mean.copy(), std=std.copy())


def denormalize(ds: WindowedDataset) -> WindowedDataset:
    if ds.mean is None:
        return ds
    safe = np.where(ds.std > 0, ds.std, 1.0)
    windows = ds.windows * safe[None, :, None] + ds.mean[None, :, None]
    return replace(ds, windows=windows, mean=None, std=None)


def temporal_split(ds: WindowedDataset, train_fraction: float = 2 / 3
                   ) -> tuple[WindowedDataset, WindowedDataset]:
    """Contiguous train/test split with no raw sample shared across the boundary.

    Test windows that would overlap the last training window or its label are dropped.
    """
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    order = np.argsort(ds.end_index, kind="stable")
    n_train = int(np.floor(train_fraction * len(ds)))
    if n_train < 1:
        raise DataError("training split is empty")
    train_idx = order[:n_train]
    last_used = ds.end_index[train_idx].max() + ds.horizon
    starts = ds.end_index[order[n_train:]] - ds.window_len + 1
    test_idx = order[n_train:][starts > last_used]
    if test_idx.size == 0:
        raise DataError("test split is empty after removing boundary windows")
    return ds.subset(train_idx), ds.subset(test_idx)


def random_split(ds: WindowedDataset, train_fraction: float, seed: int
                 ) -> tuple[WindowedDataset, WindowedDataset]:
    """Seeded shuffled split, for datasets whose windows are independent recordings."""
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_train = int(np.floor(train_fraction * len(ds)))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def default_groups(dataset_kind: str) -> GroupSpec:
    if dataset_kind == "driving":
        return GroupSpec([[0, 1, 2], [3, 4]])
    if dataset_kind == "har":
        return GroupSpec([[0, 1], [2, 3, 4, 5]])
    raise ConfigError(f"no default groups for dataset kind {dataset_kind!r}")


# ---------------------------------------------------------------------------
# synthetic driving data
# ---------------------------------------------------------------------------

@dataclass
class SyntheticDrivingConfig:
    """Knobs of the seeded driving-mode simulator (speeds in km/h, rates in deg/s)."""

    n_samples: int = 9000
    sample_period: float = 0.25
    mode_ratios: tuple[float, float, float] = (0.2, 0.4, 0.4)
    dwell_seconds: tuple[float, float] = (20.0, 90.0)
    idle_rpm: float = 800.0
    eco_speed: tuple[float, float] = (35.0, 60.0)
    normal_speed: tuple[float, float] = (10.0, 110.0)
    eco_accel: float = 1.0  # max speed change per second
    normal_accel: float = 6.0
    eco_turn_rate: float = 4.0
    normal_turn_rate: float = 18.0
    eco_turn_every: float = 20.0  # mean seconds between turns
    normal_turn_every: float = 8.0
    stop_lead_seconds: float = 6.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1 or self.sample_period <= 0:
            raise ConfigError("n_samples and sample_period must be positive")
        if len(self.mode_ratios) != 3 or min(self.mode_ratios) < 0 or sum(self.mode_ratios) <= 0:
            raise ConfigError(f"mode_ratios must be three nonnegative weights, got {self.mode_ratios}")
        for name in ("dwell_seconds", "eco_speed", "normal_speed"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must be an ordered nonnegative range, got {(lo, hi)}")
        if self.dwell_seconds[0] <= 0:
            raise ConfigError("dwell times must be positive")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDrivingConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic driving keys {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _mode_schedule(cfg: SyntheticDrivingConfig, rng: np.random.Generator) -> np.ndarray:
    ratios = np.asarray(cfg.mode_ratios, dtype=np.float64)
    ratios = ratios / ratios.sum()
    lo = max(1, int(round(cfg.dwell_seconds[0] / cfg.sample_period)))
    hi = max(lo, int(round(cfg.dwell_seconds[1] / cfg.sample_period)))
    labels = np.empty(cfg.n_samples, dtype=np.int64)
    t = 0
    while t < cfg.n_samples:
        mode = rng.choice(3, p=ratios)
        dwell = int(rng.integers(lo, hi + 1))
        labels[t:t + dwell] = mode
        t += dwell
    return labels


def generate_driving(config: SyntheticDrivingConfig | None = None) -> SensorStream:
    """Simulate RPM, SPEED, D_SPEED, GYRO_Y and D_HEADING for idle / eco / normal driving.

    Idle samples have speed exactly 0 with the engine idling.  Eco holds a
    moderate cruise speed with gentle acceleration and turns; normal driving
    changes target speed often, accelerates harder and turns more sharply.
    Before an idle segment the vehicle brakes to a stop.
    """
    cfg = config or SyntheticDrivingConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.sample_period
    labels = _mode_schedule(cfg, rng)
    n = cfg.n_samples

    # samples until the next idle sample, for the braking lead-in
    next_idle = np.full(n, np.inf)
    upcoming = np.inf
    for t in range(n - 1, -1, -1):
        upcoming = 0 if labels[t] == 0 else upcoming + 1
        next_idle[t] = upcoming
    lead = cfg.stop_lead_seconds / dt

    speed = np.zeros(n)
    rpm = np.zeros(n)
    yaw = np.zeros(n)  # deg/s
    v = 0.0
    target = 0.0
    turn_left = 0
    turn_rate = 0.0
    prev_mode = -1
    for t in range(n):
        mode = labels[t]
        if mode != prev_mode or (mode == 2 and rng.random() < dt / 8.0):
            if mode == 1:
                target = rng.uniform(*cfg.eco_speed)
            elif mode == 2:
                target = rng.uniform(*cfg.normal_speed)
        prev_mode = mode
        if mode == 0:
            v = 0.0
            turn_left = 0
            rpm[t] = cfg.idle_rpm + rng.normal(0, 15)
            speed[t] = 0.0
            continue
        goal = target if next_idle[t] > lead else target * (next_idle[t] / lead)
        max_dv = (cfg.eco_accel if mode == 1 else cfg.normal_accel) * dt
        dv = np.clip(0.3 * (goal - v), -max_dv, max_dv)
        if mode == 2:
            dv += rng.normal(0, 0.25 * max_dv)
        else:
            dv += rng.normal(0, 0.05 * max_dv)
        v = max(0.0, v + dv)
        speed[t] = v
        accel = dv / dt
        if mode == 1:
            rpm[t] = 900 + 16 * v + 40 * max(accel, 0) + rng.normal(0, 25)
        else:
            rpm[t] = 1000 + 24 * v + 90 * max(accel, 0) + rng.normal(0, 60)

        if turn_left <= 0:
            every = cfg.eco_turn_every if mode == 1 else cfg.normal_turn_every
            if rng.random() < dt / every:
                turn_left = int(rng.integers(int(2 / dt), int(6 / dt)))
                peak = cfg.eco_turn_rate if mode == 1 else cfg.normal_turn_rate
                turn_rate = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * peak
            else:
                turn_rate = 0.0
        turn_left -= 1
        yaw[t] = turn_rate * (1.0 if v > 1.0 else v)

    d_speed = np.zeros(n)
    d_speed[1:] = speed[1:] - speed[:-1]
    lateral = (speed / 3.6) * np.deg2rad(yaw) + rng.normal(0, 0.05, n)
    d_heading = yaw * dt + rng.normal(0, 0.3, n)
    samples = np.column_stack([rpm, speed, d_speed, lateral, d_heading])
    return SensorStream(list(DRIVING_FEATURES), samples, dt, labels, list(DRIVING_CLASSES))


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _parse_label(token: str, class_names: Sequence[str], line: int) -> int:
    token = token.strip()
    if token in class_names:
        return list(class_names).index(token)
    try:
        value = int(token)
    except ValueError:
        raise LabelError(f"line {line}: unknown label {token!r}") from None
    if not 0 <= value < len(class_names):
        raise LabelError(f"line {line}: label {value} outside [0, {len(class_names)})")
    return value


def load_csv_stream(path, class_names: Sequence[str], n_features: int | None = None,
                    decimate: int = 1) -> SensorStream:
    """Read ``t,<feature...>,label`` rows; keep every ``decimate``-th sample."""
    path = Path(path)
    if decimate < 1:
        raise ConfigError(f"decimation factor must be positive, got {decimate}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "t" or header[-1] != "label":
            raise DataError(f"{path} line 1: header must be t,<features...>,label, got {header}")
        names = header[1:-1]
        if n_features is not None and len(names) != n_features:
            raise DataError(f"{path} line 1: expected {n_features} feature columns, got {len(names)}")
        times, rows, labels = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path} line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row[:-1]]
            except ValueError:
                raise DataError(f"{path} line {line}: non-numeric field") from None
            if not all(np.isfinite(values)):
                raise DataError(f"{path} line {line}: missing or non-finite value")
            times.append(values[0])
            rows.append(values[1:])
            labels.append(_parse_label(row[-1], class_names, line))
    if not rows:
        raise DataError(f"{path}: no data rows")
    times = np.asarray(times)
    period = float(np.median(np.diff(times))) if len(times) > 1 else 1.0
    samples = np.asarray(rows)
    lab = np.asarray(labels)
    if decimate > 1:
        keep = (len(rows) // decimate) * decimate
        samples, lab = samples[:keep:decimate], lab[:keep:decimate]
        period *= decimate
    return SensorStream(names, samples, period, lab, list(class_names))


def load_har(path, sample_period: float | None = None, decimate: int | None = None) -> SensorStream:
    """Load a six-feature, six-class activity stream.

    ``sample_period`` (seconds) sets the decimation factor from the file's own
    rate, e.g. 50 Hz data with ``sample_period=0.2`` keeps every 10th sample.
    """
    if decimate is None and sample_period is not None:
        native = load_csv_stream(path, HAR_CLASSES, n_features=6).sample_period
        ratio = sample_period / native
        decimate = int(round(ratio))
        if decimate < 1 or abs(ratio - decimate) > 1e-6 * ratio:
            raise ConfigError(
                f"sample period {sample_period} is not a multiple of the file's {native}"
            )
    return load_csv_stream(path, HAR_CLASSES, n_features=6, decimate=decimate or 1)


def write_stream_csv(stream: SensorStream, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *stream.feature_names, "label"])
        for i in range(len(stream)):
            writer.writerow([repr(round(i * stream.sample_period, 10)),
                             *(repr(float(v)) for v in stream.samples[i]),
                             int(stream.labels[i])])
    return path


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def save_dataset(ds: WindowedDataset, path) -> Path:
    path = Path(path)
    arrays = {
        "windows": ds.windows, "labels": ds.labels, "end_index": ds.end_index,
        "feature_names": np.array(ds.feature_names),
        "shape": np.array([ds.window_len, ds.horizon]),
    }
    if ds.mean is not None:
        arrays["mean"], arrays["std"] = ds.mean, ds.std
    if ds.group_spec is not None:
        arrays["groups"] = np.array(repr(ds.group_spec.as_lists()))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_dataset(path) -> WindowedDataset:
    import ast

    with np.load(path, allow_pickle=False) as z:
        groups = GroupSpec(ast.literal_eval(str(z["groups"]))) if "groups" in z.files else None
        return WindowedDataset(
            windows=z["windows"], labels=z["labels"], end_index=z["end_index"],
            feature_names=[str(s) for s in z["feature_names"]],
            window_len=int(z["shape"][0]), horizon=int(z["shape"][1]), group_spec=groups,
            mean=z["mean"] if "mean" in z.files else None,
            std=z["std"] if "std" in z.files else None,
        )
