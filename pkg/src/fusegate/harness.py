"""Config-driven training, comparison and fusion-weight reporting."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .architectures import KINDS, GroupSpec, build_model, save_model
from .data import (
    DRIVING_CLASSES,
    HAR_CLASSES,
    SyntheticDrivingConfig,
    WindowedDataset,
    default_groups,
    feature_stats,
    generate_driving,
    load_csv_stream,
    load_dataset,
    load_har,
    make_windows,
    normalize_array,
    normalize_featurewise,
    random_split,
    save_dataset,
    temporal_split,
)
from .errors import ConfigError, DivergenceError
from .layers import DEFAULT_TOWER, LayerSpec
from .perturbation import PerturbationSpec
from .utils import canonical_json, fingerprint

log = logging.getLogger(__name__)

DATASET_KINDS = ("driving", "har", "csv")
FULL_ITERATIONS = {"driving": 50_000, "har": 100_000}
KIND_LABELS = {
    "non_gated": "Non-NetGated",
    "netgated": "NetGated",
    "fg_gfa": "Group-level",
    "two_stage": "Two-stage",
}


def _reject_unknown(section: str, d: dict, allowed) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "driving"
    path: str | None = None
    window_len: int = 40
    horizon: int = 20
    stride: int = 1
    train_fraction: float = 2 / 3
    split: str = "temporal"
    split_seed: int = 0
    sample_period: float | None = None
    class_names: tuple[str, ...] | None = None
    cache_dir: str | None = None
    synthetic: SyntheticDrivingConfig = field(default_factory=SyntheticDrivingConfig)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("synthetic", "cache_dir")}
        d["class_names"] = list(self.class_names) if self.class_names else None
        d["synthetic"] = self.synthetic.to_dict() if self.kind == "driving" else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        _reject_unknown("dataset", d, cls.__dataclass_fields__)
        synth = SyntheticDrivingConfig.from_dict(d.pop("synthetic", None) or {})
        if d.get("class_names") is not None:
            d["class_names"] = tuple(d["class_names"])
        return cls(synthetic=synth, **d)


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "two_stage"
    tower: tuple[LayerSpec, ...] = DEFAULT_TOWER
    groups: tuple[tuple[int, ...], ...] | None = None
    gate_on_preactivation: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tower": [layer.to_dict() for layer in self.tower],
            "groups": [list(g) for g in self.groups] if self.groups is not None else None,
            "gate_on_preactivation": self.gate_on_preactivation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        _reject_unknown("model", d, cls.__dataclass_fields__)
        d = dict(d)
        if "tower" in d:
            d["tower"] = tuple(LayerSpec.from_dict(x) for x in d["tower"])
        if d.get("groups") is not None:
            d["groups"] = tuple(tuple(g) for g in d["groups"])
        return cls(**d)


@dataclass(frozen=True)
class TrainingConfig:
    iterations: int = 3000
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    seed: int = 0
    loss_every: int = 50

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        _reject_unknown("training", d, cls.__dataclass_fields__)
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    output_dir: str | None = None
    name: str = "run"

    def validate(self) -> "ExperimentConfig":
        ds, tr = self.dataset, self.training
        if ds.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {ds.kind!r}")
        if ds.kind in ("har", "csv"):
            if not ds.path or not Path(ds.path).is_file():
                raise ConfigError(f"dataset file not found: {ds.path!r}")
        if ds.kind == "csv" and not ds.class_names:
            raise ConfigError("csv datasets need class_names")
        if ds.split not in ("temporal", "random"):
            raise ConfigError(f"split must be 'temporal' or 'random', got {ds.split!r}")
        if self.model.kind not in KINDS:
            raise ConfigError(f"model kind must be one of {KINDS}, got {self.model.kind!r}")
        if tr.iterations < 1 or tr.batch_size < 1 or tr.loss_every < 1:
            raise ConfigError("iterations, batch_size and loss_every must be at least 1")
        if tr.optimizer not in ("adam", "sgd") or tr.lr <= 0:
            raise ConfigError(f"bad optimizer settings {tr.optimizer!r}, lr={tr.lr}")
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "perturbation": self.perturbation.to_dict(),
            "training": self.training.to_dict(),
        }

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())

    def group_spec(self) -> GroupSpec | None:
        if self.model.groups is not None:
            return GroupSpec(self.model.groups)
        if self.dataset.kind in ("driving", "har"):
            return default_groups(self.dataset.kind)
        return None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _reject_unknown("top level", d, ("dataset", "model", "perturbation", "training",
                                         "output_dir", "name"))
        return cls(
            dataset=DatasetConfig.from_dict(d.get("dataset", {})),
            model=ModelConfig.from_dict(d.get("model", {})),
            perturbation=PerturbationSpec.from_dict(d.get("perturbation", {})),
            training=TrainingConfig.from_dict(d.get("training", {})),
            output_dir=d.get("output_dir"),
            name=d.get("name", "run"),
        ).validate()


def _read_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve_paths(d: dict, base: Path) -> dict:
    ds = d.get("dataset")
    if isinstance(ds, dict):
        for key in ("path", "cache_dir"):
            if ds.get(key) and not Path(ds[key]).is_absolute():
                ds[key] = str(base / ds[key])
    if d.get("output_dir") and not Path(d["output_dir"]).is_absolute():
        d["output_dir"] = str(base / d["output_dir"])
    return d


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file; relative paths resolve against the file's directory."""
    raw = _read_toml(path)
    if "compare" in raw:
        raise ConfigError(f"{path} is a comparison config; use load_compare_config")
    return ExperimentConfig.from_dict(_resolve_paths(raw, Path(path).resolve().parent))


def load_compare_config(path) -> list[ExperimentConfig]:
    """Expand a ``[compare]`` section into one config per architecture, condition and seed.

    ``[compare]`` accepts ``architectures`` (kinds), ``seeds`` (training seeds)
    and ``[[compare.conditions]]`` tables, each a perturbation section.
    """
    raw = _read_toml(path)
    cmp = raw.pop("compare", None)
    if cmp is None:
        raise ConfigError(f"{path} has no [compare] section")
    _reject_unknown("compare", cmp, ("architectures", "seeds", "conditions"))
    base = _resolve_paths(raw, Path(path).resolve().parent)
    kinds = cmp.get("architectures", list(KINDS))
    conditions = cmp.get("conditions") or [base.get("perturbation", {})]
    seeds = cmp.get("seeds") or [base.get("training", {}).get("seed", 0)]
    configs = []
    for cond in conditions:
        for kind in kinds:
            for seed in seeds:
                d = json.loads(json.dumps(base))
                d.setdefault("model", {})["kind"] = kind
                d["perturbation"] = cond
                d.setdefault("training", {})["seed"] = seed
                configs.append(ExperimentConfig.from_dict(d))
    return configs


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def load_stream(cfg: DatasetConfig):
    if cfg.kind == "driving":
        return generate_driving(cfg.synthetic)
    if cfg.kind == "har":
        return load_har(cfg.path, sample_period=cfg.sample_period)
    return load_csv_stream(cfg.path, cfg.class_names)


def _split(ds: WindowedDataset, cfg: DatasetConfig):
    if cfg.split == "random":
        return random_split(ds, cfg.train_fraction, cfg.split_seed)
    return temporal_split(ds, cfg.train_fraction)


def build_datasets(config: ExperimentConfig) -> tuple[WindowedDataset, WindowedDataset]:
    """Normalized ``(train, test)`` datasets with the configured perturbation applied.

    Raw-stage perturbations corrupt the stream before windowing, so the
    training statistics see the corrupted distribution.  Normalized-stage
    perturbations corrupt the standardized stream instead.
    """
    cache_file = None
    if config.dataset.cache_dir:
        key = fingerprint({"dataset": config.dataset.to_dict(),
                           "perturbation": config.perturbation.to_dict(),
                           "groups": config.model.to_dict()["groups"]})
        cache_dir = Path(config.dataset.cache_dir)
        cache_file = (cache_dir / f"{key}.train.npz", cache_dir / f"{key}.test.npz")
        if cache_file[0].exists() and cache_file[1].exists():
            return load_dataset(cache_file[0]), load_dataset(cache_file[1])

    dcfg, pert = config.dataset, config.perturbation
    stream = load_stream(dcfg)
    groups = config.group_spec()

    def windows(s):
        return make_windows(s, dcfg.window_len, dcfg.horizon, dcfg.stride, group_spec=groups)

    clean_train, clean_test = _split(windows(stream), dcfg)
    use_train = pert.kind != "none" and pert.scope in ("train", "both")
    use_test = pert.kind != "none" and pert.scope in ("test", "both")
    if pert.stage == "raw":
        if pert.kind != "none":
            p_train, p_test = _split(windows(pert.apply(stream)), dcfg)
        train = p_train if use_train else clean_train
        test = p_test if use_test else clean_test
        stats = feature_stats(train)
        train = normalize_featurewise(train, stats)
        test = normalize_featurewise(test, stats)
    else:
        mean, std = feature_stats(clean_train)
        normed = stream.with_samples(normalize_array(stream.samples, mean, std, axis=1))
        n_train, n_test = _split(windows(normed), dcfg)
        if pert.kind != "none":
            p_train, p_test = _split(windows(pert.apply(normed)), dcfg)
        train = replace(p_train if use_train else n_train, mean=mean, std=std)
        test = replace(p_test if use_test else n_test, mean=mean, std=std)

    if cache_file is not None:
        cache_file[0].parent.mkdir(parents=True, exist_ok=True)
        save_dataset(train, cache_file[0])
        save_dataset(test, cache_file[1])
    return train, test


def class_count(config: ExperimentConfig) -> int:
    if config.dataset.kind == "driving":
        return len(DRIVING_CLASSES)
    if config.dataset.kind == "har":
        return len(HAR_CLASSES)
    return len(config.dataset.class_names)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    name: str
    kind: str
    perturbation: str
    seed: int
    accuracy: float
    train_loss: float
    loss_trace: list[tuple[int, float]]
    feature_names: list[str]
    groups: list[list[int]] | None
    feature_weights: list[float] | None
    group_weights: list[float] | None
    final_weights: list[float] | None
    n_train: int
    n_test: int
    fingerprint: str
    config: dict
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_trace"] = [[int(i), float(v)] for i, v in self.loss_trace]
        d["timing"] = {"wall_seconds": d.pop("wall_seconds")}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        d = dict(d)
        d["wall_seconds"] = d.pop("timing", {}).get("wall_seconds", 0.0)
        d["loss_trace"] = [(int(i), float(v)) for i, v in d["loss_trace"]]
        return cls(**d)

    def payload(self) -> str:
        """Canonical JSON of everything except timing: equal for reproduced runs."""
        d = self.to_dict()
        d.pop("timing")
        return canonical_json(d)


def _mean_loss(model, ds: WindowedDataset, batch_size: int = 512) -> float:
    total = 0.0
    for start in range(0, len(ds), batch_size):
        logits, _ = model.forward(ds.windows[start:start + batch_size])
        n = min(batch_size, len(ds) - start)
        total += ad.cross_entropy_loss(logits, ds.labels[start:start + batch_size]).item() * n
    return total / len(ds)


def train(config: ExperimentConfig, datasets=None, save: bool = True) -> RunResult:
    """Run the configured number of mini-batch steps and evaluate on the test split.

    ``datasets`` may pass a prebuilt ``(train, test)`` pair.  When the config
    has an ``output_dir`` and ``save`` is true, reports and the model archive
    are written there.
    """
    config.validate()
    started = time.perf_counter()
    train_ds, test_ds = datasets if datasets is not None else build_datasets(config)
    tr = config.training
    groups = config.group_spec()
    model = build_model(
        config.model.kind, train_ds.n_features, config.dataset.window_len, class_count(config),
        group_spec=groups, tower_spec=config.model.tower, seed=tr.seed,
        gate_on_preactivation=config.model.gate_on_preactivation,
    )
    opt = ad.make_optimizer(tr.optimizer, model.parameters(), tr.lr)
    rng = np.random.default_rng([tr.seed, 1])
    trace: list[tuple[int, float]] = []
    for it in range(1, tr.iterations + 1):
        idx = rng.integers(0, len(train_ds), size=tr.batch_size)
        logits, _ = model.forward(train_ds.windows[idx])
        loss = ad.cross_entropy_loss(logits, train_ds.labels[idx])
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"{config.name}: non-finite loss at iteration {it}")
        ad.backward(loss)
        opt.step()
        if it % tr.loss_every == 0 or it == tr.iterations:
            trace.append((it, value))

    preds, report = model.predict(test_ds.windows)
    mean_report = report.mean()

    def listed(a):
        return None if a is None else [float(v) for v in a]

    result = RunResult(
        name=config.name,
        kind=config.model.kind,
        perturbation=config.perturbation.label,
        seed=tr.seed,
        accuracy=float(np.mean(preds == test_ds.labels)),
        train_loss=_mean_loss(model, train_ds),
        loss_trace=trace,
        feature_names=list(train_ds.feature_names),
        groups=groups.as_lists() if groups is not None else None,
        feature_weights=listed(mean_report.feature_weights),
        group_weights=listed(mean_report.group_weights),
        final_weights=listed(mean_report.final_weights),
        n_train=len(train_ds),
        n_test=len(test_ds),
        fingerprint=config.fingerprint,
        config=config.to_dict(),
        wall_seconds=time.perf_counter() - started,
    )
    log.info("%s %s %s seed=%d acc=%.4f", config.name, result.kind, result.perturbation,
             tr.seed, result.accuracy)
    if save and config.output_dir:
        out = Path(config.output_dir)
        emit_reports([result], out)
        save_model(model, out / "model.npz")
    return result


# ---------------------------------------------------------------------------
# comparison tables
# ---------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    kind: str
    accuracy: dict[str, float]  # condition label -> mean accuracy over seeds
    seeds: list[int]
    fingerprints: list[str]


@dataclass
class ComparisonTable:
    conditions: list[str]
    rows: list[ComparisonRow]

    def cell(self, kind: str, condition: str) -> float:
        for row in self.rows:
            if row.kind == kind:
                return row.accuracy[condition]
        raise KeyError(kind)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["architecture", *self.conditions, "seeds", "fingerprints"])
        for row in self.rows:
            writer.writerow([row.kind, *(repr(row.accuracy[c]) for c in self.conditions),
                             " ".join(str(s) for s in row.seeds), " ".join(row.fingerprints)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ComparisonTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        conditions = header[1:-2]
        rows = []
        for rec in reader:
            if not rec:
                continue
            acc = {c: float(v) for c, v in zip(conditions, rec[1:-2])}
            seeds = [int(s) for s in rec[-2].split()]
            rows.append(ComparisonRow(rec[0], acc, seeds, rec[-1].split()))
        return cls(conditions, rows)

    def format(self) -> str:
        width = max(len(KIND_LABELS.get(r.kind, r.kind)) for r in self.rows) + 2
        lines = ["".ljust(width) + "".join(c.rjust(10) for c in self.conditions)]
        for row in self.rows:
            cells = "".join(f"{100 * row.accuracy[c]:9.2f}%" for c in self.conditions)
            lines.append(KIND_LABELS.get(row.kind, row.kind).ljust(width) + cells)
        return "\n".join(lines)


def table_from_results(results: Sequence[RunResult]) -> ComparisonTable:
    conditions: list[str] = []
    kinds: list[str] = []
    cells: dict[tuple[str, str], list[RunResult]] = {}
    for r in results:
        if r.perturbation not in conditions:
            conditions.append(r.perturbation)
        if r.kind not in kinds:
            kinds.append(r.kind)
        cells.setdefault((r.kind, r.perturbation), []).append(r)
    kinds.sort(key=lambda k: KINDS.index(k) if k in KINDS else len(KINDS))
    rows = []
    for kind in kinds:
        missing = [c for c in conditions if (kind, c) not in cells]
        if missing:
            raise ConfigError(f"{kind} has no result for conditions {missing}")
        acc = {c: float(np.mean([r.accuracy for r in cells[(kind, c)]])) for c in conditions}
        members = [r for c in conditions for r in cells[(kind, c)]]
        rows.append(ComparisonRow(kind, acc, sorted({r.seed for r in members}),
                                  [r.fingerprint for r in members]))
    return ComparisonTable(conditions, rows)


def _check_comparable(configs: Sequence[ExperimentConfig]) -> None:
    if not configs:
        raise ConfigError("compare needs at least one config")
    ref = configs[0]
    for cfg in configs[1:]:
        if cfg.dataset.to_dict() != ref.dataset.to_dict():
            raise ConfigError(f"{cfg.name}: dataset spec differs from {ref.name}")
        other = {k: v for k, v in cfg.training.to_dict().items() if k != "seed"}
        mine = {k: v for k, v in ref.training.to_dict().items() if k != "seed"}
        if other != mine:
            raise ConfigError(f"{cfg.name}: training settings differ from {ref.name}")
    by_label: dict[str, dict] = {}
    for cfg in configs:
        spec = cfg.perturbation.to_dict()
        if by_label.setdefault(cfg.perturbation.label, spec) != spec:
            raise ConfigError(
                f"two different perturbation specs share the label {cfg.perturbation.label!r}"
            )


def _train_quiet(config: ExperimentConfig) -> RunResult:
    return train(config, save=False)


def compare(configs: Sequence[ExperimentConfig], workers: int = 1
            ) -> tuple[ComparisonTable, list[RunResult]]:
    """Train every config and tabulate accuracy (architecture rows x condition columns).

    Repeated (architecture, condition) pairs with different seeds are averaged.
    """
    configs = list(configs)
    _check_comparable(configs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_quiet, configs))
    else:
        cache: dict[str, tuple] = {}
        results = []
        for cfg in configs:
            key = fingerprint({"d": cfg.dataset.to_dict(), "p": cfg.perturbation.to_dict(),
                               "g": cfg.model.to_dict()["groups"]})
            if key not in cache:
                cache[key] = build_datasets(cfg)
            results.append(train(cfg, datasets=cache[key], save=False))
    return table_from_results(results), results


# ---------------------------------------------------------------------------
# fusion-weight inspection
# ---------------------------------------------------------------------------

@dataclass
class WeightTable:
    feature_names: list[str]
    groups: list[list[int]] | None
    feature_weights: list[float] | None
    group_weights: list[float] | None
    feature_delta: list[float] | None = None
    group_delta: list[float] | None = None
    perturbed_feature: int | None = None

    def format(self) -> str:
        names = self.feature_names
        col = max(10, max(len(n) for n in names) + 2)
        lines = ["".ljust(16) + "".join(n.rjust(col) for n in names)]

        def feature_row(label, values):
            return label.ljust(16) + "".join(f"{v:{col}.3f}" for v in values)

        def group_row(label, values):
            cells = []
            for g, v in zip(self.groups, values):
                cells.append(f"{v:.3f}".center(col * len(g)))
            return label.ljust(16) + "".join(cells)

        if self.feature_weights is not None:
            lines.append(feature_row("feature-level", self.feature_weights))
        if self.group_weights is not None:
            contiguous = self.groups and [i for g in self.groups for i in g] == list(range(len(names)))
            if contiguous:
                lines.append(group_row("group-level", self.group_weights))
            else:
                lines.append("group-level".ljust(16) + "  ".join(f"{v:.3f}" for v in self.group_weights))
        if self.feature_delta is not None:
            lines.append(feature_row("feature delta", self.feature_delta))
        if self.group_delta is not None:
            lines.append("group delta".ljust(16) + "".join(
                f"{v:+.3f}".center(col * len(g)) for g, v in zip(self.groups, self.group_delta)))
        if self.perturbed_feature is not None and self.feature_delta is not None:
            i = self.perturbed_feature
            sign = "fell" if self.feature_delta[i] < 0 else "rose"
            line = f"perturbed feature {names[i]}: feature weight {sign} ({self.feature_delta[i]:+.3f})"
            if self.group_delta is not None and self.groups:
                g = next(gi for gi, grp in enumerate(self.groups) if i in grp)
                gsign = "fell" if self.group_delta[g] < 0 else "rose"
                line += f"; group {g + 1} weight {gsign} ({self.group_delta[g]:+.3f})"
            lines.append(line)
        elif self.perturbed_feature is not None and self.group_delta is not None and self.groups:
            i = self.perturbed_feature
            g = next(gi for gi, grp in enumerate(self.groups) if i in grp)
            gsign = "fell" if self.group_delta[g] < 0 else "rose"
            lines.append(f"perturbed feature {names[i]}: group {g + 1} weight {gsign} "
                         f"({self.group_delta[g]:+.3f})")
        return "\n".join(lines)


def inspect_weights(result: RunResult, baseline: RunResult | None = None,
                    perturbed_feature: int | None = None) -> WeightTable:
    """Mean fusion weights over the test set; with ``baseline``, deltas ``result - baseline``."""
    if result.feature_weights is None and result.group_weights is None:
        raise ConfigError(f"{result.kind} runs emit no fusion weights to inspect")
    table = WeightTable(result.feature_names, result.groups, result.feature_weights,
                        result.group_weights, perturbed_feature=perturbed_feature)
    if baseline is not None:
        if baseline.kind != result.kind:
            raise ConfigError(f"cannot diff a {result.kind} run against a {baseline.kind} run")
        if result.feature_weights is not None:
            table.feature_delta = list(np.subtract(result.feature_weights, baseline.feature_weights))
        if result.group_weights is not None:
            table.group_delta = list(np.subtract(result.group_weights, baseline.group_weights))
    return table


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_results_json(results: Sequence[RunResult], path) -> Path:
    path = Path(path)
    doc = {"results": [r.to_dict() for r in results]}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_results(path) -> list[RunResult]:
    path = Path(path)
    if path.is_dir():
        path = path / "results.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    return [RunResult.from_dict(d) for d in doc["results"]]


def _plot_loss(results: Sequence[RunResult], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for r in results:
        its, losses = zip(*r.loss_trace)
        ax.plot(its, losses, label=f"{KIND_LABELS.get(r.kind, r.kind)} ({r.perturbation}, s{r.seed})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_accuracy(table: ComparisonTable, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    n = len(table.rows)
    width = 0.8 / max(n, 1)
    x = np.arange(len(table.conditions))
    for i, row in enumerate(table.rows):
        ax.bar(x + i * width, [100 * row.accuracy[c] for c in table.conditions], width,
               label=KIND_LABELS.get(row.kind, row.kind))
    ax.set_xticks(x + width * (n - 1) / 2)
    ax.set_xticklabels(table.conditions)
    ax.set_ylabel("test accuracy (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_reports(results: Sequence[RunResult], out_dir) -> dict[str, Path]:
    """Write ``results.json``, ``table.csv``, ``loss.svg`` and ``accuracy.svg``."""
    if not results:
        raise ConfigError("emit_reports needs at least one result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = table_from_results(results)
    paths = {
        "json": write_results_json(results, out / "results.json"),
        "csv": out / "table.csv",
        "loss": out / "loss.svg",
        "accuracy": out / "accuracy.svg",
    }
    paths["csv"].write_text(table.to_csv(), encoding="utf-8")
    _plot_loss(results, paths["loss"])
    _plot_accuracy(table, paths["accuracy"])
    return paths
