"""The four compared fusion models.

``non_gated``
    per-feature towers, concatenated, then the output layer.
``netgated``
    per-feature towers; a gating head over the concatenated tower outputs
    emits one softmax weight per feature, which scales that feature's tower
    output before the output layer.
``fg_gfa``
    raw windows of each feature group are stacked as channels and run through
    one tower per group; a gating head emits one softmax weight per group.
``two_stage``
    the ``netgated`` path plus a second gating head fed by the per-feature
    conv/pool outputs concatenated within each group.  A feature's final
    weight is its feature weight times its group's weight (no renormalization).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .layers import DEFAULT_TOWER, Dense, FeatureTower, LayerSpec, build_tower
from .utils import fingerprint

KINDS = ("non_gated", "netgated", "fg_gfa", "two_stage")
ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class GroupSpec:
    """A partition of feature indices ``0..N-1`` into ordered, nonempty groups."""

    groups: tuple[tuple[int, ...], ...]

    def __init__(self, groups: Sequence[Sequence[int]]):
        object.__setattr__(self, "groups", tuple(tuple(int(i) for i in g) for g in groups))
        if not self.groups:
            raise ConfigError("a group spec needs at least one group")
        if any(len(g) == 0 for g in self.groups):
            raise ConfigError(f"empty feature group in {self.as_lists()}")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    def as_lists(self) -> list[list[int]]:
        return [list(g) for g in self.groups]

    def validate(self, n_features: int) -> None:
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(n_features)):
            raise ConfigError(
                f"groups {self.as_lists()} are not a partition of 0..{n_features - 1}"
            )

    def group_index(self) -> np.ndarray:
        """Array mapping feature index to the index of its group."""
        n = sum(self.sizes)
        out = np.empty(n, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            out[list(g)] = gi
        return out

    def group_of(self, feature: int) -> int:
        return int(self.group_index()[feature])


@dataclass
class FusionReport:
    """Fusion weights emitted by one forward pass (rows per example when batched)."""

    feature_weights: np.ndarray | None = None
    group_weights: np.ndarray | None = None
    final_weights: np.ndarray | None = None

    def mean(self) -> "FusionReport":
        def m(a):
            return None if a is None else (a.mean(axis=0) if a.ndim == 2 else a)

        return FusionReport(m(self.feature_weights), m(self.group_weights), m(self.final_weights))


@dataclass
class FusionOverride:
    """Fixed gate vectors used in place of the learned heads (for ablation)."""

    feature_weights: np.ndarray | None = None
    group_weights: np.ndarray | None = None


@dataclass(eq=False)
class FusionModel:
    kind: str
    n_features: int
    window_len: int
    n_classes: int
    tower_spec: tuple[LayerSpec, ...]
    group_spec: GroupSpec | None = None
    gate_on_preactivation: bool = False
    seed: int = 0
    feature_towers: list[FeatureTower] = field(default_factory=list)
    group_towers: list[FeatureTower] = field(default_factory=list)
    group_fcs: list[Dense] = field(default_factory=list)
    fc_con: Dense | None = None
    fc_con_g: Dense | None = None
    fc_out: Dense | None = None

    # -- bookkeeping --------------------------------------------------------

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "window_len": self.window_len,
            "n_classes": self.n_classes,
            "tower_spec": [layer.to_dict() for layer in self.tower_spec],
            "groups": self.group_spec.as_lists() if self.group_spec else None,
            "gate_on_preactivation": self.gate_on_preactivation,
        }

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.config())

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for tower in self.feature_towers + self.group_towers:
            out.update(tower.named_parameters())
        for dense in self.group_fcs + [self.fc_con, self.fc_con_g, self.fc_out]:
            if dense is not None:
                out[dense.weight.name] = dense.weight
                out[dense.bias.name] = dense.bias
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    # -- forward ------------------------------------------------------------

    def forward(self, window, override: FusionOverride | None = None):
        """Map an ``N x T`` window (or ``B x N x T`` batch) to ``(logits, FusionReport)``."""
        x = ad.as_tensor(window)
        single = x.ndim == 2
        if x.ndim not in (2, 3) or tuple(x.shape[-2:]) != (self.n_features, self.window_len):
            raise DimensionError(
                f"{self.kind} model expects windows of shape "
                f"({self.n_features}, {self.window_len}), got {x.shape}"
            )
        if single:
            x = ad.reshape(x, (1,) + x.shape)
        logits, report = _FORWARDS[self.kind](self, x, override)
        if single:
            logits = ad.reshape(logits, (self.n_classes,))
            report = FusionReport(*(None if a is None else a[0] for a in
                                    (report.feature_weights, report.group_weights,
                                     report.final_weights)))
        return logits, report

    __call__ = forward

    def predict(self, windows: np.ndarray, batch_size: int = 512) -> tuple[np.ndarray, FusionReport]:
        """Class predictions and per-example reports for a ``B x N x T`` array."""
        preds, reports = [], []
        for start in range(0, len(windows), batch_size):
            logits, rep = self.forward(windows[start:start + batch_size])
            preds.append(logits.data.argmax(axis=1))
            reports.append(rep)

        def cat(attr):
            parts = [getattr(r, attr) for r in reports]
            return None if parts[0] is None else np.concatenate(parts)

        return np.concatenate(preds), FusionReport(
            cat("feature_weights"), cat("group_weights"), cat("final_weights"))

    def _tower_outputs(self, x: Tensor):
        outs = []
        for i, tower in enumerate(self.feature_towers):
            outs.append(tower.run(ad.getitem(x, (slice(None), slice(i, i + 1), slice(None)))))
        return outs

    def _gate_in(self, tower_out) -> Tensor:
        return tower_out.pre if self.gate_on_preactivation else tower_out.out


def _gates(head: Dense, inputs: list[Tensor], fixed: np.ndarray | None, batch: int) -> Tensor:
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=np.float64)
        return Tensor(np.broadcast_to(fixed, (batch, head.n_out)).copy())
    return ad.softmax(head(ad.concat(inputs, axis=1)), axis=1)


def _fuse(fc_out: Dense, vectors: list[Tensor], weights: list[Tensor]) -> Tensor:
    weighted = [ad.hadamard(w, v) for w, v in zip(weights, vectors)]
    return fc_out(ad.concat(weighted, axis=1))


def _forward_non_gated(model: FusionModel, x: Tensor, override):
    outs = [o.out for o in model._tower_outputs(x)]
    return model.fc_out(ad.concat(outs, axis=1)), FusionReport()


def _forward_netgated(model: FusionModel, x: Tensor, override):
    towers = model._tower_outputs(x)
    fixed = override.feature_weights if override else None
    fw = _gates(model.fc_con, [model._gate_in(o) for o in towers], fixed, x.shape[0])
    cols = ad.split(fw, [1] * model.n_features, axis=1)
    logits = _fuse(model.fc_out, [o.out for o in towers], cols)
    return logits, FusionReport(feature_weights=fw.data.copy(), final_weights=fw.data.copy())


def _forward_fg_gfa(model: FusionModel, x: Tensor, override):
    groups = model.group_spec.groups
    outs = [
        tower.run(ad.getitem(x, (slice(None), list(g), slice(None))))
        for tower, g in zip(model.group_towers, groups)
    ]
    fixed = override.group_weights if override else None
    gw = _gates(model.fc_con, [model._gate_in(o) for o in outs], fixed, x.shape[0])
    cols = ad.split(gw, [1] * len(groups), axis=1)
    logits = _fuse(model.fc_out, [o.out for o in outs], cols)
    return logits, FusionReport(group_weights=gw.data.copy())


def _forward_two_stage(model: FusionModel, x: Tensor, override):
    spec = model.group_spec
    towers = model._tower_outputs(x)
    batch = x.shape[0]
    fw = _gates(model.fc_con, [model._gate_in(o) for o in towers],
                override.feature_weights if override else None, batch)
    group_feats = [
        ad.relu(fc(ad.concat([towers[i].stage1 for i in g], axis=1)))
        for fc, g in zip(model.group_fcs, spec.groups)
    ]
    gw = _gates(model.fc_con_g, group_feats,
                override.group_weights if override else None, batch)
    fcols = ad.split(fw, [1] * model.n_features, axis=1)
    gcols = ad.split(gw, [1] * spec.n_groups, axis=1)
    gidx = spec.group_index()
    final = [ad.mul(fcols[i], gcols[gidx[i]]) for i in range(model.n_features)]
    logits = _fuse(model.fc_out, [o.out for o in towers], final)
    report = FusionReport(
        feature_weights=fw.data.copy(),
        group_weights=gw.data.copy(),
        final_weights=np.concatenate([f.data for f in final], axis=1),
    )
    return logits, report


_FORWARDS = {
    "non_gated": _forward_non_gated,
    "netgated": _forward_netgated,
    "fg_gfa": _forward_fg_gfa,
    "two_stage": _forward_two_stage,
}


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _check_common(n_features, window_len, n_classes):
    if n_features < 1:
        raise ConfigError(f"need at least one feature, got {n_features}")
    if window_len < 1 or n_classes < 1:
        raise ConfigError(f"window_len and n_classes must be positive, got {window_len}, {n_classes}")


def _as_groups(group_spec, n_features) -> GroupSpec:
    spec = group_spec if isinstance(group_spec, GroupSpec) else GroupSpec(group_spec)
    spec.validate(n_features)
    return spec


def _feature_towers(n_features, window_len, tower_spec, rng):
    return [
        build_tower(tower_spec, (1, window_len), rng, name=f"feature_towers.{i}")
        for i in range(n_features)
    ]


def build_non_gated(n_features: int, window_len: int, n_classes: int,
                    tower_spec: Sequence[LayerSpec] = DEFAULT_TOWER, seed: int = 0) -> FusionModel:
    _check_common(n_features, window_len, n_classes)
    rng = np.random.default_rng(seed)
    towers = _feature_towers(n_features, window_len, tower_spec, rng)
    width = sum(t.output_width for t in towers)
    return FusionModel(
        "non_gated", n_features, window_len, n_classes, tuple(tower_spec), seed=seed,
        feature_towers=towers, fc_out=Dense(width, n_classes, rng, "fc_out"),
    )


def build_netgated(n_features: int, window_len: int, n_classes: int,
                   tower_spec: Sequence[LayerSpec] = DEFAULT_TOWER, seed: int = 0,
                   gate_on_preactivation: bool = False) -> FusionModel:
    _check_common(n_features, window_len, n_classes)
    if n_features < 2:
        raise ConfigError("netgated needs at least two features to gate")
    rng = np.random.default_rng(seed)
    towers = _feature_towers(n_features, window_len, tower_spec, rng)
    width = sum(t.output_width for t in towers)
    return FusionModel(
        "netgated", n_features, window_len, n_classes, tuple(tower_spec),
        gate_on_preactivation=gate_on_preactivation, seed=seed, feature_towers=towers,
        fc_con=Dense(width, n_features, rng, "fc_con"),
        fc_out=Dense(width, n_classes, rng, "fc_out"),
    )


def build_fg_gfa(n_features: int, window_len: int, n_classes: int, group_spec,
                 tower_spec: Sequence[LayerSpec] = DEFAULT_TOWER, seed: int = 0,
                 gate_on_preactivation: bool = False) -> FusionModel:
    _check_common(n_features, window_len, n_classes)
    spec = _as_groups(group_spec, n_features)
    rng = np.random.default_rng(seed)
    towers = [
        build_tower(tower_spec, (len(g), window_len), rng, name=f"group_towers.{gi}")
        for gi, g in enumerate(spec.groups)
    ]
    width = sum(t.output_width for t in towers)
    return FusionModel(
        "fg_gfa", n_features, window_len, n_classes, tuple(tower_spec), group_spec=spec,
        gate_on_preactivation=gate_on_preactivation, seed=seed, group_towers=towers,
        fc_con=Dense(width, spec.n_groups, rng, "fc_con"),
        fc_out=Dense(width, n_classes, rng, "fc_out"),
    )


def build_two_stage(n_features: int, window_len: int, n_classes: int, group_spec,
                    tower_spec: Sequence[LayerSpec] = DEFAULT_TOWER, seed: int = 0,
                    gate_on_preactivation: bool = False) -> FusionModel:
    _check_common(n_features, window_len, n_classes)
    if n_features < 2:
        raise ConfigError("two_stage needs at least two features to gate")
    spec = _as_groups(group_spec, n_features)
    rng = np.random.default_rng(seed)
    towers = _feature_towers(n_features, window_len, tower_spec, rng)
    width = sum(t.output_width for t in towers)
    # group FC width follows the feature tower output so both stages stay matched
    group_units = towers[0].output_width
    group_fcs = [
        Dense(sum(towers[i].stage1_width for i in g), group_units, rng, f"group_fc.{gi}")
        for gi, g in enumerate(spec.groups)
    ]
    return FusionModel(
        "two_stage", n_features, window_len, n_classes, tuple(tower_spec), group_spec=spec,
        gate_on_preactivation=gate_on_preactivation, seed=seed, feature_towers=towers,
        group_fcs=group_fcs,
        fc_con=Dense(width, n_features, rng, "fc_con"),
        fc_con_g=Dense(group_units * spec.n_groups, spec.n_groups, rng, "fc_con_g"),
        fc_out=Dense(width, n_classes, rng, "fc_out"),
    )


def build_model(kind: str, n_features: int, window_len: int, n_classes: int,
                group_spec=None, tower_spec: Sequence[LayerSpec] = DEFAULT_TOWER,
                seed: int = 0, gate_on_preactivation: bool = False) -> FusionModel:
    """Dispatch to the builder for ``kind``; ``group_spec`` is ignored by ungrouped kinds."""
    if kind == "non_gated":
        return build_non_gated(n_features, window_len, n_classes, tower_spec, seed)
    if kind == "netgated":
        return build_netgated(n_features, window_len, n_classes, tower_spec, seed,
                              gate_on_preactivation)
    if kind == "fg_gfa":
        return build_fg_gfa(n_features, window_len, n_classes, group_spec, tower_spec, seed,
                            gate_on_preactivation)
    if kind == "two_stage":
        return build_two_stage(n_features, window_len, n_classes, group_spec, tower_spec, seed,
                               gate_on_preactivation)
    raise ConfigError(f"unknown architecture {kind!r}; expected one of {KINDS}")


def forward(model: FusionModel, window, override: FusionOverride | None = None):
    return model.forward(window, override)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: FusionModel, path) -> Path:
    """Write parameters and config to an ``.npz`` archive keyed by parameter path."""
    path = Path(path)
    meta = {"version": ARCHIVE_VERSION, "config": model.config(), "seed": model.seed,
            "fingerprint": model.fingerprint}
    arrays = {name: t.data for name, t in model.named_parameters().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    return path


def _read_archive(path):
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    if meta.get("version") != ARCHIVE_VERSION:
        raise ConfigError(f"unsupported archive version {meta.get('version')!r}")
    return meta, arrays


def load_parameters(model: FusionModel, path) -> FusionModel:
    """Copy archived parameters into ``model``; rejects a config fingerprint mismatch."""
    meta, arrays = _read_archive(path)
    if meta["fingerprint"] != model.fingerprint:
        raise ConfigError(
            f"archive fingerprint {meta['fingerprint']} does not match model {model.fingerprint}"
        )
    params = model.named_parameters()
    if set(arrays) != set(params):
        raise ConfigError("archive parameter names do not match the model")
    for name, t in params.items():
        if arrays[name].shape != t.shape:
            raise DimensionError(f"{name}: archived shape {arrays[name].shape} != {t.shape}")
        t.data[...] = arrays[name]
    return model


def load_model(path, expected_fingerprint: str | None = None) -> FusionModel:
    meta, _ = _read_archive(path)
    cfg = meta["config"]
    if fingerprint(cfg) != meta["fingerprint"]:
        raise ConfigError("archive config does not match its stored fingerprint")
    if expected_fingerprint is not None and expected_fingerprint != meta["fingerprint"]:
        raise ConfigError(
            f"archive fingerprint {meta['fingerprint']} != expected {expected_fingerprint}"
        )
    model = build_model(
        cfg["kind"], cfg["n_features"], cfg["window_len"], cfg["n_classes"],
        group_spec=cfg["groups"],
        tower_spec=tuple(LayerSpec.from_dict(d) for d in cfg["tower_spec"]),
        seed=meta.get("seed", 0), gate_on_preactivation=cfg["gate_on_preactivation"],
    )
    return load_parameters(model, path)
