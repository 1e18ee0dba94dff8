import numpy as np
import pytest

from fusegate.architectures import KINDS, FusionOverride, build_model
from fusegate.layers import FC, Conv1D, MaxPool, ReLU

TOY_TOWER = (Conv1D(2, 3), ReLU(), MaxPool(2, 2), FC(4), ReLU())
TOY_GROUPS = [[0, 1], [2]]

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def toy_model(kind, seed=0, n_features=3, window_len=12, n_classes=3, groups=TOY_GROUPS,
              tower=TOY_TOWER):
    return build_model(kind, n_features, window_len, n_classes, group_spec=groups,
                       tower_spec=tower, seed=seed)


def nullity_failures(model, trials, seed=0):
    """Zero one fusion weight per trial, corrupt the gated input, count changed logits.

    Trials cycle through every feature-level and group-level weight the model has.
    """
    rng = np.random.default_rng(seed)
    n, t = model.n_features, model.window_len
    groups = model.group_spec.as_lists() if model.group_spec is not None else None
    levels = []
    if model.kind in ("netgated", "two_stage"):
        levels += [("feature", i) for i in range(n)]
    if model.kind in ("fg_gfa", "two_stage"):
        levels += [("group", g) for g in range(len(groups))]
    failures = 0
    for trial in range(trials):
        level, idx = levels[trial % len(levels)]
        x = rng.normal(size=(n, t))
        _, rep = model(x)
        fw = None if rep.feature_weights is None else rep.feature_weights.copy()
        gw = None if rep.group_weights is None else rep.group_weights.copy()
        if level == "feature":
            fw[idx] = 0.0
            fw /= fw.sum()
            gated = [idx]
        else:
            gw[idx] = 0.0
            gw /= gw.sum()
            gated = groups[idx]
        override = FusionOverride(fw, gw)
        ref, _ = model(x, override)
        corrupt = x.copy()
        corrupt[gated] = rng.normal(scale=rng.uniform(1, 1e3), size=(len(gated), t))
        out, _ = model(corrupt, override)
        failures += not np.array_equal(out.data, ref.data)
    return failures


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=KINDS)
def kind(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
