import numpy as np
import pytest
from conftest import TOY_TOWER, nullity_failures, toy_model
from oracle import assert_close, model_forward

from fusegate import autodiff as ad
from fusegate.architectures import (
    KINDS,
    FusionOverride,
    GroupSpec,
    build_fg_gfa,
    build_netgated,
    build_non_gated,
    build_two_stage,
    load_model,
    load_parameters,
    save_model,
)
from fusegate.data import default_groups
from fusegate.errors import ConfigError, DimensionError
from fusegate.layers import DEFAULT_TOWER, build_tower

DRIVING = [[0, 1, 2], [3, 4]]


# -- GroupSpec -----------------------------------------------------------------

def test_group_spec_partition_checks():
    GroupSpec([[0, 2], [1]]).validate(3)
    with pytest.raises(ConfigError):
        GroupSpec([[0, 1], [1, 2]]).validate(3)
    with pytest.raises(ConfigError):
        GroupSpec([[0], [2]]).validate(3)
    with pytest.raises(ConfigError):
        GroupSpec([[0, 1, 2], []])
    assert GroupSpec(DRIVING).group_index().tolist() == [0, 0, 0, 1, 1]


# -- builders -------------------------------------------------------------------

def test_non_gated_driving_shape():
    model = build_non_gated(5, 40, 3)
    assert len(model.feature_towers) == 5 and model.fc_con is None
    towers = sum(t.num_parameters() for t in model.feature_towers)
    # FC-out maps 5 x 32 concatenated features to 3 classes
    assert model.num_parameters() == towers + (5 * 32 * 3 + 3)


def test_non_gated_single_feature():
    model = build_non_gated(1, 40, 3)
    logits, report = model(np.zeros((1, 40)))
    assert logits.shape == (3,) and report.feature_weights is None


def test_netgated_needs_two_features():
    with pytest.raises(ConfigError):
        build_netgated(1, 40, 3)


def test_netgated_symmetric_weights():
    model = build_netgated(4, 20, 3, tower_spec=TOY_TOWER, seed=5)
    ref = model.feature_towers[0].parameters()
    for tower in model.feature_towers[1:]:
        for p, q in zip(tower.parameters(), ref):
            p.data[...] = q.data
    model.fc_con.weight.data[...] = model.fc_con.weight.data[:, :1]
    x = np.tile(np.random.default_rng(0).normal(size=(1, 20)), (4, 1))
    _, report = model(x)
    np.testing.assert_allclose(report.feature_weights, np.full(4, 0.25), rtol=0, atol=1e-15)


def test_fg_gfa_single_group_weight_is_one():
    model = build_fg_gfa(3, 12, 2, [[0, 1, 2]], tower_spec=TOY_TOWER)
    _, report = model(np.random.default_rng(1).normal(size=(3, 12)))
    assert report.group_weights.tolist() == [1.0]


def test_fg_gfa_driving_groups():
    model = build_fg_gfa(5, 40, 3, default_groups("driving"))
    _, report = model(np.random.default_rng(2).normal(size=(5, 40)))
    assert report.group_weights.shape == (2,) and report.feature_weights is None
    assert model.group_towers[0].input_shape == (3, 40)
    assert model.group_towers[1].input_shape == (2, 40)


def test_fg_gfa_rejects_non_partition():
    with pytest.raises(ConfigError):
        build_fg_gfa(5, 40, 3, [[0, 1], [3, 4]])


def test_two_stage_report_layout():
    model = build_two_stage(5, 40, 3, DRIVING, seed=3)
    _, rep = model(np.random.default_rng(3).normal(size=(5, 40)))
    assert rep.feature_weights.shape == (5,) and rep.group_weights.shape == (2,)
    assert rep.final_weights.shape == (5,)
    # the lower path sees per-feature conv/pool output: 8 channels x 18 pooled steps
    assert model.group_fcs[0].n_in == 3 * 144 and model.group_fcs[1].n_in == 2 * 144


def test_two_stage_table_product():
    model = build_two_stage(5, 40, 3, DRIVING)
    fw = np.array([0.26, 0.18, 0.16, 0.21, 0.19])
    gw = np.array([0.45, 0.55])
    _, rep = model(np.zeros((5, 40)), FusionOverride(fw, gw))
    assert rep.final_weights[0] == 0.26 * 0.45
    assert rep.final_weights[0] == pytest.approx(0.117, abs=1e-12)


def test_two_stage_blocked_group_contributes_nothing():
    model = toy_model("two_stage", seed=4)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 12))
    override = FusionOverride(np.array([0.5, 0.3, 0.2]), np.array([0.0, 1.0]))
    ref, rep = model(x, override)
    assert rep.final_weights[:2].tolist() == [0.0, 0.0]
    x2 = x.copy()
    x2[:2] = rng.normal(scale=100, size=(2, 12))
    assert np.array_equal(model(x2, override)[0].data, ref.data)


def test_two_stage_final_weight_sum_identity():
    model = build_two_stage(5, 40, 3, DRIVING, seed=8)
    xs = np.random.default_rng(8).normal(size=(16, 5, 40))
    _, rep = model(xs)
    gidx = np.array([0, 0, 0, 1, 1])
    for fw, gw, final in zip(rep.feature_weights, rep.group_weights, rep.final_weights):
        by_group = sum(gw[g] * fw[gidx == g].sum() for g in range(2))
        assert abs(final.sum() - by_group) < 1e-15
        assert np.array_equal(final, fw * gw[gidx])


def test_forward_shape_mismatch():
    model = toy_model("netgated")
    with pytest.raises(DimensionError):
        model(np.zeros((3, 11)))
    with pytest.raises(DimensionError):
        model(np.zeros((2, 12)))


# -- per-kind properties ------------------------------------------------------------

def test_oracle_equivalence(kind):
    model = toy_model(kind, seed=9)
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.normal(size=(3, 12))
        logits, rep = model(x)
        o_logits, o_fw, o_gw, o_final = model_forward(model, x)
        assert_close(logits.data, o_logits, 1e-12)
        for mine, theirs in ((rep.feature_weights, o_fw), (rep.group_weights, o_gw)):
            assert (mine is None) == (theirs is None)
            if mine is not None:
                assert_close(mine, theirs, 1e-12)
        if kind == "two_stage":
            assert_close(rep.final_weights, o_final, 1e-12)


def test_batched_forward_matches_single(kind):
    model = toy_model(kind, seed=10)
    xs = np.random.default_rng(10).normal(size=(5, 3, 12))
    logits, rep = model(xs)
    for i in range(5):
        single, srep = model(xs[i])
        np.testing.assert_allclose(single.data, logits.data[i], rtol=0, atol=1e-13)


def test_weights_normalized(kind):
    model = toy_model(kind, seed=11)
    _, rep = model(np.random.default_rng(11).normal(size=(50, 3, 12)))
    for w in (rep.feature_weights, rep.group_weights):
        if w is not None:
            assert np.all(w >= 0)
            assert np.all(np.abs(w.sum(axis=1) - 1) < 1e-6)


def test_gradient_flow_reaches_every_parameter(kind):
    model = toy_model(kind, seed=12)
    rng = np.random.default_rng(12)
    logits, _ = model(rng.normal(size=(8, 3, 12)))
    ad.backward(ad.cross_entropy_loss(logits, rng.integers(0, 3, 8)))
    for name, p in model.named_parameters().items():
        assert p.grad is not None and np.any(p.grad != 0), name


def test_full_model_gradcheck(kind):
    model = toy_model(kind, seed=13)
    rng = np.random.default_rng(13)
    x = rng.normal(size=(4, 3, 12))
    y = rng.integers(0, 3, 4)

    def loss():
        return ad.cross_entropy_loss(model(x)[0], y)

    assert ad.gradcheck(loss, model.parameters()) < 1e-4


def _permute(model, perm):
    """Rebuild ``model`` with feature order ``perm`` (new index j holds old feature perm[j])."""
    from fusegate.architectures import build_model

    inv = np.argsort(perm)
    groups = None
    if model.group_spec is not None:
        groups = [[int(inv[i]) for i in g] for g in model.group_spec.groups]
    new = build_model(model.kind, model.n_features, model.window_len, model.n_classes,
                      group_spec=groups, tower_spec=model.tower_spec)
    src, dst = model.named_parameters(), new.named_parameters()
    h = model.feature_towers[0].output_width
    for name, p in dst.items():
        if name.startswith("feature_towers."):
            _, j, rest = name.split(".", 2)
            p.data[...] = src[f"feature_towers.{perm[int(j)]}.{rest}"].data
        else:
            p.data[...] = src[name].data
    blocks = np.concatenate([np.arange(perm[j] * h, (perm[j] + 1) * h) for j in range(len(perm))])
    for dense in ("fc_out", "fc_con"):
        if dense in ("fc_con",) and model.fc_con is None:
            continue
        dst[f"{dense}.weight"].data[...] = src[f"{dense}.weight"].data[blocks]
    if model.kind in ("netgated", "two_stage"):
        dst["fc_con.weight"].data[...] = dst["fc_con.weight"].data[:, perm]
        dst["fc_con.bias"].data[...] = src["fc_con.bias"].data[perm]
    return new


@pytest.mark.parametrize("kind", ["non_gated", "netgated", "two_stage"])
def test_permutation_equivariance(kind):
    model = toy_model(kind, seed=14)
    perm = np.array([2, 0, 1])
    moved = _permute(model, perm)
    x = np.random.default_rng(14).normal(size=(6, 3, 12))
    logits, rep = model(x)
    plogits, prep = moved(x[:, perm])
    np.testing.assert_allclose(plogits.data, logits.data, rtol=0, atol=1e-12)
    if rep.feature_weights is not None:
        np.testing.assert_allclose(prep.feature_weights, rep.feature_weights[:, perm], atol=1e-14)


@pytest.mark.parametrize("kind", ["netgated", "fg_gfa", "two_stage"])
def test_gating_nullity(kind):
    assert nullity_failures(toy_model(kind, seed=15), 20, seed=15) == 0


# -- persistence -------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, kind):
    model = toy_model(kind, seed=16)
    path = save_model(model, tmp_path / "m.npz")
    loaded = load_model(path, expected_fingerprint=model.fingerprint)
    x = np.random.default_rng(16).normal(size=(3, 12))
    assert np.array_equal(loaded(x)[0].data, model(x)[0].data)
    fresh = toy_model(kind, seed=99)
    load_parameters(fresh, path)
    assert np.array_equal(fresh(x)[0].data, model(x)[0].data)


def test_load_rejects_fingerprint_mismatch(tmp_path):
    path = save_model(toy_model("two_stage"), tmp_path / "m.npz")
    other = toy_model("two_stage", groups=[[0], [1, 2]])
    with pytest.raises(ConfigError, match="fingerprint"):
        load_parameters(other, path)
    with pytest.raises(ConfigError, match="fingerprint"):
        load_model(path, expected_fingerprint="0" * 16)


def test_parameter_names_are_paths():
    names = set(build_two_stage(5, 40, 3, DRIVING).named_parameters())
    assert "feature_towers.4.layers.3.weight" in names
    assert {"fc_con.weight", "fc_con_g.bias", "fc_out.weight", "group_fc.1.weight"} <= names


def test_all_kinds_share_feature_towers_shape():
    shapes = {}
    for kind in ("non_gated", "netgated", "two_stage"):
        model = toy_model(kind)
        shapes[kind] = [p.shape for t in model.feature_towers for p in t.parameters()]
    assert len({tuple(v) for v in shapes.values()}) == 1
    assert build_tower(DEFAULT_TOWER, (1, 40), 0).output_width == 32
