import numpy as np
import pytest

from fusegate.autodiff import Tensor
from fusegate.errors import ConfigError, DimensionError
from fusegate.layers import DEFAULT_TOWER, FC, Conv1D, LayerSpec, MaxPool, ReLU, build_tower


def test_conv_pool_fc_chain_width():
    tower = build_tower([Conv1D(4, 3), MaxPool(2, 2), FC(16), ReLU()], (1, 40), 0)
    assert tower.output_width == 16
    # 40 - 3 + 1 = 38, pooled to 19, four channels flattened
    assert tower.stage1_width == 4 * 19
    x = Tensor(np.random.default_rng(0).normal(size=(1, 40)))
    assert tower(x).shape == (16,)


def test_empty_spec_is_identity():
    tower = build_tower([], (2, 5), 0)
    x = np.arange(10.0).reshape(2, 5)
    np.testing.assert_array_equal(tower(Tensor(x)).data, x.reshape(-1))
    assert tower.num_parameters() == 0


def test_fc_after_fc():
    tower = build_tower([FC(16), FC(8)], (1, 16), 0)
    assert tower.output_width == 8


def test_zero_fc_tower_returns_bias():
    tower = build_tower([FC(3)], (1, 4), 0)
    w, b = tower.parameters()
    w.data[...] = 0.0
    b.data[...] = [1.0, -2.0, 0.5]
    out = tower(Tensor(np.random.default_rng(1).normal(size=(1, 4))))
    assert out.data.tolist() == [1.0, -2.0, 0.5]


def test_hand_computed_forward():
    tower = build_tower([Conv1D(1, 2), ReLU(), MaxPool(2, 2), FC(1)], (1, 5), 0)
    conv_w, conv_b, fc_w, fc_b = tower.parameters()
    conv_w.data[...] = [[[1.0, -1.0]]]
    conv_b.data[...] = [0.5]
    fc_w.data[...] = [[2.0], [3.0]]
    fc_b.data[...] = [0.25]
    x = Tensor([[1.0, 4.0, 2.0, 2.0, 5.0]])
    # conv: 1-4+.5=-2.5, 4-2+.5=2.5, 2-2+.5=.5, 2-5+.5=-2.5 ; relu: 0, 2.5, .5, 0
    # pool(2,2): 2.5, .5 ; fc: 2*2.5 + 3*.5 + .25 = 6.75
    assert abs(tower(x).data[0] - 6.75) < 1e-12


def test_batched_matches_single():
    tower = build_tower(DEFAULT_TOWER, (1, 40), 3)
    xs = np.random.default_rng(3).normal(size=(4, 1, 40))
    batched = tower(Tensor(xs)).data
    for i in range(4):
        np.testing.assert_allclose(tower(Tensor(xs[i])).data, batched[i], rtol=0, atol=1e-12)


def test_default_tower_parameter_count_is_locked():
    tower = build_tower(DEFAULT_TOWER, (1, 40), 0)
    # conv 8*1*5 + 8, then FC from 8*18 to 32 with bias
    assert tower.num_parameters() == 48 + 144 * 32 + 32 == 4688


def test_same_seed_same_parameters():
    a = build_tower(DEFAULT_TOWER, (1, 40), 11)
    b = build_tower(DEFAULT_TOWER, (1, 40), 11)
    c = build_tower(DEFAULT_TOWER, (1, 40), 12)
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.parameters()[0].data, c.parameters()[0].data)


def test_invalid_chain_names_failing_layer():
    with pytest.raises(ConfigError, match="layer 2"):
        build_tower([Conv1D(2, 3), ReLU(), MaxPool(20, 1)], (1, 10), 0)
    with pytest.raises(ConfigError, match="layer 1"):
        build_tower([FC(4), Conv1D(2, 3)], (1, 10), 0)


def test_layer_spec_validation():
    with pytest.raises(ConfigError):
        LayerSpec("conv1d", channels=0, kernel=3)
    with pytest.raises(ConfigError):
        FC(0)
    with pytest.raises(ConfigError):
        LayerSpec("dropout")


def test_shape_mismatch_rejected():
    tower = build_tower(DEFAULT_TOWER, (1, 40), 0)
    with pytest.raises(DimensionError):
        tower(Tensor(np.zeros((1, 39))))


def test_spec_dict_roundtrip():
    for layer in DEFAULT_TOWER:
        assert LayerSpec.from_dict(layer.to_dict()) == layer
