import numpy as np
import pytest

from drowsyq import numerics as nx
from drowsyq.model import VARIANTS, Network, NetworkConfig, sync_target
from drowsyq.numerics.gradcheck import check_gradients
from drowsyq.preproc import SegmentState

TINY = dict(channels=3, samples_per_subsecond=8, filters=2, hidden=3, temporal_kernel=4,
            separable_kernel=3, lstm_kernel=2, n_actions=4)


@pytest.fixture(scope="module")
def states():
    return np.random.default_rng(0).standard_normal((2, 3, 30, 128))


@pytest.mark.parametrize("variant", VARIANTS)
def test_layer_shape_chain(variant, states):
    net = Network(NetworkConfig(variant=variant))
    shapes = net.feature_maps(states[0, 0])
    assert shapes == {
        "input": (1, 30, 128),
        "conv1": (32, 30, 128),
        "depthwise": (32, 1, 128),
        "pool1": (32, 1, 64),
        "separable": (32, 1, 64),
        "pool2": (32, 1, 32),
    }
    with nx.no_grad():
        feats = net.forward_features(states)
        assert feats.shape == (2, 1024)
        out = net.forward(states).shape
    hidden = [p for k, p in net.params.items() if k.endswith("1_w")]
    assert all(p.shape == (512, 1024) for p in hidden)
    if variant == "supervised":
        assert out == (2,)
    else:
        assert out == (2, 16)
    if variant == "dueling":
        assert net.params["val2_w"].shape == (1, 512)
        assert net.params["adv2_w"].shape == (16, 512)


def test_fused_front_end_matches_layerwise(states):
    net = Network(NetworkConfig("dqn"))
    p = net.params
    x = nx.Tensor(states[0, 1][None, None])
    with nx.no_grad():
        fused = net.cnn(x).data
        z = nx.conv2d(x, p["conv1"], "same")
        z = nx.depthwise_conv2d(z, p["depthwise"], "valid", activation="tanh")
        z = nx.avgpool2d(z)
        z = nx.separable_conv2d(z, p["sep_depth"], p["sep_point"])
        z = nx.avgpool2d(z).data
    np.testing.assert_allclose(fused, z, atol=1e-11)


def test_weights_shared_across_subseconds(states):
    net = Network(NetworkConfig("dqn"))
    names = list(net.params)
    assert len(names) == len(set(names))
    assert sum(k.startswith("conv1") for k in names) == 1
    with nx.no_grad():
        full = net.forward_features(states[:1]).data
        # the same backbone applied plane by plane, then the recurrence
        planes = [net.cnn(nx.Tensor(states[0, k][None, None])) for k in range(3)]
        h = nx.Tensor(np.zeros((1, 32, 1, 32)))
        c = nx.Tensor(np.zeros((1, 32, 1, 32)))
        for f in planes:
            h, c = nx.conv_lstm_step(f, h, c, net.params["lstm_w"], net.params["lstm_b"])
    np.testing.assert_allclose(full, h.data.reshape(1, -1), atol=1e-12)


def test_batch_rows_independent(states):
    net = Network(NetworkConfig("dueling"))
    both = net.q_numpy(states)
    one = net.q_numpy(states[1:])
    np.testing.assert_allclose(both[1:], one, atol=1e-12)


def test_plane_order_matters(states):
    net = Network(NetworkConfig("dqn"))
    swapped = states[:, ::-1].copy()
    assert not np.allclose(net.q_numpy(states), net.q_numpy(swapped))


def test_dueling_invariances(states):
    net = Network(NetworkConfig("dueling"))
    q = net.q_numpy(states)
    with nx.no_grad():
        f = net.forward_features(states)
        v = net._mlp("val", f).data
    np.testing.assert_allclose((q - v).mean(axis=1), 0.0, atol=1e-10)
    net.params["adv2_b"].data += 3.0
    np.testing.assert_allclose(net.q_numpy(states), q, atol=1e-10)


def test_zero_lstm_gives_zero_features(states):
    net = Network(NetworkConfig("dqn"))
    net.params["lstm_w"].data[:] = 0.0
    net.params["lstm_b"].data[:] = 0.0
    with nx.no_grad():
        assert not np.any(net.forward_features(states).data)


@pytest.mark.parametrize("variant", VARIANTS)
def test_backbone_and_head_gradients(variant):
    net = Network(NetworkConfig(variant=variant, **TINY), seed=5)
    x = np.random.default_rng(1).standard_normal((2, 3, 3, 8))
    err = check_gradients(lambda: net.forward(x), net.parameters(), seed=2)
    assert err < 1e-4


def test_predict_rt_clipped(states):
    net = Network(NetworkConfig("supervised"))
    net.params["reg2_b"].data[:] = 50.0
    assert np.all(net.predict_rt(states) == 8.0)
    net.params["reg2_b"].data[:] = -50.0
    assert np.all(net.predict_rt(states) == 0.5)


def test_variant_errors(states):
    with pytest.raises(ValueError):
        NetworkConfig("ppo").validate()
    sl = Network(NetworkConfig("supervised"))
    with pytest.raises(ValueError):
        sl.q_values(nx.Tensor(np.zeros((1, 1024))))
    rl = Network(NetworkConfig("dqn"))
    with pytest.raises(ValueError):
        rl.regress(nx.Tensor(np.zeros((1, 1024))))
    with pytest.raises(ValueError):
        rl.forward(np.zeros((1, 3, 29, 128)))


def test_segment_state_input(states):
    net = Network(NetworkConfig("dqn"))
    seg = SegmentState(states[0], 0.0, None)
    np.testing.assert_array_equal(net.q_numpy([seg]), net.q_numpy(states[:1]))


def test_sync_target_isolated(states):
    online = Network(NetworkConfig("double"), seed=1)
    target = sync_target(online)
    q0 = target.q_numpy(states)
    online.params["q2_b"].data += 1.0
    np.testing.assert_array_equal(target.q_numpy(states), q0)
    sync_target(online, target)
    np.testing.assert_array_equal(target.q_numpy(states), online.q_numpy(states))
    with pytest.raises(ValueError):
        sync_target(online, Network(NetworkConfig("dqn")))


def test_checkpoint_round_trip(tmp_path, states):
    net = Network(NetworkConfig("dueling"), seed=3)
    net.save(tmp_path / "ck")
    back = Network.load(tmp_path / "ck")
    assert back.cfg == net.cfg
    for k in net.params:
        assert back.params[k].data.tobytes() == net.params[k].data.tobytes()
    np.testing.assert_array_equal(back.q_numpy(states), net.q_numpy(states))


def test_max_norm_holds_after_training_step(states):
    net = Network(NetworkConfig("dqn"))
    net.params["depthwise"].data *= 10
    opt = nx.RMSProp(net.parameters())
    opt.zero_grad()
    nx.total(net.forward(states)).backward()
    opt.step()
    norms = np.linalg.norm(net.params["depthwise"].data.reshape(32, -1), axis=1)
    assert norms.max() <= 1.0 + 1e-9
