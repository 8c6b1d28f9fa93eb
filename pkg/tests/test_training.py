import numpy as np
import pytest

from sigver.errors import ConfigError, TrainingError
from sigver.nn.network import Network, parse_network_spec
from sigver.training import (OptimizerState, TrainConfig, lr_schedule, mean_loss, nesterov_step, train_wi)

SMALL_NET = """\
input 1 8 8
conv filters=4 size=3 stride=1 pad=1
relu
maxpool size=2 stride=2
fc units=16
relu
fc units=classes
softmax
"""


def test_lr_schedule_steps_every_20_epochs():
    cfg = TrainConfig()
    assert [lr_schedule(e, cfg) for e in (0, 19, 20, 39, 40, 59)] == pytest.approx(
        [0.01, 0.01, 0.001, 0.001, 0.0001, 0.0001])
    with pytest.raises(ConfigError):
        lr_schedule(-1, cfg)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(momentum=1.0)


def test_nesterov_step_by_hand():
    w = np.array([1.0, -2.0])
    b = np.array([0.5])
    state = OptimizerState([np.array([0.1, 0.0]), np.array([0.2])])
    nesterov_step([w, b], [np.array([1.0, 1.0]), np.array([1.0])], state, lr=0.1, momentum=0.9,
                  weight_decay=0.5, decay_mask=[True, False])
    v_w = 0.9 * np.array([0.1, 0.0]) - 0.1 * (np.array([1.0, 1.0]) + 0.5 * np.array([1.0, -2.0]))
    assert np.allclose(state.velocity[0], v_w)
    assert np.allclose(w, np.array([1.0, -2.0]) + v_w)
    # bias: no decay
    assert np.allclose(state.velocity[1], 0.9 * 0.2 - 0.1 * 1.0)
    assert np.allclose(b, 0.5 + 0.9 * 0.2 - 0.1)


def test_nesterov_lookahead_on_quadratic():
    # f(w) = 0.5*a*w^2; Sutskever form with gradient at w + mu*v
    a, lr, mu = 3.0, 0.05, 0.9
    w = np.array([1.0])
    state = OptimizerState.zeros_like([w])
    ref_w, ref_v = 1.0, 0.0
    for _ in range(30):
        g = a * (w + mu * state.velocity[0])
        nesterov_step([w], [g], state, lr, mu, 0.0)
        ref_v = mu * ref_v - lr * a * (ref_w + mu * ref_v)
        ref_w = ref_w + ref_v
    assert w[0] == pytest.approx(ref_w)
    assert abs(w[0]) < 0.1


def test_nesterov_shape_mismatch():
    with pytest.raises(TrainingError):
        nesterov_step([np.zeros(2)], [np.zeros(3)], OptimizerState([np.zeros(2)]), 0.1, 0.9, 0.0)


def _toy_data(n_per_class=12, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.3, size=(3 * n_per_class, 1, 8, 8)).astype(np.float32)
    y = np.repeat(np.arange(3), n_per_class)
    x[y == 0, :, :4, :] += 2.0
    x[y == 1, :, 4:, :] += 2.0
    x[y == 2, :, :, :4] += 2.0
    return x, y


def test_training_reduces_loss_and_is_deterministic():
    x, y = _toy_data()
    cfg = TrainConfig(initial_lr=0.05, batch_size=7, epochs=15, seed=3)  # 36 samples: last batch has 1
    runs = []
    for _ in range(2):
        net = Network.initialize(parse_network_spec(SMALL_NET), 3, seed=3)
        before = mean_loss(net, x, y)
        history = train_wi(net, x, y, cfg)
        runs.append((net, history))
    net, history = runs[0]
    assert len(history) == 15
    assert mean_loss(net, x, y) < 0.5 * before
    assert history[-1].accuracy > 0.9
    assert all(np.array_equal(p, q) for p, q in zip(runs[0][0].params, runs[1][0].params))
    assert [h.mean_loss for h in runs[0][1]] == [h.mean_loss for h in runs[1][1]]


def test_on_epoch_callback_and_label_checks():
    x, y = _toy_data(4)
    net = Network.initialize(parse_network_spec(SMALL_NET), 3, seed=0)
    seen = []
    train_wi(net, x, y, TrainConfig(epochs=2, batch_size=5), on_epoch=lambda e, n: seen.append(e.epoch))
    assert seen == [0, 1]
    with pytest.raises(ConfigError):
        train_wi(net, x, y + 5, TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        train_wi(net, x[:0], y[:0], TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    x, y = _toy_data(4)
    net = Network.initialize(parse_network_spec(SMALL_NET), 3, seed=0)
    x = x * 1e30
    with pytest.raises(TrainingError):
        train_wi(net, x, y, TrainConfig(epochs=3, initial_lr=1e6))
