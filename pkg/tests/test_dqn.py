import math

import numpy as np
import pytest
from scipy.stats import chisquare
from sklearn.base import clone

import pbrs.dqn as dqn_mod
from oracles import central_difference, mlp_forward_reference
from pbrs.dqn import (Adam, Batch, DQNAgent, DQNConfig, MLPQNet, ReplayBuffer, clip_grad_norm,
                      load_checkpoint, probe_q_range, save_checkpoint, td_loss, train_dqn)
from pbrs.envs import CartPole, MountainCar
from pbrs.errors import ConfigurationError, ContractViolation, NumericFault
from pbrs.rng import RngStream
from pbrs.shaping import AbsCarVelocity, PotentialSpec


def random_batch(rng, n, obs_dim, n_actions, terminal_frac=0.3):
    return Batch(np.array([[rng.normal() for _ in range(obs_dim)] for _ in range(n)]),
                 np.array([rng.integers(n_actions) for _ in range(n)]),
                 np.array([rng.uniform(-2, 2) for _ in range(n)]),
                 np.array([[rng.normal() for _ in range(obs_dim)] for _ in range(n)]),
                 np.array([rng.random() < terminal_frac for _ in range(n)]))


class TestForward:
    def test_zero_net(self):
        net = MLPQNet((4, 8, 2))
        np.testing.assert_array_equal(net.forward(np.ones(4)), np.zeros(2))

    def test_identity_layer(self):
        net = MLPQNet((3, 3), [np.eye(3), np.zeros(3)])
        x = np.array([1.0, 1.0, 1.0])
        np.testing.assert_array_equal(net.forward(x), x)

    def test_matches_reference(self):
        rng = RngStream(0)
        net = MLPQNet.initialized((4, 64, 64, 2), rng)
        Ws = [p.tolist() for p in net.params[::2]]
        bs = [p.tolist() for p in net.params[1::2]]
        for _ in range(10):
            x = [rng.normal() for _ in range(4)]
            np.testing.assert_allclose(net.forward(np.array(x)),
                                       mlp_forward_reference(Ws, bs, x), atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            MLPQNet((4, 2)).forward(np.zeros(3))

    def test_init_bounds(self):
        net = MLPQNet.initialized((4, 64, 2), RngStream(1))
        assert np.all(np.abs(net.params[0]) <= 0.5) and np.all(np.abs(net.params[2]) <= 1 / 8)
        assert net.n_params == 4 * 64 + 64 + 64 * 2 + 2

    def test_flat_round_trip(self):
        net = MLPQNet.initialized((3, 5, 2), RngStream(2))
        other = MLPQNet((3, 5, 2))
        other.set_flat(net.get_flat())
        for a, b in zip(net.params, other.params):
            np.testing.assert_array_equal(a, b)


class TestTDLoss:
    def test_zero_when_predictions_match(self):
        net = MLPQNet((2, 3, 2))
        batch = Batch(np.ones((4, 2)), np.zeros(4, dtype=int), np.zeros(4), np.ones((4, 2)),
                      np.zeros(4, dtype=bool))
        loss, grads = td_loss(net, net.copy(), batch, 0.99)
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads)

    def test_single_terminal(self):
        net = MLPQNet((2, 2))
        batch = Batch(np.ones((1, 2)), np.array([1]), np.array([1.0]), np.ones((1, 2)),
                      np.array([True]))
        loss, _ = td_loss(net, net, batch, 0.99)
        assert loss == 1.0

    def test_huber_matches_mse_for_small_errors(self):
        net = MLPQNet((2, 2))
        batch = Batch(np.ones((1, 2)), np.array([1]), np.array([0.5]), np.ones((1, 2)),
                      np.array([True]))
        mse, _ = td_loss(net, net, batch, 0.99)
        huber, _ = td_loss(net, net, batch, 0.99, loss="huber")
        assert huber == pytest.approx(mse / 2)
        with pytest.raises(ConfigurationError):
            td_loss(net, net, batch, 0.99, loss="l1")

    @pytest.mark.parametrize("loss", ["mse", "huber"])
    def test_tiny_net_gradient(self, loss):
        rng = RngStream(3)
        net = MLPQNet.initialized((1, 2), rng)
        assert net.n_params == 4
        target = MLPQNet.initialized((1, 2), rng)
        batch = random_batch(rng, 5, 1, 2)
        _, grads = td_loss(net, target, batch, 0.9, loss)
        analytic = np.concatenate([g.ravel() for g in grads])

        def f(theta):
            probe = net.copy()
            probe.set_flat(np.array(theta))
            return td_loss(probe, target, batch, 0.9, loss)[0]

        numeric = central_difference(f, net.get_flat().tolist(), h=1e-4)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)

    def test_non_finite_loss(self):
        net = MLPQNet((2, 2))
        batch = Batch(np.ones((1, 2)), np.array([0]), np.array([np.inf]), np.ones((1, 2)),
                      np.array([True]))
        with pytest.raises(NumericFault):
            td_loss(net, net, batch, 0.99)

    def test_empty_batch(self):
        net = MLPQNet((2, 2))
        empty = Batch(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, 2)),
                      np.zeros(0, dtype=bool))
        with pytest.raises(ContractViolation):
            td_loss(net, net, empty, 0.99)


def test_clip_grad_norm():
    grads = [np.array([3.0, 0.0]), np.array([4.0])]
    assert clip_grad_norm(grads, 10.0) == 5.0
    np.testing.assert_array_equal(grads[0], [3.0, 0.0])
    clip_grad_norm(grads, 1.0)
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    assert total == pytest.approx(1.0, rel=1e-5)


def test_adam_first_step():
    p = [np.array([1.0, -2.0])]
    opt = Adam(p, lr=0.1)
    opt.step([np.array([0.5, -4.0])])
    # Bias-corrected first step moves each coordinate by lr * g / (|g| + eps).
    np.testing.assert_allclose(p[0], [1.0 - 0.1, -2.0 + 0.1], atol=1e-7)
    assert opt.t == 1


class TestReplay:
    def test_ring(self):
        buf = ReplayBuffer(3, 1)
        for i in range(5):
            buf.add([i], 0, float(i), [i + 1], False)
        assert len(buf) == 3
        assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]

    def test_batch_without_replacement(self):
        buf = ReplayBuffer(50, 1)
        for i in range(50):
            buf.add([i], 0, 0.0, [i], False)
        rng = RngStream(0)
        for _ in range(100):
            idx = buf.sample_indices(32, rng)
            assert len(set(idx.tolist())) == 32

    def test_uniform_slots(self):
        buf = ReplayBuffer(20, 1)
        for i in range(20):
            buf.add([i], 0, 0.0, [i], False)
        rng = RngStream(1)
        counts = np.zeros(20)
        for _ in range(5000):
            counts[buf.sample_indices(4, rng)] += 1
        assert chisquare(counts).pvalue > 1e-4


class TestConfig:
    def test_epsilon_schedule(self):
        c = DQNConfig()
        assert c.epsilon(0) == 1.0
        assert c.epsilon(5000) == pytest.approx(0.525)
        assert c.epsilon(10_000) == pytest.approx(0.05)
        assert c.epsilon(50_000) == pytest.approx(0.05)

    def test_defaults(self):
        c = DQNConfig()
        assert (c.lr, c.batch_size, c.buffer_size, c.gamma) == (1e-4, 32, 50_000, 0.99)
        assert (c.train_freq, c.grad_steps, c.target_update_interval) == (4, 1, 10_000)
        assert c.hidden == (64, 64) and c.learning_starts == 1000

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            DQNConfig(gamma=1.0)
        with pytest.raises(ConfigurationError):
            DQNConfig(batch_size=64, buffer_size=10)


SMALL = DQNConfig(learning_starts=50, target_update_interval=100, eval_interval=200, n_eval=1,
                  buffer_size=500, hidden=(16, 16))


class TestTraining:
    def test_target_network_staleness(self, monkeypatch):
        seen = []
        real = dqn_mod.td_loss

        def spy(net, target, batch, gamma, loss="mse"):
            seen.append(target.get_flat().copy())
            return real(net, target, batch, gamma, loss)

        monkeypatch.setattr(dqn_mod, "td_loss", spy)
        train_dqn(CartPole(), None, SMALL, 600, RngStream(0))
        # Gradient steps happen every 4 env steps after step 50; the target is
        # recopied every 100 steps, i.e. between the 25-step windows below.
        steps = [s for s in range(51, 601) if s % 4 == 0]
        windows = {}
        for s, flat in zip(steps, seen):
            windows.setdefault((s - 1) // 100, []).append(flat)
        for flats in windows.values():
            assert all(np.array_equal(flats[0], f) for f in flats)
        firsts = [w[0] for _, w in sorted(windows.items())]
        assert not np.array_equal(firsts[1], firsts[2])

    def test_shaping_applied_once_at_storage(self, monkeypatch):
        stored, sampled = [], []
        real_add, real_loss = ReplayBuffer.add, dqn_mod.td_loss

        def add(self, obs, action, reward, next_obs, terminal):
            stored.append(reward)
            return real_add(self, obs, action, reward, next_obs, terminal)

        def loss(net, target, batch, gamma, loss="mse"):
            sampled.extend(batch.rewards.tolist())
            return real_loss(net, target, batch, gamma, loss)

        monkeypatch.setattr(ReplayBuffer, "add", add)
        monkeypatch.setattr(dqn_mod, "td_loss", loss)
        spec = PotentialSpec(AbsCarVelocity(), exp_base=32.0, bias=1.0, gamma=0.99)
        train_dqn(MountainCar(), spec, SMALL, 400, RngStream(1))
        assert set(sampled) <= set(stored)
        # Non-terminal shaped rewards sit near r + b = 0 given bias 1.
        assert abs(np.median(stored)) < 1.0

    def test_deterministic(self):
        _, a = train_dqn(CartPole(), None, SMALL, 400, RngStream(2))
        _, b = train_dqn(CartPole(), None, SMALL, 400, RngStream(2))
        assert a.equals(b)

    def test_numeric_fault_carries_metadata(self, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericFault("non-finite TD loss")

        monkeypatch.setattr(dqn_mod, "td_loss", boom)
        with pytest.raises(NumericFault) as err:
            train_dqn(CartPole(), None, SMALL, 400, RngStream(0), {"seed": 4})
        assert err.value.metadata["seed"] == 4 and err.value.metadata["step"] == 52

    def test_probe_range(self):
        net = MLPQNet.initialized((4, 64, 64, 2), RngStream(0))
        lo, hi = probe_q_range(net, CartPole(), 500, RngStream(1))
        assert -1.0 <= lo <= hi <= 1.0


def test_checkpoint_round_trip(tmp_path):
    net = MLPQNet.initialized((4, 8, 2), RngStream(5))
    p = tmp_path / "net.bin"
    save_checkpoint(net, p)
    header = p.read_bytes().split(b"\n", 1)[0].decode()
    assert '"format": "pbrs-mlpq-v1"' in header and '"<f8"' in header
    back = load_checkpoint(p)
    x = np.array([0.1, -0.2, 0.3, 0.4])
    np.testing.assert_array_equal(net.forward(x), back.forward(x))


class TestEstimator:
    def test_params_and_clone(self):
        agent = DQNAgent(total_steps=123, lr=3e-4)
        assert clone(agent).get_params() == agent.get_params()
        assert agent.get_params()["total_steps"] == 123

    def test_fit_predict(self):
        agent = DQNAgent(total_steps=400, learning_starts=50, target_update_interval=100,
                         eval_interval=200, n_eval=1, buffer_size=500).fit(CartPole())
        X = np.zeros((3, 4))
        assert agent.decision_function(X).shape == (3, 2)
        assert agent.predict(X).shape == (3,)
        with pytest.raises(ValueError):
            agent.predict(np.zeros((3, 5)))
