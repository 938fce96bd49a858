import itertools

import numpy as np
import pytest
from scipy.stats import spearmanr

from marlqas import qmix
from marlqas.nn import TrainingError
from marlqas.qmix import (
    EpisodeRecord,
    QmixLearner,
    ReplayBuffer,
    TrainerConfig,
    agent_input,
    agent_q,
    epsilon,
    init_agent,
    init_mixer,
    make_batch,
    mix,
    mix_backward,
    select_actions,
)

from oracles import finite_diff, rel_err


def random_mixer(rng, m, S, k=8, scale=1.0):
    p = init_mixer(rng, m, S, k)
    for key in p:
        p[key] = scale * rng.normal(size=p[key].shape)
    return p


def random_episode(rng, L, m, obs_dim, S, nA):
    dones = np.zeros(L)
    dones[-1] = 1
    return EpisodeRecord(
        rng.normal(size=(L, m, obs_dim)), rng.normal(size=(L, S)),
        rng.integers(0, nA, size=(L, m)), rng.normal(size=L), dones, nA - 1,
    )


def small_learner(rng, m, nA=3, obs_dim=4, S=5, **cfg):
    c = TrainerConfig(hidden=6, mixing=5, **cfg)
    learner = QmixLearner.create(rng, m, nA, obs_dim, S, c)
    # nonzero biases so every parameter has a visible effect
    for p in (learner.agent, learner.mixer or {}):
        for k in p:
            p[k] += 0.3 * rng.normal(size=p[k].shape)
    return learner


class TestMixer:
    def test_monotone_in_every_agent(self):
        rng = np.random.default_rng(1)
        worst = np.inf
        for _ in range(100):
            m, S = int(rng.integers(2, 5)), int(rng.integers(1, 7))
            p = random_mixer(rng, m, S)
            q = rng.normal(size=(1, m)) * 3
            s = rng.normal(size=(1, S))
            for i in range(m):
                dq = np.zeros_like(q)
                dq[0, i] = 1e-6
                d = (mix(q + dq, s, p)[0] - mix(q - dq, s, p)[0])[0] / 2e-6
                worst = min(worst, d)
        assert worst >= -1e-9

    def test_zero_hypernets_give_zero(self):
        rng = np.random.default_rng(0)
        p = {k: np.zeros_like(v) for k, v in init_mixer(rng, 3, 4, 5).items()}
        qt, _ = mix(rng.normal(size=(7, 3)), rng.normal(size=(7, 4)), p)
        np.testing.assert_array_equal(qt, 0.0)

    def test_gradients(self):
        rng = np.random.default_rng(2)
        p = random_mixer(rng, 3, 4, k=5, scale=0.7)
        q = rng.normal(size=(6, 3))
        s = rng.normal(size=(6, 4))
        g = rng.normal(size=6)
        f = lambda: float(np.sum(g * mix(q, s, p)[0]))
        grads, dq = mix_backward(g, mix(q, s, p)[1], p)
        for k in p:
            assert rel_err(grads[k], finite_diff(f, p[k])) < 1e-5, k
        assert rel_err(dq, finite_diff(f, q)) < 1e-5

    def test_greedy_decomposition_matches_joint_argmax(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m, nA = int(rng.integers(1, 4)), int(rng.integers(2, 4))
            p = random_mixer(rng, max(m, 1), 3)
            qs = rng.normal(size=(m, nA))
            s = rng.normal(size=(1, 3))
            joint = list(itertools.product(range(nA), repeat=m))
            vals = [mix(qs[np.arange(m), list(a)][None], s, p)[0][0] for a in joint]
            best = max(vals)
            greedy = qs.argmax(axis=1)
            assert mix(qs[np.arange(m), greedy][None], s, p)[0][0] >= best - 1e-12


class TestAgent:
    def test_output_width(self):
        rng = np.random.default_rng(0)
        p = init_agent(rng, 10, 9, 16)
        q, h, _ = agent_q(rng.normal(size=(4, 10)), np.zeros((4, 16)), p)
        assert q.shape == (4, 9) and h.shape == (4, 16)

    def test_agent_input_one_hot(self):
        x = agent_input(np.zeros((2, 3)), np.array([0, 2]), 4)
        np.testing.assert_array_equal(x[:, 3:], [[1, 0, 0, 0], [0, 0, 1, 0]])

    def test_shared_weights(self):
        # identical inputs for two agents give identical values
        rng = np.random.default_rng(1)
        p = init_agent(rng, 5, 3, 8)
        x = np.tile(rng.normal(size=5), (2, 1))
        q, _, _ = agent_q(x, np.zeros((2, 8)), p)
        np.testing.assert_array_equal(q[0], q[1])


class TestEpsilon:
    def test_pointwise(self):
        cfg = TrainerConfig()
        for t in range(0, 1000, 7):
            assert epsilon(t, cfg) == pytest.approx(max(0.05, 1 - 0.95 * t / 600), abs=1e-15)

    def test_endpoints(self):
        cfg = TrainerConfig()
        assert epsilon(0, cfg) == 1.0 and epsilon(600, cfg) == 0.05 and epsilon(10**6, cfg) == 0.05

    def test_uniform_when_fully_exploring(self):
        rng = np.random.default_rng(0)
        q = np.tile(np.arange(5.0), (4000, 1))
        counts = np.bincount(select_actions(q, 1.0, rng), minlength=5)
        # chi-square with 4 dof, 0.999 quantile about 18.5
        chi2 = np.sum((counts - 800) ** 2 / 800)
        assert chi2 < 18.5

    def test_greedy_when_zero(self):
        rng = np.random.default_rng(0)
        q = np.array([[0.0, 2.0, 1.0], [5.0, 5.0, 1.0]])
        np.testing.assert_array_equal(select_actions(q, 0.0, rng), [1, 0])

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            select_actions(np.zeros((1, 2)), 1.5, np.random.default_rng())


class TestReplay:
    def test_eviction(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(3)
        eps = [random_episode(rng, 2, 1, 2, 2, 3) for _ in range(5)]
        for e in eps:
            buf.add(e)
        assert len(buf) == 3 and buf.total_added == 5
        sampled = buf.sample(50, np.random.default_rng(1))
        assert all(any(s is e for e in eps[2:]) for s in sampled)

    def test_sampling_reproducible(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(10)
        for _ in range(6):
            buf.add(random_episode(rng, 2, 1, 2, 2, 3))
        a = buf.sample(4, np.random.default_rng(5))
        b = buf.sample(4, np.random.default_rng(5))
        assert all(x is y for x, y in zip(a, b))

    def test_episode_validation(self):
        with pytest.raises(ValueError):
            EpisodeRecord(np.zeros((2, 1, 1)), np.zeros((2, 1)), np.zeros((2, 1), int),
                          np.zeros(2), np.array([1.0, 1.0]), 0)

    def test_prev_actions(self):
        rng = np.random.default_rng(0)
        e = random_episode(rng, 3, 2, 2, 2, 5)
        np.testing.assert_array_equal(e.prev_actions[0], [4, 4])
        np.testing.assert_array_equal(e.prev_actions[1:], e.actions[:-1])

    def test_padding_mask(self):
        rng = np.random.default_rng(0)
        b = make_batch([random_episode(rng, 2, 2, 3, 4, 3), random_episode(rng, 4, 2, 3, 4, 3)], 3)
        assert b.inputs.shape == (4, 2, 2, 6)
        np.testing.assert_array_equal(b.mask[:, 0], [1, 1, 0, 0])


class TestLearner:
    def test_td_targets_by_enumeration(self):
        rng = np.random.default_rng(4)
        L = small_learner(rng, 2)
        eps = [random_episode(rng, 3, 2, 4, 5, 3), random_episode(rng, 2, 2, 4, 5, 3)]
        batch = make_batch(eps, 3)
        y = L.td_targets(batch)
        q_all, _ = L.unroll(batch.inputs, L.target_agent)
        for b, e in enumerate(eps):
            for t in range(len(e)):
                if e.dones[t]:
                    assert y[t, b] == e.rewards[t]
                    continue
                # joint max by enumeration through the target mixer
                best = max(
                    L.q_tot(q_all[t + 1, b][np.arange(2), list(a)][None], batch.states[t + 1, b][None], True)[0][0]
                    for a in itertools.product(range(3), repeat=2)
                )
                assert y[t, b] == pytest.approx(e.rewards[t] + 0.99 * best, abs=1e-12)

    @pytest.mark.parametrize("m", [1, 3])
    def test_loss_gradient(self, m):
        rng = np.random.default_rng(5)
        L = small_learner(rng, m)
        batch = make_batch([random_episode(rng, 3, m, 4, 5, 3), random_episode(rng, 2, m, 4, 5, 3)], 3)
        _, grads = L.loss_and_grads(batch)
        f = lambda: L.loss_and_grads(batch)[0]
        for k, v in L.params.items():
            assert rel_err(grads[k], finite_diff(f, v)) < 1e-5, k

    def test_single_agent_is_dqn(self):
        rng = np.random.default_rng(6)
        L = small_learner(rng, 1)
        assert L.mixer is None
        e = random_episode(rng, 3, 1, 4, 5, 3)
        batch = make_batch([e], 3)
        q_live, _ = L.unroll(batch.inputs, L.agent)
        q_tgt, _ = L.unroll(batch.inputs, L.target_agent)
        y = e.rewards.copy()
        y[:-1] += 0.99 * q_tgt[1:, 0, 0].max(axis=-1)
        chosen = q_live[np.arange(3), 0, 0, e.actions[:, 0]]
        assert L.loss_and_grads(batch)[0] == pytest.approx(np.mean((chosen - y) ** 2), abs=1e-12)

    def test_target_sync(self):
        rng = np.random.default_rng(7)
        L = small_learner(rng, 2, target_sync_every=3)
        for k in L.agent:
            L.agent[k] = L.agent[k] + 1.0
        assert not L.maybe_sync_target(2)
        assert not np.array_equal(L.agent["fc1.W"], L.target_agent["fc1.W"])
        assert L.maybe_sync_target(3)
        x = rng.normal(size=(2, 7))
        live = L.greedy_q(x, np.zeros((2, 6)))[0]
        tgt = L.greedy_q(x, np.zeros((2, 6)), target=True)[0]
        assert np.array_equal(live, tgt)
        L.agent["fc1.W"] += 1
        assert not np.array_equal(L.agent["fc1.W"], L.target_agent["fc1.W"])

    def test_train_step_reduces_loss_on_fixed_batch(self):
        rng = np.random.default_rng(8)
        L = small_learner(rng, 2, lr=1e-2, batch_episodes=4)
        buf = ReplayBuffer(4)
        for _ in range(4):
            buf.add(random_episode(rng, 3, 2, 4, 5, 3))
        batch = make_batch(buf.episodes, 3)
        before = L.loss_and_grads(batch)[0]
        for _ in range(30):
            L.train_step(buf, np.random.default_rng(0))
        assert L.updates == 30
        assert L.loss_and_grads(batch)[0] < before

    def test_loss_trends_down_on_fixed_one_step_episode(self):
        rng = np.random.default_rng(12)
        L = small_learner(rng, 2, lr=1e-3, batch_episodes=1, min_episodes=1)
        buf = ReplayBuffer(1)
        buf.add(random_episode(rng, 1, 2, 4, 5, 3))
        losses = [L.train_step(buf, rng) for _ in range(100)]
        assert spearmanr(np.arange(100), losses)[0] < -0.8
        assert losses[-1] < losses[0]

    def test_divergence_raises(self):
        rng = np.random.default_rng(9)
        L = small_learner(rng, 2)
        buf = ReplayBuffer(2)
        e = random_episode(rng, 2, 2, 4, 5, 3)
        e.rewards[:] = np.nan
        buf.add(e)
        with pytest.raises(TrainingError):
            L.train_step(buf, rng)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainerConfig(gamma=1.0)
        with pytest.raises(ValueError):
            TrainerConfig(eps_end=2.0)
