"""QMIX value decomposition, episode replay and the single-agent DQN variant.

Agent network (weights shared by all agents):
    x -> Linear(64) -> ReLU -> GRU(64) -> Linear(|A|)
Mixer, conditioned on the global state s:
    W1 = |Linear(s)| (m x 64), b1 = Linear(s), W2 = |Linear(s)| (64),
    b2 = Linear(ReLU(Linear(s)))
    Q_tot = W2 . ReLU(q @ W1 + b1) + b2
With one agent the mixer is dropped and Q_tot is the chosen action value,
which is plain DQN with a recurrent Q network.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import nn


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    batch_episodes: int = 32
    min_episodes: int = 32
    buffer_capacity: int = 5000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 600
    target_sync_every: int = 150
    hidden: int = 64
    mixing: int = 64
    act_with_target: bool = True

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        if self.batch_episodes < 1 or self.min_episodes < 1:
            raise ValueError("batch sizes must be positive")


def epsilon(t: int, cfg: TrainerConfig) -> float:
    """Linear anneal from eps_start to eps_end over eps_anneal_steps steps."""
    if cfg.eps_anneal_steps <= 0:
        return cfg.eps_end
    if t >= cfg.eps_anneal_steps:
        return cfg.eps_end
    frac = t / cfg.eps_anneal_steps
    return max(cfg.eps_end, cfg.eps_start - (cfg.eps_start - cfg.eps_end) * frac)


# -- networks ------------------------------------------------------------------


def init_agent(rng: np.random.Generator, n_in: int, n_actions: int, hidden: int = 64) -> dict[str, np.ndarray]:
    p = {}
    p["fc1.W"], p["fc1.b"] = nn.init_linear(rng, n_in, hidden)
    p.update(nn.init_gru(rng, hidden, hidden, prefix="gru."))
    p["fc2.W"], p["fc2.b"] = nn.init_linear(rng, hidden, n_actions)
    return p


def init_mixer(rng: np.random.Generator, n_agents: int, state_dim: int, mixing: int = 64) -> dict[str, np.ndarray]:
    p = {}
    p["hyp_w1.W"], p["hyp_w1.b"] = nn.init_linear(rng, state_dim, n_agents * mixing)
    p["hyp_b1.W"], p["hyp_b1.b"] = nn.init_linear(rng, state_dim, mixing)
    p["hyp_w2.W"], p["hyp_w2.b"] = nn.init_linear(rng, state_dim, mixing)
    p["hyp_b2a.W"], p["hyp_b2a.b"] = nn.init_linear(rng, state_dim, mixing)
    p["hyp_b2b.W"], p["hyp_b2b.b"] = nn.init_linear(rng, mixing, 1)
    return p


def agent_q(x: np.ndarray, h: np.ndarray, p: dict[str, np.ndarray]):
    """Q-values and next hidden state for a batch of agent inputs.

    ``x`` is the observation with the previous action's one-hot appended.
    Returns (q, h_new, cache).
    """
    a_pre = nn.linear_forward(x, p["fc1.W"], p["fc1.b"])
    a = nn.relu(a_pre)
    h_new, gcache = nn.gru_forward(a, h, p, prefix="gru.")
    q = nn.linear_forward(h_new, p["fc2.W"], p["fc2.b"])
    return q, h_new, (x, a_pre, a, gcache, h_new)


def agent_input(obs: np.ndarray, prev_action: np.ndarray, n_actions: int) -> np.ndarray:
    onehot = np.zeros(prev_action.shape + (n_actions,))
    np.put_along_axis(onehot, prev_action[..., None], 1.0, axis=-1)
    return np.concatenate([obs, onehot], axis=-1)


def mix(q: np.ndarray, s: np.ndarray, p: dict[str, np.ndarray]):
    """Q_tot for rows of agent values ``q`` (N, m) and states ``s`` (N, S).

    Returns (q_tot of shape (N,), cache).
    """
    N, m = q.shape
    w1_raw = nn.linear_forward(s, p["hyp_w1.W"], p["hyp_w1.b"])
    W1 = nn.abs_act(w1_raw).reshape(N, m, -1)
    b1 = nn.linear_forward(s, p["hyp_b1.W"], p["hyp_b1.b"])
    hid_pre = np.einsum("nm,nmk->nk", q, W1) + b1
    hid = nn.relu(hid_pre)
    w2_raw = nn.linear_forward(s, p["hyp_w2.W"], p["hyp_w2.b"])
    W2 = nn.abs_act(w2_raw)
    v_pre = nn.linear_forward(s, p["hyp_b2a.W"], p["hyp_b2a.b"])
    v = nn.relu(v_pre)
    b2 = nn.linear_forward(v, p["hyp_b2b.W"], p["hyp_b2b.b"])[:, 0]
    q_tot = np.sum(hid * W2, axis=1) + b2
    return q_tot, (q, s, w1_raw, W1, hid_pre, hid, w2_raw, W2, v_pre, v)


def mix_backward(g: np.ndarray, cache, p: dict[str, np.ndarray]):
    """Gradients of sum(g * q_tot). Returns (param grads, dq)."""
    q, s, w1_raw, W1, hid_pre, hid, w2_raw, W2, v_pre, v = cache
    grads = {}
    g_hid = g[:, None] * W2
    g_w2_raw = nn.abs_backward(w2_raw, g[:, None] * hid)
    grads["hyp_w2.W"], grads["hyp_w2.b"], _ = nn.linear_backward(s, p["hyp_w2.W"], g_w2_raw)
    grads["hyp_b2b.W"], grads["hyp_b2b.b"], g_v = nn.linear_backward(v, p["hyp_b2b.W"], g[:, None])
    g_v_pre = nn.relu_backward(v_pre, g_v)
    grads["hyp_b2a.W"], grads["hyp_b2a.b"], _ = nn.linear_backward(s, p["hyp_b2a.W"], g_v_pre)
    g_hid_pre = nn.relu_backward(hid_pre, g_hid)
    grads["hyp_b1.W"], grads["hyp_b1.b"], _ = nn.linear_backward(s, p["hyp_b1.W"], g_hid_pre)
    dq = np.einsum("nk,nmk->nm", g_hid_pre, W1)
    g_W1 = q[:, :, None] * g_hid_pre[:, None, :]
    g_w1_raw = nn.abs_backward(w1_raw, g_W1.reshape(w1_raw.shape))
    grads["hyp_w1.W"], grads["hyp_w1.b"], _ = nn.linear_backward(s, p["hyp_w1.W"], g_w1_raw)
    return grads, dq


def select_actions(q: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Independent epsilon-greedy per agent row of ``q`` (m, |A|); ties go to the lowest index."""
    if not 0 <= eps <= 1:
        raise ValueError("epsilon must be in [0, 1]")
    greedy = np.argmax(q, axis=-1)
    explore = rng.random(q.shape[0]) < eps
    random_actions = rng.integers(0, q.shape[-1], size=q.shape[0])
    return np.where(explore, random_actions, greedy)


# -- replay --------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    """One episode of length L.

    obs: (L, m, obs_dim) observations before each step; states: (L, S);
    actions: (L, m); rewards, dones: (L,). The step-t agent input uses the
    action taken at t - 1 (the skip token at t = 0).
    """

    obs: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    skip_token: int

    def __post_init__(self):
        L = len(self.rewards)
        if L == 0 or self.obs.shape[0] != L or self.states.shape[0] != L or self.actions.shape[0] != L:
            raise ValueError("inconsistent episode lengths")
        if not self.dones[-1] or np.any(self.dones[:-1]):
            raise ValueError("an episode has exactly one terminal step, at its end")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def prev_actions(self) -> np.ndarray:
        prev = np.empty_like(self.actions)
        prev[0] = self.skip_token
        prev[1:] = self.actions[:-1]
        return prev


class ReplayBuffer:
    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self.episodes: list[EpisodeRecord] = []
        self._next = 0
        self.total_added = 0

    def __len__(self) -> int:
        return len(self.episodes)

    def add(self, ep: EpisodeRecord) -> None:
        if len(self.episodes) < self.capacity:
            self.episodes.append(ep)
        else:
            self.episodes[self._next] = ep
        self._next = (self._next + 1) % self.capacity
        self.total_added += 1

    def sample(self, k: int, rng: np.random.Generator) -> list[EpisodeRecord]:
        """``k`` episodes uniformly at random (with replacement when ``k`` exceeds the size)."""
        idx = rng.choice(len(self.episodes), size=k, replace=k > len(self.episodes))
        return [self.episodes[i] for i in idx]


@dataclass
class Batch:
    inputs: np.ndarray    # (T, B, m, in)
    states: np.ndarray    # (T, B, S)
    actions: np.ndarray   # (T, B, m)
    rewards: np.ndarray   # (T, B)
    dones: np.ndarray     # (T, B)
    mask: np.ndarray      # (T, B)


def make_batch(episodes: list[EpisodeRecord], n_actions: int) -> Batch:
    T = max(len(e) for e in episodes)
    B = len(episodes)
    m, obs_dim = episodes[0].obs.shape[1:]
    S = episodes[0].states.shape[1]
    inputs = np.zeros((T, B, m, obs_dim + n_actions))
    states = np.zeros((T, B, S))
    actions = np.zeros((T, B, m), dtype=int)
    rewards = np.zeros((T, B))
    dones = np.ones((T, B))
    mask = np.zeros((T, B))
    for b, e in enumerate(episodes):
        L = len(e)
        inputs[:L, b] = agent_input(e.obs, e.prev_actions, n_actions)
        states[:L, b] = e.states
        actions[:L, b] = e.actions
        rewards[:L, b] = e.rewards
        dones[:L, b] = e.dones
        mask[:L, b] = 1.0
    return Batch(inputs, states, actions, rewards, dones, mask)


# -- learner -------------------------------------------------------------------


@dataclass
class QmixLearner:
    """Live and target parameters plus the optimizer state.

    ``mixer`` is None for the single-agent (DQN) case.
    """

    n_agents: int
    n_actions: int
    agent: dict[str, np.ndarray]
    mixer: dict[str, np.ndarray] | None
    cfg: TrainerConfig
    target_agent: dict[str, np.ndarray] = field(default_factory=dict)
    target_mixer: dict[str, np.ndarray] | None = None
    adam: nn.AdamState = field(default_factory=nn.AdamState)
    updates: int = 0

    @classmethod
    def create(cls, rng: np.random.Generator, n_agents: int, n_actions: int, obs_dim: int,
               state_dim: int, cfg: TrainerConfig) -> QmixLearner:
        agent = init_agent(rng, obs_dim + n_actions, n_actions, cfg.hidden)
        mixer = init_mixer(rng, n_agents, state_dim, cfg.mixing) if n_agents > 1 else None
        learner = cls(n_agents, n_actions, agent, mixer, cfg, adam=nn.AdamState(lr=cfg.lr))
        learner.sync_target()
        return learner

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {f"agent.{k}": v for k, v in self.agent.items()}
        if self.mixer is not None:
            out.update({f"mixer.{k}": v for k, v in self.mixer.items()})
        return out

    def sync_target(self) -> None:
        self.target_agent = copy.deepcopy(self.agent)
        self.target_mixer = copy.deepcopy(self.mixer)

    def maybe_sync_target(self, episode_counter: int) -> bool:
        if episode_counter > 0 and episode_counter % self.cfg.target_sync_every == 0:
            self.sync_target()
            return True
        return False

    def q_tot(self, q_chosen: np.ndarray, s: np.ndarray, target: bool = False):
        mixer = self.target_mixer if target else self.mixer
        if mixer is None:
            return q_chosen[:, 0], None
        return mix(q_chosen, s, mixer)

    def unroll(self, inputs: np.ndarray, params: dict[str, np.ndarray]):
        """Run the agent network over (T, B, m, in) from zero hidden states."""
        T, B, m, _ = inputs.shape
        h = np.zeros((B * m, self.cfg.hidden))
        qs, caches = [], []
        for t in range(T):
            q, h, cache = agent_q(inputs[t].reshape(B * m, -1), h, params)
            qs.append(q.reshape(B, m, -1))
            caches.append(cache)
        return np.stack(qs), caches

    def td_targets(self, batch: Batch) -> np.ndarray:
        """y_t = r_t + gamma * Q_tot^-(s_{t+1}, greedy target actions), y_t = r_t at terminal steps."""
        T, B, m, _ = batch.inputs.shape
        q_next_all, _ = self.unroll(batch.inputs, self.target_agent)
        y = batch.rewards.copy()
        if T > 1:
            qmax = q_next_all[1:].max(axis=-1)  # (T-1, B, m)
            boot, _ = self.q_tot(qmax.reshape(-1, m), batch.states[1:].reshape((T - 1) * B, -1), target=True)
            boot = boot.reshape(T - 1, B)
            y[:-1] += self.cfg.gamma * (1.0 - batch.dones[:-1]) * boot
        return y

    def loss_and_grads(self, batch: Batch):
        """Mean squared TD error over valid steps and its gradient."""
        T, B, m, _ = batch.inputs.shape
        y = self.td_targets(batch)
        q_all, caches = self.unroll(batch.inputs, self.agent)
        chosen = np.take_along_axis(q_all, batch.actions[..., None], axis=-1)[..., 0]  # (T, B, m)
        qt, mcache = self.q_tot(chosen.reshape(T * B, m), batch.states.reshape(T * B, -1))
        qt = qt.reshape(T, B)
        n_valid = batch.mask.sum()
        err = (qt - y) * batch.mask
        loss = float(np.sum(err ** 2) / n_valid)
        g_qt = (2.0 / n_valid) * err
        grads: dict[str, np.ndarray] = {}
        if self.mixer is not None:
            mgrads, dq = mix_backward(g_qt.reshape(-1), mcache, self.mixer)
            grads.update({f"mixer.{k}": v for k, v in mgrads.items()})
            dq = dq.reshape(T, B, m)
        else:
            dq = g_qt[:, :, None]
        g_q_all = np.zeros_like(q_all)
        np.put_along_axis(g_q_all, batch.actions[..., None], dq[..., None], axis=-1)
        agrads = self._agent_backward(g_q_all, caches)
        grads.update({f"agent.{k}": v for k, v in agrads.items()})
        return loss, grads

    def _agent_backward(self, g_q_all: np.ndarray, caches) -> dict[str, np.ndarray]:
        p = self.agent
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        T, B, m, _ = g_q_all.shape
        g_h = np.zeros((B * m, self.cfg.hidden))
        for t in reversed(range(T)):
            x, a_pre, a, gcache, h_new = caches[t]
            gq = g_q_all[t].reshape(B * m, -1)
            gW, gb, gh_out = nn.linear_backward(h_new, p["fc2.W"], gq)
            grads["fc2.W"] += gW
            grads["fc2.b"] += gb
            g_h = g_h + gh_out
            ggru, ga, g_h = nn.gru_backward(gcache, g_h, p, prefix="gru.")
            for k, v in ggru.items():
                grads[k] += v
            g_a_pre = nn.relu_backward(a_pre, ga)
            gW, gb, _ = nn.linear_backward(x, p["fc1.W"], g_a_pre)
            grads["fc1.W"] += gW
            grads["fc1.b"] += gb
        return grads

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        episodes = buffer.sample(self.cfg.batch_episodes, rng)
        loss, grads = self.loss_and_grads(make_batch(episodes, self.n_actions))
        if not np.isfinite(loss):
            raise nn.TrainingError(f"non-finite loss after {self.updates} updates")
        params = self.params
        nn.adam_step(params, grads, self.adam)
        self.updates += 1
        return loss

    def greedy_q(self, x: np.ndarray, h: np.ndarray, target: bool = False):
        return agent_q(x, h, self.target_agent if target else self.agent)[:2]
