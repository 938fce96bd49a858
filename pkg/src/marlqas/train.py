"""The architecture-search training loop for one seed.

One training step is one environment step followed by one gradient update
(once the replay buffer holds ``min_episodes`` episodes). After every episode
that saw an update, the current network is rolled out greedily on a separate
evaluation environment; the first time that rollout yields a satisfactory
circuit (threshold met on every training and test instance) the run has
converged and the update, environment-step and episode counters are
recorded.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn, seeding
from .circuit import Circuit, cnot_count, param_count
from .env import EnvConfig, EnvError, Problem, QASEnvironment, SystemLayout, evaluate_circuit
from .qmix import EpisodeRecord, QmixLearner, ReplayBuffer, TrainerConfig, agent_input, epsilon, select_actions

log = logging.getLogger(__name__)

LOG_COLUMNS = ("episode", "env_step", "update", "epsilon", "reward", "eta", "loss", "wall_time")


@dataclass
class Milestone:
    updates: int
    env_steps: int
    episodes: int


@dataclass
class CandidateCircuit:
    circuit: Circuit
    train_etas: list[float]
    test_etas: list[float]
    source: str
    milestone: Milestone
    train_params: list[np.ndarray] = field(default_factory=list)
    test_params: list[np.ndarray] = field(default_factory=list)

    @property
    def score(self) -> tuple[float, int]:
        etas = self.test_etas or self.train_etas
        return (float(np.mean(etas)), -cnot_count(self.circuit))

    def summary(self) -> dict:
        return {
            "circuit": self.circuit.to_text(),
            "n_2q": cnot_count(self.circuit),
            "n_par": param_count(self.circuit),
            "steps": self.circuit.steps,
            "train_etas": self.train_etas,
            "test_etas": self.test_etas,
            "train_params": [p.tolist() for p in self.train_params],
            "test_params": [p.tolist() for p in self.test_params],
            "source": self.source,
            "found_at": vars(self.milestone),
        }


@dataclass
class TrainingResult:
    seed: int
    layout: SystemLayout
    rows: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    first_found: Milestone | None = None
    converged: Milestone | None = None
    best: CandidateCircuit | None = None
    totals: Milestone | None = None
    learner: QmixLearner | None = None


@dataclass
class RunLimits:
    max_env_steps: int = 3000
    stop_at_convergence: bool = True
    keep_traces: int = 0


def _satisfies(train_etas, test_etas, thr) -> bool:
    return all(e >= thr for e in train_etas) and all(e >= thr for e in test_etas)


class _Rollout:
    """Step-by-step episode driver shared by training and greedy evaluation."""

    def __init__(self, env: QASEnvironment, learner: QmixLearner):
        self.env = env
        self.learner = learner

    def run(self, eps_fn, rng, act_with_target: bool, on_step=None):
        env, learner = self.env, self.learner
        L = env.layout
        st = env.reset()
        h = np.zeros((L.m, learner.cfg.hidden))
        obs_l, states_l, acts_l, rews_l, dones_l, infos = [], [], [], [], [], []
        done = False
        while not done:
            obs = env.observations()
            s = env.global_state()
            x = agent_input(obs, st.last_action, L.n_actions)
            q, h = learner.greedy_q(x, h, target=act_with_target)
            eps = eps_fn()
            a = select_actions(q, eps, rng)
            try:
                _, r, done, info = env.step(a)
            except EnvError as exc:
                log.warning("episode %d aborted: %s", env.episode, exc)
                return None, infos, st
            obs_l.append(obs)
            states_l.append(s)
            acts_l.append(a)
            rews_l.append(r)
            dones_l.append(done)
            infos.append(info)
            if on_step is not None:
                on_step(eps, r, info)
        record = EpisodeRecord(
            np.array(obs_l), np.array(states_l), np.array(acts_l), np.array(rews_l),
            np.array(dones_l, dtype=float), L.skip_token,
        )
        return record, infos, st


def train(problem: Problem, layout: SystemLayout, env_cfg: EnvConfig, cfg: TrainerConfig,
          seed: int, limits: RunLimits = RunLimits(), deterministic: bool = True) -> TrainingResult:
    learner = QmixLearner.create(
        seeding.stream(seed, "trainer-init"), layout.m, layout.n_actions,
        layout.obs_dim, layout.state_dim, cfg,
    )
    eps_rng = seeding.stream(seed, "epsilon")
    replay_rng = seeding.stream(seed, "replay")
    env = QASEnvironment(layout, problem, env_cfg, seed=seeding.derive_seed(seed, "env"))
    eval_env = QASEnvironment(layout, problem, env_cfg, seed=seeding.derive_seed(seed, "eval"))
    buffer = ReplayBuffer(cfg.buffer_capacity)
    result = TrainingResult(seed, layout, learner=learner)
    thr = env_cfg.eta_threshold
    counters = {"env_steps": 0, "episodes": 0}
    t0 = time.perf_counter()

    def milestone() -> Milestone:
        return Milestone(learner.updates, counters["env_steps"], counters["episodes"])

    def consider(st, source: str) -> bool:
        if not all(e >= thr for e in st.etas):
            return False
        test = None
        if problem.test:
            test = evaluate_circuit(st.circuit, problem.test, env_cfg.inner,
                                    (seed, "test", counters["env_steps"], source))
        if not _satisfies(st.etas, test.etas if test else [], thr):
            return False
        cand = CandidateCircuit(st.circuit.copy(), list(st.etas), test.etas if test else [], source,
                                milestone(), list(st.params), test.params if test else [])
        if result.best is None or cand.score > result.best.score:
            result.best = cand
        return True

    def on_train_step(eps, reward, info):
        counters["env_steps"] += 1
        loss = None
        if len(buffer) >= cfg.min_episodes:
            loss = learner.train_step(buffer, replay_rng)
        result.rows.append({
            "episode": counters["episodes"], "env_step": counters["env_steps"],
            "update": learner.updates, "epsilon": eps, "reward": reward, "eta": info.eta,
            "loss": loss, "wall_time": None if deterministic else time.perf_counter() - t0,
        })

    trainer = _Rollout(env, learner)
    evaluator = _Rollout(eval_env, learner)
    try:
        while counters["env_steps"] < limits.max_env_steps:
            updates_before = learner.updates
            record, infos, st = trainer.run(
                lambda: epsilon(counters["env_steps"], cfg), eps_rng, cfg.act_with_target, on_train_step,
            )
            counters["episodes"] += 1
            if record is None:
                continue
            buffer.add(record)
            learner.maybe_sync_target(counters["episodes"])
            if len(result.traces) < limits.keep_traces:
                result.traces.append(_trace(counters["episodes"], infos))
            if consider(st, "explore") and result.first_found is None:
                result.first_found = milestone()
            if learner.updates == updates_before:
                continue
            ev_record, _, ev_st = evaluator.run(lambda: 0.0, eps_rng, False)
            ok = ev_record is not None and consider(ev_st, "greedy")
            result.evals.append({**vars(milestone()), "eta": ev_st.eta, "steps": ev_st.t,
                                 "n_2q": cnot_count(ev_st.circuit), "satisfactory": ok})
            if ok and result.converged is None:
                result.converged = milestone()
                log.info("seed %d converged after %d updates", seed, learner.updates)
                if limits.stop_at_convergence:
                    break
    except nn.TrainingError as exc:
        # hand the partial log back for the divergence diagnostics
        result.totals = milestone()
        exc.partial = result
        raise
    result.totals = milestone()
    return result


def _trace(episode: int, infos) -> dict:
    return {
        "episode": episode,
        "steps": [
            {"tokens": i.tokens, "gates": i.gates, "etas": i.etas, "eta": i.eta, "reward": i.reward}
            for i in infos
        ],
    }
