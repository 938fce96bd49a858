"""Circuit-building environment shared by the agents.

Each agent owns a contiguous block of ``q`` qubits and emits one token per
step. Token ``a = k * q + l`` places gate ``k`` of (RX, RY, CNOT down,
CNOT up) on the agent's local qubit ``l``; token ``4q`` skips. CNOTs
control the selected qubit and target its ring neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .circuit import Circuit, GateOp, cnot, cnot_count, rx, ry
from .statevec import PauliHamiltonian
from .vqopt import OptConfig, approximation_ratio, optimize

GATE_KINDS = ("RX", "RY", "CNOT_DOWN", "CNOT_UP")
REWARD_MODES = ("averaged_instances", "single_instance")


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemLayout:
    n: int
    m: int

    def __post_init__(self):
        if self.m < 1 or self.n % self.m:
            raise ValueError(f"{self.m} agents cannot split {self.n} qubits evenly")

    @property
    def q(self) -> int:
        return self.n // self.m

    @property
    def n_actions(self) -> int:
        return 4 * self.q + 1

    @property
    def skip_token(self) -> int:
        return 4 * self.q

    @property
    def obs_dim(self) -> int:
        return self.n_actions + 1 + 4 + self.m

    @property
    def state_dim(self) -> int:
        return 1 + self.m * (self.n_actions + 4 + self.m) + 1


def decode_action(token: int, agent: int, layout: SystemLayout) -> GateOp | None:
    q, n = layout.q, layout.n
    if not 0 <= token <= 4 * q:
        raise ValueError(f"token {token} outside [0, {4 * q}]")
    if not 0 <= agent < layout.m:
        raise ValueError(f"agent {agent} outside [0, {layout.m})")
    if token == 4 * q:
        return None
    k, l = divmod(token, q)
    j = agent * q + l
    if k == 0:
        return rx(j)
    if k == 1:
        return ry(j)
    if n < 2:
        raise ValueError("CNOT needs at least two qubits")
    return cnot(j, (j - 1) % n if k == 2 else (j + 1) % n)


@dataclass
class Problem:
    """Training (and optional test) Hamiltonians the reward is averaged over."""

    name: str
    train: list[PauliHamiltonian]
    test: list[PauliHamiltonian] = field(default_factory=list)

    @property
    def n_qubits(self) -> int:
        return self.train[0].n_qubits


@dataclass
class EnvConfig:
    rho: float = 0.01
    max_steps: int = 15
    eta_threshold: float = 0.95
    reward_mode: str = "averaged_instances"
    share_params_per_step: bool = False
    inner: OptConfig = field(default_factory=OptConfig)

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if not 0 <= self.eta_threshold <= 1:
            raise ValueError("eta_threshold must be in [0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def default_max_steps(n: int) -> int:
    if n <= 6:
        return 15
    if n <= 10:
        return 25
    return 40


@dataclass
class EnvState:
    t: int
    circuit: Circuit
    last_action: np.ndarray
    counts: np.ndarray  # (m, 4) gate-kind counts per agent block
    done: bool = False
    etas: list[float] = field(default_factory=list)
    eta: float = 0.0
    params: list[np.ndarray] = field(default_factory=list)


@dataclass
class StepInfo:
    tokens: list[int]
    gates: list[str]
    etas: list[float]
    eta: float
    reward: float
    energies: list[float]


@dataclass
class Evaluation:
    etas: list[float]
    energies: list[float]
    params: list[np.ndarray]


def evaluate_circuit(circuit: Circuit, hams: list[PauliHamiltonian], inner: OptConfig,
                     seed_key: tuple) -> Evaluation:
    """Optimize ``circuit`` separately for each Hamiltonian from its own seeded start."""
    out = Evaluation([], [], [])
    for i, h in enumerate(hams):
        cfg = replace(inner, seed=seeding.derive_seed(*seed_key, i))
        res = optimize(circuit, h, cfg)
        out.energies.append(res.best_energy)
        out.etas.append(approximation_ratio(res.best_energy, h.bounds))
        out.params.append(res.best_params)
    return out


class QASEnvironment:
    def __init__(self, layout: SystemLayout, problem: Problem, config: EnvConfig, seed: int = 0):
        if problem.n_qubits != layout.n:
            raise ValueError("problem and layout disagree on the number of qubits")
        self.layout = layout
        self.problem = problem
        self.config = config
        self.seed = seed
        self.episode = -1
        self.state: EnvState | None = None

    @property
    def train_instances(self) -> list[PauliHamiltonian]:
        if self.config.reward_mode == "single_instance":
            return self.problem.train[:1]
        return self.problem.train

    def reset(self, seed: int | None = None) -> EnvState:
        if seed is not None:
            self.seed = seed
        self.episode += 1
        L = self.layout
        self.state = EnvState(
            t=0,
            circuit=Circuit(L.n),
            last_action=np.full(L.m, L.skip_token),
            counts=np.zeros((L.m, 4)),
        )
        return self.state

    def observations(self) -> np.ndarray:
        return np.stack([encode_observation(i, self.state, self.layout, self.config.max_steps)
                         for i in range(self.layout.m)])

    def global_state(self) -> np.ndarray:
        return encode_state(self.state, self.layout, self.config.max_steps)

    def step(self, joint_action) -> tuple[np.ndarray, float, bool, StepInfo]:
        st = self.state
        if st is None or st.done:
            raise EnvError("step() on a finished episode; call reset()")
        L, cfg = self.layout, self.config
        tokens = [int(a) for a in joint_action]
        if len(tokens) != L.m:
            raise ValueError(f"expected {L.m} actions, got {len(tokens)}")
        gates = []
        shared_group = None
        for i, a in enumerate(tokens):
            g = decode_action(a, i, L)
            if g is None:
                continue
            if g.is_rotation and cfg.share_params_per_step:
                if shared_group is None:
                    shared_group = st.circuit.n_param_groups
                g = st.circuit.append(g, share_with=shared_group)
            else:
                g = st.circuit.append(g)
            st.counts[i, a // L.q] += 1
            gates.append(g.to_text())
        st.t += 1
        st.circuit.steps = st.t
        st.last_action = np.array(tokens)
        key = (self.seed, self.episode, st.t)
        hams = self.train_instances
        try:
            ev = evaluate_circuit(st.circuit, hams, cfg.inner, key)
        except (ValueError, ArithmeticError):
            try:
                ev = evaluate_circuit(st.circuit, hams, cfg.inner, key + (1,))
            except (ValueError, ArithmeticError) as exc:
                st.done = True
                raise EnvError(f"inner optimization failed twice at step {st.t}: {exc}") from exc
        eta = float(np.mean(ev.etas))
        reward = 2.0 * eta - cfg.rho * st.t
        st.etas, st.eta, st.params = ev.etas, eta, ev.params
        st.done = eta >= cfg.eta_threshold or st.t >= cfg.max_steps
        info = StepInfo(tokens, gates, ev.etas, eta, reward, ev.energies)
        return self.observations(), reward, st.done, info


def encode_observation(agent: int, st: EnvState, layout: SystemLayout, max_steps: int) -> np.ndarray:
    """[previous-action one-hot | t/T | own-block gate counts / T | agent one-hot]."""
    prev = np.zeros(layout.n_actions)
    prev[st.last_action[agent]] = 1.0
    ident = np.zeros(layout.m)
    ident[agent] = 1.0
    return np.concatenate([prev, [st.t / max_steps], st.counts[agent] / max_steps, ident])


def encode_state(st: EnvState, layout: SystemLayout, max_steps: int) -> np.ndarray:
    """[t/T | per agent (previous-action one-hot, counts / T, id) | CNOTs / T]."""
    parts = [np.array([st.t / max_steps])]
    for i in range(layout.m):
        obs = encode_observation(i, st, layout, max_steps)
        parts.append(np.delete(obs, layout.n_actions))
    parts.append(np.array([cnot_count(st.circuit) / max_steps]))
    return np.concatenate(parts)


def reward_bounds(config: EnvConfig) -> tuple[float, float]:
    return -config.rho * config.max_steps, 2.0

