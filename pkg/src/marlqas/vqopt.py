"""Inner-loop optimization of circuit parameters and the approximation ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .circuit import Circuit
from .nn import AdamState, adam_step
from .statevec import PauliHamiltonian, SpectrumBounds, _apply_inplace, expectation_array

# R(theta) = exp(-i sigma theta) has period pi, so the exact shift is pi/4
SHIFT = math.pi / 4


class DomainError(ValueError):
    pass


@dataclass
class OptConfig:
    method: str = "derivative_free"
    max_evals: int = 150
    restarts: int = 1
    lr: float = 0.1
    seed: int = 0
    rho_begin: float = math.pi / 2
    rho_end: float = 1e-3

    def __post_init__(self):
        if self.method not in ("derivative_free", "adam_paramshift"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        if self.max_evals < 1 or self.restarts < 1:
            raise ValueError("max_evals and restarts must be >= 1")


@dataclass
class OptResult:
    best_params: np.ndarray
    best_energy: float
    evaluations: int
    incumbents: list[float] = field(default_factory=list)


class EnergyFunction:
    """E(theta) = <psi(theta)|H|psi(theta)> for a fixed circuit and Hamiltonian.

    Also evaluates with per-gate angles so the shift rule can move one gate
    of a shared group at a time.
    """

    def __init__(self, circuit: Circuit, ham: PauliHamiltonian):
        if circuit.n_qubits != ham.n_qubits:
            raise ValueError("circuit and Hamiltonian disagree on the number of qubits")
        self.circuit = circuit
        self.ham = ham
        self.n = circuit.n_qubits
        self.rot_index = [k for k, g in enumerate(circuit.gates) if g.is_rotation]
        self.rot_slots = np.array([circuit.gates[k].param_slot for k in self.rot_index], dtype=int)
        self.evaluations = 0

    def state(self, angles_per_rotation: np.ndarray) -> np.ndarray:
        psi = np.zeros(1 << self.n, dtype=complex)
        psi[0] = 1.0
        it = iter(angles_per_rotation)
        for g in self.circuit.gates:
            _apply_inplace(psi, self.n, g, next(it) if g.is_rotation else 0.0)
        return psi

    def of_angles(self, angles: np.ndarray) -> float:
        self.evaluations += 1
        return expectation_array(self.state(angles), self.ham)

    def __call__(self, params) -> float:
        params = np.asarray(params, dtype=float).reshape(-1)
        return self.of_angles(params[self.rot_slots])

    def shift_gradient(self, params) -> np.ndarray:
        """Exact gradient: dE/dtheta_g = sum over gates in group g of E(+pi/4) - E(-pi/4)."""
        params = np.asarray(params, dtype=float).reshape(-1)
        angles = params[self.rot_slots]
        per_gate = np.empty(angles.size)
        for k in range(angles.size):
            a = angles.copy()
            a[k] += SHIFT
            plus = self.of_angles(a)
            a[k] -= 2 * SHIFT
            per_gate[k] = plus - self.of_angles(a)
        grad = np.zeros(self.circuit.n_param_groups)
        np.add.at(grad, self.rot_slots, per_gate)
        return grad


def _start(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.uniform(0.0, 2 * math.pi, size=d)


def _best_of(runs: list[OptResult], evaluations: int) -> OptResult:
    # lowest energy, ties to the earliest restart
    best = min(range(len(runs)), key=lambda i: (runs[i].best_energy, i))
    out = runs[best]
    return OptResult(out.best_params, out.best_energy, evaluations, out.incumbents)


def optimize_derivative_free(c: Circuit, h: PauliHamiltonian, cfg: OptConfig) -> OptResult:
    """COBYLA from seeded uniform starts in [0, 2pi)^d; best of ``cfg.restarts``."""
    f = EnergyFunction(c, h)
    d = c.n_param_groups
    if d == 0:
        e = f(np.zeros(0))
        return OptResult(np.zeros(0), e, f.evaluations, [e])
    rng = np.random.default_rng(cfg.seed)
    runs = []
    for _ in range(cfg.restarts):
        x0 = _start(rng, d)
        incumbents: list[float] = []
        best = [np.inf, x0]

        def tracked(x):
            e = f(x)
            if e < best[0]:
                best[0], best[1] = e, np.array(x, dtype=float)
            incumbents.append(best[0])
            return e

        minimize(
            tracked, x0, method="COBYLA",
            options={"rhobeg": cfg.rho_begin, "tol": cfg.rho_end, "maxiter": cfg.max_evals},
        )
        x = best[1]
        runs.append(OptResult(x, f(x), 0, incumbents))
    return _best_of(runs, f.evaluations)


def optimize_adam_paramshift(c: Circuit, h: PauliHamiltonian, cfg: OptConfig) -> OptResult:
    """ADAM on shift-rule gradients for ``cfg.max_evals`` iterations; best of ``cfg.restarts``."""
    f = EnergyFunction(c, h)
    d = c.n_param_groups
    if d == 0:
        e = f(np.zeros(0))
        return OptResult(np.zeros(0), e, f.evaluations, [e])
    rng = np.random.default_rng(cfg.seed)
    runs = []
    for _ in range(cfg.restarts):
        theta = {"theta": _start(rng, d)}
        st = AdamState(lr=cfg.lr)
        best_e, best_x = np.inf, theta["theta"].copy()
        incumbents = []
        for _ in range(cfg.max_evals):
            e = f(theta["theta"])
            if e < best_e:
                best_e, best_x = e, theta["theta"].copy()
            incumbents.append(best_e)
            adam_step(theta, {"theta": f.shift_gradient(theta["theta"])}, st)
        e = f(theta["theta"])
        if e < best_e:
            best_e, best_x = e, theta["theta"].copy()
        incumbents.append(best_e)
        runs.append(OptResult(best_x, f(best_x), 0, incumbents))
    return _best_of(runs, f.evaluations)


def optimize(c: Circuit, h: PauliHamiltonian, cfg: OptConfig) -> OptResult:
    if cfg.method == "adam_paramshift":
        return optimize_adam_paramshift(c, h, cfg)
    return optimize_derivative_free(c, h, cfg)


def approximation_ratio(E: float, bounds: SpectrumBounds, tol: float = 1e-9) -> float:
    """(lambda_max - E) / (lambda_max - lambda_min), 1 at the ground state."""
    span = bounds.lambda_max - bounds.lambda_min
    if span <= 0:
        raise DomainError("approximation ratio undefined for a degenerate spectrum")
    eta = (bounds.lambda_max - E) / span
    if eta < -tol or eta > 1 + tol:
        raise DomainError(f"energy {E} lies outside the spectrum [{bounds.lambda_min}, {bounds.lambda_max}]")
    return min(1.0, max(0.0, eta))
