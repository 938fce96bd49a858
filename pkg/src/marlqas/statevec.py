"""Dense statevector simulation for the restricted gate set.

Qubit 0 is the least-significant bit of the basis index. Rotations follow
R_a(theta) = exp(-i sigma_a theta) with no half-angle factor, so each
rotation has period pi up to a global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .circuit import Circuit, GateOp

MAX_QUBITS = 16
DENSE_LIMIT = 10

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class NumericalError(RuntimeError):
    pass


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(f"need {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> StateVector:
        return StateVector(self.n_qubits, self.amplitudes.copy())


def new_zero_state(n: int) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"number of qubits must be in [1, {MAX_QUBITS}], got {n}")
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    return StateVector(n, psi)


def gate_matrix(kind: str, theta: float = 0.0) -> np.ndarray:
    """2x2 matrix of a single-qubit gate."""
    c, s = math.cos(theta), math.sin(theta)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    raise ValueError(f"{kind} is not a single-qubit gate")


@lru_cache(maxsize=None)
def _cnot_indices(n: int, control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(1 << n)
    sel = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    return sel, sel | (1 << target)


def _apply_1q(psi: np.ndarray, n: int, q: int, u: np.ndarray) -> None:
    view = psi.reshape(1 << (n - 1 - q), 2, 1 << q)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    view[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1


def _apply_inplace(psi: np.ndarray, n: int, gate: GateOp, theta: float) -> None:
    if gate.kind == "CNOT":
        lo, hi = _cnot_indices(n, gate.control, gate.target)
        psi[lo], psi[hi] = psi[hi], psi[lo]
    else:
        _apply_1q(psi, n, gate.target, gate_matrix(gate.kind, theta))


def apply_gate(state: StateVector, gate: GateOp, theta: float = 0.0) -> StateVector:
    for q in gate.qubits:
        if not 0 <= q < state.n_qubits:
            raise IndexError(f"qubit {q} out of range for {state.n_qubits} qubits")
    psi = state.amplitudes.copy()
    _apply_inplace(psi, state.n_qubits, gate, theta)
    return StateVector(state.n_qubits, psi)


def apply_circuit(state: StateVector, circuit: Circuit, params) -> StateVector:
    params = np.asarray(params, dtype=float).reshape(-1)
    if params.size != circuit.n_param_groups:
        raise ValueError(f"circuit has {circuit.n_param_groups} parameters, got {params.size}")
    if state.n_qubits != circuit.n_qubits:
        raise ValueError("state and circuit disagree on the number of qubits")
    psi = state.amplitudes.copy()
    n = state.n_qubits
    for g in circuit.gates:
        _apply_inplace(psi, n, g, params[g.param_slot] if g.is_rotation else 0.0)
    return StateVector(n, psi)


@dataclass(frozen=True)
class SpectrumBounds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min exceeds lambda_max")


@dataclass(frozen=True, eq=False)
class PauliHamiltonian:
    """Real-weighted sum of Pauli strings.

    Character ``k`` of each string acts on qubit ``k``.
    """

    n_qubits: int
    terms: tuple[tuple[float, str], ...]

    def __post_init__(self):
        terms = []
        for coef, pauli in self.terms:
            pauli = pauli.upper()
            if len(pauli) != self.n_qubits or set(pauli) - set("IXYZ"):
                raise ValueError(f"bad Pauli string {pauli!r} for {self.n_qubits} qubits")
            if isinstance(coef, complex):
                if abs(coef.imag) > 1e-12:
                    raise ValueError("Pauli coefficients must be real")
                coef = coef.real
            terms.append((float(coef), pauli))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_terms(cls, n_qubits: int, terms, *, merge: bool = True, tol: float = 1e-14):
        if not merge:
            return cls(n_qubits, tuple(terms))
        acc: dict[str, complex] = {}
        for coef, pauli in terms:
            acc[pauli] = acc.get(pauli, 0.0) + coef
        for pauli, coef in acc.items():
            if abs(complex(coef).imag) > 1e-12:
                raise ValueError(f"merged coefficient of {pauli} is not real: {coef}")
        merged = [(complex(c).real, p) for p, c in sorted(acc.items()) if abs(c) > tol]
        return cls(n_qubits, tuple(merged))

    @property
    def is_diagonal(self) -> bool:
        return all(set(p) <= {"I", "Z"} for _, p in self.terms)

    @cached_property
    def _action(self) -> dict[int, np.ndarray]:
        # H|x> = sum_f w_f[x] |x ^ f>, grouped by bit-flip mask f
        idx = np.arange(1 << self.n_qubits)
        out: dict[int, np.ndarray] = {}
        for coef, pauli in self.terms:
            flip = 0
            phase = np.full(idx.shape, complex(coef))
            for q, p in enumerate(pauli):
                bit = (idx >> q) & 1
                if p in "XY":
                    flip |= 1 << q
                if p == "Z":
                    phase *= 1 - 2 * bit
                elif p == "Y":
                    phase *= 1j * (1 - 2 * bit)
            out[flip] = out.get(flip, 0) + phase
        return out

    @cached_property
    def _flip_index(self) -> dict[int, np.ndarray]:
        idx = np.arange(1 << self.n_qubits)
        return {f: idx ^ f for f in self._action}

    def diagonal(self) -> np.ndarray:
        """Diagonal of the matrix in the computational basis."""
        return np.real(self._action.get(0, np.zeros(1 << self.n_qubits)))

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        out = np.zeros_like(psi)
        for f, w in self._action.items():
            # x -> x ^ f is a permutation, so the scatter has no collisions
            out[self._flip_index[f]] += w * psi
        return out

    def to_dense(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        mat = np.zeros((dim, dim), dtype=complex)
        cols = np.arange(dim)
        for f, w in self._action.items():
            mat[cols ^ f, cols] += w
        return mat

    @cached_property
    def bounds(self) -> SpectrumBounds:
        return _extreme_eigenvalues(self)


def expectation(state: StateVector, ham: PauliHamiltonian) -> float:
    if state.n_qubits != ham.n_qubits:
        raise ValueError("state and Hamiltonian disagree on the number of qubits")
    return expectation_array(state.amplitudes, ham)


def expectation_array(psi: np.ndarray, ham: PauliHamiltonian) -> float:
    total = 0j
    for f, w in ham._action.items():
        if f:
            total += np.vdot(psi[ham._flip_index[f]], w * psi)
        else:
            total += np.dot(w, np.abs(psi) ** 2)
    return float(total.real)


def extreme_eigenvalues(ham: PauliHamiltonian) -> SpectrumBounds:
    """Smallest and largest eigenvalue of ``ham`` (cached on the instance)."""
    return ham.bounds


def _extreme_eigenvalues(ham: PauliHamiltonian) -> SpectrumBounds:
    n = ham.n_qubits
    if n > MAX_QUBITS:
        raise ValueError(f"at most {MAX_QUBITS} qubits supported")
    if ham.is_diagonal:
        d = ham.diagonal()
        return SpectrumBounds(float(d.min()), float(d.max()))
    if n <= DENSE_LIMIT:
        ev = np.linalg.eigvalsh(ham.to_dense())
        return SpectrumBounds(float(ev[0]), float(ev[-1]))
    dim = 1 << n
    op = spla.LinearOperator((dim, dim), matvec=ham.matvec, dtype=complex)
    found = []
    for which in ("SA", "LA"):
        try:
            vals, vecs = spla.eigsh(op, k=1, which=which, tol=1e-12, maxiter=20 * dim)
        except spla.ArpackNoConvergence as exc:
            res = float("nan")
            if len(exc.eigenvalues):
                v = exc.eigenvectors[:, 0]
                res = float(np.linalg.norm(ham.matvec(v) - exc.eigenvalues[0] * v))
            raise NumericalError(f"Lanczos did not converge for {which}, residual {res:.3e}") from exc
        found.append(float(vals[0]))
    return SpectrumBounds(found[0], found[1])
