"""Dense reference implementations used only by the tests.

Everything here is built from scratch with Kronecker products and matrix
exponentials so it shares no code with the simulator under test.
"""

import numpy as np
from scipy.linalg import expm

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def embed(ops: dict, n: int) -> np.ndarray:
    """Kronecker product with qubit 0 as the least-significant (rightmost) factor."""
    out = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, PAULI["I"]))
    return out


def single_qubit(kind: str, theta: float) -> np.ndarray:
    if kind == "H":
        return HADAMARD
    sigma = PAULI[kind[1]]
    return expm(-1j * theta * sigma)


def gate_dense(gate, theta: float, n: int) -> np.ndarray:
    if gate.kind == "CNOT":
        p0 = np.diag([1, 0]).astype(complex)
        p1 = np.diag([0, 1]).astype(complex)
        return embed({gate.control: p0}, n) + embed({gate.control: p1, gate.target: PAULI["X"]}, n)
    return embed({gate.target: single_qubit(gate.kind, theta)}, n)


def circuit_dense(circuit, params) -> np.ndarray:
    u = np.eye(1 << circuit.n_qubits, dtype=complex)
    for g in circuit.gates:
        theta = params[g.param_slot] if g.is_rotation else 0.0
        u = gate_dense(g, theta, circuit.n_qubits) @ u
    return u


def pauli_dense(pauli: str) -> np.ndarray:
    return embed({q: PAULI[p] for q, p in enumerate(pauli)}, len(pauli))


def hamiltonian_dense(ham) -> np.ndarray:
    return sum(c * pauli_dense(p) for c, p in ham.terms) if ham.terms else np.zeros((1 << ham.n_qubits,) * 2)


def schwinger_dense(n, w=1.0, m0=1.0, g_bar=1.0, eps0=0.0, electric_sites=None):
    """Direct operator arithmetic with sigma^+ / sigma^- matrices and L_j^2."""
    upto = n if electric_sites is None else electric_sites
    dim = 1 << n
    sp = np.array([[0, 1], [0, 0]], dtype=complex)  # (X + iY) / 2
    sm = sp.conj().T
    H = np.zeros((dim, dim), dtype=complex)
    for j in range(1, n):
        hop = embed({j - 1: sp, j: sm}, n)
        H += w * (hop + hop.conj().T)
    for j in range(1, n + 1):
        H += m0 / 2 * (-1) ** j * embed({j - 1: PAULI["Z"]}, n)
    eye = np.eye(dim)
    for j in range(1, upto + 1):
        L = eps0 * eye
        for l in range(1, j + 1):
            L = L - 0.5 * (embed({l - 1: PAULI["Z"]}, n) + (-1) ** l * eye)
        H += g_bar * L @ L
    return H


def finite_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f over every entry of array x (restored in place)."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))
