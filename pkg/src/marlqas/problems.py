"""Problem Hamiltonians and the fixed baseline ansatze."""

from __future__ import annotations

from dataclasses import dataclass

from .circuit import Circuit, cnot, hadamard, rx, ry, rz
from .graphs import Graph
from .statevec import PauliHamiltonian


def pauli_string(n: int, ops: dict[int, str]) -> str:
    return "".join(ops.get(q, "I") for q in range(n))


def maxcut_hamiltonian(g: Graph) -> PauliHamiltonian:
    """0.5 * sum over edges of (Z_i Z_j - I); the energy of bitstring z is -cut(z)."""
    n = g.n_vertices
    terms = [(0.5, pauli_string(n, {i: "Z", j: "Z"})) for i, j in sorted(g.edges)]
    if g.edges:
        terms.append((-0.5 * len(g.edges), "I" * n))
    return PauliHamiltonian(n, tuple(terms))


@dataclass(frozen=True)
class SchwingerParams:
    w: float = 1.0
    m0: float = 1.0
    g_bar: float = 1.0
    eps0: float = 0.0


def schwinger_hamiltonian(
    n: int, p: SchwingerParams = SchwingerParams(), *, electric_sites: int | None = None
) -> PauliHamiltonian:
    """Spin-mapped lattice Schwinger model on ``n`` sites.

    ``electric_sites`` is the upper limit of the outer electric-field sum;
    the default ``n`` includes the total-charge term L_n, pass ``n - 1`` for
    the open-chain convention.
    """
    if n < 2 or n % 2:
        raise ValueError(f"Schwinger chain needs an even number of sites >= 2, got {n}")
    upto = n if electric_sites is None else electric_sites
    if not 1 <= upto <= n:
        raise ValueError(f"electric_sites must be in [1, {n}]")
    terms: list[tuple[float, str]] = []
    # sites are 1-based in the sign conventions below; qubit = site - 1
    for j in range(1, n):
        for op in "XY":
            terms.append((p.w / 2, pauli_string(n, {j - 1: op, j: op})))
    for j in range(1, n + 1):
        terms.append((p.m0 / 2 * (-1) ** j, pauli_string(n, {j - 1: "Z"})))
    for j in range(1, upto + 1):
        # L_j = c_j - 1/2 sum_{l<=j} Z_l
        c = p.eps0 - 0.5 * sum((-1) ** l for l in range(1, j + 1))
        terms.append((p.g_bar * (c * c + 0.25 * j), "I" * n))
        for l in range(1, j + 1):
            terms.append((-p.g_bar * c, pauli_string(n, {l - 1: "Z"})))
            for l2 in range(l + 1, j + 1):
                terms.append((p.g_bar * 0.5, pauli_string(n, {l - 1: "Z", l2 - 1: "Z"})))
    return PauliHamiltonian.from_terms(n, terms)


def qaoa_circuit(g: Graph, p: int) -> Circuit:
    """|+>^n followed by p layers of edge ZZ rotations and an Rx mixer.

    Groups 2k and 2k+1 hold gamma_k and beta_k. Each ZZ rotation compiles to
    CNOT-RZ-CNOT.
    """
    if p < 1:
        raise ValueError("QAOA depth must be >= 1")
    c = Circuit(g.n_vertices)
    for q in range(g.n_vertices):
        c.append(hadamard(q))
    for k in range(p):
        gamma, beta = 2 * k, 2 * k + 1
        for i, j in sorted(g.edges):
            c.append(cnot(i, j))
            c.append(rz(j), share_with=gamma)
            c.append(cnot(i, j))
        c.n_param_groups = max(c.n_param_groups, gamma + 1)
        for q in range(g.n_vertices):
            c.append(rx(q), share_with=beta)
    return c


def hea_circuit(n: int, L: int) -> Circuit:
    """L layers of per-qubit Rx, Ry, Rz followed by a closed CNOT ring."""
    if L < 1:
        raise ValueError("HEA needs at least one layer")
    if n < 2:
        raise ValueError("HEA needs at least two qubits")
    c = Circuit(n)
    for _ in range(L):
        for q in range(n):
            c.append(rx(q))
            c.append(ry(q))
            c.append(rz(q))
        for q in range(n - 1):
            c.append(cnot(q, q + 1))
        c.append(cnot(n - 1, 0))
    return c
