"""Circuit representation with shared-parameter groups.

Circuits are plain ordered gate lists. Rotation gates point at a parameter
group; several rotations may point at the same group, which is how one
environment step can add many gates that share a single angle.

Text format (one gate per line, ``#`` starts a comment)::

    qubits 4
    groups 2
    steps 3
    RX q0 g0
    CNOT q0 q1
    RY q2 g1
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

ROTATIONS = ("RX", "RY", "RZ")
KINDS = ROTATIONS + ("H", "CNOT")


class CircuitError(ValueError):
    """Raised on malformed gates, circuits or circuit text."""


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: int | None = None
    param_slot: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if (self.kind == "CNOT") != (self.control is not None):
            raise CircuitError("control is required for CNOT and only for CNOT")
        if self.kind == "CNOT" and self.control == self.target:
            raise CircuitError("CNOT control and target must differ")
        if self.param_slot is not None and self.kind not in ROTATIONS:
            raise CircuitError(f"{self.kind} takes no parameter")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATIONS

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    def to_text(self) -> str:
        if self.kind == "CNOT":
            return f"CNOT q{self.control} q{self.target}"
        if self.is_rotation:
            return f"{self.kind} q{self.target} g{self.param_slot}"
        return f"{self.kind} q{self.target}"


def rx(q: int) -> GateOp:
    return GateOp("RX", q)


def ry(q: int) -> GateOp:
    return GateOp("RY", q)


def rz(q: int) -> GateOp:
    return GateOp("RZ", q)


def hadamard(q: int) -> GateOp:
    return GateOp("H", q)


def cnot(control: int, target: int) -> GateOp:
    return GateOp("CNOT", target, control=control)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[GateOp] = field(default_factory=list)
    n_param_groups: int = 0
    steps: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise CircuitError("circuit needs at least one qubit")
        for g in self.gates:
            self._check(g)
            if g.is_rotation and (g.param_slot is None or g.param_slot >= self.n_param_groups):
                raise CircuitError(f"gate {g.to_text()} has no valid parameter group")

    def _check(self, g: GateOp):
        for q in g.qubits:
            if not 0 <= q < self.n_qubits:
                raise CircuitError(f"qubit {q} out of range for {self.n_qubits} qubits")

    def append(self, g: GateOp, share_with: int | None = None) -> GateOp:
        """Append ``g`` and return it bound to its parameter group.

        Rotations join group ``share_with`` when given, otherwise they get a
        fresh group. ``share_with`` equal to ``n_param_groups`` opens that
        group, which lets callers lazily allocate a shared group.
        """
        self._check(g)
        if g.is_rotation:
            if share_with is None:
                slot = self.n_param_groups
            elif 0 <= share_with <= self.n_param_groups:
                slot = share_with
            else:
                raise CircuitError(f"invalid parameter group {share_with}")
            self.n_param_groups = max(self.n_param_groups, slot + 1)
            g = replace(g, param_slot=slot)
        elif share_with is not None:
            raise CircuitError(f"{g.kind} cannot join a parameter group")
        self.gates.append(g)
        return g

    def copy(self) -> Circuit:
        return Circuit(self.n_qubits, list(self.gates), self.n_param_groups, self.steps)

    def to_text(self) -> str:
        lines = [f"qubits {self.n_qubits}", f"groups {self.n_param_groups}", f"steps {self.steps}"]
        lines += [g.to_text() for g in self.gates]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Circuit:
        header: dict[str, int] = {}
        gates = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] in ("qubits", "groups", "steps"):
                    header[tok[0]] = int(tok[1])
                elif tok[0] == "CNOT":
                    gates.append(cnot(_index(tok[1], "q"), _index(tok[2], "q")))
                elif tok[0] in ROTATIONS:
                    gates.append(GateOp(tok[0], _index(tok[1], "q"), param_slot=_index(tok[2], "g")))
                elif tok[0] == "H":
                    gates.append(hadamard(_index(tok[1], "q")))
                else:
                    raise CircuitError(f"unknown token {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise CircuitError(f"line {lineno}: cannot parse {raw!r}") from exc
        if "qubits" not in header:
            raise CircuitError("missing 'qubits' header")
        groups = header.get("groups", 1 + max((g.param_slot for g in gates if g.is_rotation), default=-1))
        return cls(header["qubits"], gates, groups, header.get("steps", 0))


def _index(token: str, prefix: str) -> int:
    if not token.startswith(prefix):
        raise ValueError(token)
    return int(token[len(prefix):])


def cnot_count(c: Circuit) -> int:
    return sum(1 for g in c.gates if g.kind == "CNOT")


def param_count(c: Circuit) -> int:
    """Number of free parameters, i.e. parameter groups."""
    return c.n_param_groups


def depth_steps(c: Circuit) -> int:
    """Environment steps spent building the circuit (zero for fixed ansatze)."""
    return c.steps
