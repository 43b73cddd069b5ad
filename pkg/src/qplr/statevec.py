"""Exact state-vector simulation of small qubit registers.

Basis index ``i`` encodes the bitstring of ``|i>`` with qubit 0 as the most
significant bit. Gates are applied by strided in-place updates on views of
the amplitude array, never by building ``2^n x 2^n`` matrices.

The kernels (``apply_single_qubit``, ``apply_diagonal``) accept either one
state of shape ``(2^n,)`` or a batch of shape ``(B, 2^n)``; the circuit and
gradient modules drive them in batch mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ContractViolation

MAX_QUBITS = 24

SINGLE_QUBIT_KINDS = ("RY", "RZ", "ROT", "H")
GATE_KINDS = SINGLE_QUBIT_KINDS + ("CZ",)

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]])


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]])


def rot_matrix(phi: float, theta: float, omega: float) -> np.ndarray:
    """ZYZ Euler rotation ``RZ(omega) RY(theta) RZ(phi)``."""
    return rz_matrix(omega) @ ry_matrix(theta) @ rz_matrix(phi)


def ry_derivative(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return 0.5 * np.array([[-s, -c], [c, -s]])


def rz_derivative(theta: float) -> np.ndarray:
    return np.array([[-0.5j * np.exp(-0.5j * theta), 0.0], [0.0, 0.5j * np.exp(0.5j * theta)]])


def ry_matrices(thetas: np.ndarray) -> np.ndarray:
    """Stack of RY matrices, shape ``(B, 2, 2)``, one per angle."""
    thetas = np.asarray(thetas, dtype=np.float64)
    c, s = np.cos(thetas / 2.0), np.sin(thetas / 2.0)
    out = np.empty(thetas.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def ry_derivatives(thetas: np.ndarray) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=np.float64)
    c, s = np.cos(thetas / 2.0), np.sin(thetas / 2.0)
    out = np.empty(thetas.shape + (2, 2))
    out[..., 0, 0] = -0.5 * s
    out[..., 0, 1] = -0.5 * c
    out[..., 1, 0] = 0.5 * c
    out[..., 1, 1] = -0.5 * s
    return out


@dataclass(frozen=True)
class Gate:
    """One gate. ``params`` holds the angle(s); CZ uses ``control``."""

    kind: str
    target: int
    params: Tuple[float, ...] = ()
    control: Optional[int] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ContractViolation(f"unknown gate kind {self.kind!r}")
        expected = {"RY": 1, "RZ": 1, "ROT": 3, "H": 0, "CZ": 0}[self.kind]
        if len(self.params) != expected:
            raise ContractViolation(f"{self.kind} takes {expected} parameter(s), got {len(self.params)}")
        if self.kind == "CZ":
            if self.control is None or self.control == self.target:
                raise ContractViolation("CZ needs a control distinct from its target")
        elif self.control is not None:
            raise ContractViolation(f"{self.kind} does not take a control qubit")

    @classmethod
    def ry(cls, target: int, theta: float) -> "Gate":
        return cls("RY", target, (float(theta),))

    @classmethod
    def rz(cls, target: int, theta: float) -> "Gate":
        return cls("RZ", target, (float(theta),))

    @classmethod
    def rot(cls, target: int, phi: float, theta: float, omega: float) -> "Gate":
        return cls("ROT", target, (float(phi), float(theta), float(omega)))

    @classmethod
    def h(cls, target: int) -> "Gate":
        return cls("H", target)

    @classmethod
    def cz(cls, control: int, target: int) -> "Gate":
        return cls("CZ", target, (), control)

    def matrix(self) -> np.ndarray:
        """2x2 unitary of a single-qubit gate."""
        if self.kind == "RY":
            return ry_matrix(self.params[0])
        if self.kind == "RZ":
            return rz_matrix(self.params[0])
        if self.kind == "ROT":
            return rot_matrix(*self.params)
        if self.kind == "H":
            return _H.copy()
        raise ContractViolation("CZ has no single-qubit matrix")

    def qubits(self) -> Tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.amplitudes) != 1 << self.num_qubits:
            raise ContractViolation(
                f"{self.num_qubits} qubits need {1 << self.num_qubits} amplitudes, got {len(self.amplitudes)}"
            )

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> "StateVector":
        amps = np.array(amplitudes, dtype=np.complex128)
        n = int(round(np.log2(len(amps)))) if len(amps) else 0
        if len(amps) < 2 or (1 << n) != len(amps):
            raise ContractViolation(f"amplitude length {len(amps)} is not a power of two >= 2")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise ContractViolation("cannot normalize a zero vector")
            amps /= norm
        elif abs(norm - 1.0) > 1e-10:
            raise ContractViolation(f"amplitudes are not normalized (norm {norm!r})")
        return cls(n, amps)

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def _check_qubits(num_qubits: int) -> None:
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"qubit count must be an integer in [1, {MAX_QUBITS}], got {num_qubits!r}")


def init_zero(num_qubits: int) -> StateVector:
    _check_qubits(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(num_qubits), amps)


def apply_single_qubit(states: np.ndarray, matrix: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of every state, in place.

    ``matrix`` is either one ``(2, 2)`` matrix shared by the batch or a
    ``(B, 2, 2)`` stack with one matrix per state. It need not be unitary
    (the adjoint sweep feeds derivative matrices through here).
    """
    batch = states.reshape(-1, 1 << qubit, 2, 1 << (num_qubits - qubit - 1))
    s0 = batch[:, :, 0, :].copy()
    s1 = batch[:, :, 1, :].copy()
    m = np.asarray(matrix)
    if m.ndim == 2:
        a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    else:
        a, b, c, d = (m[:, i, j][:, None, None] for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    batch[:, :, 0, :] = a * s0 + b * s1
    batch[:, :, 1, :] = c * s0 + d * s1
    return states


def cz_phases(num_qubits: int, edges) -> np.ndarray:
    """Diagonal (+1/-1) of the product of CZ gates over ``edges``."""
    idx = np.arange(1 << num_qubits)
    parity = np.zeros(1 << num_qubits, dtype=np.int64)
    for i, j in edges:
        bi = (idx >> (num_qubits - 1 - i)) & 1
        bj = (idx >> (num_qubits - 1 - j)) & 1
        parity ^= bi & bj
    return np.where(parity == 1, -1.0, 1.0)


def apply_diagonal(states: np.ndarray, diagonal: np.ndarray) -> np.ndarray:
    states *= diagonal
    return states


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` to ``state`` in place and return it."""
    n = state.num_qubits
    for q in gate.qubits():
        if not 0 <= q < n:
            raise ContractViolation(f"qubit index {q} out of range for {n} qubits")
    if gate.kind == "CZ":
        apply_diagonal(state.amplitudes, cz_phases(n, [(gate.control, gate.target)]))
    else:
        apply_single_qubit(state.amplitudes, gate.matrix(), gate.target, n)
    return state


def probabilities(state: StateVector) -> np.ndarray:
    """Born-rule outcome probabilities ``|<i|psi>|^2``."""
    amps = state.amplitudes
    return amps.real ** 2 + amps.imag ** 2


def sample_shots(state: StateVector, num_shots: int, rng_seed) -> np.ndarray:
    """Counts of ``num_shots`` computational-basis measurements."""
    if num_shots < 1:
        raise ContractViolation("num_shots must be >= 1")
    return sample_counts(probabilities(state), num_shots, np.random.default_rng(rng_seed))


def sample_counts(probs: np.ndarray, num_shots: int, rng: np.random.Generator) -> np.ndarray:
    p = np.clip(np.asarray(probs, dtype=np.float64), 0.0, None)
    return rng.multinomial(int(num_shots), p / p.sum())
