"""Variational circuit: input encoding, entangling layers, class reduction.

A circuit is ``U(theta) V(x) |0...0>``. ``V`` is either a layer of RY
rotations driven by angles in ``[0, pi]`` or an amplitude embedding of the
flattened input. Each of the ``L`` variational layers applies one rotation
per qubit followed by CZ gates over the entanglement graph.

Circuits are compiled to a short list of steps which both the forward
simulator here and the adjoint sweep in :mod:`qplr.qgrad` walk over.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import statevec as sv
from .errors import ConfigurationError, ContractViolation, DegenerateInputError


class Encoding(str, Enum):
    ANGLE = "angle"
    AMPLITUDE = "amplitude"


class Entanglement(str, Enum):
    LINEAR = "linear"
    RING = "ring"
    FULL = "full"


class Reduction(str, Enum):
    TRUNCATE_RENORM = "truncate_renorm"
    POST_NETWORK = "post_network"


class Rotation(str, Enum):
    RY = "ry"
    ROT = "rot"


def entanglement_edges(topology, n: int) -> List[Tuple[int, int]]:
    """CZ pairs of one layer, in application order."""
    topology = Entanglement(topology)
    if n < 2:
        raise ConfigurationError(f"entanglement needs at least 2 qubits, got {n}")
    if topology is Entanglement.FULL:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = [(i, i + 1) for i in range(n - 1)]
    # for n=2 the closing edge would repeat (0, 1) and cancel it
    if topology is Entanglement.RING and n > 2:
        edges.append((n - 1, 0))
    return edges


def entangled_subset_count(n: int) -> int:
    """Number of qubit subsets of size >= 2, i.e. ``2^n - n - 1``."""
    return (1 << n) - n - 1


def squash_angles(z):
    """Map unbounded pre-network outputs into ``(0, pi)`` via ``pi * sigmoid``."""
    # pi * sigmoid(z), in the overflow-free tanh form
    return 0.5 * np.pi * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    num_qubits: int
    encoding: Encoding = Encoding.ANGLE
    num_layers: int = 1
    entanglement: Entanglement = Entanglement.RING
    theta: Optional[np.ndarray] = field(default=None, repr=False)
    reduction: Reduction = Reduction.POST_NETWORK
    rotation: Rotation = Rotation.RY

    def __post_init__(self):
        if not isinstance(self.num_qubits, (int, np.integer)) or not 1 <= self.num_qubits <= sv.MAX_QUBITS:
            raise ConfigurationError(f"num_qubits must be in [1, {sv.MAX_QUBITS}], got {self.num_qubits!r}")
        if self.num_layers < 0:
            raise ConfigurationError("num_layers must be >= 0")
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        object.__setattr__(self, "entanglement", Entanglement(self.entanglement))
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        object.__setattr__(self, "rotation", Rotation(self.rotation))
        theta = np.zeros(self.theta_shape) if self.theta is None else np.array(self.theta, dtype=np.float64)
        if theta.shape != self.theta_shape:
            raise ConfigurationError(f"theta shape {theta.shape} != expected {self.theta_shape}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def theta_shape(self) -> Tuple[int, ...]:
        shape = (self.num_layers, self.num_qubits)
        return shape + (3,) if self.rotation is Rotation.ROT else shape

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def edges(self) -> List[Tuple[int, int]]:
        if self.num_qubits < 2:
            return []
        return entanglement_edges(self.entanglement, self.num_qubits)

    def with_theta(self, theta) -> "CircuitSpec":
        return replace(self, theta=np.array(theta, dtype=np.float64))

    def init_theta(self, rng: np.random.Generator, scale: float = np.pi) -> "CircuitSpec":
        return self.with_theta(rng.uniform(-scale, scale, size=self.theta_shape))

    def __eq__(self, other):
        if not isinstance(other, CircuitSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "n": int(self.num_qubits),
            "encoding": self.encoding.value,
            "layers": int(self.num_layers),
            "entanglement": self.entanglement.value,
            "rotation": self.rotation.value,
            "theta": self.theta.tolist(),
            "reduction": self.reduction.value,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CircuitSpec":
        try:
            rotation = Rotation(doc.get("rotation", "ry"))
            n, layers = int(doc["n"]), int(doc["layers"])
            shape = (layers, n, 3) if rotation is Rotation.ROT else (layers, n)
            theta = doc.get("theta")
            theta = None if theta is None else np.array(theta, dtype=np.float64).reshape(shape)
            return cls(
                num_qubits=n,
                encoding=doc["encoding"],
                num_layers=layers,
                entanglement=doc["entanglement"],
                theta=theta,
                reduction=doc.get("reduction", Reduction.POST_NETWORK),
                rotation=rotation,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed circuit document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CircuitSpec":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        """Short hash of the full circuit document, parameters included."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EncodedInput:
    kind: Encoding
    values: np.ndarray

    @classmethod
    def from_angles(cls, angles) -> "EncodedInput":
        phi = np.array(angles, dtype=np.float64)
        if phi.ndim != 1 or np.any(phi < 0.0) or np.any(phi > np.pi):
            raise ContractViolation("encoding angles must be a vector in [0, pi]")
        return cls(Encoding.ANGLE, phi)

    @classmethod
    def from_amplitudes(cls, amplitudes, dim: int) -> "EncodedInput":
        v = np.asarray(amplitudes, dtype=np.float64).ravel()
        if v.size > dim:
            raise ContractViolation(f"input of length {v.size} does not fit {dim} amplitudes")
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise DegenerateInputError("amplitude encoding of an all-zero input is undefined")
        padded = np.zeros(dim)
        padded[: v.size] = v / norm
        return cls(Encoding.AMPLITUDE, padded)


def encode(x, spec: CircuitSpec, squash: bool = True) -> EncodedInput:
    """Encode one input vector for ``spec``.

    In angle mode ``x`` is the pre-network output (length n); with
    ``squash`` it is mapped through ``pi * sigmoid``, otherwise it must
    already be angles in ``[0, pi]``.
    """
    if spec.encoding is Encoding.ANGLE:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != spec.num_qubits:
            raise ContractViolation(f"angle encoding needs {spec.num_qubits} values, got {x.size}")
        return EncodedInput.from_angles(squash_angles(x) if squash else x)
    return EncodedInput.from_amplitudes(x, spec.dim)


def amplitude_batch(x: np.ndarray, dim: int) -> np.ndarray:
    """Flatten, zero-pad and normalize a batch of inputs to ``(B, dim)``."""
    flat = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    if flat.shape[1] > dim:
        raise ContractViolation(f"input of length {flat.shape[1]} does not fit {dim} amplitudes")
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("amplitude encoding of an all-zero input is undefined")
    out = np.zeros((len(flat), dim))
    out[:, : flat.shape[1]] = flat / norms[:, None]
    return out


# ---------------------------------------------------------------- compilation
#
# A compiled circuit is a list of steps:
#   ("enc", q)                 RY(phi_q) with a per-sample angle
#   ("param", idx, q, axis)    rotation about ``axis`` ('y' or 'z') by theta[idx]
#   ("diag",)                  the layer's CZ product (a +-1 diagonal)


@lru_cache(maxsize=64)
def _compile(num_qubits: int, encoding: Encoding, num_layers: int, rotation: Rotation, has_edges: bool):
    steps = []
    if encoding is Encoding.ANGLE:
        steps.extend(("enc", q) for q in range(num_qubits))
    for layer in range(num_layers):
        for q in range(num_qubits):
            if rotation is Rotation.RY:
                steps.append(("param", (layer, q), q, "y"))
            else:
                steps.append(("param", (layer, q, 0), q, "z"))
                steps.append(("param", (layer, q, 1), q, "y"))
                steps.append(("param", (layer, q, 2), q, "z"))
        if has_edges:
            steps.append(("diag",))
    return tuple(steps)


def compile_steps(spec: CircuitSpec):
    return _compile(spec.num_qubits, spec.encoding, spec.num_layers, spec.rotation, bool(spec.edges()))


@lru_cache(maxsize=64)
def _layer_phases(num_qubits: int, edges: Tuple[Tuple[int, int], ...]) -> np.ndarray:
    phases = sv.cz_phases(num_qubits, edges)
    phases.setflags(write=False)
    return phases


def layer_phases(spec: CircuitSpec) -> np.ndarray:
    return _layer_phases(spec.num_qubits, tuple(spec.edges()))


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    return sv.ry_matrix(angle) if axis == "y" else sv.rz_matrix(angle)


def rotation_derivative(axis: str, angle: float) -> np.ndarray:
    return sv.ry_derivative(angle) if axis == "y" else sv.rz_derivative(angle)


def state_dtype(spec: CircuitSpec):
    return np.float64 if spec.rotation is Rotation.RY else np.complex128


def initial_states(spec: CircuitSpec, batch: int, amplitudes: Optional[np.ndarray] = None) -> np.ndarray:
    dtype = state_dtype(spec)
    if spec.encoding is Encoding.AMPLITUDE:
        if amplitudes is None or amplitudes.shape != (batch, spec.dim):
            raise ContractViolation("amplitude circuits need a (B, 2^n) amplitude batch")
        return np.array(amplitudes, dtype=dtype)
    states = np.zeros((batch, spec.dim), dtype=dtype)
    states[:, 0] = 1.0
    return states


def simulate_batch(spec: CircuitSpec, angles: Optional[np.ndarray] = None,
                   amplitudes: Optional[np.ndarray] = None) -> np.ndarray:
    """Final states for a batch of inputs, shape ``(B, 2^n)``."""
    if spec.encoding is Encoding.ANGLE:
        if angles is None:
            raise ContractViolation("angle circuits need a (B, n) angle batch")
        angles = np.asarray(angles, dtype=np.float64)
        if angles.ndim != 2 or angles.shape[1] != spec.num_qubits:
            raise ContractViolation(f"angle batch must have shape (B, {spec.num_qubits})")
        batch = len(angles)
    else:
        batch = len(amplitudes)
    states = initial_states(spec, batch, amplitudes)
    n = spec.num_qubits
    for step in compile_steps(spec):
        if step[0] == "enc":
            q = step[1]
            sv.apply_single_qubit(states, sv.ry_matrices(angles[:, q]), q, n)
        elif step[0] == "param":
            _, idx, q, axis = step
            sv.apply_single_qubit(states, rotation_matrix(axis, spec.theta[idx]), q, n)
        else:
            sv.apply_diagonal(states, layer_phases(spec))
    return states


def forward_batch(spec: CircuitSpec, angles=None, amplitudes=None) -> np.ndarray:
    """Exact Born probabilities for a batch, shape ``(B, 2^n)``."""
    states = simulate_batch(spec, angles, amplitudes)
    if np.iscomplexobj(states):
        return states.real ** 2 + states.imag ** 2
    return states ** 2


def _batch_args(spec: CircuitSpec, enc: EncodedInput):
    if enc.kind is not spec.encoding:
        raise ContractViolation(f"{enc.kind.value} input given to a {spec.encoding.value} circuit")
    if enc.kind is Encoding.ANGLE:
        if enc.values.size != spec.num_qubits:
            raise ContractViolation("angle count does not match the qubit count")
        return enc.values[None, :], None
    if enc.values.size != spec.dim:
        raise ContractViolation("amplitude count does not match 2^n")
    return None, enc.values[None, :]


def build_state(spec: CircuitSpec, enc: EncodedInput) -> sv.StateVector:
    """Gate-by-gate construction through :mod:`qplr.statevec` (single input)."""
    if enc.kind is not spec.encoding:
        raise ContractViolation(f"{enc.kind.value} input given to a {spec.encoding.value} circuit")
    if enc.kind is Encoding.AMPLITUDE:
        state = sv.StateVector.from_amplitudes(enc.values)
    else:
        state = sv.init_zero(spec.num_qubits)
        for q, phi in enumerate(enc.values):
            sv.apply_gate(state, sv.Gate.ry(q, phi))
    for layer in range(spec.num_layers):
        for q in range(spec.num_qubits):
            if spec.rotation is Rotation.RY:
                sv.apply_gate(state, sv.Gate.ry(q, spec.theta[layer, q]))
            else:
                sv.apply_gate(state, sv.Gate.rot(q, *spec.theta[layer, q]))
        for i, j in spec.edges():
            sv.apply_gate(state, sv.Gate.cz(i, j))
    return state


def forward(spec: CircuitSpec, enc: EncodedInput) -> np.ndarray:
    """Exact outcome distribution over all ``2^n`` basis states."""
    angles, amplitudes = _batch_args(spec, enc)
    return forward_batch(spec, angles, amplitudes)[0]


def truncate_renorm(dist: np.ndarray, num_classes: int) -> np.ndarray:
    """Keep the first ``num_classes`` outcomes of each row and renormalize."""
    dist = np.asarray(dist, dtype=np.float64)
    if num_classes > dist.shape[-1]:
        raise ConfigurationError(f"{num_classes} classes exceed {dist.shape[-1]} outcomes")
    kept = dist[..., :num_classes]
    mass = kept.sum(axis=-1, keepdims=True)
    if np.any(mass <= 0.0):
        raise DegenerateInputError("no probability mass on the first K outcomes")
    return kept / mass


def reduce_to_classes(dist, num_classes: int, mode=Reduction.TRUNCATE_RENORM,
                      post_network: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Reduce a ``2^n`` outcome distribution to ``num_classes`` probabilities.

    ``POST_NETWORK`` hands the full distribution to ``post_network`` (a
    callable returning class probabilities), typically a trained labeler's
    post-network.
    """
    mode = Reduction(mode)
    if mode is Reduction.TRUNCATE_RENORM:
        return truncate_renorm(dist, num_classes)
    if post_network is None:
        raise ConfigurationError("post-network reduction needs a post_network callable")
    dist = np.asarray(dist, dtype=np.float64)
    out = np.asarray(post_network(dist if dist.ndim == 2 else dist[None, :]))
    out = out if dist.ndim == 2 else out[0]
    if out.shape[-1] != num_classes:
        raise ContractViolation(f"post-network produced {out.shape[-1]} classes, expected {num_classes}")
    return out


def measure_label_distribution(spec: CircuitSpec, enc: EncodedInput, num_shots: int, seed,
                               num_classes: int = 10, post_network=None) -> np.ndarray:
    """Shot-sampled class distribution: counts / M, then reduced to K classes."""
    if num_shots < 1:
        raise ContractViolation("num_shots must be >= 1")
    counts = sv.sample_counts(forward(spec, enc), num_shots, np.random.default_rng(seed))
    return reduce_to_classes(counts / num_shots, num_classes, spec.reduction, post_network)
