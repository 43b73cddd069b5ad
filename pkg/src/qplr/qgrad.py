"""Derivatives of circuit output probabilities.

Three routes to the same Jacobian:

* ``parameter_shift_jacobian`` - two shifted forward passes per angle;
  exact for RY/RZ (and per Euler angle of the three-angle rotation).
* ``adjoint_jacobian`` - one forward pass plus a reverse sweep over the
  circuit, carrying a batch of co-states (one per output observable).
* ``finite_difference_jacobian`` - central differences, used as a test oracle.

The outputs differentiated are the raw ``2^n`` outcome probabilities when
``num_classes`` is None, otherwise the truncated-and-renormalized class
distribution.

``adjoint_vjp`` is the training workhorse: given an upstream gradient on the
outcome probabilities of a batch of inputs it returns the gradient with
respect to theta and the encoding angles in a single sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import statevec as sv
from .errors import ContractViolation
from .vqc import (CircuitSpec, EncodedInput, Encoding, _batch_args, compile_steps, forward,
                  layer_phases, rotation_derivative, rotation_matrix, simulate_batch,
                  truncate_renorm)


@dataclass
class QuantumJacobian:
    """``d_theta[k, ...]`` = dP(k)/dtheta; ``d_phi[k, i]`` = dP(k)/dphi_i (angle encoding)."""

    d_theta: np.ndarray
    d_phi: Optional[np.ndarray] = None

    @property
    def num_outputs(self) -> int:
        return self.d_theta.shape[0]

    def max_abs_diff(self, other: "QuantumJacobian") -> float:
        diff = float(np.max(np.abs(self.d_theta - other.d_theta), initial=0.0))
        if self.d_phi is not None and other.d_phi is not None:
            diff = max(diff, float(np.max(np.abs(self.d_phi - other.d_phi), initial=0.0)))
        return diff


def _outputs(spec: CircuitSpec, enc: EncodedInput, num_classes: Optional[int]) -> np.ndarray:
    probs = forward(spec, enc)
    return probs if num_classes is None else truncate_renorm(probs, num_classes)


def _renorm_chain(raw: np.ndarray, d_raw: np.ndarray, num_classes: Optional[int]) -> np.ndarray:
    """Map derivatives of raw probabilities onto the truncated-renormalized outputs.

    ``d_raw`` has the outcome axis first: shape ``(2^n, ...)``.
    """
    if num_classes is None:
        return d_raw
    mass = raw[:num_classes].sum()
    q = raw[:num_classes] / mass
    d_kept = d_raw[:num_classes]
    d_mass = d_kept.sum(axis=0)
    return (d_kept - np.multiply.outer(q, d_mass)) / mass


def _check_angle_circuit(spec: CircuitSpec, enc: EncodedInput) -> None:
    _batch_args(spec, enc)


def parameter_shift_jacobian(spec: CircuitSpec, enc: EncodedInput,
                             num_classes: Optional[int] = None) -> QuantumJacobian:
    _check_angle_circuit(spec, enc)
    raw = forward(spec, enc)
    shift = np.pi / 2.0
    theta = spec.theta
    d_theta = np.zeros((raw.size,) + theta.shape)
    for idx in np.ndindex(theta.shape):
        plus, minus = theta.copy(), theta.copy()
        plus[idx] += shift
        minus[idx] -= shift
        d_theta[(slice(None),) + idx] = 0.5 * (
            forward(spec.with_theta(plus), enc) - forward(spec.with_theta(minus), enc)
        )
    d_phi = None
    if enc.kind is Encoding.ANGLE:
        d_phi = np.zeros((raw.size, enc.values.size))
        for i in range(enc.values.size):
            plus, minus = enc.values.copy(), enc.values.copy()
            plus[i] += shift
            minus[i] -= shift
            # shifted angles may leave [0, pi]; bypass the range check
            d_phi[:, i] = 0.5 * (
                forward(spec, EncodedInput(Encoding.ANGLE, plus)) - forward(spec, EncodedInput(Encoding.ANGLE, minus))
            )
    return QuantumJacobian(
        _renorm_chain(raw, d_theta, num_classes),
        None if d_phi is None else _renorm_chain(raw, d_phi, num_classes),
    )


def finite_difference_jacobian(spec: CircuitSpec, enc: EncodedInput, h: float = 1e-5,
                               num_classes: Optional[int] = None) -> QuantumJacobian:
    if not 1e-7 <= h <= 1e-3:
        raise ContractViolation(f"finite-difference step {h} outside [1e-7, 1e-3]")
    _check_angle_circuit(spec, enc)
    theta = spec.theta
    base = _outputs(spec, enc, num_classes)
    d_theta = np.zeros((base.size,) + theta.shape)
    for idx in np.ndindex(theta.shape):
        plus, minus = theta.copy(), theta.copy()
        plus[idx] += h
        minus[idx] -= h
        d_theta[(slice(None),) + idx] = (
            _outputs(spec.with_theta(plus), enc, num_classes) - _outputs(spec.with_theta(minus), enc, num_classes)
        ) / (2.0 * h)
    d_phi = None
    if enc.kind is Encoding.ANGLE:
        d_phi = np.zeros((base.size, enc.values.size))
        for i in range(enc.values.size):
            plus, minus = enc.values.copy(), enc.values.copy()
            plus[i] += h
            minus[i] -= h
            d_phi[:, i] = (
                _outputs(spec, EncodedInput(Encoding.ANGLE, plus), num_classes)
                - _outputs(spec, EncodedInput(Encoding.ANGLE, minus), num_classes)
            ) / (2.0 * h)
    return QuantumJacobian(d_theta, d_phi)


def _dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _row_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``2 Re <a_r|b_r>`` for every row r."""
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        return 2.0 * np.einsum("rd,rd->r", np.conj(a), b).real
    return 2.0 * np.einsum("rd,rd->r", a, b)


def adjoint_vjp(spec: CircuitSpec, upstream: np.ndarray, angles=None, amplitudes=None,
                states: Optional[np.ndarray] = None):
    """Gradient of ``sum_y upstream[r, y] * P_r(y)`` for each batch row ``r``.

    Returns ``(d_theta, d_phi)`` with shapes ``(B,) + theta.shape`` and
    ``(B, n)`` (``d_phi`` is None for amplitude encoding). ``states`` may pass
    in already-simulated final states to skip the forward pass.
    """
    n = spec.num_qubits
    psi = simulate_batch(spec, angles, amplitudes) if states is None else states
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != psi.shape:
        raise ContractViolation(f"upstream shape {upstream.shape} != state batch {psi.shape}")
    batch = psi.shape[0]
    phi = psi.copy()
    lam = upstream * psi
    d_theta = np.zeros((batch,) + spec.theta.shape)
    d_phi = np.zeros((batch, n)) if spec.encoding is Encoding.ANGLE else None
    if angles is not None:
        angles = np.asarray(angles, dtype=np.float64)
    for step in reversed(compile_steps(spec)):
        kind = step[0]
        if kind == "diag":
            phases = layer_phases(spec)
            phi *= phases
            lam *= phases
            continue
        if kind == "enc":
            q = step[1]
            u = sv.ry_matrices(angles[:, q])
            du = sv.ry_derivatives(angles[:, q])
        else:
            _, idx, q, axis = step
            u = rotation_matrix(axis, spec.theta[idx])
            du = rotation_derivative(axis, spec.theta[idx])
        u_dag = _dagger(u)
        sv.apply_single_qubit(phi, u_dag, q, n)
        mu = sv.apply_single_qubit(phi.astype(np.result_type(phi, du), copy=True), du, q, n)
        grad = _row_inner(lam, mu)
        if kind == "enc":
            d_phi[:, q] = grad
        else:
            d_theta[(slice(None),) + idx] = grad
        sv.apply_single_qubit(lam, u_dag, q, n)
    return d_theta, d_phi


def adjoint_jacobian(spec: CircuitSpec, enc: EncodedInput,
                     num_classes: Optional[int] = None) -> QuantumJacobian:
    """Full Jacobian by a batched projector sweep: one co-state per output."""
    angles, amplitudes = _batch_args(spec, enc)
    raw = forward(spec, enc)
    if num_classes is None:
        rows = np.eye(raw.size)
    else:
        mass = raw[:num_classes].sum()
        q = raw[:num_classes] / mass
        rows = np.zeros((num_classes, raw.size))
        rows[:, :num_classes] = (np.eye(num_classes) - q[:, None]) / mass
    reps = rows.shape[0]
    states = np.repeat(simulate_batch(spec, angles, amplitudes), reps, axis=0)
    d_theta, d_phi = adjoint_vjp(
        spec,
        rows,
        angles=None if angles is None else np.repeat(angles, reps, axis=0),
        amplitudes=None if amplitudes is None else np.repeat(amplitudes, reps, axis=0),
        states=states,
    )
    return QuantumJacobian(d_theta, d_phi)
