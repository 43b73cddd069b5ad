import numpy as np
import pytest

from qplr import qgrad, vqc
from qplr.errors import ContractViolation
from qplr.vqc import CircuitSpec, EncodedInput


def _case(rng, **kw):
    spec = CircuitSpec(4, num_layers=2, **kw).init_theta(rng)
    if spec.encoding is vqc.Encoding.AMPLITUDE:
        return spec, EncodedInput.from_amplitudes(rng.random(16), 16)
    return spec, EncodedInput.from_angles(rng.uniform(0.2, np.pi - 0.2, 4))


@pytest.mark.parametrize("topology", ["linear", "ring", "full"])
@pytest.mark.parametrize("rotation", ["ry", "rot"])
def test_three_routes_agree(topology, rotation, rng):
    spec, enc = _case(rng, entanglement=topology, rotation=rotation)
    ps = qgrad.parameter_shift_jacobian(spec, enc)
    fd = qgrad.finite_difference_jacobian(spec, enc, h=1e-5)
    adj = qgrad.adjoint_jacobian(spec, enc)
    assert ps.max_abs_diff(fd) < 1e-6
    assert adj.max_abs_diff(ps) < 1e-10
    assert ps.d_phi.shape == (16, 4)


def test_amplitude_encoding_has_no_angle_gradient(rng):
    spec, enc = _case(rng, encoding="amplitude")
    adj = qgrad.adjoint_jacobian(spec, enc)
    assert adj.d_phi is None
    assert adj.max_abs_diff(qgrad.parameter_shift_jacobian(spec, enc)) < 1e-10


def test_truncated_jacobian(rng):
    spec, enc = _case(rng)
    ps = qgrad.parameter_shift_jacobian(spec, enc, num_classes=10)
    fd = qgrad.finite_difference_jacobian(spec, enc, num_classes=10)
    adj = qgrad.adjoint_jacobian(spec, enc, num_classes=10)
    assert ps.max_abs_diff(fd) < 1e-6 and adj.max_abs_diff(ps) < 1e-10
    # renormalized outputs always sum to one, so their derivatives sum to zero
    assert np.max(np.abs(adj.d_theta.sum(axis=0))) < 1e-12


def test_probability_columns_sum_to_zero(rng):
    spec, enc = _case(rng, entanglement="full")
    adj = qgrad.adjoint_jacobian(spec, enc)
    assert np.max(np.abs(adj.d_theta.sum(axis=0))) < 1e-12
    assert np.max(np.abs(adj.d_phi.sum(axis=0))) < 1e-12


def test_zero_layers(rng):
    spec = CircuitSpec(3, num_layers=0)
    enc = EncodedInput.from_angles(rng.uniform(0, np.pi, 3))
    adj = qgrad.adjoint_jacobian(spec, enc)
    ps = qgrad.parameter_shift_jacobian(spec, enc)
    assert adj.d_theta.size == 0
    assert np.max(np.abs(adj.d_phi - ps.d_phi)) < 1e-12


def test_vjp_matches_jacobian_contraction(rng):
    spec = CircuitSpec(4, num_layers=3).init_theta(rng)
    angles = rng.uniform(0, np.pi, (3, 4))
    upstream = rng.normal(size=(3, 16))
    d_theta, d_phi = qgrad.adjoint_vjp(spec, upstream, angles=angles)
    for r in range(3):
        jac = qgrad.parameter_shift_jacobian(spec, EncodedInput.from_angles(angles[r]))
        assert np.allclose(d_theta[r], np.tensordot(upstream[r], jac.d_theta, axes=1), atol=1e-12)
        assert np.allclose(d_phi[r], upstream[r] @ jac.d_phi, atol=1e-12)


def test_vjp_shape_check(rng):
    spec = CircuitSpec(3).init_theta(rng)
    with pytest.raises(ContractViolation):
        qgrad.adjoint_vjp(spec, np.zeros((2, 4)), angles=np.zeros((2, 3)))


def test_finite_difference_step_range(rng):
    spec, enc = _case(rng)
    with pytest.raises(ContractViolation):
        qgrad.finite_difference_jacobian(spec, enc, h=0.1)
