import json

import numpy as np
import pytest

from qplr import vqc
from qplr.errors import ConfigurationError, ContractViolation, DegenerateInputError
from qplr.vqc import CircuitSpec, EncodedInput, Encoding, Reduction

from oracles import circuit_probs


def test_entanglement_edges():
    assert vqc.entanglement_edges("linear", 4) == [(0, 1), (1, 2), (2, 3)]
    ring = vqc.entanglement_edges("ring", 4)
    assert len(ring) == 4 and ring[-1] == (3, 0)
    assert len(vqc.entanglement_edges("full", 4)) == 6
    for n in range(3, 8):
        assert len(vqc.entanglement_edges("linear", n)) == n - 1
        assert len(vqc.entanglement_edges("ring", n)) == n
        assert len(vqc.entanglement_edges("full", n)) == n * (n - 1) // 2
    with pytest.raises(ConfigurationError):
        vqc.entanglement_edges("ring", 1)


def test_entangled_subset_count():
    assert vqc.entangled_subset_count(10) == 1013


def test_encode_examples():
    spec = CircuitSpec(3, num_layers=0)
    enc = vqc.encode(np.zeros(3), spec, squash=False)
    assert np.array_equal(vqc.forward(spec, enc), [1] + [0] * 7)
    amp = CircuitSpec(2, encoding="amplitude", num_layers=0)
    enc = vqc.encode([3.0, 3.0, 0, 0], amp)
    assert np.allclose(enc.values, [1 / np.sqrt(2), 1 / np.sqrt(2), 0, 0])
    with pytest.raises(DegenerateInputError):
        vqc.encode(np.zeros(4), amp)
    with pytest.raises(ContractViolation):
        EncodedInput.from_angles([4.0])


def test_amplitude_encoding_pads():
    enc = EncodedInput.from_amplitudes(np.ones(3), 4)
    assert enc.values[-1] == 0 and np.isclose(np.sum(enc.values ** 2), 1)


def test_squash_range():
    z = np.array([-1e3, 0.0, 1e3])
    phi = vqc.squash_angles(z)
    assert phi[0] == pytest.approx(0) and phi[1] == pytest.approx(np.pi / 2) and phi[2] == pytest.approx(np.pi)


def test_zero_layer_flip():
    spec = CircuitSpec(2, num_layers=0)
    probs = vqc.forward(spec, EncodedInput.from_angles([np.pi, 0]))
    assert np.allclose(probs, [0, 0, 1, 0], atol=1e-15)


@pytest.mark.parametrize("topology", ["linear", "ring", "full"])
@pytest.mark.parametrize("rotation", ["ry", "rot"])
def test_forward_matches_dense_oracle(topology, rotation, rng):
    spec = CircuitSpec(4, num_layers=2, entanglement=topology, rotation=rotation).init_theta(rng)
    phi = rng.uniform(0, np.pi, 4)
    probs = vqc.forward(spec, EncodedInput.from_angles(phi))
    assert np.max(np.abs(probs - circuit_probs(spec, angles=phi))) < 1e-12
    state = vqc.build_state(spec, EncodedInput.from_angles(phi))
    assert np.max(np.abs(np.abs(state.amplitudes) ** 2 - probs)) < 1e-12


def test_amplitude_forward_matches_oracle(rng):
    spec = CircuitSpec(3, encoding="amplitude", num_layers=2).init_theta(rng)
    enc = EncodedInput.from_amplitudes(rng.random(8), 8)
    assert np.max(np.abs(vqc.forward(spec, enc) - circuit_probs(spec, amplitudes=enc.values))) < 1e-12


def test_forward_batch_matches_single(rng):
    spec = CircuitSpec(5, num_layers=3).init_theta(rng)
    angles = rng.uniform(0, np.pi, (6, 5))
    batch = vqc.forward_batch(spec, angles)
    for row, phi in zip(batch, angles):
        assert np.allclose(row, vqc.forward(spec, EncodedInput.from_angles(phi)), atol=1e-14)


def test_encoding_mismatch():
    spec = CircuitSpec(2, encoding="amplitude", num_layers=1)
    with pytest.raises(ContractViolation):
        vqc.forward(spec, EncodedInput.from_angles([0.1, 0.2]))


def test_reduce_to_classes():
    assert np.allclose(vqc.reduce_to_classes(np.full(16, 1 / 16), 10), np.full(10, 0.1))
    onehot = np.zeros(16)
    onehot[3] = 1
    assert np.array_equal(vqc.reduce_to_classes(onehot, 10), np.eye(10)[3])
    onehot = np.zeros(16)
    onehot[12] = 1
    with pytest.raises(DegenerateInputError):
        vqc.reduce_to_classes(onehot, 10)
    with pytest.raises(ConfigurationError):
        vqc.reduce_to_classes(np.full(16, 1 / 16), 10, Reduction.POST_NETWORK)
    out = vqc.reduce_to_classes(np.full(16, 1 / 16), 2, Reduction.POST_NETWORK,
                                post_network=lambda d: np.full((len(d), 2), 0.5))
    assert np.array_equal(out, [0.5, 0.5])


def test_measure_label_distribution(rng):
    spec = CircuitSpec(4, num_layers=0, reduction="truncate_renorm")
    enc = EncodedInput.from_angles(np.zeros(4))
    assert np.array_equal(vqc.measure_label_distribution(spec, enc, 7, 0), np.eye(10)[0])
    spec = CircuitSpec(4, num_layers=2, reduction="truncate_renorm").init_theta(rng)
    enc = EncodedInput.from_angles(rng.uniform(0, np.pi, 4))
    exact = vqc.truncate_renorm(vqc.forward(spec, enc), 10)
    sampled = vqc.measure_label_distribution(spec, enc, 10**5, 5)
    assert 0.5 * np.abs(sampled - exact).sum() < 0.02


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        CircuitSpec(0)
    with pytest.raises(ConfigurationError):
        CircuitSpec(25)
    with pytest.raises(ConfigurationError):
        CircuitSpec(3, num_layers=-1)
    with pytest.raises(ConfigurationError):
        CircuitSpec(3, num_layers=2, theta=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        CircuitSpec(3, entanglement="star")


def test_spec_json_round_trip(rng):
    spec = CircuitSpec(5, num_layers=3, entanglement="full", rotation="rot").init_theta(rng)
    back = CircuitSpec.from_json(spec.to_json())
    assert back == spec and back.theta.tobytes() == spec.theta.tobytes()
    assert back.fingerprint() == spec.fingerprint()
    doc = json.loads(spec.to_json())
    assert set(doc) == {"n", "encoding", "layers", "entanglement", "rotation", "theta", "reduction"}
    with pytest.raises(ConfigurationError):
        CircuitSpec.from_dict({"n": 2})


def test_theta_is_read_only(rng):
    spec = CircuitSpec(2).init_theta(rng)
    with pytest.raises(ValueError):
        spec.theta[0, 0] = 1.0


def test_ring_on_two_qubits_has_one_edge():
    assert CircuitSpec(2, entanglement="ring").edges() == [(0, 1)]
