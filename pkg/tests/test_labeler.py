import numpy as np
import pytest

from qplr import datakit
from qplr.errors import ConfigurationError, IngestionError, TrainingError
from qplr.labeler import (HybridLabeler, HybridLabelerSpec, SoftLabelSet, filter_by_confidence,
                          generate_soft_labels, train_labeler)
from qplr.vqc import CircuitSpec


def toy_spec(**kw):
    base = dict(circuit=CircuitSpec(4, num_layers=1, entanglement="ring"), num_classes=4, input_dim=64,
                pre_hidden=(16,), post_hidden=(16,), epochs=3, batch_size=16)
    base.update(kw)
    return HybridLabelerSpec(**base)


@pytest.fixture(scope="module")
def blobs():
    return datakit.synthetic_blobs(4, 20, 8, seed=2)


@pytest.fixture(scope="module")
def trained(blobs):
    labeler, _ = train_labeler(toy_spec(epochs=20, lr=5e-3), blobs.images, blobs.labels, seed=0)
    return labeler


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        HybridLabelerSpec(circuit=CircuitSpec(3), num_classes=10)
    with pytest.raises(ConfigurationError):
        HybridLabelerSpec(circuit=CircuitSpec(4, encoding="amplitude"), input_dim=784)
    spec = HybridLabelerSpec()
    assert spec.lr_for_epoch(3) == 1e-3 and spec.lr_for_epoch(4) == pytest.approx(1e-4)
    assert HybridLabelerSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_default_shapes():
    lab = HybridLabeler(HybridLabelerSpec(), seed=0)
    dense = [l for l in lab.pre.layers if hasattr(l, "weight")]
    assert [(l.in_features, l.out_features) for l in dense] == [(784, 128), (128, 128), (128, 10)]
    dense = [l for l in lab.post.layers if hasattr(l, "weight")]
    assert [(l.in_features, l.out_features) for l in dense] == [(1024, 128), (128, 10)]


def test_untrained_loss_is_uniform_guess(blobs):
    lab = HybridLabeler(toy_spec(), seed=0)
    probs = lab.predict_proba(blobs.images)
    assert np.allclose(probs, 0.25)


def test_training_learns(blobs, trained):
    probs = trained.predict_proba(blobs.images)
    assert (probs.argmax(axis=1) == blobs.labels).mean() >= 0.95
    assert np.allclose(probs.sum(axis=1), 1, atol=1e-8)


def test_truncate_mode_trains(blobs):
    spec = toy_spec(circuit=CircuitSpec(4, num_layers=2, reduction="truncate_renorm"), epochs=15, lr=1e-2)
    lab, log = train_labeler(spec, blobs.images, blobs.labels, seed=0)
    assert lab.post is None and log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_amplitude_mode_trains(blobs):
    spec = toy_spec(circuit=CircuitSpec(6, encoding="amplitude", num_layers=2), epochs=10, lr=1e-2)
    lab, log = train_labeler(spec, blobs.images, blobs.labels, seed=0)
    assert lab.pre is None and log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_max_steps_and_log(blobs):
    _, log = train_labeler(toy_spec(max_steps=3), blobs.images, blobs.labels, seed=0)
    assert len(log.step_losses) == 3 and len(log.epochs) == 1


def test_divergence_raises(blobs):
    images = blobs.images.copy()
    images[0, 0, 0] = np.nan
    with pytest.raises(TrainingError) as err:
        train_labeler(toy_spec(), images, blobs.labels, seed=0)
    assert err.value.epoch == 1


def test_save_load(tmp_path, blobs, trained):
    trained.save(tmp_path / "lab")
    back = HybridLabeler.load(tmp_path / "lab")
    assert np.array_equal(back.predict_proba(blobs.images), trained.predict_proba(blobs.images))
    with pytest.raises(IngestionError):
        HybridLabeler.load(tmp_path / "missing")


def test_soft_labels_exact_vs_shots(blobs, trained):
    probe = blobs.subset(np.arange(10))
    exact = generate_soft_labels(trained, probe.images, probe.labels, shots=None)
    sampled = generate_soft_labels(trained, probe.images, probe.labels, shots=10**5, seed=4)
    assert exact.shots is None and sampled.shots == 10**5
    assert np.max(0.5 * np.abs(exact.probs - sampled.probs).sum(axis=1)) < 0.02
    assert np.allclose(sampled.probs.sum(axis=1), 1, atol=1e-8)
    assert np.all(sampled.confidence >= 1 / 4) and np.all(sampled.confidence <= 1)


def test_soft_labels_are_deterministic_and_order_free(blobs, trained):
    a = generate_soft_labels(trained, blobs.images, blobs.labels, shots=500, seed=1)
    b = generate_soft_labels(trained, blobs.images, blobs.labels, shots=500, seed=1, batch_size=7)
    assert np.array_equal(a.probs, b.probs)
    rev = generate_soft_labels(trained, blobs.images[::-1], blobs.labels[::-1], shots=500, seed=1)
    assert np.array_equal(rev.probs[::-1], a.probs)
    c = generate_soft_labels(trained, blobs.images, blobs.labels, shots=500, seed=2)
    assert not np.array_equal(a.probs, c.probs)


def test_csv_round_trip(tmp_path, blobs, trained):
    labels = generate_soft_labels(trained, blobs.images, blobs.labels, shots=100, seed=1)
    text = labels.to_csv()
    assert text.splitlines()[0] == f"qplr-labels v1, K=4, M=100, circuit={trained.circuit.fingerprint()}"
    back = SoftLabelSet.from_csv(text)
    assert back.to_csv() == text
    assert np.array_equal(back.probs, np.array([[float(f"{p:.9g}") for p in row] for row in labels.probs]))
    labels.write(tmp_path / "l.csv")
    assert SoftLabelSet.read(tmp_path / "l.csv").to_csv() == text
    exact = generate_soft_labels(trained, blobs.images[:3], blobs.labels[:3], shots=None)
    assert ", M=exact," in exact.header()
    assert SoftLabelSet.from_csv(exact.to_csv()).shots is None


def test_csv_errors():
    with pytest.raises(IngestionError):
        SoftLabelSet.from_csv("idx,label\n")
    with pytest.raises(IngestionError):
        SoftLabelSet.from_csv("qplr-labels v1, K=2, M=10, circuit=x\n0,1,0.5\n")


def _set(conf):
    conf = np.asarray(conf, dtype=float)
    probs = np.stack([conf, 1 - conf], axis=1)
    return SoftLabelSet(np.arange(len(conf)), np.zeros(len(conf), int), probs, probs.max(axis=1), 2, 10, "h")


def test_confidence_filter():
    labels = _set([1.0, 0.95, 0.9, 0.6])
    assert filter_by_confidence(labels, 0.0).retained_fraction == 1.0
    kept = filter_by_confidence(labels, 0.9)
    assert kept.mask.tolist() == [True, True, True, False] and kept.status == "ok"
    sharp = filter_by_confidence(labels, 1.0)
    assert sharp.labels.sample_index.tolist() == [0]
    empty = filter_by_confidence(_set([0.6, 0.7]), 0.9)
    assert empty.status == "empty" and len(empty.labels) == 0
    with pytest.raises(ConfigurationError):
        filter_by_confidence(labels, 1.5)
