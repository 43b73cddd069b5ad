"""Hybrid quantum labeler: pre-network -> circuit -> post-network.

The labeler is trained on exact outcome probabilities with the class
cross-entropy, then emits per-sample soft labels from shot-sampled outcome
frequencies.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import qgrad
from . import statevec as sv
from .errors import ConfigurationError, ContractViolation, DegenerateInputError, IngestionError, TrainingError
from .neural import checkpoint
from .neural.layers import Sequential, softmax
from .neural.losses import LOG_FLOOR, one_hot
from .neural.models import mlp
from .neural.optim import Adam
from .neural.tensor import Tensor
from .seeding import content_key, make_rng
from .vqc import (CircuitSpec, Encoding, Reduction, amplitude_batch, forward_batch, simulate_batch,
                  squash_angles)

log = logging.getLogger(__name__)

LABELS_FORMAT = "qplr-labels v1"


@dataclass(frozen=True)
class HybridLabelerSpec:
    circuit: CircuitSpec = field(default_factory=lambda: CircuitSpec(10, num_layers=3, entanglement="ring"))
    num_classes: int = 10
    input_dim: int = 784
    pre_hidden: Tuple[int, ...] = (128, 128)
    post_hidden: Tuple[int, ...] = (128,)
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay_after: int = 3
    lr_decay: float = 0.1
    theta_init_scale: float = math.pi
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.circuit.dim < self.num_classes:
            raise ConfigurationError(
                f"2^{self.circuit.num_qubits} outcomes cannot cover {self.num_classes} classes")
        if self.circuit.encoding is Encoding.AMPLITUDE and self.input_dim > self.circuit.dim:
            raise ConfigurationError(f"input_dim {self.input_dim} exceeds {self.circuit.dim} amplitudes")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")

    def lr_for_epoch(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``: decays once after ``lr_decay_after``."""
        return self.lr * (self.lr_decay if epoch > self.lr_decay_after else 1.0)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["circuit"] = self.circuit.to_dict()
        doc["pre_hidden"] = list(self.pre_hidden)
        doc["post_hidden"] = list(self.post_hidden)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "HybridLabelerSpec":
        doc = dict(doc)
        circuit = doc.pop("circuit", None)
        if isinstance(circuit, dict):
            doc["circuit"] = CircuitSpec.from_dict(circuit)
        for key in ("pre_hidden", "post_hidden"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(f"bad labeler spec: {exc}") from exc


class HybridLabeler:
    """Trainable pre-network, circuit angles and post-network."""

    def __init__(self, spec: HybridLabelerSpec, seed: int = 0):
        self.spec = spec
        rng = make_rng(seed, "labeler-init")
        circuit = spec.circuit
        self.pre: Optional[Sequential] = None
        if circuit.encoding is Encoding.ANGLE:
            self.pre = mlp((spec.input_dim, *spec.pre_hidden, circuit.num_qubits), rng, name="pre")
        self.theta = Tensor(circuit.init_theta(rng, spec.theta_init_scale).theta.copy(), name="theta")
        self.post: Optional[Sequential] = None
        if circuit.reduction is Reduction.POST_NETWORK:
            self.post = mlp((circuit.dim, *spec.post_hidden, spec.num_classes), rng, name="post")
            # linear head starts at zero: the untrained labeler predicts the uniform distribution
            self.post.layers[-1].weight.data[...] = 0.0

    @property
    def circuit(self) -> CircuitSpec:
        return self.spec.circuit.with_theta(self.theta.data)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def params(self) -> List[Tensor]:
        out = [] if self.pre is None else self.pre.params()
        out.append(self.theta)
        return out + ([] if self.post is None else self.post.params())

    def _flat(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        if x.shape[1] != self.spec.input_dim:
            raise ContractViolation(f"labeler expects {self.spec.input_dim} features, got {x.shape[1]}")
        return x

    def encode_batch(self, x) -> dict:
        """Encoding arguments for :func:`qplr.vqc.forward_batch` plus cached activations."""
        x = self._flat(x)
        if self.pre is None:
            return {"amplitudes": amplitude_batch(x, self.spec.circuit.dim)}
        z = self.pre.forward(x)
        return {"angles": squash_angles(z), "z": z}

    def outcome_probs(self, x) -> np.ndarray:
        enc = self.encode_batch(x)
        return forward_batch(self.circuit, enc.get("angles"), enc.get("amplitudes"))

    def class_probs(self, outcome_probs: np.ndarray) -> np.ndarray:
        """Reduce outcome distributions (exact or shot frequencies) to classes."""
        if self.post is None:
            kept = outcome_probs[:, : self.num_classes]
            mass = kept.sum(axis=1, keepdims=True)
            if np.any(mass <= 0):
                raise DegenerateInputError("no probability mass on the first K outcomes")
            return kept / mass
        return softmax(self.post.forward(outcome_probs * self.spec.circuit.dim))

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        x = self._flat(x)
        return np.concatenate([self.class_probs(self.outcome_probs(x[i:i + batch_size]))
                               for i in range(0, len(x), batch_size)])

    def loss_and_backward(self, x, targets) -> Tuple[float, np.ndarray]:
        """Batch-mean cross-entropy; accumulates gradients into every parameter.

        Returns ``(loss, class_probs)``.
        """
        enc = self.encode_batch(x)
        circuit = self.circuit
        angles = enc.get("angles")
        states = simulate_batch(circuit, angles, enc.get("amplitudes"))
        probs = states.real ** 2 + states.imag ** 2 if np.iscomplexobj(states) else states ** 2
        batch = len(probs)
        k = self.num_classes
        if self.post is not None:
            out = softmax(self.post.forward(probs * circuit.dim))
            loss = float(-(targets * np.log(np.maximum(out, LOG_FLOOR))).sum(axis=1).mean())
            d_probs = self.post.backward((out - targets) / batch) * circuit.dim
        else:
            mass = probs[:, :k].sum(axis=1, keepdims=True)
            out = probs[:, :k] / mass
            loss = float(-(targets * np.log(np.maximum(out, LOG_FLOOR))).sum(axis=1).mean())
            d_out = -targets / np.maximum(out, LOG_FLOOR) / batch
            d_probs = np.zeros_like(probs)
            d_probs[:, :k] = (d_out - (d_out * out).sum(axis=1, keepdims=True)) / mass
        d_theta, d_phi = qgrad.adjoint_vjp(circuit, d_probs, angles=angles,
                                           amplitudes=enc.get("amplitudes"), states=states)
        self.theta.accumulate(d_theta.sum(axis=0))
        if self.pre is not None:
            sig = angles / np.pi
            self.pre.backward(d_phi * np.pi * sig * (1.0 - sig))
        return loss, out

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        doc = {"spec": self.spec.to_dict(), "circuit": self.circuit.to_dict()}
        (directory / "labeler.json").write_text(json.dumps(doc, indent=2))
        if self.pre is not None:
            checkpoint.save(self.pre, directory / "pre.qnn")
        if self.post is not None:
            checkpoint.save(self.post, directory / "post.qnn")

    @classmethod
    def load(cls, directory) -> "HybridLabeler":
        directory = Path(directory)
        path = directory / "labeler.json"
        if not path.exists():
            raise IngestionError(f"missing {path}", field="labeler")
        doc = json.loads(path.read_text())
        spec = HybridLabelerSpec.from_dict(doc["spec"])
        labeler = cls(spec)
        labeler.theta.data = CircuitSpec.from_dict(doc["circuit"]).theta.copy()
        if labeler.pre is not None:
            labeler.pre, _ = checkpoint.load(directory / "pre.qnn")
        if labeler.post is not None:
            labeler.post, _ = checkpoint.load(directory / "post.qnn")
        return labeler


@dataclass
class TrainingLog:
    epochs: List[dict] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    step_accuracy: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def train_labeler(spec: HybridLabelerSpec, images, labels, seed: int = 0,
                  labeler: Optional[HybridLabeler] = None) -> Tuple[HybridLabeler, TrainingLog]:
    """Jointly fit pre-network, circuit angles and post-network by Adam on the class CE."""
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(images, dtype=np.float64).reshape(len(labels), -1)
    targets = one_hot(labels, spec.num_classes)
    labeler = labeler or HybridLabeler(spec, seed)
    opt = Adam(labeler.params(), lr=spec.lr)
    history = TrainingLog()
    steps = 0
    for epoch in range(1, spec.epochs + 1):
        opt.lr = spec.lr_for_epoch(epoch)
        order = make_rng(seed, "labeler-shuffle", epoch).permutation(len(x))
        total, correct, seen = 0.0, 0, 0
        for start in range(0, len(x), spec.batch_size):
            idx = order[start:start + spec.batch_size]
            opt.zero_grad()
            loss, out = labeler.loss_and_backward(x[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingError("labeler loss diverged", epoch=epoch)
            opt.step()
            hits = int((out.argmax(axis=1) == labels[idx]).sum())
            total += loss * len(idx)
            correct += hits
            seen += len(idx)
            history.step_losses.append(loss)
            history.step_accuracy.append(hits / len(idx))
            steps += 1
            if spec.max_steps is not None and steps >= spec.max_steps:
                break
        history.epochs.append({"epoch": epoch, "lr": opt.lr, "loss": total / seen, "accuracy": correct / seen})
        log.info("labeler epoch %d: loss %.4f acc %.4f", epoch, total / seen, correct / seen)
        if spec.max_steps is not None and steps >= spec.max_steps:
            break
    return labeler, history


@dataclass(eq=False)
class SoftLabelSet:
    sample_index: np.ndarray
    hard_label: np.ndarray
    probs: np.ndarray
    confidence: np.ndarray
    num_classes: int
    shots: Optional[int]
    circuit_hash: str
    seed: Optional[int] = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1, self.num_classes)
        n = len(self.probs)
        if not (len(self.sample_index) == len(self.hard_label) == len(self.confidence) == n):
            raise ContractViolation("soft-label columns have different lengths")

    def __len__(self) -> int:
        return len(self.probs)

    def subset(self, mask) -> "SoftLabelSet":
        mask = np.asarray(mask)
        return replace(self, sample_index=self.sample_index[mask], hard_label=self.hard_label[mask],
                       probs=self.probs[mask], confidence=self.confidence[mask])

    def header(self) -> str:
        shots = "exact" if self.shots is None else str(self.shots)
        return f"{LABELS_FORMAT}, K={self.num_classes}, M={shots}, circuit={self.circuit_hash}"

    def to_csv(self) -> str:
        lines = [self.header()]
        for i in range(len(self)):
            cells = [str(int(self.sample_index[i])), str(int(self.hard_label[i]))]
            cells += [f"{p:.9g}" for p in self.probs[i]]
            cells.append(f"{self.confidence[i]:.9g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "SoftLabelSet":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(LABELS_FORMAT + ","):
            raise IngestionError("missing 'qplr-labels v1' header", field="header")
        try:
            meta = dict(part.strip().split("=", 1) for part in lines[0].split(",")[1:])
            k = int(meta["K"])
            shots = None if meta["M"] == "exact" else int(meta["M"])
            circuit_hash = meta["circuit"]
        except (KeyError, ValueError) as exc:
            raise IngestionError(f"malformed header: {lines[0]!r}", field="header") from exc
        rows = [line.split(",") for line in lines[1:] if line.strip()]
        for r, row in enumerate(rows):
            if len(row) != k + 3:
                raise IngestionError(f"row {r} has {len(row)} cells, expected {k + 3}", field="rows")
        if not rows:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, k)), np.zeros(0), k, shots, circuit_hash)
        table = np.array(rows, dtype=object)
        return cls(
            sample_index=table[:, 0].astype(np.int64),
            hard_label=table[:, 1].astype(np.int64),
            probs=table[:, 2:2 + k].astype(np.float64),
            confidence=table[:, -1].astype(np.float64),
            num_classes=k,
            shots=shots,
            circuit_hash=circuit_hash,
        )

    @classmethod
    def read(cls, path) -> "SoftLabelSet":
        path = Path(path)
        if not path.exists():
            raise IngestionError(f"file not found: {path}", field="labels")
        return cls.from_csv(path.read_text())


def generate_soft_labels(labeler: HybridLabeler, images, labels, shots: Optional[int] = 1000,
                         seed: int = 0, sample_index=None, batch_size: int = 256) -> SoftLabelSet:
    """Per-sample class distributions from ``shots`` measurements (exact when None).

    Each sample's shot stream is keyed by a hash of its pixels, so labels do
    not depend on dataset order or batching.
    """
    if shots is not None and shots < 1:
        raise ContractViolation("shots must be >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(images, dtype=np.float64).reshape(len(labels), -1)
    out = np.zeros((len(x), labeler.num_classes))
    for start in range(0, len(x), batch_size):
        chunk = x[start:start + batch_size]
        dist = labeler.outcome_probs(chunk)
        if shots is not None:
            freq = np.empty_like(dist)
            for j, row in enumerate(chunk):
                rng = make_rng(seed, "label-gen", content_key(row))
                freq[j] = sv.sample_counts(dist[j], shots, rng) / shots
            dist = freq
        out[start:start + len(chunk)] = labeler.class_probs(dist)
    index = np.arange(len(x)) if sample_index is None else np.asarray(sample_index, dtype=np.int64)
    return SoftLabelSet(index, labels, out, out.max(axis=1), labeler.num_classes, shots,
                        labeler.circuit.fingerprint(), seed)


@dataclass
class ConfidenceFilter:
    labels: SoftLabelSet
    mask: np.ndarray
    retained_fraction: float
    status: str


def filter_by_confidence(labels: SoftLabelSet, threshold: float = 0.9) -> ConfidenceFilter:
    """Keep samples whose top class probability is at least ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"confidence threshold must be in [0, 1], got {threshold}")
    mask = labels.confidence >= threshold
    kept = int(mask.sum())
    fraction = kept / len(labels) if len(labels) else 0.0
    status = "ok"
    if kept == 0:
        status = "empty"
        log.warning("confidence filter at %.3f removed every sample", threshold)
    return ConfidenceFilter(labels.subset(mask), mask, fraction, status)
