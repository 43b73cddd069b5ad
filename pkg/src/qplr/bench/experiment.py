"""Student training and the M1-M4 / BNN / RS robustness comparison."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import datakit
from ..datakit import CorruptionSpec, ImageDataset
from ..errors import ConfigurationError, ContractViolation, TrainingError
from ..labeler import (HybridLabeler, HybridLabelerSpec, SoftLabelSet, filter_by_confidence,
                       generate_soft_labels, train_labeler)
from ..neural.layers import Sequential, softmax
from ..neural.losses import entropy, one_hot, smooth_labels, softmax_cross_entropy
from ..neural.models import LeNetSpec, lenet
from ..neural.optim import Adam
from ..seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

METHOD_KINDS = ("M1", "M2", "M3", "M4", "BNN", "RS")


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    epsilon: float = 0.1
    threshold: float = 0.9
    rate: float = 0.5
    passes: int = 20
    noise_std: float = 0.05

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigurationError(f"unknown method {self.kind!r}; choose from {METHOD_KINDS}")
        if self.kind == "M2" and not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError("M2 needs epsilon in [0, 1)")
        if self.kind == "M4" and not 0.0 < self.threshold <= 1.0:
            raise ConfigurationError("M4 needs threshold in (0, 1]")
        if self.kind in ("BNN", "RS") and self.passes < 1:
            raise ConfigurationError("BNN/RS need passes >= 1")

    @property
    def name(self) -> str:
        return self.kind

    @property
    def needs_quantum_labels(self) -> bool:
        return self.kind in ("M3", "M4")

    @property
    def needs_teacher(self) -> bool:
        return self.kind in ("BNN", "RS")


@dataclass(frozen=True)
class StudentHyperparams:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay_after: Optional[int] = None
    lr_decay: float = 0.1
    dropout: float = 0.0
    input_noise_std: float = 0.0

    def lr_for_epoch(self, epoch: int) -> float:
        if self.lr_decay_after is not None and epoch > self.lr_decay_after:
            return self.lr * self.lr_decay
        return self.lr


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    train_size: Optional[int] = 5000
    test_size: Optional[int] = 2000
    labeler: HybridLabelerSpec = field(default_factory=lambda: HybridLabelerSpec(epochs=3))
    labels_path: Optional[str] = None
    shots: Optional[int] = 1000
    methods: List[MethodSpec] = field(default_factory=lambda: [MethodSpec(k) for k in ("M1", "M2", "M3", "M4")])
    grid: List[CorruptionSpec] = field(
        default_factory=lambda: datakit.corruption_grid([0.1, 0.2, 0.3, 0.4, 0.5], [0.0, 20.0]))
    student: StudentHyperparams = field(default_factory=StudentHyperparams)
    teacher: StudentHyperparams = field(default_factory=StudentHyperparams)
    seed: int = 0

    def seeds(self) -> Dict[str, int]:
        names = ("subsample", "labeler-train", "label-gen", "teacher-train", "student-train", "eval-noise")
        return {name: derive_seed(self.seed, name) for name in names}

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "labeler": self.labeler.to_dict(),
            "labels_path": self.labels_path,
            "shots": self.shots,
            "methods": [asdict(m) for m in self.methods],
            "grid": [asdict(c) for c in self.grid],
            "student": asdict(self.student),
            "teacher": asdict(self.teacher),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known - {"sweep"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "labeler" in doc and doc["labeler"] is not None:
                doc["labeler"] = HybridLabelerSpec.from_dict(doc["labeler"])
            elif "labeler" in doc:
                doc.pop("labeler")
            if "methods" in doc:
                doc["methods"] = [MethodSpec(**m) if isinstance(m, dict) else MethodSpec(m) for m in doc["methods"]]
            if "grid" in doc:
                grid = doc["grid"]
                if isinstance(grid, dict):
                    doc["grid"] = datakit.corruption_grid(grid["stds"], grid.get("rotations", [0.0]),
                                                          grid.get("clamp", True))
                else:
                    doc["grid"] = [CorruptionSpec(**c) for c in grid]
            for key in ("student", "teacher"):
                if key in doc:
                    doc[key] = StudentHyperparams(**doc[key])
            doc.pop("sweep", None)
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(f"bad experiment config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


# ------------------------------------------------------------------ training


def _as_batch(images: np.ndarray) -> np.ndarray:
    return images[:, None, :, :] if images.ndim == 3 else images


def train_student(targets: np.ndarray, mask: Optional[np.ndarray], dataset: ImageDataset,
                  hp: StudentHyperparams = StudentHyperparams(), seed: int = 0,
                  allow_corrupted: bool = False) -> Tuple[Sequential, dict]:
    """Fit a LeNet to soft targets on the samples selected by ``mask``."""
    if not dataset.is_clean and not allow_corrupted:
        raise ContractViolation("students train on clean data; corrupted set given")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(dataset), dataset.num_classes):
        raise ContractViolation(f"targets shape {targets.shape} does not match dataset")
    if np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-6):
        raise ContractViolation("targets must be normalized")
    keep = np.arange(len(dataset)) if mask is None else np.flatnonzero(mask)
    if keep.size == 0:
        raise TrainingError("no training samples left after masking")
    size = dataset.images.shape[-1]
    model = lenet(LeNetSpec(num_classes=dataset.num_classes, input_size=size, dropout=hp.dropout),
                  make_rng(seed, "student-init"))
    opt = Adam(model.params(), lr=hp.lr)
    images = _as_batch(dataset.images)
    history = {"epochs": [], "num_samples": int(keep.size)}
    for epoch in range(1, hp.epochs + 1):
        opt.lr = hp.lr_for_epoch(epoch)
        order = keep[make_rng(seed, "student-shuffle", epoch).permutation(keep.size)]
        total, correct = 0.0, 0
        for b, start in enumerate(range(0, order.size, hp.batch_size)):
            idx = order[start:start + hp.batch_size]
            x = images[idx]
            if hp.input_noise_std > 0:
                noise_rng = make_rng(seed, "student-input-noise", epoch, b)
                x = np.clip(x + noise_rng.normal(0.0, hp.input_noise_std, size=x.shape), 0.0, 1.0)
            opt.zero_grad()
            logits = model.forward(x, training=True, rng=make_rng(seed, "student-dropout", epoch, b))
            loss, grad = softmax_cross_entropy(logits, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError("student loss diverged", epoch=epoch)
            model.backward(grad)
            opt.step()
            total += loss * len(idx)
            correct += int((logits.argmax(axis=1) == dataset.labels[idx]).sum())
        history["epochs"].append({"epoch": epoch, "lr": opt.lr, "loss": total / keep.size,
                                  "accuracy": correct / keep.size})
        log.info("student epoch %d: loss %.4f", epoch, total / keep.size)
    return model, history


def mc_dropout_probs(model: Sequential, images: np.ndarray, passes: int, seed: int,
                     batch_size: int = 500) -> np.ndarray:
    """Mean softmax over ``passes`` forward passes with dropout active."""
    images = _as_batch(images)
    out = np.zeros((len(images), model.layers[-1].out_features))
    for p in range(passes):
        rng = make_rng(seed, "mc-dropout", p)
        for start in range(0, len(images), batch_size):
            chunk = images[start:start + batch_size]
            out[start:start + len(chunk)] += softmax(model.forward(chunk, training=True, rng=rng))
    return out / passes


def smoothed_probs(model: Sequential, images: np.ndarray, passes: int, std: float, seed: int,
                   batch_size: int = 500) -> np.ndarray:
    """Mean softmax over ``passes`` Gaussian-perturbed copies of each input."""
    images = _as_batch(images)
    out = np.zeros((len(images), model.layers[-1].out_features))
    for p in range(passes):
        rng = make_rng(seed, "rs-copy", p)
        noisy = np.clip(images + rng.normal(0.0, std, size=images.shape), 0.0, 1.0)
        out += model.predict_proba(noisy, batch_size)
    return out / passes


def train_teacher(method: MethodSpec, dataset: ImageDataset, hp: StudentHyperparams, seed: int):
    """One-hot-trained LeNet: with dropout (BNN) or with input noise (RS)."""
    if method.kind == "BNN":
        hp = StudentHyperparams(**{**asdict(hp), "dropout": method.rate})
    elif method.kind == "RS":
        hp = StudentHyperparams(**{**asdict(hp), "input_noise_std": method.noise_std})
    else:
        raise ConfigurationError(f"{method.kind} has no teacher")
    return train_student(one_hot(dataset.labels, dataset.num_classes), None, dataset, hp, seed)


def build_targets(method: MethodSpec, dataset: ImageDataset, labels: Optional[SoftLabelSet] = None,
                  teacher: Optional[Sequential] = None, seed: int = 0):
    """Per-sample targets ``(N, K)`` and a sample mask (None keeps everything)."""
    k = dataset.num_classes
    if method.kind == "M1":
        return one_hot(dataset.labels, k), None
    if method.kind == "M2":
        return smooth_labels(dataset.labels, k, method.epsilon), None
    if method.needs_quantum_labels:
        if labels is None:
            raise ConfigurationError(f"{method.kind} needs a soft-label set")
        if labels.num_classes != k:
            raise ConfigurationError(f"soft labels have K={labels.num_classes}, dataset K={k}")
        targets = np.full((len(dataset), k), np.nan)
        if np.any(labels.sample_index < 0) or np.any(labels.sample_index >= len(dataset)):
            raise ConfigurationError("soft-label indices fall outside the dataset")
        if np.any(dataset.labels[labels.sample_index] != labels.hard_label):
            raise ConfigurationError("soft-label hard labels disagree with the dataset")
        targets[labels.sample_index] = labels.probs
        if np.isnan(targets).any():
            raise ConfigurationError("soft-label set does not cover every training sample")
        targets /= targets.sum(axis=1, keepdims=True)
        if method.kind == "M3":
            return targets, None
        kept = filter_by_confidence(labels, method.threshold)
        mask = np.zeros(len(dataset), dtype=bool)
        mask[kept.labels.sample_index] = True
        return targets, mask
    if teacher is None:
        raise ConfigurationError(f"{method.kind} needs a trained teacher")
    if method.kind == "BNN":
        return mc_dropout_probs(teacher, dataset.images, method.passes, seed), None
    return smoothed_probs(teacher, dataset.images, method.passes, method.noise_std, seed), None


# ---------------------------------------------------------------- evaluation


@dataclass
class CellResult:
    corruption: CorruptionSpec
    accuracy: float
    confusion: np.ndarray
    mean_entropy: float
    low_confidence: List[dict] = field(default_factory=list)

    @property
    def num_samples(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {"corruption": asdict(self.corruption), "accuracy": self.accuracy,
                "confusion": self.confusion.tolist(), "mean_entropy": self.mean_entropy,
                "low_confidence": self.low_confidence}

    @classmethod
    def from_dict(cls, doc: dict) -> "CellResult":
        return cls(CorruptionSpec(**doc["corruption"]), doc["accuracy"], np.array(doc["confusion"], dtype=np.int64),
                   doc["mean_entropy"], doc.get("low_confidence", []))


@dataclass
class EvalReport:
    method: str
    seed: int
    cells: List[CellResult]

    def cell(self, std: float, rotation: float = 0.0) -> CellResult:
        for c in self.cells:
            if np.isclose(c.corruption.gaussian_std, std) and np.isclose(c.corruption.rotation_degrees, rotation):
                return c
        raise KeyError(f"no cell std={std} rot={rotation}")

    def to_dict(self) -> dict:
        return {"method": self.method, "seed": self.seed, "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(doc["method"], doc["seed"], [CellResult.from_dict(c) for c in doc["cells"]])


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def evaluate_grid(model: Sequential, dataset: ImageDataset, grid: Sequence[CorruptionSpec], seed: int = 0,
                  exemplars: int = 10) -> List[CellResult]:
    """Accuracy, confusion matrix and mean entropy on each corrupted copy of ``dataset``."""
    cells = []
    for spec in grid:
        corrupted = datakit.corrupt(dataset, spec, derive_seed(seed, "eval-noise", spec.label()))
        probs = model.predict_proba(_as_batch(corrupted.images))
        preds = probs.argmax(axis=1)  # ties resolve to the lowest class index
        cm = confusion_matrix(dataset.labels, preds, dataset.num_classes)
        low = []
        for i in np.argsort(probs.max(axis=1), kind="stable")[:exemplars]:
            top = np.argsort(-probs[i], kind="stable")[:2]
            low.append({"index": int(i), "label": int(dataset.labels[i]),
                        "top2": [[int(c), float(probs[i, c])] for c in top]})
        cells.append(CellResult(spec, float(np.trace(cm) / cm.sum()), cm, float(entropy(probs).mean()), low))
    return cells


# -------------------------------------------------------------------- report

METRICS_COLUMNS = ("method", "seed", "gaussian_std", "rotation_degrees", "clamp", "num_samples",
                   "accuracy", "mean_entropy")


def metrics_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for rep in reports:
        for c in rep.cells:
            writer.writerow([rep.method, rep.seed, repr(float(c.corruption.gaussian_std)),
                             repr(float(c.corruption.rotation_degrees)), int(c.corruption.clamp),
                             c.num_samples, repr(c.accuracy), repr(c.mean_entropy)])
    return buf.getvalue()


def _cell_slug(rep: EvalReport, cell: CellResult) -> str:
    c = cell.corruption
    return f"{rep.method}_seed{rep.seed}_std{c.gaussian_std:g}_rot{c.rotation_degrees:g}"


def report(reports: Sequence[EvalReport], out_dir) -> Path:
    """Write metrics.csv, summary.json, per-cell confusion CSVs and low-confidence exemplars."""
    if not reports:
        raise ConfigurationError("report needs at least one evaluated method")
    out = Path(out_dir)
    (out / "confusion").mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(reports))
    exemplars = {}
    for rep in reports:
        for cell in rep.cells:
            slug = _cell_slug(rep, cell)
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["true\\pred"] + list(range(len(cell.confusion))))
            for k, row in enumerate(cell.confusion):
                writer.writerow([k] + [int(v) for v in row])
            (out / "confusion" / f"{slug}.csv").write_text(buf.getvalue())
            exemplars[slug] = cell.low_confidence
    (out / "low_confidence.json").write_text(json.dumps(exemplars, indent=2, sort_keys=True) + "\n")
    summary = {f"{r.method}/seed{r.seed}": {c.corruption.label(): c.accuracy for c in r.cells} for r in reports}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out / "metrics.csv"


# ---------------------------------------------------------------- pipelines


@dataclass
class ComparisonResult:
    reports: Dict[str, EvalReport]
    labels: Optional[SoftLabelSet] = None
    labeler_log: Optional[dict] = None
    student_logs: Dict[str, dict] = field(default_factory=dict)
    filtered_count: Optional[int] = None
    retained_fraction: Optional[float] = None
    models: Dict[str, Sequential] = field(default_factory=dict)


def prepare_data(config: ExperimentConfig, data_dir=None) -> Tuple[ImageDataset, ImageDataset]:
    seeds = config.seeds()
    if config.dataset == "blobs":
        full = datakit.synthetic_blobs(10, 60, 28, seed=seeds["subsample"])
        cut = int(len(full) * 0.75)
        return full.subset(np.arange(cut)), full.subset(np.arange(cut, len(full)))
    train = datakit.load_dataset(data_dir, config.dataset, "train")
    test = datakit.load_dataset(data_dir, config.dataset, "test")
    return (datakit.subsample(train, config.train_size, seeds["subsample"]),
            datakit.subsample(test, config.test_size, derive_seed(config.seed, "subsample-test")))


def run_comparison(config: ExperimentConfig, train: ImageDataset, test: ImageDataset,
                   labels: Optional[SoftLabelSet] = None,
                   labeler: Optional[HybridLabeler] = None) -> ComparisonResult:
    """Train every configured student on ``train`` and evaluate it on the corruption grid."""
    seeds = config.seeds()
    result = ComparisonResult({})
    if labels is None and config.labels_path:
        labels = SoftLabelSet.read(config.labels_path)
    if labels is None and any(m.needs_quantum_labels for m in config.methods):
        if labeler is None:
            labeler, lab_log = train_labeler(config.labeler, train.images, train.labels, seeds["labeler-train"])
            result.labeler_log = lab_log.to_dict()
        labels = generate_soft_labels(labeler, train.images, train.labels, config.shots, seeds["label-gen"])
    result.labels = labels
    teachers = {}
    for method in config.methods:
        teacher = None
        if method.needs_teacher:
            key = (method.kind, method.rate, method.noise_std)
            if key not in teachers:
                teachers[key], _ = train_teacher(method, train, config.teacher, seeds["teacher-train"])
            teacher = teachers[key]
        targets, mask = build_targets(method, train, labels, teacher, derive_seed(config.seed, "targets", method.kind))
        if method.kind == "M4":
            result.filtered_count = int((~mask).sum())
            result.retained_fraction = float(mask.mean())
        model, history = train_student(targets, mask, train, config.student, seeds["student-train"])
        cells = evaluate_grid(model, test, config.grid, seeds["eval-noise"])
        name = method.kind if method.kind not in result.reports else f"{method.kind}#{len(result.reports)}"
        result.reports[name] = EvalReport(name, config.seed, cells)
        result.student_logs[name] = history
        result.models[name] = model
    return result
