"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 training failure,
4 ingestion error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from .. import datakit
from ..errors import ConfigurationError, QPLRError
from ..labeler import (HybridLabeler, SoftLabelSet, filter_by_confidence, generate_soft_labels,
                       train_labeler)
from ..neural import checkpoint
from ..seeding import derive_seed
from ..vqc import CircuitSpec
from . import experiment as ex

def _git_describe() -> str:
    try:
        proc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                              text=True, cwd=Path(__file__).resolve().parent, timeout=10)
        return proc.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _load_config(args) -> ex.ExperimentConfig:
    config = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        config.seed = args.seed
    return config


def _raw_config(args) -> dict:
    if not args.config:
        return {}
    return json.loads(Path(args.config).read_text())


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _train_split(config, args):
    train, _ = ex.prepare_data(config, datakit.resolve_data_dir(args.data_dir))
    return train


def cmd_train_labeler(args, config, out: Path) -> dict:
    train = _train_split(config, args)
    seeds = config.seeds()
    labeler, history = train_labeler(config.labeler, train.images, train.labels, seeds["labeler-train"])
    labeler.save(out / "labeler")
    _write_json(out / "labeler_log.json", history.to_dict())
    final = history.epochs[-1]
    print(f"labeler trained: loss {final['loss']:.4f} accuracy {final['accuracy']:.4f}")
    return {"labeler_dir": str(out / "labeler"), "final_epoch": final}


def cmd_gen_labels(args, config, out: Path) -> dict:
    train = _train_split(config, args)
    labeler = HybridLabeler.load(args.labeler or out / "labeler")
    shots = None if args.exact else (args.shots if args.shots is not None else config.shots)
    labels = generate_soft_labels(labeler, train.images, train.labels, shots, config.seeds()["label-gen"])
    path = out / "labels.csv"
    labels.write(path)
    kept = filter_by_confidence(labels, args.threshold)
    print(f"wrote {len(labels)} soft labels to {path}; {kept.retained_fraction:.4f} have confidence >= {args.threshold}")
    return {"labels": str(path), "retained_fraction": kept.retained_fraction, "threshold": args.threshold}


def _method_from_args(args) -> ex.MethodSpec:
    overrides = {k: getattr(args, k) for k in ("epsilon", "threshold", "rate", "passes", "noise_std")
                 if getattr(args, k, None) is not None}
    return ex.MethodSpec(args.method, **overrides)


def cmd_train_student(args, config, out: Path) -> dict:
    train = _train_split(config, args)
    method = _method_from_args(args)
    seeds = config.seeds()
    labels = None
    if method.needs_quantum_labels:
        path = args.labels or config.labels_path or out / "labels.csv"
        labels = SoftLabelSet.read(path)
    teacher = None
    if method.needs_teacher:
        teacher, _ = ex.train_teacher(method, train, config.teacher, seeds["teacher-train"])
    targets, mask = ex.build_targets(method, train, labels, teacher, derive_seed(config.seed, "targets", method.kind))
    model, history = ex.train_student(targets, mask, train, config.student, seeds["student-train"])
    path = out / f"student_{method.kind}.qnn"
    checkpoint.save(model, path, meta={"method": method.kind, "seed": config.seed, "method_spec": asdict(method)})
    _write_json(out / f"student_{method.kind}_log.json", history)
    info = {"model": str(path), "method": method.kind, "num_samples": history["num_samples"]}
    if mask is not None:
        info["filtered_count"] = int((~mask).sum())
    print(f"trained {method.kind} student on {history['num_samples']} samples -> {path}")
    return info


def cmd_evaluate(args, config, out: Path) -> dict:
    _, test = ex.prepare_data(config, datakit.resolve_data_dir(args.data_dir))
    model, meta = checkpoint.load(args.model)
    method = args.method or meta.get("method", "model")
    cells = ex.evaluate_grid(model, test, config.grid, config.seeds()["eval-noise"])
    rep = ex.EvalReport(method, int(meta.get("seed", config.seed)), cells)
    path = out / f"eval_{method}.json"
    _write_json(path, rep.to_dict())
    for c in cells:
        print(f"{method} {c.corruption.label()}: accuracy {c.accuracy:.4f}")
    return {"eval": str(path)}


def cmd_report(args, config, out: Path) -> dict:
    roots = [Path(r) for r in (args.runs or [out])]
    files = sorted({p for root in roots for p in root.rglob("eval_*.json")})
    if not files:
        raise ConfigurationError(f"no eval_*.json files under {', '.join(map(str, roots))}")
    reports = [ex.EvalReport.from_dict(json.loads(p.read_text())) for p in files]
    reports.sort(key=lambda r: (r.method, r.seed))
    path = ex.report(reports, out)
    print(f"wrote {path}")
    return {"metrics": str(path), "inputs": [str(p) for p in files]}


SWEEP_COLUMNS = ("qubits", "layers", "entanglement", "epochs", "batch_size", "lr", "seconds", "loss", "accuracy")


def cmd_sweep(args, config, out: Path) -> dict:
    train = _train_split(config, args)
    grid = _raw_config(args).get("sweep", {})
    qubits = grid.get("qubits", [10])
    layers = grid.get("layers", [1, 3])
    topologies = grid.get("entanglement", ["linear", "ring", "full"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    base = config.labeler
    for n in qubits:
        for depth in layers:
            for topo in topologies:
                circuit = CircuitSpec(n, base.circuit.encoding, depth, topo, reduction=base.circuit.reduction,
                                      rotation=base.circuit.rotation)
                spec = replace(base, circuit=circuit)
                start = time.perf_counter()
                _, history = train_labeler(spec, train.images, train.labels, config.seeds()["labeler-train"])
                final = history.epochs[-1]
                writer.writerow([n, depth, topo, spec.epochs, spec.batch_size, spec.lr,
                                 f"{time.perf_counter() - start:.3f}", repr(final["loss"]), repr(final["accuracy"])])
                print(f"n={n} L={depth} {topo}: loss {final['loss']:.4f} acc {final['accuracy']:.4f}")
    (out / "sweep.csv").write_text(buf.getvalue())
    return {"sweep": str(out / "sweep.csv")}


def cmd_run(args, config, out: Path) -> dict:
    train, test = ex.prepare_data(config, datakit.resolve_data_dir(args.data_dir))
    result = ex.run_comparison(config, train, test)
    if result.labels is not None:
        result.labels.write(out / "labels.csv")
    for name, rep in result.reports.items():
        _write_json(out / f"eval_{name}.json", rep.to_dict())
    ex.report(list(result.reports.values()), out)
    print(ex.metrics_csv(list(result.reports.values())), end="")
    return {"retained_fraction": result.retained_fraction, "filtered_count": result.filtered_count}


COMMANDS = {
    "train-labeler": cmd_train_labeler,
    "gen-labels": cmd_gen_labels,
    "train-student": cmd_train_student,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "sweep": cmd_sweep,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="qplr-out", help="output directory")
    common.add_argument("--data-dir", help="directory holding IDX files (fallback: $QPLR_DATA_DIR)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qplr", description="Quantum probabilistic label refining lab")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-labeler", parents=[common], help="train the hybrid quantum labeler")
    p = sub.add_parser("gen-labels", parents=[common], help="emit soft labels from a trained labeler")
    p.add_argument("--labeler", help="labeler directory (default: OUT/labeler)")
    p.add_argument("--shots", type=int)
    p.add_argument("--exact", action="store_true", help="use exact probabilities instead of shots")
    p.add_argument("--threshold", type=float, default=0.9, help="confidence threshold to report")
    p = sub.add_parser("train-student", parents=[common], help="train a LeNet student")
    p.add_argument("--method", required=True, choices=ex.METHOD_KINDS)
    p.add_argument("--labels", help="soft-label CSV for M3/M4")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--passes", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p = sub.add_parser("evaluate", parents=[common], help="evaluate a student on the corruption grid")
    p.add_argument("--model", required=True)
    p.add_argument("--method")
    p = sub.add_parser("report", parents=[common], help="collect eval files into tables")
    p.add_argument("--runs", nargs="*")
    sub.add_parser("sweep", parents=[common], help="qubit/layer/topology labeler sweep")
    sub.add_parser("run", parents=[common], help="full comparison in one go")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        config = _load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        info = COMMANDS[args.command](args, config, out)
    except QPLRError as exc:
        print(f"qplr {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"qplr {args.command}: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code
    _write_json(out / "run.json", {
        "command": args.command,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "config": config.to_dict(),
        "seeds": {"master": config.seed, **config.seeds()},
        "git": _git_describe(),
        "started_unix": started,
        "wall_clock_seconds": time.time() - started,
        "result": info,
    })
    return 0


if __name__ == "__main__":
    sys.exit(main())
