"""
Command line entry point.

Every subcommand prints one JSON object on stdout: {"success": true, ...} on
success, or {"success": false, "error": ..., "error_type": ...} with exit
code 1 on failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from gclbench.autodiff import set_precision
from gclbench.configs import ExperimentConfig, build_config, load_experiment_file
from gclbench.datasets import load_dataset
from gclbench.encoders import embed, init_encoder, load_checkpoint, save_checkpoint
from gclbench.errors import BenchmarkError, ConfigError, ProbeError
from gclbench.features import compute_bin_edges, feature_matrix, random_matrix
from gclbench.gcl import TRAIN_PRESETS, train_graphcl, train_infograph
from gclbench.graphs import GraphDataset, dataset_statistics, save_jsonl, subsample
from gclbench.harness import SweepResult, run_sweep
from gclbench.probes import logreg_probe_protocol, svm_probe_protocol
from gclbench.reporting import write_report
from gclbench.results_store import RunStore
from gclbench.settings import configure_logging, get_settings
from gclbench.synthetic import SyntheticConfig, generate_dataset
from gclbench.tu_format import write_tu_dataset

logger = logging.getLogger(__name__)

METHODS = ["graphcl", "infograph", "untrained", "handcrafted", "molfingerprint", "random"]


# ============================================================================
# CSV HELPERS
# ============================================================================

def write_feature_csv(path: Path, graph_ids: Sequence[int], features: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["graph_id"] + [f"f{j}" for j in range(features.shape[1])])
        for graph_id, row in zip(graph_ids, features):
            writer.writerow([int(graph_id)] + [repr(float(v)) for v in row])
    return path


def read_feature_csv(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise ConfigError(f"File not found: {path}")
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "graph_id":
        raise ConfigError(f"{path}: expected a header starting with graph_id")
    body = rows[1:]
    ids = np.array([int(r[0]) for r in body], dtype=np.int64)
    values = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    return ids, values.reshape(len(body), -1)


def _read_index_file(path: Path) -> np.ndarray:
    if not path.exists():
        raise ProbeError(f"Missing split file: {path}")
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_gen_synthetic(args) -> Dict[str, Any]:
    config = SyntheticConfig(style_multiplier=args.style, total_size=args.size,
                             num_classes=args.classes, seed=args.seed)
    dataset = generate_dataset(config)
    out = Path(args.out)
    if args.format == "tu":
        write_tu_dataset(dataset, out, dataset.name)
    else:
        save_jsonl(dataset, out)
    return {"dataset": dataset.name, "path": str(out), "statistics": dataset_statistics(dataset)}


def _experiment(args) -> ExperimentConfig:
    overrides = {"dataset": args.dataset}
    if args.config:
        return load_experiment_file(args.config, overrides)[0]
    if args.preset:
        overrides["preset"] = args.preset
    if getattr(args, "encoder", None):
        overrides["encoder"] = args.encoder
    return build_config(overrides, "command line")


def _train_pool(dataset: GraphDataset) -> np.ndarray:
    return dataset.split.train if dataset.split is not None else np.arange(len(dataset))


def cmd_pretrain(args) -> Dict[str, Any]:
    experiment = _experiment(args)
    dataset = load_dataset(args.dataset)
    run = f"{dataset.name}/f={args.subset_fraction}"
    indices = subsample(_train_pool(dataset), args.subset_fraction, args.seed, run)
    encoder_config = experiment.encoder_config(args.method, dataset, args.seed)
    trainer = train_graphcl if args.method == "graphcl" else train_infograph
    result = trainer(dataset.subset(indices), encoder_config, experiment.train_config(args.seed), run)
    checkpoint = save_checkpoint(result.params, args.out)
    trace_path = Path(args.out).with_suffix(".loss.csv")
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss"])
        writer.writerows([[epoch, repr(loss)] for epoch, loss in enumerate(result.loss_trace, 1)])
    return {"checkpoint": str(checkpoint), "loss_trace": str(trace_path), "graphs": int(indices.size),
            "final_loss": result.loss_trace[-1] if result.loss_trace else None}


def cmd_embed(args) -> Dict[str, Any]:
    dataset = load_dataset(args.dataset)
    ids = np.arange(len(dataset))
    if args.method == "random":
        features = random_matrix(ids, args.seed, args.dim)
    elif args.method == "handcrafted":
        edges = compute_bin_edges(dataset.subset(_train_pool(dataset)))
        features = feature_matrix(dataset.graphs, edges, args.ablation)
    else:
        if args.method in ("graphcl", "infograph"):
            if not args.checkpoint:
                raise ConfigError(f"--checkpoint is required for method '{args.method}'")
            params = load_checkpoint(args.checkpoint)
        else:
            experiment = build_config({"dataset": args.dataset, "encoder": args.encoder}, "command line")
            params = init_encoder(experiment.encoder_config(args.method, dataset, args.seed))
        features = embed(params.freeze(), dataset.graphs)
    out = write_feature_csv(Path(args.out), ids, features)
    labels_out = Path(args.labels_out) if args.labels_out else out.with_name(out.stem + ".labels.csv")
    with open(labels_out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["graph_id", "label"])
        writer.writerows([[int(i), int(y)] for i, y in zip(ids, dataset.labels)])
    return {"embeddings": str(out), "labels": str(labels_out), "shape": list(features.shape)}


def cmd_probe(args) -> Dict[str, Any]:
    ids, features = read_feature_csv(Path(args.embeddings))
    label_ids, labels = read_feature_csv(Path(args.labels))
    if not np.array_equal(ids, label_ids):
        raise ProbeError("Embedding and label files list different graph ids")
    labels = labels[:, 0].astype(np.int64)
    row_of = {int(g): i for i, g in enumerate(ids)}

    if args.protocol == "svm":
        report = svm_probe_protocol(features, labels, k=args.folds, seeds=list(range(args.seeds)))
        payload = {"report": report.model_dump()}
    else:
        if not args.splits:
            raise ProbeError("The logreg protocol needs --splits <dir with train/valid/test.csv>")
        parts = {}
        for name in ("train", "valid", "test"):
            rows = np.array([row_of[int(g)] for g in _read_index_file(Path(args.splits) / f"{name}.csv")], dtype=np.int64)
            parts[name] = (features[rows], labels[rows])
        payload = {"result": logreg_probe_protocol(parts["train"], parts["valid"], parts["test"]).model_dump()}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return payload


def cmd_sweep(args) -> Dict[str, Any]:
    overrides = {"output_dir": args.out} if args.out else None
    summaries = []
    for config in load_experiment_file(args.config, overrides):
        result = run_sweep(config, RunStore(config.output_dir), workers=args.workers)
        summaries.append({
            "name": config.name, "output_dir": config.output_dir, "config_hash": config.config_hash(),
            "records": len(result.records), "computed": result.computed,
            "failed": sum(r.status == "failed" for r in result.records),
        })
    return {"sweeps": summaries}


def cmd_report(args) -> Dict[str, Any]:
    records = RunStore(args.input).load_all()
    return {"files": write_report(SweepResult(records=records), args.out)}


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gclbench", description="Graph self-supervised learning benchmark")
    parser.add_argument("--log-level", default="", help="Overrides GCLBENCH_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synthetic", help="Generate a motif classification dataset")
    gen.add_argument("--style", type=int, default=2, help="Style multiplier S")
    gen.add_argument("--size", type=int, default=600)
    gen.add_argument("--classes", type=int, default=6)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=["jsonl", "tu"], default="jsonl")
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen_synthetic)

    pre = sub.add_parser("pretrain", help="Pretrain an encoder with GraphCL or InfoGraph")
    pre.add_argument("--method", choices=["graphcl", "infograph"], required=True)
    pre.add_argument("--dataset", required=True)
    pre.add_argument("--subset-fraction", type=float, default=1.0)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--config", help="Experiment config file supplying encoder/training settings")
    pre.add_argument("--preset", choices=sorted(TRAIN_PRESETS))
    pre.add_argument("--encoder", choices=["gin", "gine"])
    pre.add_argument("--out", required=True, help="Checkpoint path")
    pre.set_defaults(handler=cmd_pretrain)

    emb = sub.add_parser("embed", help="Write graph features for one method as CSV")
    emb.add_argument("--method", choices=METHODS, required=True)
    emb.add_argument("--dataset", required=True)
    emb.add_argument("--checkpoint")
    emb.add_argument("--encoder", choices=["gin", "gine"], default="gin")
    emb.add_argument("--seed", type=int, default=0)
    emb.add_argument("--dim", type=int, default=7, help="Width of the random control")
    emb.add_argument("--ablation", choices=["node-count", "avg-degree", "deg-histogram", "all"], default="all")
    emb.add_argument("--out", required=True)
    emb.add_argument("--labels-out")
    emb.set_defaults(handler=cmd_embed)

    probe = sub.add_parser("probe", help="Evaluate embeddings with the SVM or logistic probe")
    probe.add_argument("--protocol", choices=["svm", "logreg"], required=True)
    probe.add_argument("--embeddings", required=True)
    probe.add_argument("--labels", required=True)
    probe.add_argument("--splits", help="Directory with train.csv, valid.csv, test.csv graph ids")
    probe.add_argument("--seeds", type=int, default=5, help="Number of fold seeds")
    probe.add_argument("--folds", type=int, default=10)
    probe.add_argument("--out")
    probe.set_defaults(handler=cmd_probe)

    sweep = sub.add_parser("sweep", help="Run a scaling sweep from a config file")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--workers", type=int, help="Overrides GCLBENCH_WORKERS")
    sweep.add_argument("--out", help="Overrides output_dir")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="Aggregate a sweep directory into report files")
    report.add_argument("--in", dest="input", required=True)
    report.add_argument("--out", required=True)
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    set_precision(get_settings().precision)
    try:
        payload = args.handler(args)
    except BenchmarkError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(json.dumps({"success": False, "error": str(e), "error_type": type(e).__name__}))
        return 1
    except Exception as e:
        logger.exception(f"❌ {args.command} crashed")
        print(json.dumps({"success": False, "error": str(e), "error_type": type(e).__name__}))
        return 1
    print(json.dumps({"success": True, "command": args.command, **payload}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
