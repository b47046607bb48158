"""Batch experiment harness: ``fairegm train | sweep-c | split | eval``.

Every run writes a ``manifest.json`` holding the fully resolved config and the
status of each (model, seed) cell. Passing that file back through
``--config`` re-runs the experiment exactly.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import FairEGMError, InvalidArgumentError
from .graph import Graph, one_hot, train_test_split
from .linalg import make_rng
from .io import (DatasetSpec, export_embeddings, load_dataset, read_embeddings, read_split,
                 result_columns, write_results, write_split, write_table)
from .io import _atomic_write
from .losses import link_divergence, reconstruction_loss
from .metrics import MetricsRecord, dp_at_k, link_prediction_scores, summarize
from .model import Variant
from .training import TrainConfig, joint_train

log = logging.getLogger("fairegm")

# (learning rate, epochs) registered per dataset name
DATASET_DEFAULTS = {
    "cora": (1e-4, 300),
    "citeseer": (1e-4, 300),
    "facebook": (1e-4, 300),
    "1684": (1e-4, 300),
    "pubmed": (1e-3, 200),
    "pubmed-diabetes": (1e-3, 200),
}
FALLBACK_DEFAULTS = (1e-4, 300)


@dataclass
class ExperimentConfig:
    dataset: str
    models: list[str] = field(default_factory=lambda: ["Base", "GFO"])
    splits: int = 5
    test_fraction: float = 0.2
    epochs: int | None = None
    lr: float | None = None
    lambda_f: float = 1.0
    c: list[int] = field(default_factory=lambda: [10])
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    k: list[int] = field(default_factory=lambda: [10, 20, 40])
    hidden: int = 32
    dim: int = 16

    def __post_init__(self):
        if isinstance(self.models, str):
            self.models = _split_models(self.models)
        if not self.models:
            raise InvalidArgumentError("at least one model is required")
        if self.splits < 1:
            raise InvalidArgumentError("splits must be >= 1")
        if not 0.0 <= self.test_fraction < 1.0:
            raise InvalidArgumentError("test_fraction must lie in [0, 1)")
        self.c = [int(c) for c in ([self.c] if isinstance(self.c, int) else self.c)]
        if not self.c or min(self.c) < 1:
            raise InvalidArgumentError("c values must be >= 1")
        self.k = [int(k) for k in ([self.k] if isinstance(self.k, int) else self.k)]
        if not self.k or min(self.k) < 1:
            raise InvalidArgumentError("k values must be >= 1")
        DatasetSpec.parse(self.dataset)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def resolved(self) -> "ExperimentConfig":
        """Fill learning rate and epochs from the per-dataset defaults."""
        lr, epochs = DATASET_DEFAULTS.get(DatasetSpec.parse(self.dataset).name, FALLBACK_DEFAULTS)
        cfg = ExperimentConfig(**asdict(self))
        cfg.lr = lr if self.lr is None else float(self.lr)
        cfg.epochs = epochs if self.epochs is None else int(self.epochs)
        return cfg

    def variants(self) -> list[Variant]:
        """Model list with bare ``CFO`` expanded once per configured c."""
        out = []
        for name in self.models:
            v = Variant.parse(name) if name.strip().upper() != "CFO" else None
            if v is None:
                out.extend(Variant("CFO", c=c) for c in self.c)
            else:
                out.append(v)
        return out

    def train_config(self, variant: Variant, seed: int) -> TrainConfig:
        return TrainConfig(variant, learning_rate=self.lr, epochs=self.epochs, lambda_f=self.lambda_f,
                           seed=seed, threads=self.threads, hidden=self.hidden, dim=self.dim)


def _split_models(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _eval_rng(seed: int) -> np.random.Generator:
    # separate stream from the split draw so both can be reproduced on their own
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 1])))


def _model_tag(variant: Variant) -> str:
    return str(variant).replace("(", "-").replace(")", "")


def evaluate_embeddings(phi, split, seed: int, ks) -> MetricsRecord:
    train = split.train
    au, f = link_prediction_scores(phi, split, _eval_rng(seed))
    return MetricsRecord(
        seed=seed,
        recon=reconstruction_loss(phi, train),
        divergence_sum=link_divergence(phi, train, "sum"),
        divergence_mean=link_divergence(phi, train, "mean"),
        auroc=au,
        f1=f,
        dp={k: dp_at_k(phi, train, k) for k in ks},
    )


def run_cells(cfg: ExperimentConfig, g: Graph, variants, out: Path):
    """Train and evaluate every (model, split) cell; failures are recorded, not raised."""
    results, statuses = {}, {}
    for i in range(cfg.splits):
        seed = cfg.seed + i
        try:
            split = train_test_split(g, cfg.test_fraction, make_rng(seed))
        except (FairEGMError, ValueError) as exc:
            for v in variants:
                statuses[(str(v), seed)] = f"failed: {exc}"
            log.error("split seed %d failed: %s", seed, exc)
            continue
        for v in variants:
            try:
                _, phi, _ = joint_train(split.train, cfg.train_config(v, seed))
                rec = evaluate_embeddings(phi, split, seed, cfg.k)
                export_embeddings(phi, split.train, out / "embeddings" / f"{_model_tag(v)}_seed{seed}.csv")
            except (FairEGMError, ValueError, ArithmeticError, OSError) as exc:
                statuses[(str(v), seed)] = f"failed: {exc}"
                log.error("%s seed %d failed: %s", v, seed, exc)
                continue
            results[(str(v), seed)] = rec
            statuses[(str(v), seed)] = "ok"
            log.info("%s seed %d: L_R=%.4g L_D=%.4g auroc=%.4f dp%d=%.4f", v, seed, rec.recon,
                     rec.divergence_sum, rec.auroc, cfg.k[-1], rec.dp[cfg.k[-1]])
    return results, statuses


def _ordered(variants, cfg, table):
    return [(str(v), cfg.seed + i, table[(str(v), cfg.seed + i)])
            for v in variants for i in range(cfg.splits) if (str(v), cfg.seed + i) in table]


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, statuses, variants, extra=None):
    cells = [{"model": m, "seed": s, "status": st} for m, s, st in _ordered(variants, cfg, statuses)]
    doc = {"command": command, "config": asdict(cfg), "cells": cells}
    if extra:
        doc.update(extra)
    _atomic_write(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_run_results(out: Path, name: str, cfg, variants, results):
    cells = [(name, m, rec) for m, _, rec in _ordered(variants, cfg, results)]
    summaries = {}
    for v in variants:
        recs = [rec for m, _, rec in _ordered([v], cfg, results)]
        if len(recs) >= 2:
            summaries[(name, str(v))] = summarize(recs, cfg.k)
    write_results(cells, summaries, out / "results.csv", cfg.k)
    return summaries


def cmd_train(cfg: ExperimentConfig) -> int:
    cfg = cfg.resolved()
    out = Path(cfg.out)
    spec = DatasetSpec.parse(cfg.dataset)
    g = load_dataset(spec)
    variants = cfg.variants()
    results, statuses = run_cells(cfg, g, variants, out)
    _write_run_results(out, spec.name, cfg, variants, results)
    _write_manifest(out, "train", cfg, statuses, variants)
    return 0 if all(s == "ok" for s in statuses.values()) else 1


def cmd_sweep_c(cfg: ExperimentConfig) -> int:
    cfg = cfg.resolved()
    cfg.models = [f"CFO({c})" for c in cfg.c]
    out = Path(cfg.out)
    spec = DatasetSpec.parse(cfg.dataset)
    g = load_dataset(spec)
    variants = cfg.variants()
    results, statuses = run_cells(cfg, g, variants, out)
    _write_run_results(out, spec.name, cfg, variants, results)

    metrics = result_columns(cfg.k)[3:]
    header = ["c", "runs"] + [col for m in metrics for col in (m, m + "_std")]
    rows = []
    for v in variants:
        recs = [rec for _, _, rec in _ordered([v], cfg, results)]
        if not recs:
            continue
        values = {m: np.array([r.as_row(cfg.k)[m] for r in recs]) for m in metrics}
        row = [v.c, len(recs)]
        for m in metrics:
            row += [float(values[m].mean()), float(values[m].std(ddof=1)) if len(recs) > 1 else float("nan")]
        rows.append(row)
    write_table(out / "sweep_c.csv", header, rows)
    _write_manifest(out, "sweep-c", cfg, statuses, variants)
    return 0 if all(s == "ok" for s in statuses.values()) else 1


def cmd_split(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    g = load_dataset(DatasetSpec.parse(cfg.dataset))
    rows = []
    for i in range(cfg.splits):
        seed = cfg.seed + i
        split = train_test_split(g, cfg.test_fraction, make_rng(seed))
        write_split(split, g, out / f"split_seed{seed}")
        rows.append((seed, split.train.n, split.train.num_edges, len(split.test_pos)))
    write_table(out / "splits.csv", ["seed", "train_nodes", "train_edges", "test_edges"], rows)
    doc = {"command": "split", "config": asdict(cfg)}
    _atomic_write(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_eval(embeddings: str, ks, out: Path, dataset: str | None = None,
             split_dir: str | None = None) -> int:
    """DP@k and link divergence (plus L_R when a split is given) of an exported embedding file."""
    ids, groups, phi = read_embeddings(embeddings)
    n_groups = int(groups.max()) + 1 if groups.size else 0
    graph = None
    if dataset:
        full = load_dataset(DatasetSpec.parse(dataset))
        n_groups = full.k
        if split_dir:
            graph = read_split(full, split_dir).train
            if [str(x) for x in graph.node_ids] != ids:
                raise InvalidArgumentError("embedding rows do not match the split's train nodes")
    elif split_dir:
        raise InvalidArgumentError("--split-dir needs --dataset")
    if graph is None:
        graph = Graph(len(ids), np.zeros((0, 2), dtype=np.int64), np.zeros((len(ids), 0)),
                      one_hot(groups, n_groups), tuple(ids))
    rows = [("L_D_sum", link_divergence(phi, graph, "sum")), ("L_D_mean", link_divergence(phi, graph, "mean"))]
    if graph.num_edges:
        rows.insert(0, ("L_R", reconstruction_loss(phi, graph)))
    rows += [(f"dp{k}", dp_at_k(phi, graph, k)) for k in ks]
    write_table(out / "eval.csv", ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name},{format(value, '.17g')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairegm", description="Fair graph embeddings via emulated graph modification.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config or a previous run's manifest.json")
        p.add_argument("--dataset", help="kind:path, e.g. content-cites:data/cora/cora")
        p.add_argument("--splits", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--test-fraction", type=float, dest="test_fraction")

    for name in ("train", "sweep-c"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--models", help="comma list of Base, GFO, CFO(c), FEW, AUG(lambda)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--lambda-f", type=float, dest="lambda_f")
        p.add_argument("--c", type=_int_list, help="c for bare CFO models (train) or the sweep values")
        p.add_argument("--threads", type=int)
        p.add_argument("--k", type=_int_list)
        p.add_argument("--hidden", type=int)
        p.add_argument("--dim", type=int)

    p = sub.add_parser("split")
    common(p)

    p = sub.add_parser("eval")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dataset")
    p.add_argument("--split-dir", dest="split_dir")
    p.add_argument("--k", type=_int_list, default=[10, 20, 40])
    p.add_argument("--out", default=".")
    return parser


def _load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {args.config}: {exc}") from exc
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
    for key in ("dataset", "models", "splits", "epochs", "lr", "lambda_f", "c", "seed", "out",
                "threads", "k", "test_fraction", "hidden", "dim"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if "dataset" not in data:
        raise InvalidArgumentError("a dataset is required (--dataset kind:path or config key)")
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eval":
            return cmd_eval(args.embeddings, args.k, Path(args.out), args.dataset, args.split_dir)
        cfg = _load_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep-c":
            return cmd_sweep_c(cfg)
        return cmd_split(cfg)
    except (FairEGMError, ValueError, OSError) as exc:
        print(f"fairegm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
