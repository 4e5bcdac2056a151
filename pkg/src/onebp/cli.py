"""Command-line entry point: ``onebp {prepare,train,evaluate,sweep,cluster,export-embeddings}``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DEFAULT_CLUSTERS, cluster_report, kmeans, write_items_clustered
from .data import DataSplit, Format, load_split, parse_interactions, split_holdout
from .evaluation import DEFAULT_CUTOFFS, EvalReport, evaluate
from .model import EmbeddingModel, init_model
from .trainer import Strategy, TrainConfig, train

logger = logging.getLogger("onebp")

CHECKPOINT_NAME = "model.obp"
SIDECAR_SUFFIX = ".json"
CLUSTER_SEED_OFFSET = 2


class CliError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------

def parse_cutoffs(text: str) -> list[int]:
    try:
        ks = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise CliError(f"malformed cutoff list {text!r}; expected e.g. 5,10,20") from None
    if not ks or any(k < 1 for k in ks):
        raise CliError(f"cutoffs must be positive integers, got {text!r}")
    return ks


def parse_values(text: str, axis: str) -> list:
    cast = float if axis == "beta" else int
    toks = [t for t in text.split(",") if t.strip()]
    if not toks:
        raise CliError("sweep needs at least one value")
    try:
        return [cast(t) for t in toks]
    except ValueError:
        raise CliError(f"malformed value list {text!r} for axis {axis}") from None


def fingerprint(data_dir: Path) -> str:
    h = hashlib.sha256()
    for name in ("meta.json", "train.csv", "test.csv"):
        h.update(name.encode())
        h.update((data_dir / name).read_bytes())
    return h.hexdigest()


def load_data(data_dir: str | Path) -> DataSplit:
    data_dir = Path(data_dir)
    for name in ("meta.json", "train.csv", "test.csv"):
        if not (data_dir / name).is_file():
            raise CliError(f"{data_dir / name}: not found (run `onebp prepare` first)")
    return load_split(data_dir)


def build_config(args) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            values = json.loads(path.read_text())
        except FileNotFoundError:
            raise CliError(f"{path}: not found") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise CliError(f"{path}: config must be a flat JSON object")
    flags = {
        "strategy": args.strategy, "beta": args.beta, "learning_rate": args.lr,
        "dim": args.dim, "num_negatives": args.negatives, "batch_size": args.batch_size,
        "epochs": args.epochs, "seed": args.seed,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return TrainConfig.from_dict(values)
    except KeyError as exc:
        raise CliError(exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from None


def resolve_checkpoint(path: str | Path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / CHECKPOINT_NAME
    if not path.is_file():
        raise CliError(f"{path}: checkpoint not found")
    return path


def load_checkpoint(path: str | Path, split: DataSplit | None = None) -> EmbeddingModel:
    path = resolve_checkpoint(path)
    try:
        model = EmbeddingModel.load(path)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None
    if split is not None and (model.num_users, model.num_items) != (split.train.num_users, split.train.num_items):
        raise CliError(
            f"checkpoint shape ({model.num_users} users, {model.num_items} items) does not match "
            f"dataset ({split.train.num_users} users, {split.train.num_items} items)"
        )
    return model


def write_report(report: EvalReport, out: Path, stem: str = "report") -> None:
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}.csv").write_text(report.to_csv())


def fit(split: DataSplit, cfg: TrainConfig) -> tuple[EmbeddingModel, list]:
    model = init_model(split.train.num_users, split.train.num_items, cfg.dim, cfg.seed)
    stats = train(model, split, cfg)
    return model, stats


# -- commands --------------------------------------------------------------------

def cmd_prepare(args) -> None:
    src = Path(args.data)
    if not src.is_file():
        raise CliError(f"{src}: no such file")
    dataset = parse_interactions(src, Format(args.format))
    split = split_holdout(dataset, args.test_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split.train.to_csv(out / "train.csv")
    split.test.to_csv(out / "test.csv")
    meta = {
        "source": src.name,
        "format": Format(args.format).value,
        "num_users": dataset.num_users,
        "num_items": dataset.num_items,
        "num_interactions": dataset.num_interactions,
        "num_train": split.train.num_interactions,
        "num_test": split.test.num_interactions,
        "num_evaluable_users": int(split.evaluable_users.size),
        "density": dataset.density(),
        "test_fraction": args.test_fraction,
        "seed": args.seed,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    logger.info("%d users, %d items, %d interactions -> %s",
                dataset.num_users, dataset.num_items, dataset.num_interactions, out)


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    data_dir = Path(args.data)
    split = load_data(data_dir)
    cfg = build_config(args)
    cutoffs = parse_cutoffs(args.k) if args.k else list(DEFAULT_CUTOFFS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    model, stats = fit(split, cfg)
    report = evaluate(model, split, cutoffs)

    ckpt = out / CHECKPOINT_NAME
    model.save(ckpt)
    sidecar = {"config": cfg.to_dict(), "epochs_completed": len(stats), "version": __version__}
    Path(str(ckpt) + SIDECAR_SUFFIX).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    with open(out / "epochs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "seconds"])
        for s in stats:
            w.writerow([s.epoch, repr(s.mean_loss), f"{s.wall_seconds:.6f}"])
    write_report(report, out)
    manifest = {
        "config": cfg.to_dict(),
        "dataset_fingerprint": fingerprint(data_dir),
        "epochs": [{"epoch": s.epoch, "mean_loss": s.mean_loss, "wall_seconds": s.wall_seconds} for s in stats],
        "report": report.to_dict(),
        "train_seconds": sum(s.wall_seconds for s in stats),
        "total_seconds": time.perf_counter() - t0,
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("%s: P@10 %.4f", cfg.strategy.value, report.precision.get(10, float("nan")))


def cmd_evaluate(args) -> None:
    split = load_data(args.data)
    model = load_checkpoint(args.checkpoint, split)
    cutoffs = parse_cutoffs(args.k) if args.k else list(DEFAULT_CUTOFFS)
    report = evaluate(model, split, cutoffs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out)
    else:
        sys.stdout.write(report.to_json())


def cmd_sweep(args) -> None:
    split = load_data(args.data)
    base = build_config(args)
    values = parse_values(args.values, args.axis)
    cutoffs = parse_cutoffs(args.k) if args.k else list(DEFAULT_CUTOFFS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        try:
            cfg = TrainConfig.from_dict({**base.to_dict(), args.axis: v})
        except ValueError as exc:
            raise CliError(f"invalid {args.axis} value {v}: {exc}") from None
        model, _ = fit(split, cfg)
        report = evaluate(model, split, cutoffs)
        rows.extend((v, m, k, val) for m, k, val in report.rows())
        logger.info("%s=%s: P@10 %.4f", args.axis, v, report.precision.get(10, float("nan")))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis_value", "metric", "K", "value"])
        for v, m, k, val in rows:
            w.writerow([v, m, k, repr(val)])


def cmd_cluster(args) -> None:
    split = load_data(args.data)
    model = load_checkpoint(args.checkpoint, split)
    k = args.clusters if args.clusters is not None else DEFAULT_CLUSTERS
    k_list = parse_cutoffs(args.k)[0] if args.k else 10
    seed = (args.seed if args.seed is not None else 0) + CLUSTER_SEED_OFFSET
    try:
        clustering = kmeans(model.item_embeddings, k, max_iters=args.max_iters, seed=seed)
        report = cluster_report(clustering, split, model, user=args.user, k_list=k_list)
    except (ValueError, IndexError) as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_items_clustered(out / "items_clustered.csv", model, clustering)
    (out / "cluster_report.json").write_text(report.to_json())


def cmd_export(args) -> None:
    model = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.to_csv(out)


# -- argument parsing ------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config with TrainConfig keys")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--beta", type=float)
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--dim", type=int)
    p.add_argument("--negatives", type=int, help="negatives per positive (N_s)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onebp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse a raw log and write a train/test split")
    p.add_argument("--data", required=True, help="raw interaction file")
    p.add_argument("--format", default=Format.MOVIELENS_TAB.value, choices=[f.value for f in Format])
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model and write checkpoint + manifest")
    p.add_argument("--data", required=True, help="directory written by `prepare`")
    _add_train_flags(p)
    p.add_argument("--k", help="evaluation cutoffs, e.g. 5,10,20")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a prepared split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", help="cutoffs, e.g. 5,10,20")
    p.add_argument("--out", help="output directory (default: JSON on stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train/evaluate once per value of one hyperparameter")
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.add_argument("--axis", required=True, choices=["beta", "num_negatives"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--k", help="cutoffs, e.g. 5,10,20")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cluster", help="KMeans over item embeddings + per-cluster statistics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--clusters", type=int, help=f"number of clusters (default {DEFAULT_CLUSTERS})")
    p.add_argument("--user", type=int, help="report a single user instead of all users")
    p.add_argument("--k", help="recommendation list length (default 10)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("export-embeddings", help="write embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="CSV file path")
    p.set_defaults(func=cmd_export)
    return parser


@contextlib.contextmanager
def _thread_cap():
    raw = os.environ.get("ONEBP_THREADS")
    if not raw:
        yield
        return
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"ONEBP_THREADS must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=max(n, 1)):
        yield


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with _thread_cap():
            args.func(args)
    except CliError as exc:
        print(f"onebp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"onebp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
