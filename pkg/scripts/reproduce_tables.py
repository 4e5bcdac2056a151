"""Strategy comparison on MovieLens-100k: ranking metrics and per-epoch time.

    python scripts/reproduce_tables.py [--epochs 100] [--data data/ml-100k/u.data]
"""
import argparse
import logging
import statistics
from pathlib import Path

from onebp.data import parse_interactions, split_holdout
from onebp.evaluation import evaluate
from onebp.model import init_model
from onebp.trainer import Strategy, TrainConfig, train

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=ROOT / "data" / "ml-100k" / "u.data", type=Path)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    split = split_holdout(parse_interactions(args.data), 0.2, seed=args.seed)
    header = f"{'strategy':<11}" + "".join(f"{m}@{k:<3}" .rjust(9) for k in (5, 10, 20) for m in ("P", "R", "F1", "N"))
    print(header + "  s/epoch")
    for strategy in Strategy:
        cfg = TrainConfig(strategy=strategy, epochs=args.epochs, seed=args.seed)
        model = init_model(split.train.num_users, split.train.num_items, cfg.dim, cfg.seed)
        stats = train(model, split, cfg)
        rep = evaluate(model, split, [5, 10, 20])
        cells = "".join(f"{rep.metric(m)[k]:9.4f}" for k in (5, 10, 20)
                        for m in ("precision", "recall", "f1", "ndcg"))
        secs = statistics.median(s.wall_seconds for s in stats) if stats else float("nan")
        print(f"{strategy.value:<11}{cells}  {secs:.3f}")


if __name__ == "__main__":
    main()
