#!/usr/bin/env python3
"""Train label vectors and score them with k-fold cross-validation.

With --corpus, reads a directory laid out as one subdirectory per label
(.txt or .html files). Without it, generates the synthetic separable
corpus, which a correct implementation scores at P = R = F1 = 1.0, and is
therefore a quick self-check of the whole train/classify path.
"""
import argparse

from ctiscout.cli import load_corpus
from ctiscout.embedding import AdaptiveBudget, FixedBudget, backend_from_spec
from ctiscout.evaluate import format_metrics_table, kfold_evaluate, write_metrics_csv
from ctiscout.synth import make_separable_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", default=None,
                        help="labeled corpus directory (default: synthetic)")
    parser.add_argument("--backend", default="mock:0:256",
                        help="mock:<seed>[:<dim>] or an http(s) endpoint")
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--fixed-budget", type=int, default=None)
    parser.add_argument("--gradient-limit", type=float, default=0.02)
    parser.add_argument("--distance-mode", choices=("max", "average"),
                        default="max")
    parser.add_argument("--train-aggregate", action="store_true")
    parser.add_argument("--report", default=None, help="CSV output path")
    args = parser.parse_args()

    if args.corpus:
        corpus = load_corpus(args.corpus)
        print(f"loaded {len(corpus)} documents from {args.corpus}")
    else:
        corpus = make_separable_corpus(per_label=8, not_relevant=12, seed=1)
        print(f"generated {len(corpus)} synthetic documents")

    backend = backend_from_spec(args.backend)
    budget = (FixedBudget(args.fixed_budget) if args.fixed_budget
              else AdaptiveBudget(gradient_limit=args.gradient_limit))
    report = kfold_evaluate(
        corpus, args.k, backend, budget,
        distance_mode=args.distance_mode,
        train_aggregate=args.train_aggregate)
    print(format_metrics_table(report))
    if args.report:
        write_metrics_csv(report, args.report)
        print(f"metrics written to {args.report}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
