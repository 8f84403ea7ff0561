#!/usr/bin/env python3
"""Leave-one-community-out evaluation of both classifiers on a labeled
dialog file. Writes the full JSON report and prints the macro rows."""

import argparse
import json
from pathlib import Path

from chatmine.corpus import PreprocessConfig
from chatmine.encoder import EncoderConfig
from chatmine.evaluation import cross_project_evaluate
from chatmine.features import ConvStackSpec
from chatmine.model import ModelConfig, load_labeled_dialogs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True, help="labeled dialogs JSONL")
    ap.add_argument("--out", required=True, help="JSON report path")
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--patience", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--encoder-dim", type=int, default=800)
    ap.add_argument("--balance", action="store_true")
    args = ap.parse_args()

    corpus = load_labeled_dialogs(args.data, PreprocessConfig())
    cfg = ModelConfig(
        max_epochs=args.epochs, patience=args.patience, seed=args.seed,
        balance=args.balance,
    )
    report = cross_project_evaluate(
        corpus, cfg, enc_cfg=EncoderConfig(dim=args.encoder_dim),
        conv_spec=ConvStackSpec(),
    )
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    folds = ", ".join(sorted(report["per_fold"]))
    print(f"folds: {folds}")
    for target, row in report["macro_average"].items():
        print(
            f"{target}: P={row['P']:.3f} R={row['R']:.3f} F1={row['F1']:.3f} "
            f"(macro over {len(report['per_fold'])} folds)"
        )
    print(f"report -> {args.out}")


if __name__ == "__main__":
    main()
