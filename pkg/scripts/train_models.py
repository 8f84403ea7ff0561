#!/usr/bin/env python3
"""Train the issue and solution classifiers on a labeled dialog file and
save both checkpoints. A thin wrapper over the library; every run is fully
determined by --seed."""

import argparse
import time
from pathlib import Path

from chatmine.corpus import PreprocessConfig
from chatmine.encoder import EncoderConfig
from chatmine.features import ConvStackSpec
from chatmine.model import (
    ModelConfig,
    load_labeled_dialogs,
    save_model_checkpoint,
    train_model,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True, help="labeled dialogs JSONL")
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--patience", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--encoder-dim", type=int, default=800)
    ap.add_argument("--balance", action="store_true",
                    help="bootstrap-resample the minority class")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_labeled_dialogs(args.data, PreprocessConfig())
    cfg = ModelConfig(
        max_epochs=args.epochs, patience=args.patience, seed=args.seed,
        balance=args.balance,
    )
    enc_cfg = EncoderConfig(dim=args.encoder_dim)

    for target in ("issue", "solution"):
        t0 = time.monotonic()
        res = train_model(corpus, target, cfg, enc_cfg=enc_cfg, conv_spec=ConvStackSpec())
        path = out / f"{target}.npz"
        save_model_checkpoint(path, res)
        train_loss, val_loss = res.history[-1]
        print(
            f"{target}: {len(res.history)} epochs in {time.monotonic() - t0:.1f}s, "
            f"best epoch {res.best_epoch}, "
            f"final train loss {train_loss:.4f}, val loss {val_loss:.4f} -> {path}"
        )


if __name__ == "__main__":
    main()
