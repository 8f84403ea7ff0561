"""Command line surface.

Verbs: preprocess, disentangle, train, extract, eval, gradcheck. Global
flags --seed / --jobs / --config apply everywhere; a config file holds
key=value lines mirroring the PreprocessConfig, ModelConfig, and encoder
fields (encoder keys prefixed encoder_), and explicit CLI flags win over it.
Diagnostics go to standard error only; outputs are files. Exit codes: 0
success, 2 usage, 3 data/config problems, 4 internal invariant breaches,
each with one machine-parsable "error: code=N reason=..." line.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import disentangle, model as model_mod
from . import encoder as enc
from .corpus import (
    PreprocessConfig,
    parse_chat_log,
    preprocess_chat_log,
    read_clean_jsonl,
    write_clean_jsonl,
)
from .errors import ConfigError, ContractViolation, DataError
from .evaluation import cross_project_evaluate
from .features import ConvStackSpec
from .gradcheck import run_standard_checks
from .model import ModelConfig


def _log(msg):
    print(msg, file=sys.stderr)


def _parse_config_file(path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    out = {}
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{line_no}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip().strip('"')
    return out


def _coerce(value, kind):
    if kind is bool:
        low = str(value).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean value {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind.__name__} value {value!r}") from exc


def _dataclass_from(cls, file_cfg, overrides, prefix=""):
    """Defaults <- config file <- explicit CLI values, typed per field."""
    kwargs = {}
    for f in fields(cls):
        key = prefix + f.name
        if key in file_cfg:
            kind = type(f.default) if f.default is not None else str
            kwargs[f.name] = _coerce(file_cfg[key], kind)
        if f.name in overrides and overrides[f.name] is not None:
            kwargs[f.name] = overrides[f.name]
    return cls(**kwargs)


def _pre_cfg(args, file_cfg):
    overrides = {
        "perplexity_threshold": getattr(args, "perplexity_threshold", None),
        "merge_time_gap_max_ms": getattr(args, "merge_gap_ms", None),
    }
    if getattr(args, "no_typo_correction", False):
        overrides["typo_correction"] = False
    return _dataclass_from(PreprocessConfig, file_cfg, overrides)


def _enc_cfg(args, file_cfg):
    overrides = {
        "dim": getattr(args, "encoder_dim", None),
        "provider": getattr(args, "encoder_provider", None),
        "table_path": getattr(args, "encoder_table", None),
    }
    return _dataclass_from(enc.EncoderConfig, file_cfg, overrides, prefix="encoder_")


def _model_cfg(args, file_cfg):
    overrides = {
        "seed": args.seed,
        "batch_size": getattr(args, "batch_size", None),
        "dropout": getattr(args, "dropout", None),
        "lr": getattr(args, "lr", None),
        "max_epochs": getattr(args, "epochs", None),
        "patience": getattr(args, "patience", None),
        "issue_threshold": getattr(args, "issue_threshold", None),
        "solution_threshold": getattr(args, "solution_threshold", None),
    }
    if getattr(args, "balance", False):
        overrides["balance"] = True
    return _dataclass_from(ModelConfig, file_cfg, overrides)


def _link_scorer(args):
    path = getattr(args, "link_ckpt", None)
    if path:
        params = disentangle.load_link_checkpoint(path)
        return disentangle.make_scorer(params)
    return disentangle.heuristic_link_scorer


# -- verbs -----------------------------------------------------------------


def _cmd_preprocess(args, file_cfg):
    cfg = _pre_cfg(args, file_cfg)
    log, skipped = parse_chat_log(args.input, args.community)
    for s in skipped:
        _log(f"skipped line {s.line_no}: {s.reason}")
    before = len(log.utterances)
    clean, _ = preprocess_chat_log(log, cfg)
    write_clean_jsonl(clean, args.out)
    _log(
        f"preprocessed {before} -> {len(clean.utterances)} utterances "
        f"({len(skipped)} lines skipped)"
    )
    return 0


def _cmd_disentangle(args, file_cfg):
    log = read_clean_jsonl(args.input, args.community)
    scorer = _link_scorer(args)
    dialogs = disentangle.assemble_dialogs(
        log, scorer, threshold=args.threshold, lookback=args.lookback
    )
    lines = []
    for d in dialogs:
        parts = disentangle.split_head_body(d, log)
        lines.append(
            json.dumps(
                {
                    "subject": d.subject,
                    "members": list(d.members),
                    "links": [list(l) for l in d.links],
                    "initiator": parts.initiator,
                    "head_indices": list(parts.head_indices),
                    "body_indices": list(parts.body_indices),
                    "head_text": parts.head_text,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    _log(f"{len(log.utterances)} utterances -> {len(dialogs)} dialogs")
    return 0


def _cmd_train(args, file_cfg):
    pre_cfg = _pre_cfg(args, file_cfg)
    if args.target == "link":
        examples = disentangle.load_link_examples(args.data, pre_cfg)
        params, history = disentangle.train_link_scorer(
            examples, hidden=args.link_hidden, epochs=args.epochs or 5, seed=args.seed
        )
        disentangle.save_link_checkpoint(args.out, params, args.link_hidden)
        _log(f"link scorer loss: {' '.join(f'{h:.4f}' for h in history)}")
        return 0
    cfg = _model_cfg(args, file_cfg)
    enc_cfg = _enc_cfg(args, file_cfg)
    corpus = model_mod.load_labeled_dialogs(args.data, pre_cfg)
    result = model_mod.train_model(
        corpus,
        args.target,
        cfg,
        enc_cfg,
        log_fn=lambda e, tr, va: _log(f"epoch {e}: train {tr:.4f} val {va:.4f}"),
    )
    model_mod.save_model_checkpoint(args.out, result)
    _log(f"saved {args.target} checkpoint (best epoch {result.best_epoch}) to {args.out}")
    return 0


def _cmd_extract(args, file_cfg):
    pre_cfg = _pre_cfg(args, file_cfg)
    enc_cfg = _enc_cfg(args, file_cfg)
    log, skipped = parse_chat_log(args.input, args.community)
    for s in skipped:
        _log(f"skipped line {s.line_no}: {s.reason}")
    clean, _ = preprocess_chat_log(log, pre_cfg)
    issue_bundle = model_mod.load_model_checkpoint(args.issue_ckpt, enc_cfg)
    solution_bundle = model_mod.load_model_checkpoint(args.solution_ckpt, enc_cfg)
    cfg = None
    if args.issue_threshold is not None or args.solution_threshold is not None:
        cfg = ModelConfig(
            issue_threshold=args.issue_threshold
            if args.issue_threshold is not None
            else issue_bundle.cfg.issue_threshold,
            solution_threshold=args.solution_threshold
            if args.solution_threshold is not None
            else solution_bundle.cfg.solution_threshold,
        )
    pairs = model_mod.assemble_pairs(
        clean,
        issue_bundle,
        solution_bundle,
        _link_scorer(args),
        cfg,
        enc_cfg,
        jobs=args.jobs,
    )
    Path(args.out).write_text(model_mod.pairs_to_jsonl(pairs), encoding="utf-8")
    _log(f"extracted {len(pairs)} issue-solution pairs")
    return 0


def _cmd_eval(args, file_cfg):
    pre_cfg = _pre_cfg(args, file_cfg)
    cfg = _model_cfg(args, file_cfg)
    enc_cfg = _enc_cfg(args, file_cfg)
    corpus = model_mod.load_labeled_dialogs(args.data, pre_cfg)
    report = cross_project_evaluate(corpus, cfg, enc_cfg)
    Path(args.out).write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    macro = report["macro_average"]
    for target in ("issue", "solution"):
        m = macro[target]
        _log(f"{target}: P={m['P']:.3f} R={m['R']:.3f} F1={m['F1']:.3f} (macro)")
    return 0


def _cmd_gradcheck(args, file_cfg):
    seeds = tuple(int(s) for s in args.seeds.split(","))
    reports = run_standard_checks(seeds=seeds, tolerance=args.tol, step=args.step)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(
            f"{r.fragment} seed={r.seed} params={r.param_count} "
            f"max_rel_error={r.max_rel_error:.3e} {status}"
        )
    if failed:
        names = ", ".join(
            f"{r.fragment}[seed {r.seed}]: {', '.join(r.failures)}" for r in failed
        )
        raise ContractViolation(f"gradient check failed for {names}")
    return 0


# -- wiring ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chatmine",
        description="Mine issue-solution pairs from developer chat logs.",
    )
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads where supported")
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("preprocess", help="normalize and repair a raw chat log")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--community")
    p.add_argument("--perplexity-threshold", type=float)
    p.add_argument("--merge-gap-ms", type=int)
    p.add_argument("--no-typo-correction", action="store_true")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("disentangle", help="group a clean log into dialogs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--community")
    p.add_argument("--link-ckpt")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--lookback", type=int, default=50)
    p.set_defaults(func=_cmd_disentangle)

    p = sub.add_parser("train", help="train the issue, solution, or link model")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True, choices=("issue", "solution", "link"))
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--issue-threshold", type=float)
    p.add_argument("--solution-threshold", type=float)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--link-hidden", type=int, default=64)
    p.add_argument("--encoder-dim", type=int)
    p.add_argument("--encoder-provider", choices=("hash", "table"))
    p.add_argument("--encoder-table")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("extract", help="chat log + checkpoints -> issue-solution pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--issue-ckpt", required=True)
    p.add_argument("--solution-ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--community")
    p.add_argument("--link-ckpt")
    p.add_argument("--issue-threshold", type=float)
    p.add_argument("--solution-threshold", type=float)
    p.add_argument("--encoder-dim", type=int)
    p.add_argument("--encoder-provider", choices=("hash", "table"))
    p.add_argument("--encoder-table")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("eval", help="cross-project evaluation of both models")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--issue-threshold", type=float)
    p.add_argument("--solution-threshold", type=float)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--encoder-dim", type=int)
    p.add_argument("--encoder-provider", choices=("hash", "table"))
    p.add_argument("--encoder-table")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all fragments")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seeds", default="1,2,3")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = _parse_config_file(args.config) if args.config else {}
        return args.func(args, file_cfg)
    except ContractViolation as exc:
        reason = " ".join(str(exc).split())
        print(f"error: code=4 reason={reason}", file=sys.stderr)
        return 4
    except DataError as exc:
        reason = " ".join(str(exc).split())
        print(f"error: code=3 reason={reason}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
