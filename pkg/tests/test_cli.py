"""Command-line behavior: verbs, exit codes, the one-line error contract,
and config-file layering. Commands run in-process through main()."""

import argparse
import json

import pytest

from chatmine import cli, synth
from chatmine.cli import _coerce, _enc_cfg, _model_cfg, _parse_config_file, main
from chatmine.errors import ConfigError, ContractViolation, DataError


def write_raw(path, seed=0, n_dialogs=2):
    records = synth.synth_raw_chat_records(seed, n_dialogs)
    path.write_text(
        "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
    )
    return path


@pytest.fixture(scope="module")
def cli_ckpts(tmp_path_factory, labeled_path):
    """Small checkpoints trained through the CLI itself."""
    d = tmp_path_factory.mktemp("cli_ckpts")
    paths = {}
    for target in ("issue", "solution"):
        out = d / f"{target}.ckpt"
        rc = main(
            [
                "train",
                "--data", str(labeled_path),
                "--target", target,
                "--out", str(out),
                "--epochs", "2",
                "--encoder-dim", "16",
            ]
        )
        assert rc == 0
        paths[target] = out
    return paths


# -- parser and exit codes -------------------------------------------------


def test_no_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_missing_required_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["preprocess", "--input", "x.jsonl"])  # --out missing
    assert exc.value.code == 2


def test_missing_input_maps_to_exit_3(tmp_path, capsys):
    rc = main(["preprocess", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")])
    assert rc == 3
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: code=3 reason=")
    assert "\n" not in err


def test_contract_violation_maps_to_exit_4(monkeypatch, capsys):
    def boom(**kw):
        raise ContractViolation("oh\nno")

    monkeypatch.setattr(cli, "run_standard_checks", boom)
    rc = main(["gradcheck"])
    assert rc == 4
    err = capsys.readouterr().err.strip()
    assert err == "error: code=4 reason=oh no"  # collapsed to one line


def test_missing_config_file_maps_to_exit_3(tmp_path, capsys):
    rc = main(
        ["--config", str(tmp_path / "none.cfg"), "preprocess", "--input", "x", "--out", "y"]
    )
    assert rc == 3
    assert "config file" in capsys.readouterr().err


# -- config handling -------------------------------------------------------


def test_parse_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(
        "# comment\n\nlr = 0.01\nname = \"quoted\"\n", encoding="utf-8"
    )
    assert _parse_config_file(p) == {"lr": "0.01", "name": "quoted"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        _parse_config_file(bad)


def test_coerce_booleans_and_numbers():
    assert _coerce("true", bool) is True
    assert _coerce("0", bool) is False
    assert _coerce("3", int) == 3
    assert _coerce("0.5", float) == 0.5
    with pytest.raises(ConfigError):
        _coerce("maybe", bool)
    with pytest.raises(ConfigError):
        _coerce("abc", int)


def model_args(**kw):
    base = dict(
        seed=0, batch_size=None, dropout=None, lr=None, epochs=None,
        patience=None, issue_threshold=None, solution_threshold=None,
    )
    base.update(kw)
    return argparse.Namespace(**base)


def test_cli_flags_override_config_file_values():
    file_cfg = {"dropout": "0.3", "max_epochs": "7"}
    cfg = _model_cfg(model_args(dropout=0.2), file_cfg)
    assert cfg.dropout == 0.2  # explicit flag wins
    assert cfg.max_epochs == 7  # file fills what flags leave unset
    assert cfg.batch_size == 8  # untouched default


def test_encoder_config_uses_prefixed_keys():
    file_cfg = {"encoder_dim": "32", "encoder_seed": "4"}
    args = argparse.Namespace(encoder_dim=None, encoder_provider=None, encoder_table=None)
    cfg = _enc_cfg(args, file_cfg)
    assert (cfg.dim, cfg.seed) == (32, 4)
    cfg2 = _enc_cfg(
        argparse.Namespace(encoder_dim=64, encoder_provider=None, encoder_table=None),
        file_cfg,
    )
    assert cfg2.dim == 64


# -- pipeline verbs --------------------------------------------------------


def test_preprocess_writes_clean_log(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw.jsonl")
    out = tmp_path / "clean.jsonl"
    rc = main(["preprocess", "--input", str(raw), "--out", str(out), "--community", "c1"])
    assert rc == 0
    lines = [json.loads(l) for l in out.read_text().strip().splitlines()]
    assert lines
    for i, obj in enumerate(lines):
        assert obj["index"] == i
        assert set(obj) >= {"time", "id", "text", "clean_text", "tokens"}
    assert "utterances" in capsys.readouterr().err


def test_disentangle_outputs_dialog_records(tmp_path):
    raw = write_raw(tmp_path / "raw.jsonl", seed=3)
    clean = tmp_path / "clean.jsonl"
    dialogs = tmp_path / "dialogs.jsonl"
    assert main(["preprocess", "--input", str(raw), "--out", str(clean)]) == 0
    assert main(["disentangle", "--input", str(clean), "--out", str(dialogs)]) == 0
    records = [json.loads(l) for l in dialogs.read_text().strip().splitlines()]
    assert records
    n = len(clean.read_text().strip().splitlines())
    seen = sorted(i for r in records for i in r["members"])
    assert seen == list(range(n))
    for r in records:
        assert set(r) == {
            "subject", "members", "links", "initiator",
            "head_indices", "body_indices", "head_text",
        }
        assert r["subject"] == min(r["members"])
        assert sorted(r["head_indices"] + r["body_indices"]) == r["members"]


def test_train_rejects_unknown_target(labeled_path, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", str(labeled_path), "--target", "oracle", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_extract_end_to_end_and_reruns_identically(tmp_path, cli_ckpts, capsys):
    raw = write_raw(tmp_path / "raw.jsonl", seed=5, n_dialogs=3)
    out1 = tmp_path / "pairs1.jsonl"
    out2 = tmp_path / "pairs2.jsonl"
    argv = [
        "extract",
        "--input", str(raw),
        "--issue-ckpt", str(cli_ckpts["issue"]),
        "--solution-ckpt", str(cli_ckpts["solution"]),
        "--encoder-dim", "16",
    ]
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    for line in out1.read_text().strip().splitlines():
        if line:
            obj = json.loads(line)
            assert set(obj) == {
                "community_id", "subject_id", "issue_text",
                "solutions", "status", "p_issue",
            }


def test_extract_rejects_mismatched_encoder(tmp_path, cli_ckpts, capsys):
    raw = write_raw(tmp_path / "raw.jsonl")
    rc = main(
        [
            "extract",
            "--input", str(raw),
            "--issue-ckpt", str(cli_ckpts["issue"]),
            "--solution-ckpt", str(cli_ckpts["solution"]),
            "--out", str(tmp_path / "pairs.jsonl"),
            "--encoder-dim", "800",
        ]
    )
    assert rc == 3
    assert "dim" in capsys.readouterr().err


def test_threshold_flags_must_stay_in_range(tmp_path, cli_ckpts, capsys):
    raw = write_raw(tmp_path / "raw.jsonl")
    rc = main(
        [
            "extract",
            "--input", str(raw),
            "--issue-ckpt", str(cli_ckpts["issue"]),
            "--solution-ckpt", str(cli_ckpts["solution"]),
            "--out", str(tmp_path / "pairs.jsonl"),
            "--encoder-dim", "16",
            "--issue-threshold", "0.95",
        ]
    )
    assert rc == 3
    assert "threshold" in capsys.readouterr().err


def test_gradcheck_verb_passes_and_reports(capsys):
    rc = main(["gradcheck", "--seeds", "1", "--tol", "1e-3"])
    assert rc == 0
    out = capsys.readouterr().out
    lines = [l for l in out.strip().splitlines() if l]
    assert len(lines) == 6
    for line in lines:
        assert line.endswith("PASS")
        assert "max_rel_error=" in line


def test_console_entry_point_help(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "chatmine.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "preprocess" in proc.stdout
    assert "extract" in proc.stdout
