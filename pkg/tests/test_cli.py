import json
import subprocess
import sys

import pytest

from cmsenti.cli import run
from cmsenti.corpus import write_tsv

from toydata import synthetic_corpus

TINY_CONFIG = {
    "language": "tamil",
    "split": {"dev_ratio": 0.25, "seed": 5},
    "tokenizer": {"kind": "bpe", "vocab_size": 70},
    "skipgram": {"dim": 12, "buckets": 128, "epochs": 2, "window": 3, "negatives": 2, "seed": 2},
    "contextual": {"enabled": True, "embed_dim": 8, "hidden_dim": 6, "epochs": 1,
                   "lr": 0.01, "batch_size": 8, "seed": 2},
    "tfidf": {"enabled": True, "k": 10},
    "model": {"hid_dim": 12, "n_heads": 2, "n_layers": 1, "pf_dim": 24,
              "dropout": 0.1, "max_len": 24, "gru_hidden": 12},
    "train": {"lr": 0.002, "batch_size": 8, "max_epochs": 2, "patience": 2, "seed": 4},
}


@pytest.fixture()
def workspace(tmp_path):
    data = synthetic_corpus(n_per_class=8, seed=31)
    train_tsv = tmp_path / "train.tsv"
    write_tsv(data, train_tsv)
    config = json.loads(json.dumps(TINY_CONFIG))
    config["paths"] = {
        "train_tsv": str(train_tsv),
        "artifacts": str(tmp_path / "artifacts"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return tmp_path, config_path


def invoke(*argv):
    return run(list(argv))


def run_full_pipeline(config_path):
    assert invoke("train-tokenizer", "--config", str(config_path)) == 0
    for kind in ("skipgram", "contextual", "tfidf"):
        assert invoke("train-embed", "--config", str(config_path), "--kind", kind) == 0
    assert invoke("train", "--config", str(config_path)) == 0


def test_full_pipeline_artifacts(workspace, capsys):
    tmp_path, config_path = workspace
    run_full_pipeline(config_path)
    art = tmp_path / "artifacts"
    for name in ("vocab.json", "skipgram.bin", "ctx.bin", "tfidf.json",
                 "model.ckpt", "metrics.json", "history.jsonl"):
        assert (art / name).exists(), name
    history = [json.loads(l) for l in (art / "history.jsonl").read_text().splitlines()]
    assert len(history) == 2
    assert set(history[0]) == {"epoch", "train_loss", "dev_accuracy", "dev_weighted_f1"}

    assert invoke("eval", "--config", str(config_path)) == 0
    out = capsys.readouterr().out
    assert "weighted F1" in out
    metrics = json.loads((art / "metrics.json").read_text())
    assert set(metrics) == {"accuracy", "weighted_f1", "per_class", "confusion"}
    assert len(metrics["confusion"]) == 5

    assert invoke("predict", "--config", str(config_path), "--text", "semma padam da") == 0
    pred = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(pred) == {"label", "probabilities"}
    assert pred["label"] in metrics["per_class"]
    assert sum(pred["probabilities"].values()) == pytest.approx(1.0, abs=1e-6)


def test_predict_deterministic(workspace, capsys):
    _, config_path = workspace
    run_full_pipeline(config_path)
    capsys.readouterr()
    assert invoke("predict", "--config", str(config_path), "--text", "mokka waste") == 0
    first = capsys.readouterr().out
    assert invoke("predict", "--config", str(config_path), "--text", "mokka waste") == 0
    second = capsys.readouterr().out
    assert first == second


def test_unknown_command_is_usage_error(workspace, capsys):
    _, config_path = workspace
    assert invoke("frobnicate", "--config", str(config_path)) == 2


def test_missing_dependency_names_artifact(workspace, capsys):
    _, config_path = workspace
    code = invoke("train", "--config", str(config_path))
    assert code == 3
    err = capsys.readouterr().err
    assert err.startswith("error: dependency:")
    assert "vocab.json" in err
    assert len(err.strip().splitlines()) == 1


def test_invalid_config_field_named(workspace, capsys):
    tmp_path, config_path = workspace
    doc = json.loads(config_path.read_text())
    doc["tokenizer"]["vocabulary_size"] = 10  # typo
    config_path.write_text(json.dumps(doc))
    assert invoke("train-tokenizer", "--config", str(config_path)) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: validation:")
    assert "vocabulary_size" in err


def test_fusion_dim_inconsistency_rejected_before_work(workspace, capsys):
    _, config_path = workspace
    code = invoke(
        "train", "--config", str(config_path), "--set", "model.ctx_dim=999"
    )
    assert code == 1
    err = capsys.readouterr().err
    assert "ctx_dim" in err


def test_malformed_json_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert invoke("train-tokenizer", "--config", str(bad)) == 1
    assert capsys.readouterr().err.startswith("error: validation:")


def test_tokenizer_idempotent(workspace):
    tmp_path, config_path = workspace
    assert invoke("train-tokenizer", "--config", str(config_path)) == 0
    vocab_path = tmp_path / "artifacts" / "vocab.json"
    first = vocab_path.read_bytes()
    assert invoke("train-tokenizer", "--config", str(config_path)) == 0
    assert vocab_path.read_bytes() == first


def test_train_idempotent_and_inputs_untouched(workspace):
    tmp_path, config_path = workspace
    input_bytes = (tmp_path / "train.tsv").read_bytes()
    run_full_pipeline(config_path)
    ckpt = (tmp_path / "artifacts" / "model.ckpt").read_bytes()
    assert invoke("train", "--config", str(config_path)) == 0
    assert (tmp_path / "artifacts" / "model.ckpt").read_bytes() == ckpt
    assert (tmp_path / "train.tsv").read_bytes() == input_bytes


def test_set_override_applies(workspace):
    tmp_path, config_path = workspace
    run_full_pipeline(config_path)
    assert invoke(
        "train", "--config", str(config_path), "--set", "train.max_epochs=1"
    ) == 0
    history = (tmp_path / "artifacts" / "history.jsonl").read_text().splitlines()
    assert len(history) == 1


def test_tokenizer_direct_flags(workspace):
    tmp_path, config_path = workspace
    other = tmp_path / "other" / "v.json"
    other.parent.mkdir()
    code = invoke(
        "train-tokenizer", "--config", str(config_path),
        "--kind", "unigram", "--vocab-size", "60", "--out", str(other),
    )
    assert code == 0
    doc = json.loads(other.read_text(encoding="utf-8"))
    assert doc["kind"] == "unigram"
    assert len(doc["pieces"]) <= 60


def test_lock_file_guards_writes(workspace, capsys):
    tmp_path, config_path = workspace
    art = tmp_path / "artifacts"
    art.mkdir()
    (art / ".lock").touch()
    assert invoke("train-tokenizer", "--config", str(config_path)) == 1
    assert "lock" in capsys.readouterr().err


def test_lock_file_removed_after_run(workspace):
    tmp_path, config_path = workspace
    assert invoke("train-tokenizer", "--config", str(config_path)) == 0
    assert not (tmp_path / "artifacts" / ".lock").exists()


def test_predict_empty_text_rejected(workspace, capsys):
    _, config_path = workspace
    run_full_pipeline(config_path)
    capsys.readouterr()
    assert invoke("predict", "--config", str(config_path), "--text", "   ") == 1
    assert capsys.readouterr().err.startswith("error: validation:")


def test_ablation_toggle_combinations(workspace):
    tmp_path, config_path = workspace
    doc = json.loads(config_path.read_text())
    reports = {}
    for name, ctx_on, tfidf_on in (
        ("full", True, True),
        ("no_tfidf", True, False),
        ("transformer_only", False, False),
    ):
        run_doc = json.loads(json.dumps(doc))
        run_doc["contextual"]["enabled"] = ctx_on
        run_doc["tfidf"]["enabled"] = tfidf_on
        run_doc["paths"]["artifacts"] = str(tmp_path / f"art_{name}")
        cfg_path = tmp_path / f"config_{name}.json"
        cfg_path.write_text(json.dumps(run_doc))
        assert invoke("train-tokenizer", "--config", str(cfg_path)) == 0
        assert invoke("train-embed", "--config", str(cfg_path), "--kind", "skipgram") == 0
        if ctx_on:
            assert invoke("train-embed", "--config", str(cfg_path), "--kind", "contextual") == 0
        if tfidf_on:
            assert invoke("train-embed", "--config", str(cfg_path), "--kind", "tfidf") == 0
        assert invoke("train", "--config", str(cfg_path)) == 0
        reports[name] = json.loads(
            (tmp_path / f"art_{name}" / "metrics.json").read_text()
        )
    assert len(reports) == 3
    for rep in reports.values():
        assert set(rep) == {"accuracy", "weighted_f1", "per_class", "confusion"}


def test_console_entry_point_smoke(workspace):
    _, config_path = workspace
    proc = subprocess.run(
        [sys.executable, "-m", "cmsenti.cli", "train-tokenizer", "--config", str(config_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "vocab.json" in proc.stdout
