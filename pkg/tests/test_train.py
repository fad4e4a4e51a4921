import math
import struct
import zlib

import numpy as np
import pytest

from cmsenti.checkpoint import load_checkpoint, save_checkpoint
from cmsenti.errors import (
    ChecksumError,
    ComponentHashError,
    TrainingDiverged,
    ValidationError,
    VersionMismatchError,
)
from cmsenti.features import component_hashes, featurize
from cmsenti.metrics import (
    accuracy_score,
    compute_metrics,
    confusion_matrix,
    per_class_prf,
    weighted_f1,
)
from cmsenti.model import init_params, make_batch, model_forward
from cmsenti.train import TrainConfig, evaluate, token_init_from_skipgram, train

from toydata import SCHEMA, fit_components, synthetic_corpus, toy_model_config

# --- metric oracles ---------------------------------------------------------


def counting_oracle(conf):
    """Direct per-class counting, independent of the library implementation."""
    conf = np.asarray(conf, dtype=np.int64)
    c = conf.shape[0]
    total = conf.sum()
    acc = sum(conf[i, i] for i in range(c)) / total
    wf1 = 0.0
    for i in range(c):
        tp = conf[i, i]
        fp = conf[:, i].sum() - tp
        fn = conf[i, :].sum() - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        wf1 += (conf[i, :].sum() / total) * f1
    return float(acc), float(wf1)


def test_weighted_f1_diagonal_is_one():
    assert weighted_f1(np.diag([5, 3, 8])) == 1.0


def test_weighted_f1_hand_case():
    conf = np.array([[8, 2], [3, 7]])
    # by hand: P0=8/11, R0=0.8 -> F1 ~ 0.7619; P1=7/9, R1=0.7 -> F1 ~ 0.7368
    p, r, f1, support = per_class_prf(conf)
    assert p[0] == pytest.approx(8 / 11)
    assert r[0] == pytest.approx(0.8)
    assert f1[0] == pytest.approx(0.761905, abs=1e-6)
    assert f1[1] == pytest.approx(0.736842, abs=1e-6)
    assert weighted_f1(conf) == pytest.approx(0.7494, abs=1e-4)
    assert weighted_f1(conf) == pytest.approx(counting_oracle(conf)[1], abs=1e-12)


def test_weighted_f1_degenerate_class_no_nan():
    conf = np.array([[4, 0, 0], [1, 5, 0], [0, 0, 0]])
    val = weighted_f1(conf)
    assert math.isfinite(val)
    _, _, f1, support = per_class_prf(conf)
    assert f1[2] == 0.0 and support[2] == 0


def test_weighted_f1_rejects_all_zero():
    with pytest.raises(ValidationError):
        weighted_f1(np.zeros((3, 3), dtype=int))
    with pytest.raises(ValidationError):
        weighted_f1(np.array([[1, -1], [0, 2]]))


def test_metrics_match_counting_oracle_on_random_matrices():
    rng = np.random.default_rng(123)
    for _ in range(60):
        c = int(rng.integers(2, 7))
        conf = rng.integers(0, 30, size=(c, c))
        if conf.sum() == 0:
            conf[0, 0] = 1
        acc, wf1 = counting_oracle(conf)
        assert abs(accuracy_score(conf) - acc) < 1e-9
        assert abs(weighted_f1(conf) - wf1) < 1e-9


def test_compute_metrics_hand_fixture():
    # 20 hand-set prediction pairs over 3 of the 5 classes
    y_true = [0] * 10 + [1] * 6 + [2] * 4
    y_pred = [0] * 8 + [1, 2] + [1] * 5 + [0] + [2] * 3 + [0]
    report = compute_metrics(y_true, y_pred, SCHEMA.labels)
    # hand-counted confusion
    expected_conf = np.zeros((5, 5), dtype=np.int64)
    expected_conf[0, 0], expected_conf[0, 1], expected_conf[0, 2] = 8, 1, 1
    expected_conf[1, 1], expected_conf[1, 0] = 5, 1
    expected_conf[2, 2], expected_conf[2, 0] = 3, 1
    assert np.array_equal(report.confusion, expected_conf)
    assert report.accuracy == pytest.approx(16 / 20)
    acc, wf1 = counting_oracle(expected_conf)
    assert report.weighted_f1 == pytest.approx(wf1, abs=1e-12)
    assert report.support.tolist() == [10, 6, 4, 0, 0]


def test_perfect_predictions_are_ones():
    y = [0, 1, 2, 3, 4, 2, 1]
    report = compute_metrics(y, y, SCHEMA.labels)
    assert report.accuracy == 1.0
    assert report.weighted_f1 == 1.0


def test_confusion_matrix_counts():
    conf = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert conf.tolist() == [[1, 1], [0, 1]]
    assert conf.sum() == 3


def test_report_serialization_shape():
    report = compute_metrics([0, 1, 2, 3, 4], [0, 1, 2, 3, 4], SCHEMA.labels)
    doc = report.to_dict()
    assert set(doc) == {"accuracy", "weighted_f1", "per_class", "confusion"}
    assert set(doc["per_class"]) == set(SCHEMA.labels)
    assert set(doc["per_class"]["positive"]) == {"precision", "recall", "f1", "support"}
    table = report.format_table()
    assert "weighted F1" in table and "positive" in table


# --- training loop ----------------------------------------------------------


@pytest.fixture(scope="module")
def toy_setup():
    data = synthetic_corpus(n_per_class=8, seed=11)
    train_data, dev_data = data[:30], data[30:]
    components = fit_components([ex.text for ex in data])
    config = toy_model_config(components)
    return train_data, dev_data, components, config


def test_train_history_and_selection(toy_setup):
    train_data, dev_data, components, config = toy_setup
    ckpt, history = train(
        train_data, dev_data, components, SCHEMA, config,
        TrainConfig(lr=0.003, batch_size=8, max_epochs=4, patience=4, seed=5),
    )
    assert len(history) == 4
    for row in history:
        assert set(row) == {"epoch", "train_loss", "dev_accuracy", "dev_weighted_f1"}
        assert math.isfinite(row["train_loss"])
    best = max(h["dev_weighted_f1"] for h in history)
    report = evaluate(ckpt, dev_data, components)
    assert report.weighted_f1 == pytest.approx(best, abs=1e-9)


def test_train_deterministic(toy_setup):
    train_data, dev_data, components, config = toy_setup
    tc = TrainConfig(lr=0.003, batch_size=8, max_epochs=3, patience=3, seed=9)
    ckpt1, hist1 = train(train_data, dev_data, components, SCHEMA, config, tc)
    ckpt2, hist2 = train(train_data, dev_data, components, SCHEMA, config, tc)
    assert hist1 == hist2
    for name, t in ckpt1.params.items():
        assert np.array_equal(t.data, ckpt2.params[name].data)


def test_train_lr_zero_is_noop(toy_setup):
    train_data, dev_data, components, config = toy_setup
    tc = TrainConfig(lr=0.0, batch_size=8, max_epochs=3, patience=5, seed=7)
    ckpt, history = train(train_data, dev_data, components, SCHEMA, config, tc)
    # dev metrics never move
    assert len({row["dev_weighted_f1"] for row in history}) == 1
    assert len({row["dev_accuracy"] for row in history}) == 1
    # parameters still equal their init
    rng = np.random.default_rng(7)
    expected = init_params(config, rng, token_init_from_skipgram(components, config))
    for name, t in ckpt.params.items():
        assert np.array_equal(t.data, expected[name].data), name


def test_train_early_stopping(toy_setup):
    train_data, dev_data, components, config = toy_setup
    tc = TrainConfig(lr=0.0, batch_size=8, max_epochs=10, patience=2, seed=7)
    _, history = train(train_data, dev_data, components, SCHEMA, config, tc)
    # constant dev F1: epoch 1 is best, epochs 2-3 exhaust patience
    assert len(history) == 3


def test_train_rejects_empty_sets(toy_setup):
    _, dev_data, components, config = toy_setup
    with pytest.raises(ValidationError):
        train([], dev_data, components, SCHEMA, config, TrainConfig())
    with pytest.raises(ValidationError):
        train(dev_data, [], components, SCHEMA, config, TrainConfig())


def test_train_diverges_cleanly(toy_setup):
    train_data, dev_data, components, config = toy_setup
    tc = TrainConfig(lr=1e12, batch_size=8, max_epochs=8, patience=8, seed=1)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged):
        train(train_data, dev_data, components, SCHEMA, config, tc)


def test_subword_sampling_flag(toy_setup):
    train_data, dev_data, components, config = toy_setup
    tc = TrainConfig(lr=0.003, batch_size=8, max_epochs=2, patience=2, seed=3,
                     subword_sampling=True)
    # bpe vocabularies cannot sample segmentations
    with pytest.raises(ValidationError):
        train(train_data, dev_data, components, SCHEMA, config, tc)

    uni_components = fit_components(
        [ex.text for ex in train_data + dev_data], kind="unigram"
    )
    uni_config = toy_model_config(uni_components)
    ckpt1, hist1 = train(train_data, dev_data, uni_components, SCHEMA, uni_config, tc)
    ckpt2, hist2 = train(train_data, dev_data, uni_components, SCHEMA, uni_config, tc)
    assert hist1 == hist2  # sampling draws from the seeded rng
    for name, t in ckpt1.params.items():
        assert np.array_equal(t.data, ckpt2.params[name].data)


def test_token_embedding_initialized_from_skipgram(toy_setup):
    train_data, dev_data, components, config = toy_setup
    rows = token_init_from_skipgram(components, config)
    assert rows is not None and rows.shape == (config.vocab_size, config.hid_dim)
    params = init_params(config, np.random.default_rng(0), rows)
    assert np.array_equal(params["tok_emb"].data, rows)
    # dimensionality mismatch falls back to random init
    other = toy_model_config(components, hid_dim=8, pf_dim=16)
    assert token_init_from_skipgram(components, other) is None


# --- checkpoints ------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(toy_setup):
    train_data, dev_data, components, config = toy_setup
    ckpt, history = train(
        train_data, dev_data, components, SCHEMA, config,
        TrainConfig(lr=0.003, batch_size=8, max_epochs=2, patience=2, seed=21),
    )
    return ckpt, history, components, dev_data


def fixture_logits(ckpt, components, data):
    feats = featurize(data, components, ckpt.config, ckpt.schema)
    batch = make_batch(feats.ids, feats.tfidf, feats.ctx)
    return model_forward(batch, ckpt.params, ckpt.config, training=False).data


def test_checkpoint_round_trip_bitwise(tmp_path, trained):
    ckpt, history, components, dev_data = trained
    p = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, p)
    loaded = load_checkpoint(p)
    assert loaded.config == ckpt.config
    assert loaded.schema == ckpt.schema
    assert loaded.history == history
    assert loaded.component_hashes == ckpt.component_hashes
    before = fixture_logits(ckpt, components, dev_data[:4])
    after = fixture_logits(loaded, components, dev_data[:4])
    assert np.array_equal(before, after)


def test_checkpoint_truncation_detected(tmp_path, trained):
    ckpt = trained[0]
    p = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, p)
    blob = p.read_bytes()
    p.write_bytes(blob[:-1])
    with pytest.raises(ChecksumError):
        load_checkpoint(p)


def test_checkpoint_corruption_detected(tmp_path, trained):
    ckpt = trained[0]
    p = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, p)
    blob = bytearray(p.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    p.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_checkpoint(p)


def test_checkpoint_version_mismatch_names_versions(tmp_path):
    # frozen writer for a hypothetical older format version 0
    payload = struct.pack("<I", 2) + b"{}"
    blob = (
        b"CMS1"
        + struct.pack("<II", 0, zlib.crc32(payload) & 0xFFFFFFFF)
        + struct.pack("<Q", len(payload))
        + payload
    )
    p = tmp_path / "old.ckpt"
    p.write_bytes(blob)
    with pytest.raises(VersionMismatchError) as e:
        load_checkpoint(p)
    msg = str(e.value)
    assert "0" in msg and "1" in msg


def test_component_hash_mismatch_rejected(trained, toy_setup):
    ckpt, _, components, dev_data = trained
    other = fit_components(
        [ex.text for ex in synthetic_corpus(4, seed=99)], use_contextual=True
    )
    with pytest.raises(ComponentHashError):
        evaluate(ckpt, dev_data, other)


def test_component_hashes_stable(toy_setup):
    _, _, components, _ = toy_setup
    assert component_hashes(components) == component_hashes(components)
    assert set(component_hashes(components)) == {"vocab", "tfidf", "contextual"}


def test_evaluate_rejects_empty(trained):
    ckpt, _, components, _ = trained
    with pytest.raises(ValidationError):
        evaluate(ckpt, [], components)
