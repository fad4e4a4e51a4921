"""Command-line pipeline: tokenizer training, embedding training, model
training, evaluation, and single-text prediction.

Usage: ``cmsenti <command> --config <path> [--set key=value ...]``
Exit codes: 0 success, 1 validation, 2 usage, 3 runtime.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import subword
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import LabeledExample, LabelSchema, load_tsv, normalize_text, split
from .embed import (
    ContextualConfig,
    SkipgramConfig,
    fit_tfidf,
    load_contextual,
    load_skipgram,
    load_tfidf,
    save_contextual,
    save_skipgram,
    save_tfidf,
    train_contextual,
    train_skipgram,
)
from .errors import (
    CheckpointError,
    DependencyError,
    TrainingDiverged,
    ValidationError,
)
from .features import Components, featurize
from .model import ModelConfig
from .train import TrainConfig, evaluate, train, verify_components, _predict_logits

ARTIFACT_NAMES = {
    "vocab": "vocab.json",
    "skipgram": "skipgram.bin",
    "contextual": "ctx.bin",
    "tfidf": "tfidf.json",
    "checkpoint": "model.ckpt",
    "metrics": "metrics.json",
    "history": "history.jsonl",
}


@dataclass
class Prediction:
    label: str
    probabilities: tuple[float, ...]


@dataclass
class PipelineConfig:
    schema: LabelSchema
    train_tsv: Optional[Path]
    dev_tsv: Optional[Path]
    test_tsv: Optional[Path]
    artifacts: Path
    dev_ratio: float
    split_seed: int
    tokenizer: dict
    skipgram: SkipgramConfig
    contextual_enabled: bool
    contextual: ContextualConfig
    tfidf_enabled: bool
    tfidf_k: int
    model: dict
    train: TrainConfig

    def artifact(self, key: str) -> Path:
        return self.artifacts / ARTIFACT_NAMES[key]

    @property
    def ctx_dim(self) -> int:
        return 2 * self.contextual.hidden_dim if self.contextual_enabled else 0

    @property
    def tfidf_dim(self) -> int:
        return self.tfidf_k if self.tfidf_enabled else 0


def _take(section: dict, path: str, allowed: set[str]) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown config field(s) in {path}: {sorted(unknown)}")


def parse_config(doc: dict) -> PipelineConfig:
    _take(
        doc,
        "<root>",
        {"language", "labels", "paths", "split", "tokenizer", "skipgram",
         "contextual", "tfidf", "model", "train"},
    )
    if "labels" in doc and doc["labels"]:
        schema = LabelSchema(labels=tuple(doc["labels"]), language_tag=doc.get("language", "unknown"))
    elif "language" in doc:
        schema = LabelSchema.for_language(doc["language"])
    else:
        raise ValidationError("config needs either 'language' or an explicit 'labels' list")

    paths = doc.get("paths", {})
    _take(paths, "paths", {"train_tsv", "dev_tsv", "test_tsv", "artifacts"})
    if "artifacts" not in paths:
        raise ValidationError("config field paths.artifacts is required")

    split_cfg = doc.get("split", {})
    _take(split_cfg, "split", {"dev_ratio", "seed"})

    tok = dict(doc.get("tokenizer", {}))
    _take(tok, "tokenizer", {"kind", "vocab_size", "max_piece_len", "em_iterations"})
    tok.setdefault("kind", "unigram")
    tok.setdefault("vocab_size", 8000)
    if tok["kind"] not in ("bpe", "unigram"):
        raise ValidationError(f"tokenizer.kind must be bpe|unigram, got {tok['kind']!r}")

    sg = doc.get("skipgram", {})
    _take(sg, "skipgram", {f for f in SkipgramConfig.__dataclass_fields__})
    skipgram = SkipgramConfig(**sg)

    ctx_doc = dict(doc.get("contextual", {}))
    ctx_enabled = bool(ctx_doc.pop("enabled", True))
    _take(ctx_doc, "contextual", {f for f in ContextualConfig.__dataclass_fields__})
    contextual = ContextualConfig(**ctx_doc)

    tf_doc = dict(doc.get("tfidf", {}))
    _take(tf_doc, "tfidf", {"enabled", "k"})
    tfidf_enabled = bool(tf_doc.get("enabled", True))
    tfidf_k = int(tf_doc.get("k", 5000))

    model = dict(doc.get("model", {}))
    _take(
        model,
        "model",
        {"hid_dim", "n_heads", "n_layers", "pf_dim", "dropout", "max_len",
         "gru_hidden", "positional_mode", "ctx_dim", "tfidf_dim"},
    )

    tr = doc.get("train", {})
    _take(tr, "train", {f for f in TrainConfig.__dataclass_fields__})
    train_cfg = TrainConfig(**tr)

    cfg = PipelineConfig(
        schema=schema,
        train_tsv=Path(paths["train_tsv"]) if paths.get("train_tsv") else None,
        dev_tsv=Path(paths["dev_tsv"]) if paths.get("dev_tsv") else None,
        test_tsv=Path(paths["test_tsv"]) if paths.get("test_tsv") else None,
        artifacts=Path(paths["artifacts"]),
        dev_ratio=float(split_cfg.get("dev_ratio", 0.1)),
        split_seed=int(split_cfg.get("seed", 13)),
        tokenizer=tok,
        skipgram=skipgram,
        contextual_enabled=ctx_enabled,
        contextual=contextual,
        tfidf_enabled=tfidf_enabled,
        tfidf_k=tfidf_k,
        model=model,
        train=train_cfg,
    )

    # fusion dims are derived from the channel toggles; an explicit model
    # override that disagrees is rejected before any training work
    for key, derived in (("ctx_dim", cfg.ctx_dim), ("tfidf_dim", cfg.tfidf_dim)):
        if key in model and int(model[key]) != derived:
            raise ValidationError(
                f"model.{key}={model[key]} conflicts with the channel toggles "
                f"(derived {derived})"
            )
    return cfg


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"config {path} is not valid JSON: {e}") from None
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"--set path {key!r} crosses a non-object field")
        node[parts[-1]] = parsed
    return parse_config(doc)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing {path.name} ({hint}): {path}")
    return path


@contextlib.contextmanager
def _artifact_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"artifact directory {directory} is locked by another run ({lock})"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _load_train_data(cfg: PipelineConfig):
    path = _require(cfg.train_tsv, "paths.train_tsv") if cfg.train_tsv else None
    if path is None:
        raise ValidationError("config field paths.train_tsv is required for this command")
    return load_tsv(path, cfg.schema)


def _train_dev(cfg: PipelineConfig):
    train_data = _load_train_data(cfg)
    if cfg.dev_tsv:
        dev_data = load_tsv(_require(cfg.dev_tsv, "paths.dev_tsv"), cfg.schema)
    else:
        parts = split(train_data, cfg.dev_ratio, cfg.split_seed)
        train_data, dev_data = parts.train, parts.dev
    return train_data, dev_data


def _load_components(cfg: PipelineConfig, need_skipgram: bool = False) -> Components:
    vocab = subword.load_vocab(_require(cfg.artifact("vocab"), "run train-tokenizer first"))
    skipgram = None
    if need_skipgram or cfg.artifact("skipgram").exists():
        skipgram = load_skipgram(
            _require(cfg.artifact("skipgram"), "run train-embed --kind skipgram first")
        )
    tfidf = None
    if cfg.tfidf_enabled:
        tfidf = load_tfidf(_require(cfg.artifact("tfidf"), "run train-embed --kind tfidf first"))
    contextual = None
    if cfg.contextual_enabled:
        contextual = load_contextual(
            _require(cfg.artifact("contextual"), "run train-embed --kind contextual first")
        )
    return Components(vocab=vocab, skipgram=skipgram, tfidf=tfidf, contextual=contextual)


def _model_config(cfg: PipelineConfig, vocab_size: int) -> ModelConfig:
    model = {k: v for k, v in cfg.model.items() if k not in ("ctx_dim", "tfidf_dim")}
    return ModelConfig(
        vocab_size=vocab_size,
        ctx_dim=cfg.ctx_dim,
        tfidf_dim=cfg.tfidf_dim,
        **model,
    ).validate()


def cmd_train_tokenizer(cfg: PipelineConfig, out: Optional[str] = None) -> int:
    data = _load_train_data(cfg)
    texts = [ex.text for ex in data]
    kind = cfg.tokenizer["kind"]
    kwargs = {}
    if kind == "unigram":
        if "max_piece_len" in cfg.tokenizer:
            kwargs["max_piece_len"] = int(cfg.tokenizer["max_piece_len"])
        if "em_iterations" in cfg.tokenizer:
            kwargs["em_iterations"] = int(cfg.tokenizer["em_iterations"])
        vocab = subword.train_unigram(texts, int(cfg.tokenizer["vocab_size"]), **kwargs)
    else:
        vocab = subword.train_bpe(texts, int(cfg.tokenizer["vocab_size"]))
    target = Path(out) if out else cfg.artifact("vocab")
    with _artifact_lock(target.parent):
        subword.save_vocab(vocab, target)
    print(f"wrote {target} ({len(vocab)} pieces, kind={kind})")
    return 0


def cmd_train_embed(
    cfg: PipelineConfig,
    kind: str,
    out: Optional[str] = None,
    vocab_path: Optional[str] = None,
) -> int:
    data = _load_train_data(cfg)
    texts = [ex.text for ex in data]
    target = Path(out) if out else cfg.artifact(kind)
    with _artifact_lock(target.parent):
        if kind == "tfidf":
            model = fit_tfidf([t.split() for t in texts], cfg.tfidf_k)
            save_tfidf(model, target)
            print(f"wrote {target} ({model.k} terms)")
            return 0
        vpath = Path(vocab_path) if vocab_path else cfg.artifact("vocab")
        vocab = subword.load_vocab(_require(vpath, "run train-tokenizer first"))
        encoded = [subword.encode(vocab, t) for t in texts]
        if kind == "skipgram":
            sentences = [[vocab.pieces[i] for i in seq.ids] for seq in encoded]
            table = train_skipgram(sentences, cfg.skipgram)
            save_skipgram(table, target)
            print(
                f"wrote {target} "
                f"(d={table.dim}, final loss {table.epoch_losses[-1]:.4f})"
            )
            return 0
        if kind == "contextual":
            enc = train_contextual([seq.ids for seq in encoded], len(vocab), cfg.contextual)
            save_contextual(enc, target)
            print(
                f"wrote {target} (dim={enc.dim}, "
                f"held-out perplexity {enc.epoch_perplexities[-1]:.2f})"
            )
            return 0
    raise ValidationError(f"unknown embedding kind {kind!r}")


def cmd_train(cfg: PipelineConfig) -> int:
    components = _load_components(cfg, need_skipgram=True)
    train_data, dev_data = _train_dev(cfg)
    model_config = _model_config(cfg, len(components.vocab))
    with _artifact_lock(cfg.artifacts):
        ckpt, history = train(
            train_data, dev_data, components, cfg.schema, model_config, cfg.train
        )
        save_checkpoint(ckpt, cfg.artifact("checkpoint"))
        with cfg.artifact("history").open("w", encoding="utf-8") as fh:
            for row in history:
                fh.write(json.dumps(row) + "\n")
        report = evaluate(ckpt, dev_data, components)
        cfg.artifact("metrics").write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    best = max(history, key=lambda r: r["dev_weighted_f1"])
    print(
        f"trained {len(history)} epoch(s); best dev weighted F1 "
        f"{best['dev_weighted_f1']:.4f} at epoch {best['epoch']}"
    )
    print(f"wrote {cfg.artifact('checkpoint')}")
    return 0


def cmd_eval(cfg: PipelineConfig, data_path: Optional[str]) -> int:
    components = _load_components(cfg)
    ckpt = load_checkpoint(_require(cfg.artifact("checkpoint"), "run train first"))
    if data_path:
        data = load_tsv(_require(Path(data_path), "--data"), cfg.schema)
    elif cfg.test_tsv:
        data = load_tsv(_require(cfg.test_tsv, "paths.test_tsv"), cfg.schema)
    else:
        _, data = _train_dev(cfg)
    report = evaluate(ckpt, data, components)
    print(report.format_table())
    with _artifact_lock(cfg.artifacts):
        cfg.artifact("metrics").write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    print(f"wrote {cfg.artifact('metrics')}")
    return 0


def predict(ckpt: Checkpoint, text: str, components: Components) -> Prediction:
    """Classify one raw text through the full pipeline."""
    norm = normalize_text(text)
    if not norm:
        raise ValidationError("text is empty after normalization")
    verify_components(ckpt, components)
    example = LabeledExample(text=norm, label=ckpt.schema.labels[0])
    feats = featurize([example], components, ckpt.config, schema=None)
    logits = _predict_logits(feats, ckpt.params, ckpt.config)[0].astype(np.float64)
    exp = np.exp(logits - logits.max())
    probs = exp / exp.sum()
    return Prediction(
        label=ckpt.schema.labels[int(np.argmax(logits))],
        probabilities=tuple(float(p) for p in probs),
    )


def cmd_predict(cfg: PipelineConfig, checkpoint_path: Optional[str], text: str) -> int:
    components = _load_components(cfg)
    path = Path(checkpoint_path) if checkpoint_path else cfg.artifact("checkpoint")
    ckpt = load_checkpoint(_require(path, "run train first"))
    pred = predict(ckpt, text, components)
    print(
        json.dumps(
            {
                "label": pred.label,
                "probabilities": {
                    label: pred.probabilities[i] for i, label in enumerate(ckpt.schema.labels)
                },
            },
            ensure_ascii=False,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsenti",
        description="Code-mixed sentiment classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config field (dotted path, JSON value)",
        )

    p = sub.add_parser("train-tokenizer", help="learn the subword vocabulary")
    common(p)
    p.add_argument("--input", help="override paths.train_tsv")
    p.add_argument("--kind", choices=["bpe", "unigram"], help="override tokenizer.kind")
    p.add_argument("--vocab-size", type=int, help="override tokenizer.vocab_size")
    p.add_argument("--out", help="override the vocab.json location (artifact dir)")

    p = sub.add_parser("train-embed", help="train one embedding family")
    common(p)
    p.add_argument("--kind", choices=["skipgram", "contextual", "tfidf"], required=True)
    p.add_argument("--input", help="override paths.train_tsv")
    p.add_argument("--vocab", help="override the vocab.json location")
    p.add_argument("--out", help="override the output artifact location")

    p = sub.add_parser("train", help="train the classifier")
    common(p)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    common(p)
    p.add_argument("--data", help="TSV to evaluate on (default: test, else dev)")

    p = sub.add_parser("predict", help="classify one text")
    common(p)
    p.add_argument("--text", required=True)
    p.add_argument("--checkpoint", help="checkpoint path (default: artifacts/model.ckpt)")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(args.config, args.overrides)
        if getattr(args, "input", None):
            cfg.train_tsv = Path(args.input)
        if args.command == "train-tokenizer":
            if args.kind:
                cfg.tokenizer["kind"] = args.kind
            if args.vocab_size:
                cfg.tokenizer["vocab_size"] = args.vocab_size
            return cmd_train_tokenizer(cfg, out=args.out)
        if args.command == "train-embed":
            return cmd_train_embed(cfg, args.kind, out=args.out, vocab_path=args.vocab)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.data)
        if args.command == "predict":
            return cmd_predict(cfg, args.checkpoint, args.text)
        parser.error(f"unknown command {args.command}")
    except ValidationError as e:
        print(f"error: validation: {e}", file=sys.stderr)
        return 1
    except DependencyError as e:
        print(f"error: dependency: {e}", file=sys.stderr)
        return 3
    except CheckpointError as e:
        print(f"error: checkpoint: {e}", file=sys.stderr)
        return 3
    except TrainingDiverged as e:
        print(f"error: diverged: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
