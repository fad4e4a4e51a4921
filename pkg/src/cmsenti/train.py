"""Supervised training loop with dev-set model selection and early stopping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import Checkpoint
from .corpus import LabeledExample, LabelSchema
from .embed.skipgram import word_vector
from .errors import ComponentHashError, TrainingDiverged, ValidationError
from .features import Components, FeatureSet, component_hashes, featurize
from .metrics import MetricsReport, compute_metrics
from .model import ModelConfig, ModelParams, init_params, make_batch, model_forward
from .numeric import AdamState, adam_step, backward, cross_entropy, tape
from .subword import encode as subword_encode

EVAL_BATCH_SIZE = 64


@dataclass
class TrainConfig:
    lr: float = 0.0005
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    seed: int = 13
    shuffle: bool = True
    class_weighting: bool = False
    grad_clip: Optional[float] = None
    # subword regularization: resample unigram segmentations of the training
    # texts each epoch (transformer input only; sentence features stay fixed)
    subword_sampling: bool = False

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        return self


def token_init_from_skipgram(components: Components, config: ModelConfig) -> Optional[np.ndarray]:
    """Seed the token embedding table from the skip-gram vectors.

    Only possible when the skip-gram dimensionality equals hid_dim;
    otherwise the table keeps its random init.
    """
    table = components.skipgram
    if table is None or table.dim != config.hid_dim:
        return None
    rows = np.stack([word_vector(table, piece) for piece in components.vocab.pieces])
    return rows.astype(np.float32)


def _predict_logits(
    feats: FeatureSet, params: ModelParams, config: ModelConfig
) -> np.ndarray:
    n = len(feats.ids)
    out = []
    for start in range(0, n, EVAL_BATCH_SIZE):
        sl = slice(start, min(start + EVAL_BATCH_SIZE, n))
        batch = make_batch(feats.ids[sl], feats.tfidf[sl], feats.ctx[sl])
        out.append(model_forward(batch, params, config, training=False).data)
    return np.concatenate(out, axis=0)


def _clip_gradients(params: ModelParams, max_norm: float) -> None:
    total = 0.0
    for t in params.tensors():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        factor = np.float32(max_norm / norm)
        for t in params.tensors():
            if t.grad is not None:
                t.grad = t.grad * factor


def train(
    train_data: Sequence[LabeledExample],
    dev_data: Sequence[LabeledExample],
    components: Components,
    schema: LabelSchema,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> Tuple[Checkpoint, List[dict]]:
    """Cross-entropy training with Adam; keeps the best-dev-weighted-F1 epoch.

    Per epoch: seeded shuffle, padded batches, forward, backward, Adam.
    Stops when the dev weighted F1 has not improved for ``patience`` epochs
    or at ``max_epochs``. Deterministic for fixed seed and inputs.
    """
    if not train_data:
        raise ValidationError("training set is empty")
    if not dev_data:
        raise ValidationError("dev set is empty")
    model_config.validate()
    train_config.validate()
    if train_config.subword_sampling and components.vocab.kind != "unigram":
        raise ValidationError(
            "subword_sampling needs a unigram vocabulary, got "
            f"{components.vocab.kind}"
        )

    train_feats = featurize(train_data, components, model_config, schema)
    dev_feats = featurize(dev_data, components, model_config, schema)

    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config, rng, token_init_from_skipgram(components, model_config))
    ordered = params.tensors()
    state = AdamState.for_params(ordered, lr=train_config.lr)

    example_weights = None
    if train_config.class_weighting:
        counts = np.bincount(train_feats.labels, minlength=model_config.n_classes)
        class_w = np.where(counts > 0, len(train_data) / np.maximum(counts, 1) / model_config.n_classes, 0.0)
        example_weights = class_w[train_feats.labels]

    n = len(train_data)
    history: List[dict] = []
    best_f1 = -1.0
    best_params: Optional[ModelParams] = None
    epochs_since_best = 0

    for epoch in range(1, train_config.max_epochs + 1):
        epoch_ids = train_feats.ids
        if train_config.subword_sampling:
            epoch_ids = [
                subword_encode(components.vocab, ex.text, sample=True, rng=rng).ids[
                    : model_config.max_len
                ]
                for ex in train_data
            ]
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        loss_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            batch = make_batch(
                [epoch_ids[i] for i in idx],
                train_feats.tfidf[idx],
                train_feats.ctx[idx],
                labels=train_feats.labels[idx],
            )
            with tape():
                logits = model_forward(batch, params, model_config, training=True, rng=rng)
                w = None if example_weights is None else example_weights[idx]
                loss = cross_entropy(logits, batch.labels, w)
                if not np.isfinite(loss.data):
                    raise TrainingDiverged(
                        f"loss became non-finite at epoch {epoch}, batch offset {start}"
                    )
                backward(loss)
            if train_config.grad_clip is not None:
                _clip_gradients(params, train_config.grad_clip)
            adam_step(ordered, state)
            loss_sum += float(loss.data) * len(idx)

        dev_logits = _predict_logits(dev_feats, params, model_config)
        dev_pred = np.argmax(dev_logits, axis=1)
        report = compute_metrics(dev_feats.labels, dev_pred, schema.labels)
        history.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / n,
                "dev_accuracy": report.accuracy,
                "dev_weighted_f1": report.weighted_f1,
            }
        )
        if report.weighted_f1 > best_f1:
            best_f1 = report.weighted_f1
            best_params = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= train_config.patience:
                break

    assert best_params is not None
    ckpt = Checkpoint(
        config=model_config,
        params=best_params,
        schema=schema,
        history=history,
        component_hashes=component_hashes(components),
        rng_state=_json_rng_state(rng),
    )
    return ckpt, history


def _json_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": {k: int(v) for k, v in state["state"].items()},
        "has_uint32": int(state.get("has_uint32", 0)),
        "uinteger": int(state.get("uinteger", 0)),
    }


def verify_components(ckpt: Checkpoint, components: Components) -> None:
    """Fail if the supplied components differ from the ones trained with."""
    current = component_hashes(components)
    for key, expected in ckpt.component_hashes.items():
        actual = current.get(key)
        if actual is None:
            raise ComponentHashError(f"checkpoint expects a {key} component, none supplied")
        if actual != expected:
            raise ComponentHashError(
                f"{key} component hash {actual[:12]}… does not match the one "
                f"this checkpoint was trained with ({expected[:12]}…)"
            )


def evaluate(
    ckpt: Checkpoint,
    data: Sequence[LabeledExample],
    components: Components,
) -> MetricsReport:
    """Inference-mode evaluation; argmax decision, ties to the lowest index."""
    if not data:
        raise ValidationError("evaluation set is empty")
    verify_components(ckpt, components)
    feats = featurize(data, components, ckpt.config, ckpt.schema)
    logits = _predict_logits(feats, ckpt.params, ckpt.config)
    preds = np.argmax(logits, axis=1)
    return compute_metrics(feats.labels, preds, ckpt.schema.labels)
