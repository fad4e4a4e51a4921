"""Code-mixed sentiment classification toolkit.

Pipeline: TSV corpus -> subword tokenizer (BPE or unigram LM) -> three
text representations (skip-gram piece vectors, a bidirectional recurrent
sentence encoder, TF-IDF) -> transformer encoder -> GRU pooling -> fused
meta-embedding classifier over five sentiment labels.
"""

from . import corpus, embed, features, metrics, model, numeric, subword, train
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import DatasetSplit, LabeledExample, LabelSchema, load_tsv, normalize_text, split
from .features import Components, featurize
from .metrics import MetricsReport, compute_metrics, weighted_f1
from .model import ModelConfig, ModelParams, PaddedBatch, init_params, model_forward
from .subword import SubwordVocab, TokenSequence, decode, encode, train_bpe, train_unigram
from .train import TrainConfig, evaluate
from .train import train as train_classifier

__version__ = "0.1.0"

__all__ = [
    "corpus",
    "subword",
    "numeric",
    "embed",
    "model",
    "train",
    "metrics",
    "features",
    "LabeledExample",
    "LabelSchema",
    "DatasetSplit",
    "load_tsv",
    "normalize_text",
    "split",
    "SubwordVocab",
    "TokenSequence",
    "train_bpe",
    "train_unigram",
    "encode",
    "decode",
    "ModelConfig",
    "ModelParams",
    "PaddedBatch",
    "init_params",
    "model_forward",
    "TrainConfig",
    "train_classifier",
    "evaluate",
    "MetricsReport",
    "compute_metrics",
    "weighted_f1",
    "Components",
    "featurize",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "__version__",
]
