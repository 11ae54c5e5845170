"""Per-category binary code-comment classification.

A small transformer encoder trained from scratch, multi-level layer
aggregation over its top layers, an optional combined-corpus
post-training stage, a two-stage optimal-checkpoint fine-tuning
protocol, and the evaluation/scoring harness for the NLBSE'24 comment
classification task.
"""

__version__ = "0.1.0"

from .encoder import EncoderConfig, EncoderState, forward_all_layers, init_weights
from .heads import BaselineHead, HsumHead, baseline_forward, classify, hsum_forward, hsum_loss
from .model import Classifier, ClassifierConfig
from .tensor import Tensor, backward, cross_entropy_logits, gelu, layer_norm, matmul, softmax
from .tokenizer import Vocab, build_vocab, encode, pad_batch
from .training import TrainConfig, train_posttrain, train_stage1, train_stage2

__all__ = [
    "BaselineHead",
    "Classifier",
    "ClassifierConfig",
    "EncoderConfig",
    "EncoderState",
    "HsumHead",
    "Tensor",
    "TrainConfig",
    "Vocab",
    "backward",
    "baseline_forward",
    "build_vocab",
    "classify",
    "cross_entropy_logits",
    "encode",
    "forward_all_layers",
    "gelu",
    "hsum_forward",
    "hsum_loss",
    "init_weights",
    "layer_norm",
    "matmul",
    "pad_batch",
    "softmax",
    "train_posttrain",
    "train_stage1",
    "train_stage2",
]
