"""Classifier bundle: one encoder plus one classification head.

This is the unit that training loops optimize, checkpoints serialize,
and the evaluation harness runs. Parameter order is fixed by
``named_parameters`` and shared with the checkpoint format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import heads as heads_mod
from .encoder import EncoderConfig, EncoderState, forward_all_layers, init_weights
from .errors import ShapeError
from .heads import BaselineHead, HsumHead, baseline_forward, classify, hsum_forward, hsum_loss
from .tensor import Tensor, cross_entropy_logits
from .tokenizer import Vocab, encode, pad_batch

HEAD_HSUM = "hsum"
HEAD_BASELINE = "baseline"


@dataclass(frozen=True)
class ClassifierConfig:
    encoder: EncoderConfig
    head_kind: str = HEAD_HSUM
    hsum_k: int = 4

    def __post_init__(self) -> None:
        if self.head_kind not in (HEAD_HSUM, HEAD_BASELINE):
            raise ValueError(f"unknown head kind {self.head_kind!r}")

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "head_kind": self.head_kind, "hsum_k": self.hsum_k}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        return cls(encoder=EncoderConfig(**d["encoder"]), head_kind=d["head_kind"], hsum_k=d["hsum_k"])


@dataclass
class Classifier:
    config: ClassifierConfig
    encoder: EncoderState
    head: HsumHead | BaselineHead

    @classmethod
    def build(cls, config: ClassifierConfig, dtype=np.float32) -> "Classifier":
        encoder = init_weights(config.encoder, dtype=dtype)
        if config.head_kind == HEAD_HSUM:
            head = heads_mod.init_hsum_head(config.encoder, k=config.hsum_k, dtype=dtype)
        else:
            head = heads_mod.init_baseline_head(config.encoder, dtype=dtype)
        return cls(config=config, encoder=encoder, head=head)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.encoder.named_parameters() + self.head.named_parameters()

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy values in; raises ShapeError naming the first mismatched parameter."""
        for name, t in self.named_parameters():
            if name not in arrays:
                raise ShapeError(f"missing parameter {name!r}")
            src = arrays[name]
            if tuple(src.shape) != t.shape:
                raise ShapeError(
                    f"parameter {name!r} has shape {tuple(src.shape)}, expected {t.shape}"
                )
            t.data = np.asarray(src, dtype=t.data.dtype).copy()
            t.grad = None

    def clone(self) -> "Classifier":
        fresh = Classifier.build(self.config, dtype=self.encoder.tok_emb.data.dtype)
        fresh.load_state_arrays({name: t.data for name, t in self.named_parameters()})
        if isinstance(self.head, HsumHead):
            fresh.head.identity_blocks = self.head.identity_blocks
        return fresh

    def forward_logits(
        self, ids: Tensor, mask: Tensor, train_mode: bool = False, step: int = 0
    ) -> tuple[Tensor, list[Tensor] | None]:
        """Final [B, 2] logits plus per-level logits when the head aggregates."""
        hiddens = forward_all_layers(self.encoder, ids, mask, train_mode=train_mode, step=step)
        if isinstance(self.head, HsumHead):
            aggregated = hsum_forward(self.head, hiddens, mask, train_mode=train_mode, step=step)
            per_level, final = classify(self.head, aggregated)
            return final, per_level
        return baseline_forward(self.head, hiddens, mask), None

    def loss(self, ids: Tensor, mask: Tensor, labels, step: int = 0) -> Tensor:
        final, per_level = self.forward_logits(ids, mask, train_mode=True, step=step)
        if per_level is not None:
            return hsum_loss(per_level, labels)
        return cross_entropy_logits(final, labels)


def predict_labels(
    model: Classifier, vocab: Vocab, texts: list[str], batch_size: int = 64
) -> np.ndarray:
    """Inference labels for raw input strings (tokenize, forward, argmax)."""
    max_len = model.config.encoder.max_len
    out = np.zeros(len(texts), dtype=np.int64)
    for start in range(0, len(texts), batch_size):
        chunk = texts[start : start + batch_size]
        ids, mask = pad_batch([encode(t, vocab, max_len) for t in chunk])
        logits, _ = model.forward_logits(ids, mask, train_mode=False)
        out[start : start + len(chunk)] = heads_mod.predict_from_logits(logits)
    return out
