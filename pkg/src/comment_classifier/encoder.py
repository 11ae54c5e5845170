"""Small pre-norm transformer encoder exposing every layer's hidden states.

The forward pass returns L+1 states: index 0 is the embedding output
(token + learned position), index i is layer i's output. The top entry
has the final layer norm applied. Downstream heads aggregate the top-k
entries of this list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor, dropout, embedding, gelu, layer_norm, matmul, parameter, softmax

INIT_STD = 0.02
MASKED_SCORE = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 128
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 1 or self.d_model < 1 or self.n_layers < 1 or self.d_ff < 1:
            raise ConfigError("vocab_size, d_model, n_layers, and d_ff must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be >= 2, got {self.max_len}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "d_model": self.d_model,
            "n_layers": self.n_layers, "n_heads": self.n_heads, "d_ff": self.d_ff,
            "max_len": self.max_len, "dropout_rate": self.dropout_rate, "seed": self.seed,
        }


@dataclass
class LayerParams:
    """One pre-norm block: self-attention then feed-forward, each behind a norm."""

    ln1_g: Tensor
    ln1_b: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    _ORDER = ("ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
              "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{name}", getattr(self, name)) for name in self._ORDER]


@dataclass
class EncoderState:
    config: EncoderConfig
    tok_emb: Tensor
    pos_emb: Tensor
    layers: list[LayerParams]
    ln_f_g: Tensor
    ln_f_b: Tensor

    def named_parameters(self, prefix: str = "encoder") -> list[tuple[str, Tensor]]:
        named = [(f"{prefix}.tok_emb", self.tok_emb), (f"{prefix}.pos_emb", self.pos_emb)]
        for i, layer in enumerate(self.layers):
            named.extend(layer.named_parameters(f"{prefix}.layer{i}"))
        named.extend([(f"{prefix}.ln_f_g", self.ln_f_g), (f"{prefix}.ln_f_b", self.ln_f_b)])
        return named


def init_layer(rng: np.random.Generator, d_model: int, d_ff: int, dtype=np.float32) -> LayerParams:
    def w(rows, cols):
        return parameter(rng.normal(0.0, INIT_STD, size=(rows, cols)), dtype=dtype)

    def zeros(n):
        return parameter(np.zeros(n), dtype=dtype)

    def ones(n):
        return parameter(np.ones(n), dtype=dtype)

    return LayerParams(
        ln1_g=ones(d_model), ln1_b=zeros(d_model),
        wq=w(d_model, d_model), bq=zeros(d_model),
        wk=w(d_model, d_model), bk=zeros(d_model),
        wv=w(d_model, d_model), bv=zeros(d_model),
        wo=w(d_model, d_model), bo=zeros(d_model),
        ln2_g=ones(d_model), ln2_b=zeros(d_model),
        w1=w(d_model, d_ff), b1=zeros(d_ff),
        w2=w(d_ff, d_model), b2=zeros(d_model),
    )


def init_weights(config: EncoderConfig, dtype=np.float32) -> EncoderState:
    """Deterministic for a fixed seed: weights ~ N(0, 0.02^2), biases 0, norms 1/0."""
    rng = np.random.default_rng(config.seed)
    tok = parameter(rng.normal(0.0, INIT_STD, size=(config.vocab_size, config.d_model)), dtype=dtype)
    pos = parameter(rng.normal(0.0, INIT_STD, size=(config.max_len, config.d_model)), dtype=dtype)
    layers = [init_layer(rng, config.d_model, config.d_ff, dtype) for _ in range(config.n_layers)]
    return EncoderState(
        config=config, tok_emb=tok, pos_emb=pos, layers=layers,
        ln_f_g=parameter(np.ones(config.d_model), dtype=dtype),
        ln_f_b=parameter(np.zeros(config.d_model), dtype=dtype),
    )


def count_parameters(state: EncoderState) -> int:
    return sum(t.data.size for _, t in state.named_parameters())


def attention_mask_bias(mask: Tensor, dtype=np.float32) -> Tensor:
    """[B, T] 0/1 mask -> [B, 1, 1, T] additive bias pushing PAD keys to -1e9."""
    b, t = mask.shape
    bias = ((1.0 - mask.data) * MASKED_SCORE).reshape(b, 1, 1, t)
    return Tensor(bias.astype(dtype, copy=False))


def layer_forward(
    p: LayerParams,
    h: Tensor,
    mask_bias: Tensor,
    n_heads: int,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    attn_probs: list[np.ndarray] | None = None,
) -> Tensor:
    """One pre-norm block. Dropout fires only when ``rng`` is given."""
    b, t, d = h.shape
    hd = d // n_heads

    def split_heads(x: Tensor) -> Tensor:
        return x.reshape((b, t, n_heads, hd)).transpose((0, 2, 1, 3))

    a = layer_norm(h, p.ln1_g, p.ln1_b)
    q = split_heads(matmul(a, p.wq) + p.bq)
    k = split_heads(matmul(a, p.wk) + p.bk)
    v = split_heads(matmul(a, p.wv) + p.bv)
    scores = matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(hd)) + mask_bias
    probs = softmax(scores, axis=-1)
    if attn_probs is not None:
        attn_probs.append(probs.data)
    ctx = matmul(probs, v).transpose((0, 2, 1, 3)).reshape((b, t, d))
    out = matmul(ctx, p.wo) + p.bo
    if rng is not None:
        out = dropout(out, dropout_rate, rng)
    h = h + out

    f = layer_norm(h, p.ln2_g, p.ln2_b)
    f = matmul(gelu(matmul(f, p.w1) + p.b1), p.w2) + p.b2
    if rng is not None:
        f = dropout(f, dropout_rate, rng)
    return h + f


def forward_all_layers(
    state: EncoderState,
    ids: Tensor,
    mask: Tensor,
    train_mode: bool = False,
    step: int = 0,
    attn_probs: list[np.ndarray] | None = None,
) -> list[Tensor]:
    """Hidden states H(0)..H(L), each [B, T, d].

    PAD key positions are pushed to a -1e9 attention score before the
    softmax. Dropout is active only in train mode, seeded per step from
    (config seed, step) so repeated runs are reproducible.
    """
    cfg = state.config
    b, t = ids.shape
    if t > cfg.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    id_arr = ids.data.astype(np.int64)
    if id_arr.size and id_arr.max() >= cfg.vocab_size:
        raise ValueError(f"token id {id_arr.max()} out of range for vocab size {cfg.vocab_size}")

    rng = np.random.default_rng([cfg.seed, step, 0]) if train_mode else None
    h = embedding(state.tok_emb, id_arr) + embedding(state.pos_emb, np.arange(t))
    if rng is not None:
        h = dropout(h, cfg.dropout_rate, rng)

    bias = attention_mask_bias(mask, dtype=state.tok_emb.data.dtype)
    hiddens = [h]
    for layer in state.layers:
        h = layer_forward(layer, h, bias, cfg.n_heads, cfg.dropout_rate, rng, attn_probs)
        hiddens.append(h)
    hiddens[-1] = layer_norm(hiddens[-1], state.ln_f_g, state.ln_f_b)
    return hiddens
