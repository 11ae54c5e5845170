"""Classification heads over encoder hidden states.

``HsumHead`` hierarchically aggregates the top-k layers: the running
aggregate is summed elementwise with the next layer down and passed
through a fresh transformer block, one block per level, with a linear
classifier per level. Training averages the per-level losses (deep
supervision); inference averages the per-level logits.

``BaselineHead`` is the single-linear-layer alternative used to ablate
layer aggregation: it reads only the top layer's CLS state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderConfig, LayerParams, attention_mask_bias, init_layer, layer_forward
from .errors import ConfigError
from .tensor import Tensor, cross_entropy_logits, matmul, parameter, select

CLS_POSITION = 0


@dataclass
class HsumHead:
    config: EncoderConfig
    k: int
    blocks: list[LayerParams]
    head_ws: list[Tensor]
    head_bs: list[Tensor]
    # Test hook: skip the per-level blocks so aggregation reduces to prefix sums.
    identity_blocks: bool = False

    def named_parameters(self, prefix: str = "head") -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for i, block in enumerate(self.blocks):
            named.extend(block.named_parameters(f"{prefix}.block{i}"))
        for i, (w, b) in enumerate(zip(self.head_ws, self.head_bs)):
            named.extend([(f"{prefix}.cls{i}_w", w), (f"{prefix}.cls{i}_b", b)])
        return named


@dataclass
class BaselineHead:
    config: EncoderConfig
    w: Tensor
    b: Tensor

    def named_parameters(self, prefix: str = "head") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.cls_w", self.w), (f"{prefix}.cls_b", self.b)]


def init_hsum_head(config: EncoderConfig, k: int = 4, dtype=np.float32) -> HsumHead:
    if k < 1:
        raise ConfigError(f"aggregation depth k must be >= 1, got {k}")
    if k > config.n_layers:
        raise ConfigError(f"aggregation depth k={k} exceeds encoder layers L={config.n_layers}")
    rng = np.random.default_rng([config.seed, 1])
    blocks = [init_layer(rng, config.d_model, config.d_ff, dtype) for _ in range(k)]
    head_ws = [parameter(rng.normal(0.0, 0.02, size=(config.d_model, 2)), dtype=dtype) for _ in range(k)]
    head_bs = [parameter(np.zeros(2), dtype=dtype) for _ in range(k)]
    return HsumHead(config=config, k=k, blocks=blocks, head_ws=head_ws, head_bs=head_bs)


def init_baseline_head(config: EncoderConfig, dtype=np.float32) -> BaselineHead:
    rng = np.random.default_rng([config.seed, 1])
    w = parameter(rng.normal(0.0, 0.02, size=(config.d_model, 2)), dtype=dtype)
    return BaselineHead(config=config, w=w, b=parameter(np.zeros(2), dtype=dtype))


def hsum_forward(
    head: HsumHead,
    hiddens: list[Tensor],
    mask: Tensor,
    train_mode: bool = False,
    step: int = 0,
) -> list[Tensor]:
    """Aggregated states A1..Ak from the top-k hidden states.

    A1 = Block1(H(L)); Ai = Blocki(A(i-1) + H(L-i+1)). H(0), the raw
    embedding output, is never consumed.
    """
    n_layers = len(hiddens) - 1
    if head.k > n_layers:
        raise ConfigError(f"aggregation depth k={head.k} exceeds encoder layers L={n_layers}")
    cfg = head.config
    rng = np.random.default_rng([cfg.seed, step, 1]) if train_mode else None
    bias = attention_mask_bias(mask, dtype=hiddens[-1].data.dtype)

    def apply_block(block: LayerParams, x: Tensor) -> Tensor:
        if head.identity_blocks:
            return x
        return layer_forward(block, x, bias, cfg.n_heads, cfg.dropout_rate, rng)

    aggregated = [apply_block(head.blocks[0], hiddens[n_layers])]
    for i in range(2, head.k + 1):
        summed = aggregated[-1] + hiddens[n_layers - i + 1]
        aggregated.append(apply_block(head.blocks[i - 1], summed))
    return aggregated


def classify(head: HsumHead, aggregated: list[Tensor]) -> tuple[list[Tensor], Tensor]:
    """Per-level logits at the CLS position plus their mean as final logits."""
    per_level = []
    for a, w, b in zip(aggregated, head.head_ws, head.head_bs):
        cls_state = select(a, CLS_POSITION, axis=1)
        per_level.append(matmul(cls_state, w) + b)
    total = per_level[0]
    for logits in per_level[1:]:
        total = total + logits
    return per_level, total * (1.0 / len(per_level))


def hsum_loss(per_level_logits: list[Tensor], labels) -> Tensor:
    """Mean over levels of the per-level cross entropy."""
    total = cross_entropy_logits(per_level_logits[0], labels)
    for logits in per_level_logits[1:]:
        total = total + cross_entropy_logits(logits, labels)
    return total * (1.0 / len(per_level_logits))


def baseline_forward(head: BaselineHead, hiddens: list[Tensor], mask: Tensor) -> Tensor:
    """Linear head on the top layer's CLS state."""
    cls_state = select(hiddens[-1], CLS_POSITION, axis=1)
    return matmul(cls_state, head.w) + head.b


def predict_from_logits(logits: Tensor) -> np.ndarray:
    """Argmax labels; exact ties resolve to label 0."""
    return np.argmax(logits.data, axis=1).astype(np.int64)
