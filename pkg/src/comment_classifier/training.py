"""Training regimes: combined-corpus post-training and the per-category
two-stage protocol.

Stage 1 trains on the category's train split and records validation F1
every ``eval_every_steps``; the best step (ties to the earliest) is the
optimal step. Stage 2 restarts from the same initial parameters, trains
on train plus validation, and stops after exactly
optimal_step + extra_steps optimizer steps.

Batch order is a seeded shuffle per epoch with the last partial batch
kept, so a fixed seed reproduces runs bit for bit on one platform.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import CategoryDataset, CommentExample, build_input_finetune
from .evaluation import category_metrics, confusion_counts
from .model import Classifier, predict_labels
from .optim import Adam
from .tensor import backward
from .tokenizer import Vocab, encode, pad_batch

# Shipped defaults; desk-scale runs shrink these through the config file.
POSTTRAIN_LR = 2e-5
POSTTRAIN_BATCH_SIZE = 64
POSTTRAIN_EPOCHS = 10
POSTTRAIN_EVAL_EVERY = 500
FINETUNE_LR = 1e-5
FINETUNE_BATCH_SIZE = 64
FINETUNE_EVAL_EVERY = 50
FINETUNE_EXTRA_STEPS = 100
FINETUNE_EPOCHS = {"java": 10, "python": 20, "pharo": 20}
FINETUNE_EPOCHS_DEFAULT = 20


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    eval_every_steps: int
    extra_steps: int = FINETUNE_EXTRA_STEPS
    seed: int = 0
    hsum_enabled: bool = True
    posttrain_enabled: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, and epochs must be positive")
        if self.eval_every_steps < 1 or self.extra_steps < 0:
            raise ValueError("eval_every_steps must be >= 1 and extra_steps >= 0")


def posttrain_defaults(seed: int = 0, **overrides) -> TrainConfig:
    base = dict(learning_rate=POSTTRAIN_LR, batch_size=POSTTRAIN_BATCH_SIZE,
                epochs=POSTTRAIN_EPOCHS, eval_every_steps=POSTTRAIN_EVAL_EVERY, seed=seed)
    base.update(overrides)
    return TrainConfig(**base)


def finetune_defaults(language: str, seed: int = 0, **overrides) -> TrainConfig:
    base = dict(learning_rate=FINETUNE_LR, batch_size=FINETUNE_BATCH_SIZE,
                epochs=FINETUNE_EPOCHS.get(language, FINETUNE_EPOCHS_DEFAULT),
                eval_every_steps=FINETUNE_EVAL_EVERY, extra_steps=FINETUNE_EXTRA_STEPS,
                seed=seed)
    base.update(overrides)
    return TrainConfig(**base)


def train_config_hash(cfg: TrainConfig, model_config: dict) -> str:
    payload = json.dumps({"train": asdict(cfg), "model": model_config}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class CheckpointRecord:
    step: int
    validation_f1: float
    config_hash: str
    snapshot: dict[str, np.ndarray] | None = None


@dataclass
class TrainResult:
    model: Classifier
    records: list[CheckpointRecord] = field(default_factory=list)
    steps_executed: int = 0

    @property
    def optimal_step(self) -> int:
        return select_optimal_step(self.records)


def select_optimal_step(records: Sequence[CheckpointRecord]) -> int:
    """Step with the highest validation F1; ties resolve to the earliest step."""
    if not records:
        raise ValueError("no evaluation records to select from")
    best = records[0]
    for rec in records[1:]:
        if rec.validation_f1 > best.validation_f1:
            best = rec
    return best.step


def _run_epochs(
    model: Classifier,
    texts: list[str],
    labels: np.ndarray,
    cfg: TrainConfig,
    vocab: Vocab,
    max_steps: int | None = None,
    eval_fn: Callable[[Classifier], float] | None = None,
    keep_best: bool = False,
    batch_hook: Callable[[list[str]], None] | None = None,
) -> TrainResult:
    """Core loop shared by both regimes.

    With ``max_steps`` set, epochs cycle until the step budget is spent
    and ``cfg.epochs`` is ignored. With ``eval_fn`` set, an evaluation
    fires every ``cfg.eval_every_steps`` steps; if training ends before
    the first one, a single evaluation is forced at the last step so an
    optimal step is always defined.
    """
    max_len = model.config.encoder.max_len
    encoded = [encode(t, vocab, max_len) for t in texts]
    config_hash = train_config_hash(cfg, model.config.to_dict())
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    order_rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model=model)
    best: CheckpointRecord | None = None
    step = 0

    def evaluate_now() -> None:
        nonlocal best
        f1 = eval_fn(model)
        record = CheckpointRecord(step=step, validation_f1=f1, config_hash=config_hash)
        result.records.append(record)
        if keep_best and (best is None or f1 > best.validation_f1):
            record.snapshot = model.state_arrays()
            if best is not None:
                best.snapshot = None
            best = record

    epochs = itertools.count() if max_steps is not None else range(cfg.epochs)
    done = False
    for _ in epochs:
        order = order_rng.permutation(len(texts))
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            if batch_hook is not None:
                batch_hook([texts[i] for i in batch_idx])
            ids, mask = pad_batch([encoded[i] for i in batch_idx])
            loss = model.loss(ids, mask, labels[batch_idx], step=step)
            opt.zero_grad()
            backward(loss)
            opt.step()
            step += 1
            if eval_fn is not None and step % cfg.eval_every_steps == 0:
                evaluate_now()
            if max_steps is not None and step >= max_steps:
                done = True
                break
        if done:
            break
    if eval_fn is not None and not result.records and step > 0:
        evaluate_now()
    result.steps_executed = step
    if keep_best and best is not None and best.snapshot is not None:
        model.load_state_arrays(best.snapshot)
    return result


def _make_eval_fn(
    validation_texts: list[str], validation_labels: np.ndarray, vocab: Vocab, batch_size: int
) -> Callable[[Classifier], float]:
    def eval_fn(model: Classifier) -> float:
        preds = predict_labels(model, vocab, validation_texts, batch_size=batch_size)
        _, _, f1 = category_metrics(confusion_counts(preds, validation_labels))
        return f1

    return eval_fn


def train_posttrain(
    corpus: Sequence[tuple[str, int]],
    model: Classifier,
    cfg: TrainConfig,
    validation: Sequence[tuple[str, int]],
    vocab: Vocab,
    batch_hook: Callable[[list[str]], None] | None = None,
) -> TrainResult:
    """Binary training over category-conditioned inputs from all languages.

    Returns the parameters of the highest pooled-validation-F1
    checkpoint (earliest on ties), restored into the returned model.
    """
    if not corpus:
        raise ValueError("post-training requires a non-empty corpus")
    if not validation:
        raise ValueError("post-training requires a pooled validation set")
    model = model.clone()
    texts = [t for t, _ in corpus]
    labels = np.array([y for _, y in corpus], dtype=np.int64)
    eval_fn = _make_eval_fn([t for t, _ in validation],
                            np.array([y for _, y in validation], dtype=np.int64),
                            vocab, cfg.batch_size)
    return _run_epochs(model, texts, labels, cfg, vocab,
                       eval_fn=eval_fn, keep_best=True, batch_hook=batch_hook)


def train_stage1(
    dataset: CategoryDataset,
    init_params: Classifier,
    cfg: TrainConfig,
    vocab: Vocab,
    batch_hook: Callable[[list[str]], None] | None = None,
) -> TrainResult:
    """Find the optimal step: train on the train split, track validation F1."""
    if not dataset.validation:
        raise ValueError(f"{dataset.language}/{dataset.category}: empty validation split")
    model = init_params.clone()
    texts = [build_input_finetune(ex.class_name, ex.sentence) for ex in dataset.train]
    labels = np.array([ex.label for ex in dataset.train], dtype=np.int64)
    val_texts = [build_input_finetune(ex.class_name, ex.sentence) for ex in dataset.validation]
    val_labels = np.array([ex.label for ex in dataset.validation], dtype=np.int64)
    eval_fn = _make_eval_fn(val_texts, val_labels, vocab, cfg.batch_size)
    return _run_epochs(model, texts, labels, cfg, vocab,
                       eval_fn=eval_fn, keep_best=False, batch_hook=batch_hook)


def train_stage2(
    dataset: CategoryDataset,
    init_params: Classifier,
    cfg: TrainConfig,
    optimal_step: int,
    vocab: Vocab,
    batch_hook: Callable[[list[str]], None] | None = None,
) -> TrainResult:
    """Retrain from the same initial parameters on train + validation and
    stop after exactly optimal_step + extra_steps optimizer steps."""
    if optimal_step <= 0:
        raise ValueError(f"optimal_step must be positive, got {optimal_step}")
    model = init_params.clone()
    full_train = list(dataset.train) + list(dataset.validation)
    texts = [build_input_finetune(ex.class_name, ex.sentence) for ex in full_train]
    labels = np.array([ex.label for ex in full_train], dtype=np.int64)
    return _run_epochs(model, texts, labels, cfg, vocab,
                       max_steps=optimal_step + cfg.extra_steps, batch_hook=batch_hook)


def evaluate_on_validation(
    model: Classifier, vocab: Vocab, examples: Sequence[CommentExample], batch_size: int = 64
) -> tuple[float, float, float]:
    """Inference-mode (precision, recall, f1) on labeled examples."""
    texts = [build_input_finetune(ex.class_name, ex.sentence) for ex in examples]
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    preds = predict_labels(model, vocab, texts, batch_size=batch_size)
    return category_metrics(confusion_counts(preds, labels))
