"""NLBSE'24-style dataset ingestion, input construction, and splitting.

One CSV per (language, category). Column names are configurable through
``ColumnMap`` because the schema lives in the competition repository,
not in any fixed standard; the defaults match that repository's files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError
from .tokenizer import SEP_TEXT

PARTITION_TRAIN = "train"
PARTITION_TEST = "test"

_PARTITION_ALIASES = {
    "train": PARTITION_TRAIN, "0": PARTITION_TRAIN,
    "test": PARTITION_TEST, "1": PARTITION_TEST,
}


@dataclass(frozen=True)
class CommentExample:
    language: str
    category: str
    class_name: str
    sentence: str
    label: int
    partition: str


@dataclass(frozen=True)
class ColumnMap:
    class_name: str = "class"
    sentence: str = "comment_sentence"
    partition: str = "partition"
    label: str = "instance_type"


DEFAULT_COLUMNS = ColumnMap()


@dataclass
class CategoryDataset:
    language: str
    category: str
    train: list[CommentExample] = field(default_factory=list)
    validation: list[CommentExample] = field(default_factory=list)
    test: list[CommentExample] = field(default_factory=list)


def load_category_csv(
    path: str | Path,
    column_map: ColumnMap = DEFAULT_COLUMNS,
    language: str | None = None,
    category: str | None = None,
) -> list[CommentExample]:
    """Parse one category file (RFC-4180; quoted fields may span lines).

    ``language`` and ``category`` default to the parent directory name
    and the file stem, matching the layout <data_root>/<language>/<category>.csv.
    """
    path = Path(path)
    language = language if language is not None else path.parent.name
    category = category if category is not None else path.stem
    examples: list[CommentExample] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (column_map.class_name, column_map.sentence, column_map.partition, column_map.label):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        for row in reader:
            line = reader.line_num
            raw_label = (row[column_map.label] or "").strip()
            if raw_label not in ("0", "1"):
                raise ValueError(f"{path}: line {line}: label must be 0 or 1, got {raw_label!r}")
            raw_partition = (row[column_map.partition] or "").strip().lower()
            if raw_partition not in _PARTITION_ALIASES:
                raise ValueError(
                    f"{path}: line {line}: partition must be train/test (or 0/1), got {raw_partition!r}"
                )
            examples.append(
                CommentExample(
                    language=language,
                    category=category,
                    class_name=row[column_map.class_name] or "",
                    sentence=row[column_map.sentence] or "",
                    label=int(raw_label),
                    partition=_PARTITION_ALIASES[raw_partition],
                )
            )
    return examples


def write_examples_csv(
    examples: Iterable[CommentExample], path: str | Path, column_map: ColumnMap = DEFAULT_COLUMNS
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([column_map.class_name, column_map.sentence, column_map.partition, column_map.label])
        for ex in examples:
            writer.writerow([ex.class_name, ex.sentence, ex.partition, ex.label])


def build_input_finetune(class_name: str, sentence: str) -> str:
    """Class name, separator, sentence; the separator renders as the SEP token."""
    return f"{class_name} {SEP_TEXT} {sentence}"


def build_input_posttrain(category: str, sentence: str) -> str:
    """Lower-cased category, separator, sentence.

    Lower-casing keeps a category shared across languages as one prefix
    token, which is what lets the combined-corpus stage transfer.
    """
    if not category:
        raise ValueError("post-training inputs require a non-empty category")
    return f"{category.lower()} {SEP_TEXT} {sentence}"


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(
    examples: Sequence[CommentExample], val_fraction: float = 0.1, seed: int = 0
) -> tuple[list[CommentExample], list[CommentExample]]:
    """Per label value, move round(val_fraction * n) examples to validation.

    Rounding is half away from zero; membership comes from a seeded
    shuffle within each label class, so a fixed seed fixes the split.
    Output lists preserve the input ordering.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    val_indices: set[int] = set()
    for label in sorted({ex.label for ex in examples}):
        indices = [i for i, ex in enumerate(examples) if ex.label == label]
        n_val = _round_half_away(val_fraction * len(indices))
        order = rng.permutation(len(indices))
        val_indices.update(indices[j] for j in order[:n_val])
    train = [ex for i, ex in enumerate(examples) if i not in val_indices]
    validation = [ex for i, ex in enumerate(examples) if i in val_indices]
    return train, validation


def build_category_dataset(
    examples: Sequence[CommentExample],
    language: str,
    category: str,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> CategoryDataset:
    """Split the original train partition into train/validation; test stays as is."""
    original_train = [ex for ex in examples if ex.partition == PARTITION_TRAIN]
    test = [ex for ex in examples if ex.partition == PARTITION_TEST]
    train, validation = stratified_split(original_train, val_fraction=val_fraction, seed=seed)
    return CategoryDataset(language=language, category=category, train=train,
                           validation=validation, test=test)


def build_posttrain_corpus(
    all_datasets: Sequence[CategoryDataset], seed: int = 0
) -> list[tuple[str, int]]:
    """Union of every category's train split, in post-train input form, shuffled."""
    entries = [
        (build_input_posttrain(ds.category, ex.sentence), ex.label)
        for ds in all_datasets
        for ex in ds.train
    ]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(entries))
    return [entries[i] for i in order]


def build_posttrain_validation(all_datasets: Sequence[CategoryDataset]) -> list[tuple[str, int]]:
    """Pooled validation pairs across all categories, in post-train input form."""
    return [
        (build_input_posttrain(ds.category, ex.sentence), ex.label)
        for ds in all_datasets
        for ex in ds.validation
    ]


def discover_categories(data_root: str | Path) -> list[tuple[str, str, Path]]:
    """(language, category, path) triples for every <root>/<language>/<category>.csv."""
    root = Path(data_root)
    found = []
    for path in sorted(root.glob("*/*.csv")):
        found.append((path.parent.name, path.stem, path))
    return found
