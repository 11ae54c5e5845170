"""End-to-end orchestration: vocabulary, post-training, per-category
two-stage training, evaluation, and artifact layout under a work dir.

Artifacts:
    <work_dir>/vocab.txt                         frozen vocabulary
    <work_dir>/checkpoints/posttrain.ckpt        shared post-trained backbone
    <work_dir>/checkpoints/<lang>_<cat>_step<N>.ckpt   final per-category model
    <work_dir>/manifests/<lang>_<cat>.json       run manifest (seed, hashes, steps)
    <work_dir>/splits/                           materialized split CSVs
    <work_dir>/reports/                          metrics.csv, summary.json, report.txt
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import data as data_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderConfig
from .errors import ConfigError
from .evaluation import (CategoryResult, MetricsReport, build_report, category_metrics,
                         confusion_counts, measure_runtime, render_report, report_to_csv)
from .model import Classifier, ClassifierConfig, HEAD_BASELINE, HEAD_HSUM, predict_labels
from .tokenizer import Vocab, build_vocab
from .training import (TrainConfig, select_optimal_step, train_posttrain,
                       train_stage1, train_stage2)


class PipelineError(RuntimeError):
    """A pipeline step could not produce its artifacts."""


@dataclass(frozen=True)
class PipelineConfig:
    data_root: str = "data"
    work_dir: str = "workdir"
    seed: int = 0
    val_fraction: float = 0.1
    posttrain_enabled: bool = True
    hsum_enabled: bool = True
    hsum_k: int = 4
    vocab_max_size: int = 8192
    max_avg_runtime: float = 0.0
    runtime_repetitions: int = 3
    # encoder
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 128
    dropout_rate: float = 0.1
    # post-training stage
    posttrain_learning_rate: float = 2e-5
    posttrain_batch_size: int = 64
    posttrain_epochs: int = 10
    posttrain_eval_every_steps: int = 500
    # per-category fine-tuning stage
    finetune_learning_rate: float = 1e-5
    finetune_batch_size: int = 64
    finetune_eval_every_steps: int = 50
    finetune_extra_steps: int = 100
    finetune_epochs_java: int = 10
    finetune_epochs_python: int = 20
    finetune_epochs_pharo: int = 20
    finetune_epochs_default: int = 20

    def finetune_epochs(self, language: str) -> int:
        return {
            "java": self.finetune_epochs_java,
            "python": self.finetune_epochs_python,
            "pharo": self.finetune_epochs_pharo,
        }.get(language, self.finetune_epochs_default)

    def posttrain_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.posttrain_learning_rate,
            batch_size=self.posttrain_batch_size,
            epochs=self.posttrain_epochs,
            eval_every_steps=self.posttrain_eval_every_steps,
            extra_steps=self.finetune_extra_steps,
            seed=self.seed,
            hsum_enabled=self.hsum_enabled,
            posttrain_enabled=self.posttrain_enabled,
        )

    def finetune_config(self, language: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.finetune_learning_rate,
            batch_size=self.finetune_batch_size,
            epochs=self.finetune_epochs(language),
            eval_every_steps=self.finetune_eval_every_steps,
            extra_steps=self.finetune_extra_steps,
            seed=self.seed,
            hsum_enabled=self.hsum_enabled,
            posttrain_enabled=self.posttrain_enabled,
        )

    def config_hash(self) -> str:
        """Hash of everything that shapes results; paths and runtime
        measurement settings are excluded so relocated runs compare equal."""
        skip = {"data_root", "work_dir", "runtime_repetitions", "max_avg_runtime"}
        payload = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


# Config file keys (dotted) -> PipelineConfig field names.
_CONFIG_KEYS = {
    "data_root": "data_root",
    "work_dir": "work_dir",
    "seed": "seed",
    "val_fraction": "val_fraction",
    "posttrain_enabled": "posttrain_enabled",
    "hsum_enabled": "hsum_enabled",
    "hsum_k": "hsum_k",
    "vocab_max_size": "vocab_max_size",
    "max_avg_runtime": "max_avg_runtime",
    "runtime_repetitions": "runtime_repetitions",
    "encoder.d_model": "d_model",
    "encoder.n_layers": "n_layers",
    "encoder.n_heads": "n_heads",
    "encoder.d_ff": "d_ff",
    "encoder.max_len": "max_len",
    "encoder.dropout_rate": "dropout_rate",
    "posttrain.learning_rate": "posttrain_learning_rate",
    "posttrain.batch_size": "posttrain_batch_size",
    "posttrain.epochs": "posttrain_epochs",
    "posttrain.eval_every_steps": "posttrain_eval_every_steps",
    "finetune.learning_rate": "finetune_learning_rate",
    "finetune.batch_size": "finetune_batch_size",
    "finetune.eval_every_steps": "finetune_eval_every_steps",
    "finetune.extra_steps": "finetune_extra_steps",
    "finetune.epochs.java": "finetune_epochs_java",
    "finetune.epochs.python": "finetune_epochs_python",
    "finetune.epochs.pharo": "finetune_epochs_pharo",
    "finetune.epochs.default": "finetune_epochs_default",
}

_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Plain key = value lines; '#' starts a comment; keys are dotted."""
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        field_name = _CONFIG_KEYS[key]
        overrides[field_name] = _coerce(value, field_types[field_name], key, path, lineno)
    return overrides


def _coerce(value: str, type_name: str, key: str, path, lineno: int):
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        if type_name == "bool":
            return _BOOL_VALUES[value.lower()]
        return value
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: line {lineno}: bad value for {key}: {value!r}") from exc


def load_pipeline_config(config_path: str | Path | None, cli_overrides: dict[str, object]) -> PipelineConfig:
    merged: dict[str, object] = {}
    if config_path is not None:
        merged.update(parse_config_file(config_path))
    merged.update({k: v for k, v in cli_overrides.items() if v is not None})
    return PipelineConfig(**merged)


@dataclass(frozen=True)
class Workspace:
    base: Path

    @property
    def vocab_path(self) -> Path:
        return self.base / "vocab.txt"

    @property
    def checkpoints_dir(self) -> Path:
        return self.base / "checkpoints"

    @property
    def manifests_dir(self) -> Path:
        return self.base / "manifests"

    @property
    def splits_dir(self) -> Path:
        return self.base / "splits"

    @property
    def reports_dir(self) -> Path:
        return self.base / "reports"

    @property
    def posttrain_checkpoint(self) -> Path:
        return self.checkpoints_dir / "posttrain.ckpt"

    def manifest_path(self, language: str, category: str) -> Path:
        return self.manifests_dir / f"{language}_{category}.json"

    def ensure(self) -> "Workspace":
        for d in (self.base, self.checkpoints_dir, self.manifests_dir,
                  self.splits_dir, self.reports_dir):
            d.mkdir(parents=True, exist_ok=True)
        return self


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def workspace(cfg: PipelineConfig) -> Workspace:
    return Workspace(Path(cfg.work_dir)).ensure()


def load_all_datasets(cfg: PipelineConfig) -> list[data_mod.CategoryDataset]:
    found = data_mod.discover_categories(cfg.data_root)
    if not found:
        raise PipelineError(f"no category CSVs found under {cfg.data_root!r} "
                            "(expected <data_root>/<language>/<category>.csv)")
    datasets = []
    for language, category, path in found:
        examples = data_mod.load_category_csv(path, language=language, category=category)
        datasets.append(
            data_mod.build_category_dataset(
                examples, language=language, category=category,
                val_fraction=cfg.val_fraction, seed=cfg.seed,
            )
        )
    return datasets


def get_dataset(datasets: list[data_mod.CategoryDataset], language: str, category: str):
    for ds in datasets:
        if ds.language == language and ds.category == category:
            return ds
    known = ", ".join(f"{d.language}/{d.category}" for d in datasets)
    raise KeyError(f"unknown language/category {language}/{category} (have: {known})")


def get_or_build_vocab(ws: Workspace, cfg: PipelineConfig,
                       datasets: list[data_mod.CategoryDataset]) -> Vocab:
    """Load the frozen vocabulary, or build it once from all training splits."""
    if ws.vocab_path.exists():
        return Vocab.load(ws.vocab_path)
    corpus: list[str] = []
    for ds in datasets:
        corpus.append(ds.category.lower())
        for ex in ds.train:
            corpus.append(f"{ex.class_name} {ex.sentence}")
    vocab = build_vocab(corpus, max_size=cfg.vocab_max_size)
    vocab.save(ws.vocab_path)
    return vocab


def vocab_sha256(ws: Workspace) -> str:
    return hashlib.sha256(ws.vocab_path.read_bytes()).hexdigest()


def classifier_config(cfg: PipelineConfig, vocab_size: int) -> ClassifierConfig:
    encoder = EncoderConfig(
        vocab_size=vocab_size, d_model=cfg.d_model, n_layers=cfg.n_layers,
        n_heads=cfg.n_heads, d_ff=cfg.d_ff, max_len=cfg.max_len,
        dropout_rate=cfg.dropout_rate, seed=cfg.seed,
    )
    head_kind = HEAD_HSUM if cfg.hsum_enabled else HEAD_BASELINE
    return ClassifierConfig(encoder=encoder, head_kind=head_kind, hsum_k=cfg.hsum_k)


def run_split(cfg: PipelineConfig) -> list[Path]:
    """Materialize the stratified splits as CSVs for inspection."""
    ws = workspace(cfg)
    datasets = load_all_datasets(cfg)
    written = []
    for ds in datasets:
        for split_name, rows in (("train", ds.train), ("validation", ds.validation),
                                 ("test", ds.test)):
            path = ws.splits_dir / f"{ds.language}_{ds.category}_{split_name}.csv"
            data_mod.write_examples_csv(rows, path)
            written.append(path)
    return written


def run_posttrain(cfg: PipelineConfig, log=print) -> Path:
    """Train the shared backbone on the combined multi-language corpus."""
    ws = workspace(cfg)
    datasets = load_all_datasets(cfg)
    vocab = get_or_build_vocab(ws, cfg, datasets)
    corpus = data_mod.build_posttrain_corpus(datasets, seed=cfg.seed)
    validation = data_mod.build_posttrain_validation(datasets)
    model = Classifier.build(classifier_config(cfg, vocab.size))
    tcfg = cfg.posttrain_config()
    log(f"post-training on {len(corpus)} examples "
        f"({len(datasets)} categories), pooled validation {len(validation)}")
    result = train_posttrain(corpus, model, tcfg, validation, vocab)
    best_step = select_optimal_step(result.records)
    best_f1 = max(r.validation_f1 for r in result.records)
    metadata = {
        "stage": "posttrain",
        "step": best_step,
        "validation_f1": best_f1,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": result.model.config.to_dict(),
        "vocab_sha256": vocab_sha256(ws),
    }
    save_checkpoint([(n, t.data) for n, t in result.model.named_parameters()],
                    metadata, ws.posttrain_checkpoint)
    _write_json(ws.manifests_dir / "posttrain.json", {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "posttrain_enabled": cfg.posttrain_enabled,
        "hsum_enabled": cfg.hsum_enabled,
        "best_step": best_step,
        "steps_executed": result.steps_executed,
        "records": [{"step": r.step, "validation_f1": r.validation_f1} for r in result.records],
        "checkpoint": ws.posttrain_checkpoint.name,
        "vocab_sha256": vocab_sha256(ws),
    })
    log(f"post-training done: best step {best_step} "
        f"(pooled validation F1 {best_f1:.4f})")
    return ws.posttrain_checkpoint


def _load_model_from_checkpoint(path: Path) -> tuple[Classifier, dict]:
    params, metadata = load_checkpoint(path)
    model = Classifier.build(ClassifierConfig.from_dict(metadata["config"]))
    model.load_state_arrays(dict(params))
    return model, metadata


def _initial_model(cfg: PipelineConfig, ws: Workspace, vocab: Vocab) -> Classifier:
    if cfg.posttrain_enabled:
        if not ws.posttrain_checkpoint.exists():
            raise PipelineError(
                f"post-trained checkpoint {ws.posttrain_checkpoint} not found; "
                "run the posttrain command first (or pass --no-posttrain)"
            )
        model, metadata = _load_model_from_checkpoint(ws.posttrain_checkpoint)
        if metadata.get("vocab_sha256") != vocab_sha256(ws):
            raise PipelineError("vocabulary changed since post-training; rebuild both")
        return model
    return Classifier.build(classifier_config(cfg, vocab.size))


def run_train_category(cfg: PipelineConfig, language: str, category: str, log=print) -> Path:
    """Two-stage fine-tuning for one category; writes checkpoint + manifest."""
    ws = workspace(cfg)
    datasets = load_all_datasets(cfg)
    ds = get_dataset(datasets, language, category)
    vocab = get_or_build_vocab(ws, cfg, datasets)
    init_model = _initial_model(cfg, ws, vocab)
    tcfg = cfg.finetune_config(language)

    log(f"{language}/{category}: stage 1 on {len(ds.train)} examples "
        f"(validation {len(ds.validation)})")
    stage1 = train_stage1(ds, init_model, tcfg, vocab)
    optimal_step = stage1.optimal_step
    final_step = optimal_step + tcfg.extra_steps
    log(f"{language}/{category}: optimal step {optimal_step}, "
        f"stage 2 to step {final_step}")
    stage2 = train_stage2(ds, init_model, tcfg, optimal_step, vocab)

    ckpt_path = ws.checkpoints_dir / f"{language}_{category}_step{final_step}.ckpt"
    metadata = {
        "stage": "finetune",
        "language": language,
        "category": category,
        "step": final_step,
        "optimal_step": optimal_step,
        "extra_steps": tcfg.extra_steps,
        "validation_f1": max(r.validation_f1 for r in stage1.records),
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": stage2.model.config.to_dict(),
        "vocab_sha256": vocab_sha256(ws),
    }
    save_checkpoint([(n, t.data) for n, t in stage2.model.named_parameters()],
                    metadata, ckpt_path)
    _write_json(ws.manifest_path(language, category), {
        "language": language,
        "category": category,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "posttrain_enabled": cfg.posttrain_enabled,
        "hsum_enabled": cfg.hsum_enabled,
        "optimal_step": optimal_step,
        "extra_steps": tcfg.extra_steps,
        "final_step": final_step,
        "stage1_steps_executed": stage1.steps_executed,
        "stage2_steps_executed": stage2.steps_executed,
        "stage1_records": [{"step": r.step, "validation_f1": r.validation_f1}
                           for r in stage1.records],
        "checkpoint": ckpt_path.name,
        "vocab_sha256": vocab_sha256(ws),
    })
    log(f"{language}/{category}: saved {ckpt_path.name}")
    return ckpt_path


def run_train_all(cfg: PipelineConfig, log=print) -> list[Path]:
    """Post-train if enabled and missing, then fine-tune every category."""
    ws = workspace(cfg)
    datasets = load_all_datasets(cfg)
    if cfg.posttrain_enabled and not ws.posttrain_checkpoint.exists():
        run_posttrain(cfg, log=log)
    paths = []
    for ds in datasets:
        paths.append(run_train_category(cfg, ds.language, ds.category, log=log))
    return paths


def _trained_checkpoint(ws: Workspace, language: str, category: str) -> Path | None:
    manifest_path = ws.manifest_path(language, category)
    if not manifest_path.exists():
        return None
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    path = ws.checkpoints_dir / manifest["checkpoint"]
    return path if path.exists() else None


def run_eval(cfg: PipelineConfig, log=print) -> MetricsReport:
    """Test-set metrics for every trained category plus the submission score."""
    if cfg.max_avg_runtime <= 0:
        raise PipelineError("eval requires a positive max_avg_runtime "
                            "(--max-avg-runtime or config key max_avg_runtime)")
    ws = workspace(cfg)
    datasets = load_all_datasets(cfg)
    vocab = get_or_build_vocab(ws, cfg, datasets)

    missing = [f"{ds.language}/{ds.category}" for ds in datasets
               if _trained_checkpoint(ws, ds.language, ds.category) is None]
    if missing:
        raise PipelineError("no trained checkpoint for: " + ", ".join(missing))

    rows: list[CategoryResult] = []
    for ds in datasets:
        model, _ = _load_model_from_checkpoint(
            _trained_checkpoint(ws, ds.language, ds.category))

        def predict(texts: list[str]) -> np.ndarray:
            return predict_labels(model, vocab, texts, batch_size=cfg.finetune_batch_size)

        labels = np.array([ex.label for ex in ds.test], dtype=np.int64)
        texts = [data_mod.build_input_finetune(ex.class_name, ex.sentence) for ex in ds.test]
        preds = predict(texts)
        precision, recall, f1 = category_metrics(confusion_counts(preds, labels))
        if cfg.runtime_repetitions > 0:
            runtime = measure_runtime(predict, ds.test, repetitions=cfg.runtime_repetitions)
        else:
            runtime = 0.0
        rows.append(CategoryResult(language=ds.language, category=ds.category,
                                   precision=precision, recall=recall, f1=f1,
                                   runtime_seconds=runtime))
        log(f"{ds.language}/{ds.category}: P {precision:.2f} R {recall:.2f} F1 {f1:.2f}")

    report = build_report(rows, max_avg_runtime=cfg.max_avg_runtime)
    _atomic_write_text(ws.reports_dir / "metrics.csv", report_to_csv(report))
    _write_json(ws.reports_dir / "summary.json", {
        "avg_precision": report.avg_precision,
        "avg_recall": report.avg_recall,
        "avg_f1": report.avg_f1,
        "measured_avg_runtime": report.measured_avg_runtime,
        "max_avg_runtime": report.max_avg_runtime,
        "submission_score": report.submission_score,
    })
    _atomic_write_text(ws.reports_dir / "report.txt", render_report(report))
    log(render_report(report))
    return report


def run_predict(cfg: PipelineConfig, language: str, category: str,
                input_path: str | Path, output_path: str | Path | None) -> str:
    """Label a CSV of (class, sentence) rows with a trained category model."""
    ws = workspace(cfg)
    ckpt = _trained_checkpoint(ws, language, category)
    if ckpt is None:
        raise PipelineError(f"no trained checkpoint for {language}/{category}")
    model, _ = _load_model_from_checkpoint(ckpt)
    vocab = Vocab.load(ws.vocab_path)

    with open(input_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        cols = data_mod.DEFAULT_COLUMNS
        for col in (cols.class_name, cols.sentence):
            if col not in header:
                raise PipelineError(f"{input_path}: missing column {col!r}")
        rows = list(reader)
    texts = [data_mod.build_input_finetune(r[cols.class_name] or "", r[cols.sentence] or "")
             for r in rows]
    preds = predict_labels(model, vocab, texts, batch_size=cfg.finetune_batch_size)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header + ["prediction"])
    for row, pred in zip(rows, preds):
        writer.writerow([row[h] for h in header] + [int(pred)])
    text = buf.getvalue()
    if output_path is not None:
        _atomic_write_text(Path(output_path), text)
    return text


def run_report(cfg: PipelineConfig) -> str:
    """Re-render the report from the persisted machine-readable metrics."""
    ws = workspace(cfg)
    metrics_path = ws.reports_dir / "metrics.csv"
    summary_path = ws.reports_dir / "summary.json"
    if not metrics_path.exists() or not summary_path.exists():
        raise PipelineError("no saved metrics; run eval first")
    with open(metrics_path, newline="", encoding="utf-8") as fh:
        rows = [
            CategoryResult(
                language=r["language"], category=r["category"],
                precision=float(r["precision"]), recall=float(r["recall"]),
                f1=float(r["f1"]), runtime_seconds=float(r["runtime_s"]),
            )
            for r in csv.DictReader(fh)
        ]
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    report = build_report(rows, max_avg_runtime=summary["max_avg_runtime"])
    return render_report(report)
