"""End-to-end experiments: corpus -> split -> train -> evaluate, plus the variant ladder."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from ..synthdata import load_corpus, make_corpus, split
from .config import TrainConfig, Variant
from .evaluate import EvalReport, evaluate
from .model import Model
from .train import train

log = logging.getLogger(__name__)

ABLATION_COLUMNS = (
    "variant", "status", "error", "corpus_hash",
    "mean_abs_cross_cosine", "emotion_probe_acc", "speaker_probe_acc", "direction_recovery_cosine",
    "loss_total", "loss_cfm", "loss_orth", "loss_contrast",
)


@dataclass
class RunResult:
    model: Model
    log: list
    report: EvalReport
    corpus_hash: str
    config: TrainConfig


def load_or_make_corpus(config: TrainConfig):
    if config.corpus_path:
        return load_corpus(config.corpus_path)
    return make_corpus(config.corpus_spec())


def final_losses(rows) -> dict:
    if not rows:
        return {}
    last = rows[-1]
    return {k: last[k] for k in ("loss_total", "loss_cfm", "loss_orth", "loss_contrast")}


def run_experiment(config: TrainConfig, corpus=None, out_dir=None) -> RunResult:
    config.validate()
    corpus = corpus if corpus is not None else load_or_make_corpus(config)
    train_split, eval_split = split(corpus, config.train_fraction, config.seed)
    log_path = Path(out_dir) / "train_log.csv" if out_dir is not None else None
    model, rows = train(config, train_split, log_path=log_path)
    report = evaluate(model, train_split, eval_split, final_losses(rows), config.probe_ridge, config.eval_pairs)
    result = RunResult(model, rows, report, corpus.content_hash(), config)
    if out_dir is not None:
        write_report(result, Path(out_dir) / "report.json")
    return result


def report_payload(result: RunResult) -> dict:
    return {**result.report.to_dict(), "config": result.config.to_dict(), "corpus_hash": result.corpus_hash}


def write_report(result: RunResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_payload(result), indent=1, sort_keys=True) + "\n")


def ablation_row(variant: Variant, corpus_hash: str, report: EvalReport | None = None, error=None) -> dict:
    row = {c: "" for c in ABLATION_COLUMNS}
    row.update(variant=variant.value, status="ok" if error is None else "failed",
               error="" if error is None else f"{type(error).__name__}: {error}", corpus_hash=corpus_hash)
    if report is not None:
        row.update(
            mean_abs_cross_cosine=report.mean_abs_cross_cosine,
            emotion_probe_acc=report.emotion_probe_acc,
            speaker_probe_acc=report.speaker_probe_acc,
            direction_recovery_cosine="" if report.direction_recovery_cosine is None
            else report.direction_recovery_cosine,
            **report.final_losses,
        )
    return row


def ablate(base: TrainConfig, out_dir=None, corpus=None) -> list:
    """Train and evaluate every variant on one shared corpus and seed.

    A failing variant is recorded in its row and the others still run.
    Writes ``ablation.csv`` under ``out_dir`` when given.
    """
    base.validate()
    corpus = corpus if corpus is not None else load_or_make_corpus(base)
    digest = corpus.content_hash()
    rows = []
    for variant in Variant:
        cfg = dataclasses.replace(base, variant=variant)
        try:
            result = run_experiment(cfg, corpus)
            rows.append(ablation_row(variant, digest, result.report))
        except Exception as exc:  # recorded per row; remaining variants continue
            log.error("variant %s failed: %s", variant.value, exc)
            rows.append(ablation_row(variant, digest, error=exc))
    if out_dir is not None:
        write_ablation(rows, Path(out_dir) / "ablation.csv")
    return rows


def _cell(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_ablation(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for r in rows:
            w.writerow([_cell(r[c]) for c in ABLATION_COLUMNS])
