"""Confusion matrices, per-class metrics, and the method comparison table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySplit, InvalidSpec, ShapeMismatch
from .manifest import ClipManifest
from .models import TrainedModel
from .vocab import WordVocabulary


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    vocab: WordVocabulary

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.vocab)
        if counts.shape != (n, n):
            raise ShapeMismatch(f"confusion matrix must be {n}x{n}, got {counts.shape}")
        if np.any(counts < 0):
            raise InvalidSpec("confusion matrix entries must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_pairs(cls, true_ids, pred_ids, vocab: WordVocabulary) -> "ConfusionMatrix":
        true_ids = np.asarray(true_ids, dtype=np.int64)
        pred_ids = np.asarray(pred_ids, dtype=np.int64)
        if true_ids.shape != pred_ids.shape:
            raise ShapeMismatch("true/predicted id arrays differ in length")
        n = len(vocab)
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (true_ids, pred_ids), 1)
        return cls(counts=counts, vocab=vocab)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_text(self) -> str:
        words = self.vocab.to_list()
        width = max(9, max(len(w) for w in words) + 1)
        head = " " * width + "".join(f"{w:>{width}}" for w in words)
        rows = [head]
        for i, w in enumerate(words):
            rows.append(
                f"{w:>{width}}" + "".join(f"{c:>{width}d}" for c in self.counts[i])
            )
        return "\n".join(rows)


@dataclass(frozen=True)
class MetricsReport:
    method: str
    split: str
    accuracy: float
    loss: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    degenerate: np.ndarray  # classes whose precision or recall denominator was 0
    macro_precision: float
    macro_recall: float
    macro_f1: float
    vocab: WordVocabulary = field(default_factory=WordVocabulary.default)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "split": self.split,
            "accuracy": self.accuracy,
            "loss": self.loss,
            "precision": [float(v) for v in self.precision],
            "recall": [float(v) for v in self.recall],
            "f1": [float(v) for v in self.f1],
            "degenerate": [bool(v) for v in self.degenerate],
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "vocab": self.vocab.to_list(),
        }

    def to_text(self) -> str:
        lines = [
            f"method: {self.method}   split: {self.split}",
            f"accuracy: {self.accuracy:.4f}   loss: {self.loss:.4f}",
            f"{'word':>12} {'prec':>7} {'recall':>7} {'f1':>7}",
        ]
        for i, word in enumerate(self.vocab.to_list()):
            flag = "  (degenerate)" if self.degenerate[i] else ""
            lines.append(
                f"{word:>12} {self.precision[i]:>7.4f} {self.recall[i]:>7.4f} "
                f"{self.f1[i]:>7.4f}{flag}"
            )
        lines.append(
            f"{'macro':>12} {self.macro_precision:>7.4f} {self.macro_recall:>7.4f} "
            f"{self.macro_f1:>7.4f}"
        )
        return "\n".join(lines)


def metrics_from_confusion(
    cm: ConfusionMatrix, loss: float = float("nan"), method: str = "", split: str = ""
) -> MetricsReport:
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    total = counts.sum()
    if total <= 0:
        raise InvalidSpec("cannot score an empty confusion matrix")

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1), 0.0)
    degenerate = (col == 0) | (row == 0)
    return MetricsReport(
        method=method,
        split=split,
        accuracy=float(np.trace(cm.counts) / cm.total),
        loss=float(loss),
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=degenerate,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        vocab=cm.vocab,
    )


def evaluate(
    model: TrainedModel, manifest: ClipManifest, pipeline, split: str = "test"
) -> tuple[ConfusionMatrix, MetricsReport]:
    x, y = pipeline.clips(manifest, split)
    probs = model.clip_probs(x)
    preds = np.argmax(probs, axis=1)
    loss = float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-12)))
    cm = ConfusionMatrix.from_pairs(y, preds, model.vocab)
    report = metrics_from_confusion(cm, loss=loss, method=model.spec.method, split=split)
    return cm, report


def comparison_rows(reports) -> list[dict]:
    """One row per method; held-out reports fill the Val columns, train
    reports the Train columns. Rows sort by held-out accuracy, best first."""
    if not reports:
        raise InvalidSpec("need at least one report to compare")
    grouped: dict[str, dict] = {}
    for rep in reports:
        row = grouped.setdefault(
            rep.method,
            {"method": rep.method, "val_acc": None, "train_acc": None,
             "val_loss": None, "train_loss": None, "val_split": None},
        )
        if rep.split == "train":
            row["train_acc"] = rep.accuracy
            row["train_loss"] = rep.loss
        else:
            row["val_acc"] = rep.accuracy
            row["val_loss"] = rep.loss
            row["val_split"] = rep.split
    return sorted(
        grouped.values(),
        key=lambda r: -1.0 if r["val_acc"] is None else r["val_acc"],
        reverse=True,
    )


def compare_methods(reports) -> str:
    rows = comparison_rows(reports)

    def fmt(v):
        return "-" if v is None else f"{v:.4f}"

    header = f"{'Method':<14} {'Val-Acc':>8} {'Train-Acc':>10} {'Val-Loss':>9} {'Train-Loss':>11}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['method']:<14} {fmt(r['val_acc']):>8} {fmt(r['train_acc']):>10} "
            f"{fmt(r['val_loss']):>9} {fmt(r['train_loss']):>11}"
        )
    return "\n".join(lines)
