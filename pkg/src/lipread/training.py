"""Seeded splitting, the training loop, and curve emission.

Splits are stratified by default: records are grouped per class, shuffled
with the configured seed, and divided by largest-remainder quotas so every
split's class counts sit within one clip of the exact fractions. Training
monitors held-out loss each epoch and stops once it has not improved for
`patience` epochs, restoring the best parameters.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DivergedTraining, EmptySplit, InvalidSpec, TooFewSamples
from .manifest import ClipManifest
from .models import TrainedModel
from .nn.network import make_optimizer, softmax_cross_entropy
from .vocab import one_hot

TWO_WAY = ("train", "test")
THREE_WAY = ("train", "val", "test")
DEFAULT_FRACTIONS = {"two_way": (0.8, 0.2), "three_way": (0.7, 0.15, 0.15)}


@dataclass(frozen=True)
class SplitConfig:
    mode: str = "two_way"
    seed: int = 0
    fractions: tuple = ()
    stratified: bool = True
    by: str = "clip"

    def __post_init__(self):
        if self.mode not in DEFAULT_FRACTIONS:
            raise InvalidSpec(f"split mode must be two_way or three_way, got {self.mode!r}")
        if self.by not in ("clip", "participant"):
            raise InvalidSpec(f"split granularity must be clip or participant, got {self.by!r}")
        fracs = tuple(self.fractions) or DEFAULT_FRACTIONS[self.mode]
        if len(fracs) != len(self.split_names()):
            raise InvalidSpec(f"{self.mode} needs {len(self.split_names())} fractions")
        if any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise InvalidSpec(f"fractions must be positive and sum to 1, got {fracs}")
        object.__setattr__(self, "fractions", fracs)

    def split_names(self) -> tuple:
        return TWO_WAY if self.mode == "two_way" else THREE_WAY


def _largest_remainder(n: int, fractions: tuple) -> list[int]:
    exact = [n * f for f in fractions]
    quota = [int(np.floor(e)) for e in exact]
    leftover = n - sum(quota)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - quota[i]), i))
    for i in order[:leftover]:
        quota[i] += 1
    return quota


def _assign(indices, quota, names, out):
    start = 0
    for count, name in zip(quota, names):
        for i in indices[start : start + count]:
            out[i] = name
        start += count


def split_manifest(manifest: ClipManifest, cfg: SplitConfig) -> ClipManifest:
    records = manifest.records
    names = cfg.split_names()
    rng = np.random.default_rng(cfg.seed)
    assigned: dict[int, str] = {}

    if cfg.by == "participant":
        if any(r.participant_id is None for r in records):
            raise InvalidSpec("participant split needs participant_id on every record")
        people = sorted({r.participant_id for r in records})
        if len(people) < len(names):
            raise TooFewSamples(
                f"{len(people)} participants cannot fill {len(names)} splits"
            )
        people = [people[i] for i in rng.permutation(len(people))]
        quota = _largest_remainder(len(people), cfg.fractions)
        person_split: dict[str, str] = {}
        _assign(people, quota, names, person_split)
        assigned = {i: person_split[r.participant_id] for i, r in enumerate(records)}
    elif cfg.stratified:
        by_label: dict[str, list[int]] = {}
        for i, r in enumerate(records):
            by_label.setdefault(r.label, []).append(i)
        for label in sorted(by_label):
            idx = by_label[label]
            if len(idx) < len(names):
                raise TooFewSamples(
                    f"class {label!r} has {len(idx)} clips for {len(names)} splits"
                )
            idx = [idx[j] for j in rng.permutation(len(idx))]
            _assign(idx, _largest_remainder(len(idx), cfg.fractions), names, assigned)
    else:
        if len(records) < len(names):
            raise TooFewSamples(f"{len(records)} clips cannot fill {len(names)} splits")
        idx = list(rng.permutation(len(records)))
        _assign(idx, _largest_remainder(len(records), cfg.fractions), names, assigned)

    new_records = tuple(
        replace(r, split=assigned[i]) for i, r in enumerate(records)
    )
    return manifest.with_records(new_records)


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    early_stopping_patience: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidSpec("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidSpec("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise InvalidSpec("learning_rate must be >= 0")
        if self.early_stopping_patience < 1:
            raise InvalidSpec("patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidSpec(f"optimizer must be adam or sgd, got {self.optimizer!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_time: float


@dataclass(frozen=True)
class TrainingLog:
    records: tuple
    stop_reason: str
    best_epoch: int
    monitor_split: str
    method: str

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for i, rec in enumerate(self.records, start=1):
            if rec.epoch != i:
                raise InvalidSpec(f"log epochs must run 1..n, found {rec.epoch} at {i}")

    @property
    def last(self) -> EpochRecord:
        return self.records[-1]

    def best(self) -> EpochRecord:
        return self.records[self.best_epoch - 1]


class EarlyStopper:
    """Stops once the monitored loss has not improved for `patience` epochs;
    keeps a snapshot of the best parameters for restoration."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.best_state = None

    def update(self, epoch: int, loss: float, network) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_state = network.state_dict()
        return epoch - self.best_epoch >= self.patience


def _clip_eval(model: TrainedModel, x: np.ndarray, y: np.ndarray):
    probs = model.clip_probs(x)
    loss = float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-12)))
    acc = float(np.mean(np.argmax(probs, axis=1) == y))
    return loss, acc


def train(
    model: TrainedModel,
    manifest: ClipManifest,
    cfg: TrainConfig,
    pipeline,
) -> tuple[TrainedModel, TrainingLog]:
    splits = {r.split for r in manifest.records}
    if "train" not in splits:
        raise EmptySplit("manifest has no train split")
    monitor_split = "val" if "val" in splits else "test"
    if monitor_split not in splits:
        raise EmptySplit("manifest has no held-out split to monitor")

    x_train, y_train = pipeline.samples(manifest, "train")
    x_mon, y_mon = pipeline.clips(manifest, monitor_split)
    num_classes = model.spec.num_classes
    onehot = one_hot(y_train, num_classes)

    rng = np.random.default_rng(cfg.seed)
    net = model.network
    optimizer = make_optimizer(cfg.optimizer, net.params(), cfg.learning_rate)
    stopper = EarlyStopper(cfg.early_stopping_patience)
    records: list[EpochRecord] = []
    method = model.spec.method

    def partial_log(reason: str) -> TrainingLog:
        return TrainingLog(
            records=tuple(records),
            stop_reason=reason,
            best_epoch=stopper.best_epoch or max(len(records), 1),
            monitor_split=monitor_split,
            method=method,
        )

    n = len(x_train)
    stop_reason = "max_epochs"
    for epoch in range(1, cfg.epochs + 1):
        tick = time.perf_counter()
        perm = rng.permutation(n)
        loss_sum = 0.0
        hit_sum = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x_train[idx].astype(np.float64)
            logits = net.forward(xb, train=True)
            loss, dlogits, probs = softmax_cross_entropy(logits, onehot[idx])
            if not np.isfinite(loss):
                raise DivergedTraining(
                    f"non-finite loss at epoch {epoch}", log=partial_log("diverged")
                )
            net.backward(dlogits)
            optimizer.step(net.grads())
            loss_sum += loss * len(idx)
            hit_sum += int(np.sum(np.argmax(probs, axis=1) == y_train[idx]))
        val_loss, val_acc = _clip_eval(model, x_mon, y_mon)
        if not np.isfinite(val_loss):
            raise DivergedTraining(
                f"non-finite held-out loss at epoch {epoch}",
                log=partial_log("diverged"),
            )
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=hit_sum / n,
                val_loss=val_loss,
                val_acc=val_acc,
                wall_time=time.perf_counter() - tick,
            )
        )
        if stopper.update(epoch, val_loss, net):
            stop_reason = "early_stop"
            break

    if stop_reason == "early_stop" and stopper.best_state is not None:
        net.load_state_dict(stopper.best_state)
    log = TrainingLog(
        records=tuple(records),
        stop_reason=stop_reason,
        best_epoch=stopper.best_epoch,
        monitor_split=monitor_split,
        method=method,
    )
    model.fingerprint.update(
        trained=True,
        train_seed=cfg.seed,
        epochs_run=len(records),
        stop_reason=stop_reason,
        best_epoch=stopper.best_epoch,
        monitor_split=monitor_split,
    )
    return model, log


CSV_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "wall_time")


def emit_curves(log: TrainingLog, out_dir) -> dict:
    """Writes accuracy/loss plots plus the per-epoch table the plots are
    drawn from; the table round-trips exactly via `read_history`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not log.records:
        raise InvalidSpec("cannot plot an empty log")

    csv_path = out / "history.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in log.records:
            writer.writerow(
                [rec.epoch] + [f"{getattr(rec, k):.17g}" for k in CSV_FIELDS[1:]]
            )

    epochs = [r.epoch for r in log.records]
    paths = {"table": csv_path}
    for kind, series in (
        ("accuracy", ("train_acc", "val_acc")),
        ("loss", ("train_loss", "val_loss")),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, [getattr(r, series[0]) for r in log.records], label="train", marker="o", markersize=3)
        ax.plot(epochs, [getattr(r, series[1]) for r in log.records], label=log.monitor_split, marker="s", markersize=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel(kind)
        ax.set_title(f"{log.method}: {kind}")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out / f"{kind}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths[kind] = path
    return paths


def read_history(csv_path) -> tuple:
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise InvalidSpec(f"unexpected history columns: {reader.fieldnames}")
        return tuple(
            EpochRecord(
                epoch=int(row["epoch"]),
                **{k: float(row[k]) for k in CSV_FIELDS[1:]},
            )
            for row in reader
        )
