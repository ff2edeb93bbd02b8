"""Mini-batch SGD training, snapshot selection and error-probability evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import PairSet, batch_pairs, eval_batches
from .network import NetworkGraph
from .tensor import NumericalError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 0.01
    gamma: float = 0.1
    step_fraction: float = 0.10
    momentum: float = 0.95
    weight_decay: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 900
    seed: int = 0
    snapshot_window: int = 5
    early_stop: bool = False
    patience: int = 50

    def validate(self) -> None:
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.step_fraction <= 1:
            raise ValueError(f"step_fraction must lie in (0, 1], got {self.step_fraction}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError(f"batch_size must be even, got {self.batch_size}")
        if self.snapshot_window < 1:
            raise ValueError("snapshot_window must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.lr0 <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ValueError("lr0 must be positive, momentum in [0, 1), weight_decay >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def lr_schedule(cfg: TrainConfig, epoch: int) -> float:
    """Step policy: multiply by ``gamma`` every ``step_fraction * max_epochs`` epochs."""
    if not 0 <= epoch < cfg.max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.max_epochs})")
    step = cfg.step_fraction * cfg.max_epochs
    # the epsilon keeps exact multiples of the step on the right side of the floor
    drops = math.floor(epoch / step + 1e-9)
    return cfg.lr0 * cfg.gamma ** drops


def decays(name: str) -> bool:
    """Weight decay applies to conv/fc weights and scale gammas, not to offsets."""
    return not (name.endswith(".bias") or name.endswith(".beta"))


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             velocity: dict[str, np.ndarray], cfg: TrainConfig, lr: float):
    """In-place momentum SGD: ``v = m v + lr (g + wd w)``, ``w = w - v``."""
    for name, w in params.items():
        wd = cfg.weight_decay if decays(name) else 0.0
        v = velocity[name]
        v *= cfg.momentum
        v += lr * (grads[name] + wd * w)
        w -= v
    return params, velocity


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    lr: float
    wall_time: float = 0.0

    def to_json(self, with_time: bool = False) -> str:
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)


@dataclass
class EvalResult:
    false_alarms: int
    n_covers: int
    missed_detections: int
    n_stegos: int

    @property
    def p_fa(self) -> float:
        return self.false_alarms / self.n_covers if self.n_covers else 0.0

    @property
    def p_md(self) -> float:
        return self.missed_detections / self.n_stegos if self.n_stegos else 0.0

    @property
    def p_e(self) -> float:
        return 0.5 * (self.p_fa + self.p_md)

    @property
    def accuracy(self) -> float:
        n = self.n_covers + self.n_stegos
        return 1 - (self.false_alarms + self.missed_detections) / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "p_fa": self.p_fa,
            "p_md": self.p_md,
            "p_e": self.p_e,
            "confusion": {
                "cover_as_cover": self.n_covers - self.false_alarms,
                "cover_as_stego": self.false_alarms,
                "stego_as_cover": self.missed_detections,
                "stego_as_stego": self.n_stegos - self.missed_detections,
            },
        }


def error_counts(predictions: np.ndarray, labels: np.ndarray) -> EvalResult:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    covers = labels == 0
    return EvalResult(
        false_alarms=int((predictions[covers] == 1).sum()),
        n_covers=int(covers.sum()),
        missed_detections=int((predictions[~covers] == 0).sum()),
        n_stegos=int((~covers).sum()),
    )


def evaluate_one(net: NetworkGraph, pairs: PairSet, batch_size: int = 16) -> tuple[EvalResult, float]:
    """Eval-mode pass over every image; returns error counts and the mean loss."""
    preds, labels, loss_sum = [], [], 0.0
    for x, y in eval_batches(pairs, batch_size):
        probs, loss = net.forward(x, y, mode="eval")
        preds.append(probs.argmax(axis=1))
        labels.append(y)
        loss_sum += loss * len(y)
    labels = np.concatenate(labels)
    return error_counts(np.concatenate(preds), labels), loss_sum / len(labels)


@dataclass
class EvaluationReport:
    results: list[EvalResult]

    @property
    def mean_p_e(self) -> float:
        return float(np.mean([r.p_e for r in self.results]))

    def to_dict(self, names: Iterable[str] | None = None) -> dict:
        names = list(names) if names is not None else [f"snapshot{i}" for i in range(len(self.results))]
        return {
            "snapshots": [{"name": n, **r.to_dict()} for n, r in zip(names, self.results)],
            "mean_p_e": self.mean_p_e,
        }


def evaluate(snapshots: list[NetworkGraph], test: PairSet, batch_size: int = 16) -> EvaluationReport:
    if not snapshots:
        raise ValueError("at least one snapshot is required")
    if len(test) == 0:
        raise ValueError("empty test split")
    return EvaluationReport([evaluate_one(net, test, batch_size)[0] for net in snapshots])


@dataclass
class TrainResult:
    metrics: list[MetricsRecord]
    snapshot_min: bytes
    snapshot_max: bytes
    epoch_min: int
    epoch_max: int
    final: bytes

    def snapshots(self) -> list[NetworkGraph]:
        return [load_checkpoint(self.snapshot_min), load_checkpoint(self.snapshot_max)]


def train(net: NetworkGraph, train_set: PairSet, val_set: PairSet, cfg: TrainConfig,
          on_epoch: Callable[[MetricsRecord], None] | None = None) -> TrainResult:
    """Train ``net`` in place.

    After every epoch the validation loss is measured in eval mode and a
    checkpoint is kept for the last ``snapshot_window`` epochs; when the run
    ends, the epochs with minimum and maximum validation loss in that window
    are returned as the two snapshots.
    """
    cfg.validate()
    if len(train_set) < cfg.batch_size // 2:
        raise ValueError(f"train split has {len(train_set)} pairs, fewer than one batch")
    params = {name: p for name, p in net.named_params().items()}
    velocity = {name: np.zeros_like(p.data) for name, p in params.items()}
    window: deque[tuple[int, float, bytes]] = deque(maxlen=cfg.snapshot_window)
    metrics: list[MetricsRecord] = []
    best_val, since_best = math.inf, 0

    for epoch in range(cfg.max_epochs):
        lr = lr_schedule(cfg, epoch)
        start = time.perf_counter()
        loss_sum = correct = seen = 0
        for b, (x, y) in enumerate(batch_pairs(train_set, cfg.batch_size, cfg.seed, epoch)):
            net.zero_grad()
            try:
                probs, loss = net.forward(x, y, mode="train")
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
            net.backward()
            sgd_step({n: p.data for n, p in params.items()}, {n: p.grad for n, p in params.items()},
                     velocity, cfg, lr)
            loss_sum += loss * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
            seen += len(y)
        val, val_loss = evaluate_one(net, val_set, cfg.batch_size)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        rec = MetricsRecord(epoch, loss_sum / seen, correct / seen, val_loss, val.accuracy, lr,
                            time.perf_counter() - start)
        metrics.append(rec)
        window.append((epoch, val_loss, save_checkpoint(net)))
        log.info("epoch %d lr %.2e train loss %.4f acc %.3f | val loss %.4f acc %.3f (%.1fs)",
                 epoch, lr, rec.train_loss, rec.train_accuracy, val_loss, rec.val_accuracy, rec.wall_time)
        if on_epoch is not None:
            on_epoch(rec)
        if val_loss < best_val:
            best_val, since_best = val_loss, 0
        else:
            since_best += 1
        if cfg.early_stop and since_best >= cfg.patience:
            log.info("early stop at epoch %d: no validation improvement for %d epochs", epoch, cfg.patience)
            break

    lo = min(window, key=lambda e: e[1])
    hi = max(window, key=lambda e: e[1])
    return TrainResult(metrics, lo[2], hi[2], lo[0], hi[0], save_checkpoint(net))
