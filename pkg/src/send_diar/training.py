"""Mini-batch training loop and SEND training/evaluation on simulated datasets."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .optim import Adam, OptimizerConfig
from .pse import labels_to_classes
from .scoring import DerReport, der
from .seeding import derive_rng
from .send import Example, SendModel, decode_frames, make_example, send_forward, send_loss

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # wall-clock budget in seconds, checked after each epoch
    time_limit: float | None = None
    threshold: float = 0.5


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    der: float
    seconds: float

    def to_record(self) -> str:
        return json.dumps({"epoch": self.epoch, "loss": round(self.loss, 10), "der": round(self.der, 10)},
                          sort_keys=True)


@dataclass
class TrainingReport:
    seed: int
    records: list[EpochRecord]
    checkpoint: str | None = None

    @property
    def final_der(self) -> float:
        return self.records[-1].der if self.records else float("nan")

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def write(self, path) -> None:
        lines = [json.dumps({"seed": self.seed}, sort_keys=True)]
        lines += [r.to_record() for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")


def fit(params: Sequence[ad.Parameter], epoch_examples: Callable[[int], list],
        loss_fn: Callable[[object], ad.Tensor], validate: Callable[[], float],
        config: TrainConfig) -> list[EpochRecord]:
    """Run ``config.epochs`` passes; each batch's gradients are averaged before one Adam step."""
    opt = Adam(list(params), config.optimizer)
    records = []
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        examples = epoch_examples(epoch)
        if not examples:
            raise ValueError("training set is empty")
        total = 0.0
        for b in range(0, len(examples), config.batch_size):
            batch = examples[b:b + config.batch_size]
            opt.zero_grad()
            for ex in batch:
                loss = loss_fn(ex)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(f"epoch {epoch}: loss became {value} at batch {b // config.batch_size}")
                ad.backward(loss)
                total += value
            opt.step(scale=1.0 / len(batch))
        record = EpochRecord(epoch, total / len(examples), validate(), time.perf_counter() - start)
        log.info("epoch %d loss %.4f der %.4f (%.0fs)", epoch, record.loss, record.der, record.seconds)
        records.append(record)
        if config.time_limit is not None and record.seconds > config.time_limit:
            break
    return records


# ----------------------------------------------------------------------------
# SEND


def send_targets(model: SendModel, ex: Example):
    if model.config.head == "pse":
        return labels_to_classes(ex.labels, model.table, policy="reject")
    return ex.labels


def validation_examples(dataset, capacity: int, seed: int) -> list[Example]:
    return [make_example(dataset, i, capacity, derive_rng(seed, "validation-bank", i), fresh_enrollment=False)
            for i in range(len(dataset))]


def evaluate(model: SendModel, examples: Sequence[Example], threshold: float | None = None,
             mode: str = "full") -> DerReport:
    """DER pooled over all frames of ``examples``."""
    refs, hyps = [], []
    for ex in examples:
        post = send_forward(ex.features, ex.bank, model)
        hyps.append(decode_frames(post, model.table, threshold))
        refs.append(ex.labels)
    return der(np.concatenate(refs), np.concatenate(hyps), mode)


def posteriors(model: SendModel, examples: Sequence[Example]) -> list[np.ndarray]:
    return [send_forward(ex.features, ex.bank, model).probs for ex in examples]


def best_threshold(model: SendModel, examples: Sequence[Example], grid=None,
                   mode: str = "full") -> tuple[float, DerReport]:
    """Threshold from ``grid`` with the lowest pooled DER (multilabel head)."""
    grid = np.round(np.arange(0.05, 0.96, 0.05), 2) if grid is None else grid
    probs = np.concatenate(posteriors(model, examples))
    ref = np.concatenate([ex.labels for ex in examples])
    best = None
    for th in grid:
        report = der(ref, (probs >= th).astype(np.int64), mode)
        if best is None or report.der < best[1].der:
            best = (float(th), report)
    return best


def train(model: SendModel, train_set, val_set, config: TrainConfig, out_dir=None) -> TrainingReport:
    capacity = model.config.capacity
    val = validation_examples(val_set, capacity, config.seed)
    threshold = None if model.config.head == "pse" else config.threshold

    def epoch_examples(epoch):
        order = derive_rng(config.seed, "shuffle", epoch).permutation(len(train_set))
        return [make_example(train_set, int(i), capacity, derive_rng(config.seed, "train-bank", epoch, int(i)))
                for i in order]

    def loss_fn(ex):
        return send_loss(send_forward(ex.features, ex.bank, model), send_targets(model, ex))

    records = fit(model.parameters(), epoch_examples, loss_fn,
                  lambda: evaluate(model, val, threshold).der, config)
    report = TrainingReport(config.seed, records)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ad.save_checkpoint(out_dir / "model", model.parameters())
        report.checkpoint = str(out_dir / "model")
        report.write(out_dir / "training_report.jsonl")
    return report
