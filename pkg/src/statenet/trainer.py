"""Training loop, evaluation, event logging, checkpoints and prediction."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_image
from .data import ArraySource, batches, epoch_order, load_image
from .errors import DatasetError, DivergenceError, ParameterError
from .layers import softmax, softmax_xent
from .optim import Optimizer
from .weights import save_weights

log = logging.getLogger(__name__)

_DROPOUT_STREAM = 0xD50


@dataclass
class TrainEvent:
    epoch: int
    split: str
    loss: float
    accuracy: float
    wall_ms: float
    lr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    deterministic: bool = False
    checkpoint_every: int = 0  # 0: only the final checkpoint
    checkpoint_dir: str | None = None
    event_log: str | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    augment_train: bool = True
    augment_eval: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")

    def describe(self) -> dict:
        """Settings that influence results (paths and worker count excluded)."""
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "seed": self.seed,
            "deterministic": self.deterministic, "checkpoint_every": self.checkpoint_every,
            "augment": self.augment.to_dict(), "augment_train": self.augment_train,
            "augment_eval": self.augment_eval,
        }


@dataclass
class RunSummary:
    best_val_accuracy: float
    best_epoch: int
    final_train: TrainEvent
    final_val: TrainEvent
    events: list[TrainEvent]
    checkpoints: list[str]


def _check_finite(loss, batch_index):
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss ({loss}) at batch {batch_index}")


def train_epoch(model, opt: Optimizer, batch_iter, epoch: int = 1, seed: int = 0,
                start: int = 0) -> TrainEvent:
    """One pass of forward / loss / backward / step over ``batch_iter``.

    ``start`` skips leading layers whose outputs the batches already contain.
    Metrics are batch-size weighted means of train-mode (dropout on) outputs.
    """
    t0 = time.perf_counter()
    total = correct = 0
    loss_sum = 0.0
    for b, batch in enumerate(batch_iter):
        rng = np.random.default_rng([seed, epoch, b, _DROPOUT_STREAM])
        logits = model.forward(batch.x, training=True, rng=rng, start=start)
        loss, probs, dlogits = softmax_xent(logits, batch.y)
        _check_finite(loss, b)
        model.backward(dlogits)
        opt.apply_step(model)
        n = len(batch.y)
        total += n
        loss_sum += loss * n
        correct += int((probs.argmax(axis=1) == batch.y).sum())
    if total == 0:
        raise DatasetError("training split is empty")
    return TrainEvent(epoch, "train", loss_sum / total, correct / total,
                      (time.perf_counter() - t0) * 1e3, opt.lr)


def evaluate(model, batch_iter, epoch: int = 0, lr: float = 0.0, start: int = 0,
             split: str = "val") -> TrainEvent:
    """Inference-mode loss and accuracy; leaves the model untouched."""
    t0 = time.perf_counter()
    total = correct = 0
    loss_sum = 0.0
    for b, batch in enumerate(batch_iter):
        logits = model.forward(batch.x, training=False, start=start)
        loss, probs, _ = softmax_xent(logits, batch.y)
        _check_finite(loss, b)
        n = len(batch.y)
        total += n
        loss_sum += loss * n
        correct += int((probs.argmax(axis=1) == batch.y).sum())
    if total == 0:
        raise DatasetError(f"{split} split is empty")
    return TrainEvent(epoch, split, loss_sum / total, correct / total,
                      (time.perf_counter() - t0) * 1e3, lr)


def array_batches(x, y, batch_size, order=None):
    """Batches straight from arrays, optionally in a given order."""
    from .data import Batch

    order = np.arange(len(y)) if order is None else order
    for s in range(0, len(order), batch_size):
        idx = order[s:s + batch_size]
        yield Batch(x[idx], y[idx], idx)


def precompute(model, source, cfg: AugmentConfig, stop: int, batch_size: int = 32,
               workers: int = 1) -> ArraySource:
    """Run the first ``stop`` layers once over un-augmented (rescaled) inputs."""
    feats = []
    for batch in batches(source, batch_size, cfg, training=False, workers=workers):
        feats.append(model.forward(batch.x, training=False, stop=stop))
    return ArraySource(np.concatenate(feats), source.labels)


class EventLog:
    """JSON Lines writer: one header line with the run config, then one line per event."""

    def __init__(self, path, header: dict | None = None):
        self.path = Path(path) if path else None
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "w") as f:
                    if header is not None:
                        f.write(json.dumps({"header": header}, sort_keys=True) + "\n")
            except OSError as e:
                raise ParameterError(f"cannot write event log {self.path}: {e}") from None

    def append(self, event: TrainEvent):
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(event.to_json() + "\n")


def fit(model, train_source, val_source, cfg: TrainConfig, opt: Optimizer,
        header: dict | None = None, meta: dict | None = None) -> RunSummary:
    """Train for ``cfg.epochs`` epochs, evaluating on ``val_source`` after each.

    When training inputs are not re-augmented each epoch, the outputs of the
    model's frozen leading layers are computed once and reused.
    """
    header = {"train": cfg.describe(), "optimizer": opt.describe(), **(header or {})}
    events_log = EventLog(cfg.event_log, header)
    eval_cfg = cfg.augment if cfg.augment_eval else AugmentConfig.disabled(cfg.augment.rescale)
    prefix = model.frozen_prefix()
    cache_train = not cfg.augment_train and prefix > 0
    cache_val = not cfg.augment_eval and prefix > 0
    plain = AugmentConfig.disabled(cfg.augment.rescale)
    if cache_train:
        log.info("caching outputs of %d frozen leading layers", prefix)
        train_feats = precompute(model, train_source, plain, prefix, cfg.batch_size, cfg.workers)
    if cache_val:
        val_feats = precompute(model, val_source, plain, prefix, cfg.batch_size, cfg.workers)

    events, checkpoints = [], []
    best = (-1.0, 0)
    tr = va = None
    for epoch in range(1, cfg.epochs + 1):
        if cache_train:
            order = epoch_order(len(train_feats), cfg.seed, epoch, shuffle=True)
            it = array_batches(train_feats.images, train_feats.labels, cfg.batch_size, order)
            tr = train_epoch(model, opt, it, epoch, cfg.seed, start=prefix)
        else:
            it = batches(train_source, cfg.batch_size, cfg.augment if cfg.augment_train else plain,
                         cfg.seed, epoch, training=cfg.augment_train, shuffle=True,
                         workers=cfg.workers)
            tr = train_epoch(model, opt, it, epoch, cfg.seed)
        if cache_val:
            va = evaluate(model, array_batches(val_feats.images, val_feats.labels, cfg.batch_size),
                          epoch, opt.lr, start=prefix)
        else:
            it = batches(val_source, cfg.batch_size, eval_cfg, cfg.seed, epoch,
                         training=cfg.augment_eval, shuffle=False, workers=cfg.workers)
            va = evaluate(model, it, epoch, opt.lr)
        if cfg.deterministic:
            tr.wall_ms = va.wall_ms = 0.0
        for ev in (tr, va):
            events.append(ev)
            events_log.append(ev)
        if va.accuracy > best[0]:
            best = (va.accuracy, epoch)
        log.info("epoch %d: train loss %.4f acc %.3f | val loss %.4f acc %.3f",
                 epoch, tr.loss, tr.accuracy, va.loss, va.accuracy)
        if cfg.checkpoint_dir and (
            epoch == cfg.epochs or (cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0)
        ):
            Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
            name = "final" if epoch == cfg.epochs else f"epoch{epoch:04d}"
            save_weights(model, Path(cfg.checkpoint_dir) / name, meta)
            checkpoints.append(str(Path(cfg.checkpoint_dir) / name))
    return RunSummary(best[0], best[1], tr, va, events, checkpoints)


def predict_array(model, img: np.ndarray, classes, rescale: float = 1.0 / 255.0):
    """Rank classes for one ``h x w x 3`` image with values in [0, 255]."""
    x = augment_image(img, AugmentConfig.disabled(rescale), None, training=False)[None]
    probs = softmax(model.forward(x, training=False).astype(np.float64))[0]
    order = sorted(range(len(probs)), key=lambda k: (-probs[k], k))
    return [(classes[k], float(probs[k])) for k in order]


def predict(model, image_path, classes, rescale: float = 1.0 / 255.0):
    """Return ``[(class name, probability), ...]`` sorted by descending probability."""
    h, w, _ = model.input_shape
    return predict_array(model, load_image(image_path, (h, w)), classes, rescale)
