"""Mini-batch SGD with momentum on the weighted quadratic loss."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, DivergenceError, MissingClassError
from .initializers import InitScheme
from .layers import weighted_quadratic_loss
from .network import encode_targets, scores_to_probs

WEIGHTINGS = ("none", "inverse_class_frequency", "pixel_weight_map")


@dataclass
class TrainConfig:
    batch_size: int = 48
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 5
    iterations_per_epoch: int = 10000
    weighting: str = "none"
    dropout: bool = False
    seed: int = 0
    init: str = "normalized"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0 or self.iterations_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and iterations_per_epoch >= 1")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        InitScheme(self.init)


class OptimizerState:
    """Velocity buffers, one per parameter tensor, starting at zero."""

    def __init__(self, model):
        self.velocity = {(i, name): np.zeros_like(p) for i, name, p, _ in model.parameters()}


def sgd_step(model, state: OptimizerState, lr: float, momentum: float, grads=None) -> None:
    """``v <- momentum * v - lr * g``; ``theta <- theta + v`` for every parameter.

    ``grads`` maps ``(layer_index, name)`` to a gradient; by default the
    gradients accumulated in the model are used.
    """
    for i, name, p, g in model.parameters():
        if grads is not None:
            g = grads[(i, name)]
        v = state.velocity[(i, name)]
        v *= p.dtype.type(momentum)
        v -= p.dtype.type(lr) * g
        p += v


def compute_class_weights(counts: dict, classes=None) -> dict:
    """Inverse class frequency: class k gets ``1 / n_k``.

    Classes with zero count are dropped unless explicitly requested via
    ``classes``, in which case a MissingClassError is raised.
    """
    if classes is not None:
        missing = [k for k in classes if counts.get(k, 0) < 1]
        if missing:
            raise MissingClassError(f"no training examples for classes {missing}")
        return {k: 1.0 / counts[k] for k in classes}
    return {k: 1.0 / n for k, n in counts.items() if n >= 1}


@dataclass
class TrainReport:
    records: list = field(default_factory=list)

    @property
    def train_loss(self):
        return [r["train_loss"] for r in self.records]

    def series(self, key):
        return [r.get(key) for r in self.records]

    def to_jsonl(self, path, header: dict | None = None) -> None:
        with open(path, "w") as fh:
            if header is not None:
                fh.write(json.dumps(header, sort_keys=True) + "\n")
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


def predict_scores(model, patches, positions=None, batch_size: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(patches), batch_size):
        pos = positions[s:s + batch_size] if model.has_aux else None
        out.append(model.forward(patches[s:s + batch_size], pos, cache=False))
    return np.concatenate(out) if out else np.zeros((0, model.output_width), dtype=model.dtype)


def evaluate_pool(model, pool, batch_size: int = 256) -> dict:
    """Validation loss, pixel accuracy and the task metric on a patch pool."""
    from .evaluation import BinaryEval, confusion_matrix, max_f, orr_arr

    idx = np.arange(len(pool))
    patches, positions, labels, weights = pool.batch(idx)
    scores = predict_scores(model, patches, positions, batch_size)
    loss, _ = weighted_quadratic_loss(scores, encode_targets(labels, model.output_width, scores.dtype), weights)
    probs = scores_to_probs(scores)
    pred = probs.argmax(axis=1)
    cm = confusion_matrix(labels, pred, model.num_classes)
    orr, arr = orr_arr(cm)
    result = {"val_loss": loss, "val_accuracy": orr, "val_arr": arr}
    if model.output_width == 1:
        truths = labels == 1
        if truths.any() and not truths.all():
            result["val_maxf"] = max_f(BinaryEval(probs[:, 1], truths))[0]
        result["val_metric"] = result.get("val_maxf", orr)
    else:
        result["val_metric"] = orr
    return result


def train(model, pool, config: TrainConfig, validate=None, callbacks=(), log=None) -> TrainReport:
    """Run ``epochs * iterations_per_epoch`` SGD steps on samples from ``pool``.

    Mini-batches are drawn uniformly with replacement. ``validate(model)`` is
    called after each epoch and must return a dict of metrics; each callback
    receives the epoch record. Deterministic for a fixed ``config.seed``.

    Unless the model already carries one, the pool's per-channel pixel mean is
    stored as ``metadata["input_mean"]`` and subtracted from every patch.
    """
    if len(pool) == 0:
        raise DataError("training pool is empty")
    model.metadata.setdefault("input_mean", pool.channel_mean())
    rng = np.random.default_rng(config.seed)
    state = OptimizerState(model)
    report = TrainReport()
    width = model.output_width
    iteration = 0
    # overflow shows up as a non-finite loss and is reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            total = 0.0
            for _ in range(config.iterations_per_epoch):
                idx = rng.integers(0, len(pool), size=config.batch_size)
                patches, positions, labels, weights = pool.batch(idx)
                model.zero_grad()
                out = model.forward(patches, positions if model.has_aux else None, training=True, rng=rng)
                loss, grad = weighted_quadratic_loss(out, encode_targets(labels, width, out.dtype), weights)
                if not math.isfinite(loss):
                    raise DivergenceError(iteration, loss)
                model.backward(grad)
                sgd_step(model, state, config.learning_rate, config.momentum)
                total += loss
                iteration += 1
            record = {"epoch": epoch, "train_loss": total / config.iterations_per_epoch}
            if validate is not None:
                record.update(validate(model))
            record["wall_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
            report.records.append(record)
            if log is not None:
                log(record)
            for cb in callbacks:
                cb(record)
    return report


def config_hash(config: dict) -> str:
    import hashlib

    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
