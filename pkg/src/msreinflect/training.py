"""Adadelta minibatch training with dev-accuracy early stopping."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datamodel import Instance, SymbolVocab, build_vocab
from .errors import EmptySplit, ShapeMismatch
from .model import ModelConfig, ModelParams, batch_loss, greedy_decode, init_params, make_batch, predict
from .numerics import Parameter, Tape, zero_grads

logger = logging.getLogger(__name__)

__all__ = [
    "AdadeltaState",
    "TrainConfig",
    "TrainHistory",
    "EpochRecord",
    "EarlyStopping",
    "adadelta_update",
    "train",
    "zero_grads",
    "dev_accuracy",
]


@dataclass
class TrainConfig:
    batch_size: int = 20
    max_epochs: int = 90
    patience: int = 20
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0
    early_stopping: bool = True
    # Global gradient-norm clip; None disables it.
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1 or self.patience > self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")


def adadelta_update(value: np.ndarray, grad: np.ndarray, acc_grad: np.ndarray, acc_delta: np.ndarray,
                    rho: float = 0.95, eps: float = 1e-6) -> np.ndarray:
    """One Adadelta step, in place on all four arrays; returns the delta."""
    if not (value.shape == grad.shape == acc_grad.shape == acc_delta.shape):
        raise ShapeMismatch(f"adadelta: {value.shape} {grad.shape} {acc_grad.shape} {acc_delta.shape}")
    acc_grad *= rho
    acc_grad += (1.0 - rho) * grad * grad
    delta = -(np.sqrt(acc_delta + eps) / np.sqrt(acc_grad + eps)) * grad
    acc_delta *= rho
    acc_delta += (1.0 - rho) * delta * delta
    value += delta
    return delta


class AdadeltaState:
    """Running averages of squared gradients and squared updates."""

    def __init__(self, params: Sequence[Parameter], rho: float = 0.95, eps: float = 1e-6):
        self.rho = rho
        self.eps = eps
        self.acc_grad = {p.name: np.zeros_like(p.value) for p in params}
        self.acc_delta = {p.name: np.zeros_like(p.value) for p in params}

    def step(self, params: Sequence[Parameter]) -> None:
        for p in params:
            adadelta_update(p.value, p.grad, self.acc_grad[p.name], self.acc_delta[p.name], self.rho, self.eps)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"rho": np.array(self.rho), "eps": np.array(self.eps)}
        for n in self.acc_grad:
            out[f"acc_grad/{n}"] = self.acc_grad[n].copy()
            out[f"acc_delta/{n}"] = self.acc_delta[n].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.rho = float(state["rho"])
        self.eps = float(state["eps"])
        for n in self.acc_grad:
            self.acc_grad[n][...] = state[f"acc_grad/{n}"]
            self.acc_delta[n][...] = state[f"acc_delta/{n}"]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tdev_acc\tseconds"]
        for r in self.records:
            lines.append(f"{r.epoch}\t{r.train_loss:.6f}\t{r.dev_acc:.4f}\t{r.seconds:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path, with_times: bool = True) -> None:
        text = self.to_tsv()
        if not with_times:
            text = "\n".join(l.rsplit("\t", 1)[0] for l in text.splitlines()) + "\n"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


class EarlyStopping:
    """Tracks the best dev score; only a strictly larger score counts."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record an epoch; returns True if training should stop now."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def dev_accuracy(instances: Sequence[Instance], params: ModelParams, chunk: int = 256) -> float:
    from .evaluation import accuracy

    if params.config.beam_width == 1:
        preds = []
        for i in range(0, len(instances), chunk):
            preds += greedy_decode(instances[i : i + chunk], params)
    else:
        preds = predict(instances, params)
    return accuracy([p.form for p in preds], [inst.target_form for inst in instances]).accuracy


def _clip(params: Sequence[Parameter], max_norm: float) -> None:
    norm = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if norm > max_norm:
        for p in params:
            p.grad *= max_norm / norm


def train(
    train_set: Sequence[Instance],
    dev_set: Sequence[Instance],
    model_config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    vocab: SymbolVocab | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Train from identity initialisation; returns the best-dev parameters."""
    if not train_set or not dev_set:
        raise EmptySplit("training and development sets must be non-empty")
    if any(inst.target_form is None for inst in list(train_set) + list(dev_set)):
        raise EmptySplit("every training/dev instance needs a gold target form")
    vocab = vocab or build_vocab(train_set)
    params = init_params(model_config, vocab)
    plist = list(params)
    opt = AdadeltaState(plist, train_config.rho, train_config.eps)
    rng = np.random.default_rng(train_config.seed)
    stopper = EarlyStopping(train_config.patience)
    history = TrainHistory()
    best = params.to_arrays()
    n = len(train_set)
    bs = train_config.batch_size

    for epoch in range(1, train_config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, bs):
            rows = [train_set[i] for i in order[lo : lo + bs]]
            batch = make_batch(rows, params)
            zero_grads(plist)
            tape = Tape()
            loss = batch_loss(tape, params, batch, np.full(len(rows), 1.0 / len(rows)))
            tape.backward(loss)
            if train_config.clip_norm is not None:
                _clip(plist, train_config.clip_norm)
            opt.step(plist)
            total += float(loss.value) * len(rows)
        acc = dev_accuracy(dev_set, params)
        rec = EpochRecord(epoch, total / n, acc, time.perf_counter() - t0)
        history.records.append(rec)
        logger.info("epoch %d loss %.4f dev %.4f (%.1fs)", epoch, rec.train_loss, acc, rec.seconds)
        if on_epoch is not None:
            on_epoch(rec)
        stop = stopper.update(epoch, acc)
        if stopper.best_epoch == epoch:
            best = params.to_arrays()
        if stop and train_config.early_stopping:
            break

    history.best_epoch = stopper.best_epoch
    params.load_arrays(best)
    return params, history
