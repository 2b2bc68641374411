"""Losses, the alternating multi-task schedule, the two-stage baseline, fine-tuning."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import (AdamState, Parameter, Tensor, adam_step, cast, clip, log, select, square,
                       tensor_sum, zero_grad)
from .network import ArchitectureMismatchError, SsdlModel, load_checkpoint
from .report import emit_report

VARIANTS = ("ori-scae", "ori-ssdl", "birads-scae", "birads-ssdl")
SCHEDULES = ("alternating", "joint")
LOG_COLUMNS = ("epoch", "loss_r", "loss_c", "train_acc", "wall_ms")
PROB_FLOOR = 1e-12


class TrainingError(ValueError):
    pass


@dataclass
class TrainConfig:
    lam: float = 0.5
    gamma: float = 1e-4
    lr: float = 3e-4
    batch_size: int = 16
    max_epochs: int = 100
    stop_window: int = 10
    stop_rel_tol: float = 1e-3
    seed: int = 0
    schedule: str = "alternating"
    variant: str = "birads-ssdl"

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise TrainingError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gamma < 0:
            raise TrainingError(f"gamma must be >= 0, got {self.gamma}")
        if not self.lr > 0:
            raise TrainingError(f"lr must be positive, got {self.lr}")
        if self.stop_window < 2:
            raise TrainingError(f"stop window must be >= 2, got {self.stop_window}")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise TrainingError("batch_size must be >= 1 and max_epochs >= 0")
        if self.schedule not in SCHEDULES:
            raise TrainingError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.variant not in VARIANTS:
            raise TrainingError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def uses_bfm(self) -> bool:
        return self.variant.startswith("birads")

    @property
    def two_stage(self) -> bool:
        return self.variant.endswith("scae")


@dataclass
class EpochRecord:
    epoch: int
    loss_r: float
    loss_c: float
    train_acc: float
    wall_ms: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    warm_start: bool = False
    stage1_epochs: int = 0
    stopped_early: bool = False

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    @property
    def loss_r(self) -> list[float]:
        return self.column("loss_r")

    @property
    def loss_c(self) -> list[float]:
        return self.column("loss_c")

    @property
    def train_acc(self) -> list[float]:
        return self.column("train_acc")

    def to_csv(self, path, include_wall: bool = True) -> None:
        """Write the per-epoch log; ``include_wall=False`` blanks wall time for byte-stable output."""
        rows = []
        for r in self.records:
            row = {c: getattr(r, c) for c in LOG_COLUMNS}
            if not include_wall:
                row["wall_ms"] = None
            rows.append(row)
        emit_report(rows, path, columns=LOG_COLUMNS)


# ---------------------------------------------------------------------- losses
def loss_reconstruction(x, x_hat: Tensor) -> Tensor:
    """Batch mean of the per-sample squared Euclidean distance, accumulated in float64."""
    x_data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if x_data.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x_data.shape} vs {x_hat.shape}")
    diff = cast(x_hat, np.float64) - Tensor(x_data.astype(np.float64))
    return tensor_sum(square(diff)) * (1.0 / x_data.shape[0])


def _one_hot(y, k: int = 2) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 1:
        if not np.isin(y, np.arange(k)).all():
            raise ValueError("integer labels must lie in {0, 1}")
        return np.eye(k)[y.astype(int)]
    if y.ndim != 2 or y.shape[1] != k:
        raise ValueError(f"labels must be (N,) ints or (N, {k}) one-hot, got {y.shape}")
    ok = np.isin(y, (0, 1)).all() and np.all(y.sum(axis=1) == 1)
    if not ok:
        raise ValueError("labels are not one-hot")
    return y.astype(np.float64)


def loss_classification(y, probs: Tensor) -> Tensor:
    """Mean of ``-log p[true class]`` with probabilities floored at 1e-12."""
    onehot = _one_hot(y, probs.shape[1])
    if onehot.shape != probs.shape:
        raise ValueError(f"shape mismatch: {onehot.shape} vs {probs.shape}")
    p = clip(cast(probs, np.float64), PROB_FLOOR, 1.0)
    picked = tensor_sum(log(p) * Tensor(onehot))
    return picked * (-1.0 / onehot.shape[0])


def regularizer(params) -> Tensor:
    """Sum of squared Frobenius norms of weight tensors; biases are skipped."""
    total = Tensor(np.zeros((), dtype=np.float64))
    for p in params:
        if isinstance(p, Parameter) and not p.name.endswith("/weight"):
            continue
        total = total + tensor_sum(square(cast(p, np.float64)))
    return total


def combined_objective(loss_c, loss_r, reg, lam: float, gamma: float):
    if not 0.0 <= lam <= 1.0:
        raise TrainingError(f"lambda must lie in [0, 1], got {lam}")
    if gamma < 0:
        raise TrainingError(f"gamma must be >= 0, got {gamma}")
    return loss_c * lam + loss_r * (1.0 - lam) + reg * gamma


def stop_check(history, window: int, tol: float) -> bool:
    """True once the mean of the last ``window`` values stops moving relative to the window before."""
    history = list(history)
    if len(history) < 2 * window:
        return False
    last = float(np.mean(history[-window:]))
    prev = float(np.mean(history[-2 * window:-window]))
    return abs(last - prev) / max(prev, 1e-12) < tol


# ------------------------------------------------------------------- stepping
def _scalar(t: Tensor) -> float:
    return float(t.data)


def _classification_step(model, x, y, weight, gamma, opt) -> tuple[float, float]:
    params = model.encoder_parameters() + model.classifier_parameters()
    zero_grad(model.parameters())
    probs = model.classify(model.encode(x))
    lc = loss_classification(y, probs)
    obj = lc * weight + regularizer(params) * gamma
    obj.backward()
    adam_step(params, opt)
    correct = float(np.mean(probs.data.argmax(axis=1) == y))
    return _scalar(lc), correct


def _reconstruction_step(model, x, weight, gamma, opt) -> float:
    params = model.encoder_parameters() + model.decoder_parameters()
    zero_grad(model.parameters())
    lr = loss_reconstruction(x, model.decode(model.encode(x)))
    obj = lr * weight + regularizer(params) * gamma
    obj.backward()
    adam_step(params, opt)
    return _scalar(lr)


def _joint_step(model, x_lab, y, x_unl, lam, gamma, opt) -> tuple[float, float]:
    groups = list(model.encoder_parameters())
    if lam > 0:
        groups += model.classifier_parameters()
    if lam < 1:
        groups += model.decoder_parameters()
    zero_grad(model.parameters())
    x_all = x_lab if x_unl is None or len(x_unl) == 0 else np.concatenate([x_lab, x_unl])
    h = model.encode(x_all)
    n = len(x_lab)
    probs = model.classify(select(h, slice(0, n)) if len(x_all) > n else h)
    lc = loss_classification(y, probs)
    lr = loss_reconstruction(x_all, model.decode(h))
    obj = combined_objective(lc, lr, regularizer(groups), lam, gamma)
    obj.backward()
    adam_step(groups, opt)
    return _scalar(lc), _scalar(lr)


def train_accuracy(model: SsdlModel, x, y) -> float:
    probs = model.predict_proba(x)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(y)))


def _check_data(x, y):
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y)
    if len(x) == 0:
        raise TrainingError("labeled set is empty")
    if len(x) != len(y):
        raise TrainingError(f"{len(x)} images but {len(y)} labels")
    if x.ndim == 3:
        x = x[:, None]
    return x, y.astype(np.int64)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def ssdl_fit(model: SsdlModel, x, y, cfg: TrainConfig, x_unlabeled=None,
             log: TrainLog | None = None, track_accuracy: bool = True) -> TrainLog:
    """Multi-task training of the shared encoder.

    Alternating schedule, per batch: a classification step on
    ``lam * loss_c + gamma * R`` over encoder and classifier, then a
    reconstruction step on ``(1 - lam) * loss_r + gamma * R`` over encoder and
    decoder, each with its own Adam moments. Unlabeled images only join the
    reconstruction step. A step whose task weight is zero is skipped. The
    joint schedule takes one step on the full weighted objective instead.
    Optimiser state always starts fresh.

    Stops when the windowed mean of ``loss_r`` settles (``stop_check``) or at
    ``max_epochs``.
    """
    cfg.validate()
    x, y = _check_data(x, y)
    xu = None
    if x_unlabeled is not None and len(x_unlabeled):
        xu = np.asarray(x_unlabeled, dtype=np.float32)
        if xu.ndim == 3:
            xu = xu[:, None]
    log = log if log is not None else TrainLog()
    # each task keeps its own moments so the large reconstruction gradients
    # do not shrink the classification steps on the shared encoder
    opt_c = AdamState(lr=cfg.lr)
    opt_r = AdamState(lr=cfg.lr) if cfg.schedule == "alternating" else opt_c
    rng = np.random.default_rng(cfg.seed)
    model.reseed(cfg.seed + 7919)
    do_cls = cfg.lam > 0
    do_rec = cfg.lam < 1
    monitor = "loss_r" if do_rec else "loss_c"
    start_epoch = len(log.records)
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        model.train()
        batches = _batches(len(x), cfg.batch_size, rng)
        unl_chunks = (np.array_split(rng.permutation(len(xu)), len(batches))
                      if xu is not None else [None] * len(batches))
        lcs, lrs = [], []
        for idx, uidx in zip(batches, unl_chunks):
            xb, yb = x[idx], y[idx]
            xub = xu[uidx] if uidx is not None else None
            if cfg.schedule == "joint":
                lc, lr = _joint_step(model, xb, yb, xub, cfg.lam, cfg.gamma, opt_c)
                lcs.append(lc)
                lrs.append(lr)
                continue
            if do_cls:
                lc, _ = _classification_step(model, xb, yb, cfg.lam, cfg.gamma, opt_c)
                lcs.append(lc)
            if do_rec:
                xr = xb if xub is None or len(xub) == 0 else np.concatenate([xb, xub])
                lrs.append(_reconstruction_step(model, xr, 1.0 - cfg.lam, cfg.gamma, opt_r))
        acc = train_accuracy(model, x, y) if track_accuracy else math.nan
        log.records.append(EpochRecord(
            epoch=start_epoch + epoch + 1,
            loss_r=float(np.mean(lrs)) if lrs else math.nan,
            loss_c=float(np.mean(lcs)) if lcs else math.nan,
            train_acc=acc,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        ))
        history = [getattr(r, monitor) for r in log.records[start_epoch:]]
        if stop_check(history, cfg.stop_window, cfg.stop_rel_tol):
            log.stopped_early = True
            break
    model.eval()
    return log


def scae_fit_two_stage(model: SsdlModel, x, y, cfg: TrainConfig, x_unlabeled=None) -> TrainLog:
    """Reconstruction pretraining, then supervised fine-tuning of encoder + classifier.

    Stage 1 trains encoder and decoder on ``loss_r + gamma * R`` until the
    stopping rule fires. Stage 2 drops the decoder and minimises
    ``loss_c + gamma * R`` over encoder and classifier with a fresh optimiser,
    stopping on the windowed ``loss_c``. The whole autoencoder is trained end
    to end in stage 1 rather than layer by layer.
    """
    cfg.validate()
    x, y = _check_data(x, y)
    pool = x if x_unlabeled is None or len(x_unlabeled) == 0 else np.concatenate(
        [x, np.asarray(x_unlabeled, dtype=np.float32).reshape(-1, *x.shape[1:])])
    log = TrainLog()
    stage1 = replace(cfg, lam=0.0, schedule="alternating")
    # stage 1 needs no labels; zeros keep the shared loop happy and are never read
    ssdl_fit(model, pool, np.zeros(len(pool), dtype=np.int64), stage1, log=log,
             track_accuracy=False)
    log.stage1_epochs = len(log.records)
    stage2 = replace(cfg, lam=1.0, schedule="alternating")
    ssdl_fit(model, x, y, stage2, log=log)
    return log


def fit(model: SsdlModel, x, y, cfg: TrainConfig, x_unlabeled=None) -> TrainLog:
    """Dispatch on ``cfg.variant``: two-stage for ``*-scae``, multi-task for ``*-ssdl``."""
    if cfg.two_stage:
        return scae_fit_two_stage(model, x, y, cfg, x_unlabeled)
    return ssdl_fit(model, x, y, cfg, x_unlabeled)


def fine_tune(checkpoint, x, y, cfg: TrainConfig, x_unlabeled=None,
              expected=None) -> tuple[SsdlModel, TrainLog]:
    """Warm-start from a checkpoint (path or model) and continue with ``ssdl_fit``.

    The optimiser state starts fresh. Returns the tuned model and its log,
    which is flagged ``warm_start``.
    """
    if isinstance(checkpoint, SsdlModel):
        model = checkpoint
        if expected is not None and model.cfg != expected:
            raise ArchitectureMismatchError(f"model holds {model.cfg}, expected {expected}")
    else:
        model = load_checkpoint(checkpoint, expected=expected)
    log = TrainLog(warm_start=True)
    ssdl_fit(model, x, y, cfg, x_unlabeled=x_unlabeled, log=log)
    return model, log
