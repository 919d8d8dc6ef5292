"""Training loop for the operator surrogate: AdamW, step-decay schedule, best-test snapshot."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np

from . import io
from .ifno import IfnoConfig, IfnoModel, backward, forward, init_model, predict

log = logging.getLogger(__name__)

LOSSES = ("relative_l2", "mse")
TRANSFORMS = ("log1p", "identity")
HISTORY_HEADER = ("epoch", "lr", "train_loss", "test_loss")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    gamma: float = 0.5
    n_step: int = 100
    weight_decay: float = 1e-5
    epochs: int = 500
    batch_size: int = 2
    seed: int = 0
    loss: str = "relative_l2"
    target_transform: str = "log1p"
    # random square symmetries of (indicator, phase, target); coordinates stay fixed
    augment: bool = False

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.n_step < 1:
            raise ValueError("n_step must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.target_transform not in TRANSFORMS:
            raise ValueError(f"target_transform must be one of {TRANSFORMS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


class TrainingData(Protocol):
    """What the trainer needs from a dataset (see :class:`mmmdesign.acquire.Dataset`)."""
    inputs: np.ndarray      # (S, 4, G, G)
    energies: np.ndarray    # (S, G, G) raw |E|^2
    scale: float
    train_idx: np.ndarray
    test_idx: np.ndarray


def learning_rate(i: int, cfg: TrainConfig) -> float:
    if i < 0:
        raise ValueError("iteration must be >= 0")
    return cfg.lr0 * cfg.gamma ** (i // cfg.n_step)


def to_target(energy: np.ndarray, scale: float, transform: str = "log1p") -> np.ndarray:
    if transform == "log1p":
        return np.log1p(np.asarray(energy) / scale)
    return np.asarray(energy)


def from_target(u: np.ndarray, scale: float, transform: str = "log1p") -> np.ndarray:
    if transform == "log1p":
        return scale * np.expm1(u)
    return np.asarray(u)


def loss_and_grad(pred: np.ndarray, target: np.ndarray, kind: str = "relative_l2") -> tuple[float, np.ndarray]:
    """Batch loss and its gradient with respect to ``pred``; both shaped ``(B, ...)``."""
    diff = pred.astype(np.float64) - target
    b = len(diff)
    if kind == "mse":
        return float(np.mean(diff * diff)), (2.0 * diff / diff.size).astype(pred.dtype)
    axes = tuple(range(1, diff.ndim))
    dn = np.sqrt(np.sum(diff * diff, axis=axes))
    tn = np.sqrt(np.sum(target.astype(np.float64) ** 2, axis=axes))
    tn = np.where(tn > 0, tn, 1.0)
    per = dn / tn
    safe = np.where(dn > 0, dn, 1.0)
    shape = (b,) + (1,) * len(axes)
    grad = diff / (safe * tn).reshape(shape) / b
    return float(per.mean()), grad.astype(pred.dtype)


def relative_l2(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample ``||pred - target|| / ||target||``."""
    p, t = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    axes = tuple(range(1, p.ndim))
    return np.sqrt(np.sum((p - t) ** 2, axis=axes) / np.sum(t * t, axis=axes))


class AdamW:
    """Adam with decoupled weight decay. Complex tensors are updated as interleaved real pairs."""

    def __init__(self, params: dict[str, np.ndarray], weight_decay: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(_real_view(v).shape) for k, v in params.items()}
        self.v = {k: np.zeros(_real_view(v).shape) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            pv, g = _real_view(p), _real_view(grads[k]).astype(np.float64)
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            upd = lr * self.weight_decay * pv + lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            pv -= upd.astype(pv.dtype)


def _real_view(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a) if not a.flags.c_contiguous else a
    if np.iscomplexobj(a):
        return a.view(np.float32 if a.dtype == np.complex64 else np.float64)
    return a


def dihedral(inputs: np.ndarray, targets: np.ndarray, codes) -> tuple[np.ndarray, np.ndarray]:
    """Apply one of the eight symmetries of the square per sample.

    ``codes`` holds integers in ``[0, 8)``: bit 0 flips rows, bit 1 flips
    columns, bit 2 transposes. The coordinate channels (0 and 1) are left as
    they are, so the result is a new sample on the same grid. This is only
    valid when the labelling map commutes with these symmetries, which holds
    for the synthetic oracle (isotropic kernel, symmetric gap metric).
    """
    x = inputs.copy()
    y = targets.copy()
    for i, code in enumerate(codes):
        for a in (x[i, 2:], y[i]):
            v = a
            if code & 1:
                v = v[..., ::-1, :]
            if code & 2:
                v = v[..., :, ::-1]
            if code & 4:
                v = np.swapaxes(v, -1, -2)
            a[...] = v.copy()
    return x, y


def evaluate(model: IfnoModel, data: TrainingData, indices, transform: str = "log1p",
             batch_size: int = 8) -> np.ndarray:
    """Per-sample relative L2 in target space on ``indices``."""
    idx = np.asarray(indices, dtype=int)
    if len(idx) == 0:
        return np.zeros(0)
    pred = predict(model, data.inputs[idx], batch_size)[:, 0]
    return relative_l2(pred, to_target(data.energies[idx], data.scale, transform))


def train(data: TrainingData, ifno_config: IfnoConfig, cfg: TrainConfig,
          init: IfnoModel | None = None, dtype=np.float32) -> tuple[IfnoModel, list[dict]]:
    """Fit the surrogate; returns the snapshot with the lowest test loss and the per-epoch history.

    The schedule is stepped once per epoch. Without a test split the snapshot is
    chosen by training loss instead.
    """
    model = init.copy() if init is not None else init_model(ifno_config, cfg.seed, dtype)
    if model.config != ifno_config:
        raise ValueError("initial model config does not match ifno_config")
    history: list[dict] = []
    if cfg.epochs == 0:
        return model, history
    train_idx = np.asarray(data.train_idx, dtype=int)
    test_idx = np.asarray(data.test_idx, dtype=int)
    if len(train_idx) == 0:
        raise ValueError("empty training split")
    targets = to_target(data.energies, data.scale, cfg.target_transform).astype(model.dtype)[:, None]
    opt = AdamW(model.params, cfg.weight_decay)
    best, best_loss = model.copy(), math.inf
    if init is not None and len(test_idx):
        # a warm start competes with its own fine-tuned snapshots
        best_loss, _ = loss_and_grad(predict(model, data.inputs[test_idx], cfg.batch_size),
                                     targets[test_idx], cfg.loss)
    for epoch in range(cfg.epochs):
        lr = learning_rate(epoch, cfg)
        rng = np.random.default_rng([cfg.seed, epoch])
        order = train_idx[rng.permutation(len(train_idx))]
        codes = rng.integers(0, 8, size=len(order)) if cfg.augment else None
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            x, y = data.inputs[batch], targets[batch]
            if codes is not None:
                x, y = dihedral(x, y, codes[start:start + cfg.batch_size])
            out, cache = forward(model, x)
            loss, g = loss_and_grad(out, y, cfg.loss)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            grads, _ = backward(model, cache, g)
            opt.step(model.params, grads, lr)
            total += loss * len(batch)
            count += len(batch)
        train_loss = total / count
        if len(test_idx):
            pred = predict(model, data.inputs[test_idx], cfg.batch_size)
            test_loss, _ = loss_and_grad(pred, targets[test_idx], cfg.loss)
        else:
            test_loss = math.nan
        if not math.isfinite(train_loss) or (len(test_idx) and not math.isfinite(test_loss)):
            raise DivergenceError(epoch, train_loss if not math.isfinite(train_loss) else test_loss)
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss, "test_loss": test_loss})
        score = test_loss if len(test_idx) else train_loss
        if score < best_loss:
            best, best_loss = model.copy(), score
        log.info("epoch %d lr %.3g train %.4f test %.4f", epoch, lr, train_loss, test_loss)
    return best, history


def shallow_to_deep(model: IfnoModel, depth: int, data: TrainingData | None = None,
                    transform: str = "log1p") -> IfnoModel:
    """Reuse shared-layer parameters at a larger depth; logs the promoted test loss if data is given."""
    if depth <= model.config.depth:
        raise ValueError(f"target depth {depth} must exceed current depth {model.config.depth}")
    deep = model.with_depth(depth)
    if data is not None and len(data.test_idx):
        loss = float(evaluate(deep, data, data.test_idx, transform).mean())
        log.info("promoted depth %d -> %d, test relative L2 %.4f", model.config.depth, depth, loss)
    return deep


def write_history(path, history: list[dict]) -> None:
    io.write_csv(path, HISTORY_HEADER, ([h[k] for k in HISTORY_HEADER] for h in history))
