"""AdamW with a step-decay schedule, and the mini-batch training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses
from .metrics import psnr


class NonFiniteGradientError(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    pass


DIVERGENCE_LIMIT = 1e8


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-8
    eps: float = 1e-8
    step_count: int = 0
    milestones: tuple[int, ...] = ()
    factor: float = 10.0

    @classmethod
    def create(cls, size: int, **kw) -> "OptimizerState":
        return cls(np.zeros(size), np.zeros(size), **kw)

    def lr_at(self, epoch: int) -> float:
        """Base rate divided by ``factor`` once for every milestone already reached."""
        return self.lr / self.factor ** sum(epoch >= e for e in self.milestones)


def step(state: OptimizerState, params: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
    """One bias-corrected adaptive update with decoupled weight decay."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or state.first_moment.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise NonFiniteGradientError(f"{bad} non-finite gradient entries at step {state.step_count + 1}")
    lr = state.lr if lr is None else lr
    state.step_count += 1
    state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * grad * grad
    mhat = state.first_moment / (1 - state.beta1**state.step_count)
    vhat = state.second_moment / (1 - state.beta2**state.step_count)
    return params - lr * (mhat / (np.sqrt(vhat) + state.eps) + state.weight_decay * params)


@dataclass
class Dataset:
    """Measurements ``y`` (N, m) through one operator, optional ground truth ``x``."""

    y: np.ndarray
    A: np.ndarray
    x: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        if self.y.shape[0] == 0:
            raise ValueError("dataset is empty")

    def __len__(self):
        return self.y.shape[0]


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)

    def append(self, **row):
        self.epochs.append(row)

    @property
    def losses(self):
        return [r["loss"] for r in self.epochs]


def train(f, data: Dataset, spec: losses.LossSpec, epochs: int, seed=0, batch_size=None, lr=1e-3,
          milestones=(), factor=10.0, val: Dataset | None = None, full_batch_exact=False, log=None):
    """Mini-batch AdamW on ``spec``; returns (trained reconstructor, history).

    ``data.weights`` turns each full-batch step into an exact weighted
    expectation (used with ``spec.exact`` for enumerated toys).
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    params = f.params.copy()
    state = OptimizerState.create(params.size, lr=lr, milestones=tuple(milestones), factor=factor)
    history = History()
    n = len(data)
    bs = n if batch_size is None else min(batch_size, n)
    for epoch in range(epochs):
        lr_now = state.lr_at(epoch)
        order = np.arange(n) if data.weights is not None else rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss_seed = int(rng.integers(2**63))
            lv = losses.evaluate(
                spec, f, data.y[idx], data.A, None if data.x is None else data.x[idx], loss_seed, params,
                None if data.weights is None else data.weights[idx],
            )
            if not np.isfinite(lv.value) or lv.value > DIVERGENCE_LIMIT:
                raise TrainingDiverged(f"loss {lv.value:.3g} at epoch {epoch}")
            params = step(state, params, lv.gradient, lr_now)
            total += lv.value * len(idx)
            count += len(idx)
        row = {"epoch": epoch + 1, "loss": total / count, "lr": lr_now}
        if val is not None and val.x is not None:
            row["val_psnr"] = float(np.mean(psnr(f(val.y, val.A, params), val.x)))
        history.append(**row)
        if log is not None:
            log(row)
    return f.with_params(params), history
