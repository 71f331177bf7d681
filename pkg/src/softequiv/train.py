"""Training loop: Adam with decoupled weight decay, cosine decay, early stopping.

One run owns its network.  Shuffling is re-seeded per epoch from the run
seed, so a (config, seed) pair reproduces its trace bitwise.  When a
projection-regularizer config is present its coefficients are rescaled once
at the configured epoch from the regularizer magnitudes accumulated so far;
a degenerate run (some group already exactly satisfied) skips the
adjustment instead of dividing by zero.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import regularize as rg
from . import tasks
from .nets import Network
from .tasks import Dataset

__all__ = [
    "TrainingDiverged",
    "TrainConfig",
    "RunResult",
    "cosine_lr",
    "adam_init",
    "adam_step",
    "train",
    "evaluate",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    minibatch: int
    max_epochs: int
    base_lr: float
    weight_decay: float = 0.0
    patience: int = 50
    eval_every: int = 10
    per: rg.PerConfig | None = None
    rpp_sigmas: tuple[float, float] | None = None
    seed: int = 0
    metric: str = "mse"
    equiv_inputs: int = 256
    equiv_samples: int = 64

    def __post_init__(self) -> None:
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.metric not in ("mse", "ade"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class RunResult:
    trace: list[dict]
    best_val: float
    test_metric: float
    equiv_errors: dict[str, float]
    wall_time: float
    stopped_epoch: int
    final_lambdas: dict[str, float] = field(default_factory=dict)
    final_regularizers: dict[str, float] = field(default_factory=dict)
    seed: int = 0


def cosine_lr(epoch: int, max_epochs: int, base_lr: float) -> float:
    """Half-cosine decay from base_lr at epoch 0 to zero at max_epochs."""
    if max_epochs <= 0:
        raise ValueError("max_epochs must be positive")
    if not 0 <= epoch <= max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {max_epochs}]")
    return base_lr * (1.0 + np.cos(np.pi * epoch / max_epochs)) / 2.0


def adam_init(params: dict) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
        "t": 0,
    }


def adam_step(params: dict, grads: dict, state: dict, lr: float, weight_decay: float = 0.0):
    """One bias-corrected Adam update with decoupled weight decay, in place."""
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for parameter {key}")
        m = state["m"][key]
        v = state["v"][key]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        if weight_decay:
            update = update + weight_decay * p
        p -= lr * update
    return params, state


def evaluate(net: Network, dataset: Dataset, metric: str = "mse") -> float:
    """Deterministic metric over a full split."""
    pred = net.forward(dataset.inputs)
    if metric == "mse":
        return tasks.mse(pred, dataset.targets)
    if metric == "ade":
        diff = (pred - dataset.targets).reshape(len(pred), -1, 3)
        return float(np.linalg.norm(diff, axis=2).mean())
    raise ValueError(f"unknown metric {metric!r}")


def _epoch_batches(n: int, minibatch: int, seed: int, epoch: int):
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    for start in range(0, n, minibatch):
        yield perm[start : start + minibatch]


def train(net: Network, splits: tuple[Dataset, Dataset, Dataset], cfg: TrainConfig) -> RunResult:
    """Optimize the network and capture the run trace; restores best-val weights."""
    train_ds, val_ds, test_ds = splits
    if train_ds.n == 0 or val_ds.n == 0 or test_ds.n == 0:
        raise ValueError("all three splits must be nonempty")
    t_start = time.perf_counter()
    params = net.params()
    state = adam_init(params)
    per = cfg.per
    has_prior = cfg.rpp_sigmas is not None and any(l.kind in ("rpp", "memlp") for l in net.layers)

    trace: list[dict] = []
    best_val = np.inf
    best_params = net.copy_params()
    evals_since_improve = 0
    stopped_epoch = cfg.max_epochs

    x_train, y_train = train_ds.inputs, train_ds.targets
    for epoch in range(1, cfg.max_epochs + 1):
        if per is not None and not per.adjusted and epoch == per.adjust_epoch:
            _, r_values = rg.per_total(net, per)
            try:
                per = rg.autotune(per, r_values)
            except ValueError:
                per = replace(per, adjusted=True)  # degenerate run: skip adjustment
            # The objective just changed; staleness before the adjustment
            # should not count against the post-adjustment fit.
            evals_since_improve = 0
        lr = cosine_lr(epoch - 1, cfg.max_epochs, cfg.base_lr)
        loss_sum = 0.0
        for idx in _epoch_batches(train_ds.n, cfg.minibatch, cfg.seed, epoch):
            extra = None
            if per is not None:
                extra = rg.per_grads(net, per)
            if has_prior:
                _, prior_grads = rg.network_prior(net, *cfg.rpp_sigmas)
                if extra is None:
                    extra = prior_grads
                else:
                    for k, v in prior_grads.items():
                        extra[k] = extra.get(k, 0) + v
            try:
                loss, grads = net.backward(x_train[idx], y_train[idx], extra_reg_grads=extra)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            adam_step(params, grads, state, lr, cfg.weight_decay)
            loss_sum += loss * len(idx)
        row = {"epoch": epoch, "train_loss": loss_sum / train_ds.n, "val_loss": "", "lr": lr}
        if per is not None:
            _, r_values = rg.per_total(net, per)
            for g in per.groups:
                row[f"R_{g.name}"] = r_values[g.name]
            for g in per.groups:
                row[f"lambda_{g.name}"] = per.lambdas[g.name]
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            val = evaluate(net, val_ds, "mse")
            row["val_loss"] = val
            if val < best_val:
                best_val = val
                best_params = net.copy_params()
                evals_since_improve = 0
            else:
                evals_since_improve += 1
            trace.append(row)
            if evals_since_improve >= cfg.patience:
                stopped_epoch = epoch
                break
        else:
            trace.append(row)

    net.set_params(best_params)
    test_metric = evaluate(net, test_ds, cfg.metric)

    equiv_errors: dict[str, float] = {}
    if net.groups:
        n_eq = min(cfg.equiv_inputs, test_ds.n)
        inputs = test_ds.inputs[:n_eq]
        for g in net.groups:
            rng = np.random.default_rng([cfg.seed, 7, zlib.crc32(g.name.encode())])
            equiv_errors[g.name] = tasks.model_equivariance_error(
                net, g, net.input_rep(g), net.output_rep(g), inputs, cfg.equiv_samples, rng
            )

    final_lambdas = dict(per.lambdas) if per is not None else {}
    final_regularizers = {}
    if per is not None:
        _, final_regularizers = rg.per_total(net, per)

    return RunResult(
        trace=trace,
        best_val=float(best_val),
        test_metric=float(test_metric),
        equiv_errors=equiv_errors,
        wall_time=time.perf_counter() - t_start,
        stopped_epoch=stopped_epoch,
        final_lambdas=final_lambdas,
        final_regularizers=final_regularizers,
        seed=cfg.seed,
    )
