"""Synthetic benchmark tasks, trajectory preprocessing, and task metrics.

Three task families:

  * moment of inertia -- five masses and positions in, a 3x3 matrix out,
    perturbed by one of five axis-selective error fields;
  * average cosine similarity of three particles -- rotation- and
    scaling-invariant target, perturbed by one of four error terms;
  * synthetic vehicle-style trajectories -- ballistic arcs under gravity and
    an optional constant wind, six past points in, six future points out.
    This generator is a stand-in for real exported motion data; the CSV
    import path accepts externally produced files in the same format.

The equivariance-error estimator at the bottom is shared between models and
ground-truth labeling functions: it Monte Carlo averages the group-action
commutation defect of a map, normalized by the product of output norms.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .groups import Group, Representation, parse_rep_spec, sample_element

__all__ = [
    "Dataset",
    "Trajectory",
    "NormalizationStats",
    "TaskFunction",
    "moment_of_inertia",
    "inertia_function",
    "gen_inertia",
    "avg_cos_sim",
    "cossim_function",
    "gen_cossim",
    "trajectory_function",
    "gen_trajectories",
    "center",
    "trajectory_center",
    "fit_normalization",
    "apply_normalization",
    "invert_normalization",
    "ade",
    "mse",
    "equivariance_error",
    "model_equivariance_error",
    "data_equivariance_error",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

GRAVITY = 9.8
TRAJ_DT = 0.4  # 2.5 Hz sampling
TRAJ_POINTS = 12  # six past + six future
SPEED_RANGE = (5.0, 20.0)
EQUIV_EPS = 1e-12
SYMMETRY_SCALE_ALPHA = (1.0, 1.0, 0.993)

_UNIT = {0: np.array([1.0, 0.0, 0.0]), 1: np.array([0.0, 1.0, 0.0]), 2: np.array([0.0, 0.0, 1.0])}


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    rep_in: str
    rep_out: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on sample count")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def rep_in_for(self, group: Group) -> Representation:
        return parse_rep_spec(self.rep_in, group)

    def rep_out_for(self, group: Group) -> Representation:
        return parse_rep_spec(self.rep_out, group)


@dataclass(frozen=True)
class Trajectory:
    past: np.ndarray  # (6, 3)
    future: np.ndarray  # (6, 3)

    def __post_init__(self) -> None:
        if self.past.shape != (6, 3) or self.future.shape != (6, 3):
            raise ValueError("a trajectory holds exactly six past and six future points")
        if not (np.isfinite(self.past).all() and np.isfinite(self.future).all()):
            raise ValueError("non-finite trajectory coordinates")


@dataclass(frozen=True)
class TaskFunction:
    """Ground-truth labeling function of a task plus its sampling law."""

    name: str
    rep_in: str
    rep_out: str
    sample_inputs: Callable[[int, np.random.Generator], np.ndarray]
    label: Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Moment of inertia
# ---------------------------------------------------------------------------


def moment_of_inertia(masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Inertia matrix sum_i m_i (x_i.x_i I - x_i x_i^T) for five particles."""
    m = np.asarray(masses, dtype=float).reshape(5)
    x = np.asarray(positions, dtype=float).reshape(5, 3)
    sq = np.sum(x * x, axis=1)
    return float(np.dot(m, sq)) * np.eye(3) - np.einsum("i,ij,ik->jk", m, x, x)


def _inertia_batch(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorized inertia matrices; m: (n,5), x: (n,5,3) -> (n,3,3)."""
    sq = np.sum(x * x, axis=2)
    trace_part = np.einsum("ni,ni->n", m, sq)[:, None, None] * np.eye(3)[None]
    outer_part = np.einsum("ni,nij,nik->njk", m, x, x)
    return trace_part - outer_part


def _inertia_error_field(inertia: np.ndarray, error_type: int) -> np.ndarray:
    """Perturbation matrices for a batch of inertia matrices (n,3,3)."""
    if error_type == 1:
        return np.zeros_like(inertia)
    if error_type in (2, 3, 4):
        e = _UNIT[error_type - 2]
        return -np.einsum("nij,j,k->nik", inertia, e, e)
    if error_type == 5:
        d = np.diag([1.0, -1.0, 1.0])
        return -0.3 * inertia @ d
    raise ValueError(f"inertia error type must be 1..5, got {error_type}")


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def inertia_function(error_type: int, error_scale: float = 1.0) -> TaskFunction:
    """Labeling function of the perturbed inertia task (inputs: 5 masses, 5 positions)."""
    _inertia_error_field(np.zeros((1, 3, 3)), error_type)  # validate early

    def label(inputs: np.ndarray) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        m = inputs[:, :5]
        x = inputs[:, 5:].reshape(-1, 5, 3)
        inertia = _inertia_batch(m, x)
        out = inertia + error_scale * _inertia_error_field(inertia, error_type)
        return out.reshape(-1, 9)

    def sample_inputs(n: int, rng: np.random.Generator) -> np.ndarray:
        m = _softplus(rng.standard_normal((n, 5)))
        x = rng.standard_normal((n, 5, 3))
        return np.hstack([m, x.reshape(n, 15)])

    return TaskFunction(f"inertia_t{error_type}", "5S+5V", "T2", sample_inputs, label)


def gen_inertia(n: int, error_type: int, error_scale: float, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("need at least one sample")
    task = inertia_function(error_type, error_scale)
    rng = np.random.default_rng(seed)
    inputs = task.sample_inputs(n, rng)
    targets = task.label(inputs)
    meta = {"task": "inertia", "error_type": error_type, "error_scale": error_scale, "seed": seed}
    return Dataset(inputs, targets, task.rep_in, task.rep_out, meta)


# ---------------------------------------------------------------------------
# Average cosine similarity
# ---------------------------------------------------------------------------


def avg_cos_sim(x1: np.ndarray, x2: np.ndarray, x3: np.ndarray) -> float:
    """Mean pairwise cosine similarity of three nonzero vectors."""
    vs = [np.asarray(v, dtype=float) for v in (x1, x2, x3)]
    norms = [np.linalg.norm(v) for v in vs]
    if min(norms) <= 1e-12:
        raise ValueError("cosine similarity undefined for a near-zero vector")
    pairs = [(0, 1), (1, 2), (0, 2)]
    return float(sum(np.dot(vs[i], vs[j]) / (norms[i] * norms[j]) for i, j in pairs) / 3.0)


def _avgcs_batch(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=2)
    cs = np.zeros(x.shape[0])
    for i, j in ((0, 1), (1, 2), (0, 2)):
        cs += np.einsum("nk,nk->n", x[:, i], x[:, j]) / (norms[:, i] * norms[:, j])
    return cs / 3.0


def _cossim_error(x: np.ndarray, error_type: int) -> np.ndarray:
    norms = np.linalg.norm(x, axis=2)
    if error_type == 1:
        return np.zeros(x.shape[0])
    if error_type == 2:
        return -norms.sum(axis=1) / 3.0
    axis_num = np.abs(x[:, :, 0]).sum(axis=1)
    axis_den = np.abs(x[:, :, 1]).sum(axis=1) + np.abs(x[:, :, 2]).sum(axis=1)
    ratio = axis_num / axis_den
    if error_type == 3:
        return -ratio
    if error_type == 4:
        return -norms.sum(axis=1) / 3.0 + ratio
    raise ValueError(f"cossim error type must be 1..4, got {error_type}")


def cossim_function(error_type: int) -> TaskFunction:
    _cossim_error(np.ones((1, 3, 3)), error_type)  # validate early

    def label(inputs: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=float)).reshape(-1, 3, 3)
        return (_avgcs_batch(x) + _cossim_error(x, error_type))[:, None]

    def sample_inputs(n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((n, 3, 3))
        for _ in range(1000):
            norms = np.linalg.norm(x, axis=2)
            denom = np.abs(x[:, :, 1]).sum(axis=1) + np.abs(x[:, :, 2]).sum(axis=1)
            bad = (norms.min(axis=1) < 1e-6) | (denom < 1e-9)
            if not bad.any():
                return x.reshape(n, 9)
            x[bad] = rng.standard_normal((int(bad.sum()), 3, 3))
        raise RuntimeError("degenerate-sample resampling cap exceeded")

    return TaskFunction(f"cossim_t{error_type}", "3V", "S", sample_inputs, label)


def gen_cossim(n: int, error_type: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("need at least one sample")
    task = cossim_function(error_type)
    rng = np.random.default_rng(seed)
    inputs = task.sample_inputs(n, rng)
    targets = task.label(inputs)
    meta = {"task": "cossim", "error_type": error_type, "seed": seed}
    return Dataset(inputs, targets, task.rep_in, task.rep_out, meta)


# ---------------------------------------------------------------------------
# Synthetic trajectories
# ---------------------------------------------------------------------------

_TIMES = np.arange(TRAJ_POINTS) * TRAJ_DT
_PAST_DESIGN = np.stack([np.ones(6), _TIMES[:6]], axis=1)  # columns: 1, t
_PAST_PINV = np.linalg.pinv(_PAST_DESIGN)


def _roll_arcs(p0: np.ndarray, v0: np.ndarray, accel: np.ndarray) -> np.ndarray:
    """Positions (n, 12, 3) of constant-acceleration motion sampled at 2.5 Hz."""
    t = _TIMES[None, :, None]
    return p0[:, None, :] + v0[:, None, :] * t + 0.5 * accel[None, None, :] * t * t


def trajectory_function(wind: np.ndarray | tuple = (0.0, 0.0, 0.0)) -> TaskFunction:
    """Noiseless labeling: fit (p0, v0) to the six past points, roll the future."""
    accel = np.array([0.0, 0.0, -GRAVITY]) + np.asarray(wind, dtype=float)

    def label(inputs: np.ndarray) -> np.ndarray:
        past = np.atleast_2d(np.asarray(inputs, dtype=float)).reshape(-1, 6, 3)
        ballistic = 0.5 * accel[None, None, :] * (_TIMES[:6, None] ** 2)[None]
        coeffs = np.einsum("kt,ntj->nkj", _PAST_PINV, past - ballistic)  # (n, 2, 3)
        p0, v0 = coeffs[:, 0], coeffs[:, 1]
        future = _roll_arcs(p0, v0, accel)[:, 6:]
        return future.reshape(-1, 18)

    def sample_inputs(n: int, rng: np.random.Generator) -> np.ndarray:
        p0, v0 = _sample_arc_start(n, rng)
        return _roll_arcs(p0, v0, accel)[:, :6].reshape(n, 18)

    return TaskFunction("trajectories", "6V", "6V", sample_inputs, label)


def _sample_arc_start(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    p0 = np.zeros((n, 3))
    p0[:, :2] = rng.normal(0.0, 10.0, size=(n, 2))
    p0[:, 2] = rng.uniform(0.0, 1.0, size=n)
    speed = rng.uniform(*SPEED_RANGE, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    v0 = np.zeros((n, 3))
    v0[:, 0] = speed * np.cos(phi)
    v0[:, 1] = speed * np.sin(phi)
    total_t = _TIMES[-1]
    v0[:, 2] = 0.5 * GRAVITY * total_t * rng.uniform(0.7, 1.1, size=n)
    return p0, v0


def gen_trajectories(n: int, wind: np.ndarray | tuple, noise: float, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("need at least one sample")
    wind = np.asarray(wind, dtype=float).reshape(3)
    accel = np.array([0.0, 0.0, -GRAVITY]) + wind
    rng = np.random.default_rng(seed)
    p0, v0 = _sample_arc_start(n, rng)
    points = _roll_arcs(p0, v0, accel)
    if noise:
        points = points + noise * rng.standard_normal(points.shape)
    meta = {"task": "trajectories", "wind": wind.tolist(), "noise": noise, "seed": seed}
    return Dataset(points[:, :6].reshape(n, 18), points[:, 6:].reshape(n, 18), "6V", "6V", meta)


# ---------------------------------------------------------------------------
# Centering and normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationStats:
    mode: str
    mu: np.ndarray | float
    sigma: np.ndarray | float
    alpha: np.ndarray

    def __post_init__(self) -> None:
        if self.mode not in ("scale_aware", "symmetry_aware", "symmetry_scale_aware"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        sig = np.asarray(self.sigma)
        if np.any(sig <= 0):
            raise ValueError("normalization scales must be positive")


def trajectory_center(traj: Trajectory, alpha: np.ndarray | tuple = (1.0, 1.0, 1.0)) -> np.ndarray:
    """The alpha-scaled mean of the six past points, the quantity centering removes."""
    return np.asarray(alpha, dtype=float) * traj.past.mean(axis=0)


def center(traj: Trajectory, alpha: np.ndarray | tuple = (1.0, 1.0, 1.0)) -> Trajectory:
    """Shift both past and future by alpha times the past mean."""
    c = trajectory_center(traj, alpha)
    return Trajectory(traj.past - c, traj.future - c)


def _alpha_for_mode(mode: str) -> np.ndarray:
    if mode == "symmetry_scale_aware":
        return np.array(SYMMETRY_SCALE_ALPHA)
    return np.ones(3)


def fit_normalization(train: list[Trajectory], mode: str) -> NormalizationStats:
    """Fit normalization statistics on the centered past points of a training set."""
    if not train:
        raise ValueError("cannot fit normalization on an empty training set")
    alpha = _alpha_for_mode(mode)
    pasts = np.stack([center(t, alpha).past for t in train])  # (n, 6, 3)
    pts = pasts.reshape(-1, 3)
    if mode == "scale_aware":
        mu = pts.mean(axis=0)
        sigma = np.sqrt(np.mean((pts - mu) ** 2, axis=0))
        if np.any(sigma <= 0):
            raise ValueError("zero variance in a coordinate; scale-aware stats undefined")
        return NormalizationStats(mode, mu, sigma, alpha)
    m = float(pts.mean())
    s = float(np.sqrt(np.mean(np.sum((pts - m) ** 2, axis=1)) / 3.0))
    if s <= 0:
        raise ValueError("zero pooled variance; symmetry-mode stats undefined")
    return NormalizationStats(mode, m, s, alpha)


def apply_normalization(traj: Trajectory, stats: NormalizationStats) -> Trajectory:
    """Center with the fitted alpha, then rescale.

    Scale-aware standardizes each coordinate; the symmetry modes divide by the
    pooled scale only, so the map commutes with every orthogonal action.
    """
    c = center(traj, stats.alpha)
    if stats.mode == "scale_aware":
        return Trajectory((c.past - stats.mu) / stats.sigma, (c.future - stats.mu) / stats.sigma)
    return Trajectory(c.past / stats.sigma, c.future / stats.sigma)


def invert_normalization(traj: Trajectory, stats: NormalizationStats, traj_center: np.ndarray) -> Trajectory:
    """Undo apply_normalization given the center that was removed."""
    if stats.mode == "scale_aware":
        past = traj.past * stats.sigma + stats.mu
        future = traj.future * stats.sigma + stats.mu
    else:
        past = traj.past * stats.sigma
        future = traj.future * stats.sigma
    return Trajectory(past + traj_center, future + traj_center)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def ade(pred: np.ndarray, truth: np.ndarray) -> float:
    """Average distance error over six forecast points."""
    p = np.asarray(pred, dtype=float).reshape(6, 3)
    t = np.asarray(truth, dtype=float).reshape(6, 3)
    return float(np.linalg.norm(p - t, axis=1).mean())


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean over samples of the squared error vector norm."""
    p = np.atleast_2d(np.asarray(pred, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    return float(np.mean(np.sum((p - t) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# Equivariance-error estimation
# ---------------------------------------------------------------------------


def equivariance_error(
    f: Callable[[np.ndarray], np.ndarray],
    group: Group,
    rep_in: Representation,
    rep_out: Representation,
    inputs: np.ndarray,
    n_g: int,
    rng: np.random.Generator,
) -> float:
    """Normalized commutation defect of a map under sampled group actions.

    Averages ||rho_out(g) f(x) - f(rho_in(g) x)|| divided by the product of
    the two output norms over all inputs and n_g sampled elements.
    """
    if n_g < 1:
        raise ValueError("need at least one group sample")
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    fx = np.atleast_2d(f(x))
    total = 0.0
    for _ in range(n_g):
        g = sample_element(group, rng)
        lhs = fx @ rep_out.lift(g).T
        rhs = np.atleast_2d(f(x @ rep_in.lift(g).T))
        num = np.linalg.norm(lhs - rhs, axis=1)
        den = np.linalg.norm(lhs, axis=1) * np.linalg.norm(rhs, axis=1) + EQUIV_EPS
        total += float(np.mean(num / den))
    return total / n_g


def model_equivariance_error(
    net,
    group: Group,
    rep_in: Representation,
    rep_out: Representation,
    inputs: np.ndarray,
    n_g: int,
    rng: np.random.Generator,
) -> float:
    return equivariance_error(net.forward, group, rep_in, rep_out, inputs, n_g, rng)


def data_equivariance_error(task: TaskFunction, group: Group, n: int, n_g: int, seed: int) -> float:
    """The estimator applied to a task's ground-truth labeling function."""
    rng = np.random.default_rng(seed)
    inputs = task.sample_inputs(n, rng)
    rep_in = parse_rep_spec(task.rep_in, group)
    rep_out = parse_rep_spec(task.rep_out, group)
    return equivariance_error(task.label, group, rep_in, rep_out, inputs, n_g, rng)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def write_dataset_csv(ds: Dataset, path: str) -> None:
    d, k = ds.inputs.shape[1], ds.targets.shape[1]
    header = [f"in_{i}" for i in range(d)] + [f"out_{i}" for i in range(k)]
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row_in, row_out in zip(ds.inputs, ds.targets):
            writer.writerow([repr(float(v)) for v in row_in] + [repr(float(v)) for v in row_out])


def read_dataset_csv(path: str, rep_in: str, rep_out: str, meta: dict | None = None) -> Dataset:
    with open(path, encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("in_"))
        k = len(header) - d
        if d == 0 or k == 0 or any(not h.startswith(("in_", "out_")) for h in header):
            raise ValueError(f"{path}: not a dataset CSV (header {header[:4]}...)")
        rows = [[float(v) for v in row] for row in reader]
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :d], arr[:, d:], rep_in, rep_out, dict(meta or {}))


def write_trajectory_csv(trajs: list[Trajectory], path: str, split: str = "train") -> None:
    write_trajectory_splits_csv({split: trajs}, path)


def write_trajectory_splits_csv(splits: dict[str, list[Trajectory]], path: str) -> None:
    """Write several splits into one trajectory CSV with global trajectory ids."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "traj_id", "split"])
        tid = 0
        for split, trajs in splits.items():
            for traj in trajs:
                pts = np.vstack([traj.past, traj.future])
                for t, p in enumerate(pts):
                    writer.writerow(
                        [t, repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), tid, split]
                    )
                tid += 1


def read_trajectory_csv(path: str) -> dict[str, list[Trajectory]]:
    """Read trajectories grouped by split; rows may arrive in any order."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    buckets: dict[tuple[str, int], dict[int, np.ndarray]] = {}
    with open(path, encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "x", "y", "z", "traj_id", "split"]:
            raise ValueError(f"{path}: not a trajectory CSV")
        for row in reader:
            t, x, y, z, tid, split = int(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]), row[5]
            buckets.setdefault((split, tid), {})[t] = np.array([x, y, z])
    out: dict[str, list[Trajectory]] = {}
    for (split, tid), pts in sorted(buckets.items()):
        if sorted(pts) != list(range(TRAJ_POINTS)):
            raise ValueError(f"trajectory {tid} in split {split!r} lacks twelve points")
        stacked = np.stack([pts[t] for t in range(TRAJ_POINTS)])
        out.setdefault(split, []).append(Trajectory(stacked[:6], stacked[6:]))
    return out


def dataset_from_trajectories(trajs: list[Trajectory], stats: NormalizationStats | None, meta: dict) -> Dataset:
    """Flatten (optionally normalized) trajectories into a 6V -> 6V dataset."""
    if stats is not None:
        trajs = [apply_normalization(t, stats) for t in trajs]
    inputs = np.stack([t.past.reshape(18) for t in trajs])
    targets = np.stack([t.future.reshape(18) for t in trajs])
    return Dataset(inputs, targets, "6V", "6V", meta)
