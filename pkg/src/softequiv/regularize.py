"""Equivariance regularizers, coefficient auto-tuning, and the error bound.

The projection regularizer for one group charges half the squared distance
from a layer's weight (and bias) to the group's equivariant (invariant)
subspace, scaled by a per-group coefficient.  Coefficients start equal and
are rescaled once, early in training, by the ratio of the smallest per-group
regularizer sum to each group's own sum raised to a calibration power.

``equivariance_bound`` evaluates a certified recursion: the end-to-end
equivariance defect of an S-layer network with equivariant activations is at
most a weighted sum of the per-layer subspace distances, with weights built
from analytic representation-norm bounds and a user-supplied envelope U for
the quantities that have no analytic bound.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import basis as eqb
from .groups import Group, sample_element
from .nets import Network

__all__ = [
    "PerConfig",
    "BoundInputs",
    "per_term",
    "per_term_grads",
    "per_total",
    "per_grads",
    "rpp_prior",
    "rpp_prior_grads",
    "network_prior",
    "autotune",
    "equivariance_bound",
    "mc_equivariance_defect",
]


@dataclass(frozen=True)
class PerConfig:
    """Per-group regularization coefficients and the one-shot adjustment plan."""

    groups: tuple[Group, ...]
    lambdas: dict[str, float]
    gamma: float
    adjust_epoch: int
    adjusted: bool = False

    def __post_init__(self) -> None:
        if not self.groups:
            raise ValueError("PerConfig requires at least one group")
        for g in self.groups:
            lam = self.lambdas.get(g.name)
            if lam is None or lam <= 0:
                raise ValueError(f"positive lambda required for group {g.name}")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.adjust_epoch < 0:
            raise ValueError("adjust_epoch must be >= 0")

    @staticmethod
    def uniform(groups, lambda_init: float, gamma: float, adjust_epoch: int) -> "PerConfig":
        groups = tuple(groups)
        return PerConfig(groups, {g.name: float(lambda_init) for g in groups}, gamma, adjust_epoch)


@dataclass(frozen=True)
class BoundInputs:
    """Envelope constants for the equivariance bound: see the module docstring."""

    U: float
    L: float
    S: int

    def __post_init__(self) -> None:
        if not (self.U > 0 and np.isfinite(self.U)):
            raise ValueError("U must be positive and finite")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.S < 1:
            raise ValueError("S must be >= 1")


def _vec(m: np.ndarray) -> np.ndarray:
    return m.reshape(-1, order="F")


def _unvec(v: np.ndarray, n_out: int, n_in: int) -> np.ndarray:
    return v.reshape(n_out, n_in, order="F")


def per_term(
    W: np.ndarray,
    b: np.ndarray,
    q_basis: eqb.EquivariantBasis,
    r_basis: eqb.EquivariantBasis,
    lam: float,
) -> float:
    """(lam/2) times the squared subspace distances of one layer's W and b."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rw = eqb.residual_norm(q_basis, _vec(np.asarray(W, dtype=float)))
    rb = eqb.residual_norm(r_basis, np.asarray(b, dtype=float))
    return 0.5 * lam * (rw * rw + rb * rb)


def per_term_grads(
    W: np.ndarray,
    b: np.ndarray,
    q_basis: eqb.EquivariantBasis,
    r_basis: eqb.EquivariantBasis,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of per_term: lam * (I - Q Q^T) vec(W) and lam * (I - R R^T) b."""
    W = np.asarray(W, dtype=float)
    gw = lam * eqb.residual(q_basis, _vec(W))
    gb = lam * eqb.residual(r_basis, np.asarray(b, dtype=float))
    return _unvec(gw, W.shape[0], W.shape[1]), gb


def _standard_layers(net: Network):
    for i, layer in enumerate(net.layers):
        if layer.kind != "standard":
            raise ValueError(
                "the projection regularizer applies to unconstrained layers only; "
                f"layer {i} has kind {layer.kind!r}"
            )
        yield i, layer


def per_total(net: Network, cfg: PerConfig) -> tuple[float, dict[str, float]]:
    """Total weighted regularizer and the unweighted per-group sums.

    The second return value leaves every lambda factored out so the
    auto-tuning step can compare groups on equal footing.
    """
    unweighted = {g.name: 0.0 for g in cfg.groups}
    for i, layer in _standard_layers(net):
        vw = _vec(layer.W)
        for g in cfg.groups:
            q, r = net.ensure_bases(i, (g,))
            rw = eqb.residual_norm(q, vw)
            rb = eqb.residual_norm(r, layer.b)
            unweighted[g.name] += 0.5 * (rw * rw + rb * rb)
    total = sum(cfg.lambdas[name] * val for name, val in unweighted.items())
    return total, unweighted


def per_grads(net: Network, cfg: PerConfig) -> dict[tuple[int, str], np.ndarray]:
    """Gradients of the total weighted regularizer for every standard layer."""
    grads: dict[tuple[int, str], np.ndarray] = {}
    for i, layer in _standard_layers(net):
        vw = _vec(layer.W)
        gw = np.zeros_like(vw)
        gb = np.zeros_like(layer.b)
        for g in cfg.groups:
            q, r = net.ensure_bases(i, (g,))
            lam = cfg.lambdas[g.name]
            gw += lam * eqb.residual(q, vw)
            gb += lam * eqb.residual(r, layer.b)
        grads[(i, "W")] = _unvec(gw, layer.n_out, layer.n_in)
        grads[(i, "b")] = gb
    return grads


def rpp_prior(
    W1: np.ndarray,
    b1: np.ndarray,
    W2: np.ndarray,
    b2: np.ndarray,
    sigma1: float,
    sigma2: float,
) -> float:
    """Gaussian-prior penalty: main pathway at sigma1, residual at sigma2."""
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("prior scales must be positive")
    main = float(np.sum(np.square(W1)) + np.sum(np.square(b1)))
    resid = float(np.sum(np.square(W2)) + np.sum(np.square(b2)))
    return main / (2.0 * sigma1**2) + resid / (2.0 * sigma2**2)


def rpp_prior_grads(W1, b1, W2, b2, sigma1: float, sigma2: float):
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("prior scales must be positive")
    return W1 / sigma1**2, b1 / sigma1**2, W2 / sigma2**2, b2 / sigma2**2


def network_prior(net: Network, sigma1: float, sigma2: float) -> tuple[float, dict[tuple[int, str], np.ndarray]]:
    """Sum of pathway priors over rpp and memlp layers, with gradients.

    For memlp layers the all-groups term plays the main pathway and the
    exact-subset term the residual, mirroring the rpp roles.
    """
    total = 0.0
    grads: dict[tuple[int, str], np.ndarray] = {}
    for i, layer in enumerate(net.layers):
        if layer.kind == "rpp":
            total += rpp_prior(layer.W1, layer.b1, layer.W2, layer.b2, sigma1, sigma2)
            g1, gb1, g2, gb2 = rpp_prior_grads(layer.W1, layer.b1, layer.W2, layer.b2, sigma1, sigma2)
            grads[(i, "W1")], grads[(i, "b1")] = g1, gb1
            grads[(i, "W2")], grads[(i, "b2")] = g2, gb2
        elif layer.kind == "memlp":
            total += rpp_prior(layer.theta_all, layer.beta_all, layer.theta_exact, layer.beta_exact, sigma1, sigma2)
            ga, gba, ge, gbe = rpp_prior_grads(
                layer.theta_all, layer.beta_all, layer.theta_exact, layer.beta_exact, sigma1, sigma2
            )
            grads[(i, "theta_all")], grads[(i, "beta_all")] = ga, gba
            grads[(i, "theta_exact")], grads[(i, "beta_exact")] = ge, gbe
    return total, grads


def autotune(cfg: PerConfig, r_values: dict[str, float]) -> PerConfig:
    """Rescale each lambda by (min R / R)^gamma; the smallest-R group keeps its value."""
    if cfg.adjusted:
        raise ValueError("coefficients were already adjusted once this run")
    values = [r_values[g.name] for g in cfg.groups]
    if any(v <= 0 for v in values):
        raise ValueError("non-positive regularizer value; skip adjustment for this run")
    r_min = min(values)
    new_lambdas = {
        g.name: cfg.lambdas[g.name] * (r_min / r_values[g.name]) ** cfg.gamma for g in cfg.groups
    }
    return replace(cfg, lambdas=new_lambdas, adjusted=True)


# ---------------------------------------------------------------------------
# Equivariance-error bound
# ---------------------------------------------------------------------------


def equivariance_bound(net: Network, group: Group, inputs: BoundInputs) -> float:
    """Certified upper bound on sup over inputs and group elements of the defect.

    Valid whenever the network inputs satisfy ||x|| <= U, every layer has
    ||W||_F <= U and ||b|| <= U (checked), activations are group-equivariant
    with Lipschitz constant <= L, and group elements come from the catalog
    sampler (whose analytic operator-norm bounds the lifts inherit).
    """
    layers = net.layers
    if inputs.S != len(layers):
        raise ValueError(f"BoundInputs.S = {inputs.S} but the network has {len(layers)} layers")
    reps = net.layer_reps(group)
    x_bound = inputs.U
    total = 0.0
    for idx, (layer, (rep_in, rep_out)) in enumerate(zip(layers, reps)):
        W, b = layer.realize()
        wf = float(np.linalg.norm(W))
        bn = float(np.linalg.norm(b))
        if wf > inputs.U + 1e-9 or bn > inputs.U + 1e-9:
            raise ValueError(
                f"layer {idx} norms (||W||_F={wf:.3g}, ||b||={bn:.3g}) exceed the stated bound U={inputs.U:.3g}"
            )
        rho_in = rep_in.op_norm_bound()
        rho_out = rep_out.op_norm_bound()
        q, r = net.ensure_bases(idx, (group,))
        rw = eqb.residual_norm(q, _vec(W))
        rb = eqb.residual_norm(r, b)
        c1 = (rho_out + rho_in) * x_bound
        c2 = rho_out + 1.0
        total = c1 * rw + c2 * rb + inputs.L * inputs.U * total
        x_bound = inputs.U * x_bound + inputs.U
    return float(total)


def mc_equivariance_defect(
    net: Network,
    group: Group,
    inputs: np.ndarray,
    n_g: int,
    rng: np.random.Generator,
) -> float:
    """Empirical counterpart of the bound: max raw defect over sampled (x, g)."""
    rep_in = net.input_rep(group)
    rep_out = net.output_rep(group)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    fx = net.forward(x)
    worst = 0.0
    for _ in range(n_g):
        g = sample_element(group, rng)
        lhs = fx @ rep_out.lift(g).T
        rhs = net.forward(x @ rep_in.lift(g).T)
        worst = max(worst, float(np.linalg.norm(lhs - rhs, axis=1).max()))
    return worst
