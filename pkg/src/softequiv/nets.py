"""Dense feedforward networks with interchangeable linear-layer kinds.

Four layer kinds share one forward/backward interface:

  * ``standard``  -- plain W x + b (the kind the soft-equivariance
    regularizer acts on),
  * ``emlp``      -- weights parameterized inside an equivariant subspace,
    vec(W) = Q theta and b = R beta,
  * ``rpp``       -- an equivariant pathway plus a free residual pathway,
    vec(W) = Q Q^T vec(W1) + vec(W2),
  * ``memlp``     -- sum of two subspace-parameterized terms, one over the
    joint subspace of an exact-symmetry subset of groups and one over the
    joint subspace of all candidate groups.

Hidden features are laid out as ``[scalars | vectors | rank-2 tensors |
gates]`` so the gated nonlinearity can scale each non-scalar object by a
sigmoid of its companion gate scalar, which commutes with every catalog
group action.  All math is float64 numpy; batches are rows.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import basis as eqb
from .groups import (
    Group,
    Representation,
    copies,
    direct_sum,
    group_from_name,
    parse_rep_spec,
    scalar_rep,
    tensor_power,
    vector_rep,
)

__all__ = [
    "HiddenRepAllocation",
    "allocate_hidden_rep",
    "swish",
    "gated_activation",
    "gated_lipschitz_bound",
    "Network",
    "build_network",
    "init_weights",
    "save_checkpoint",
    "load_checkpoint",
]

SWISH_LIPSCHITZ = 1.1  # certified bound on |d/dx x*sigmoid(x)|
SOFT_INIT_EPS = 1e-4
HALF_SOFT_LAMBDA = 0.5


def _vec(m: np.ndarray) -> np.ndarray:
    return m.reshape(-1, order="F")


def _unvec(v: np.ndarray, n_out: int, n_in: int) -> np.ndarray:
    return v.reshape(n_out, n_in, order="F")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def _swish_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


# ---------------------------------------------------------------------------
# Hidden representation allocation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HiddenRepAllocation:
    width: int
    n_scalar: int
    n_vector: int
    n_tensor2: int
    n_gates: int

    def __post_init__(self) -> None:
        total = self.n_scalar + 3 * self.n_vector + 9 * self.n_tensor2 + self.n_gates
        if total != self.width:
            raise ValueError(f"allocation sums to {total}, expected width {self.width}")
        if self.n_gates != self.n_vector + self.n_tensor2:
            raise ValueError("one gate scalar required per non-scalar object")


def allocate_hidden_rep(group: Group, width: int) -> tuple[Representation, HiddenRepAllocation]:
    """Split a hidden width into tensor ranks 0..2 plus gate scalars.

    Each rank gets an equal dimension budget of ``width // 3``; rank-2 and
    rank-1 object counts are the largest that fit their budget, every
    non-scalar object receives one gate scalar, and the remainder becomes
    plain scalars.  The trivial group carries scalars only.
    """
    if group.name == "trivial":
        if width < 1:
            raise ValueError("width must be positive")
        alloc = HiddenRepAllocation(width, width, 0, 0, 0)
        return copies(scalar_rep(group), width), alloc
    if width < 13:
        raise ValueError(f"width {width} too small to host a vector object plus gate")
    budget = width // 3
    n_tensor2 = budget // 9
    n_vector = budget // 3
    n_gates = n_vector + n_tensor2
    n_scalar = width - 3 * n_vector - 9 * n_tensor2 - n_gates
    alloc = HiddenRepAllocation(width, n_scalar, n_vector, n_tensor2, n_gates)
    parts = [copies(scalar_rep(group), n_scalar)]
    if n_vector:
        parts.append(copies(vector_rep(group), n_vector))
    if n_tensor2:
        parts.append(copies(tensor_power(vector_rep(group), 2), n_tensor2))
    if n_gates:
        parts.append(copies(scalar_rep(group), n_gates))
    return direct_sum(parts), alloc


def _alloc_slices(alloc: HiddenRepAllocation) -> tuple[slice, slice, slice, slice]:
    s0 = slice(0, alloc.n_scalar)
    s1 = slice(s0.stop, s0.stop + 3 * alloc.n_vector)
    s2 = slice(s1.stop, s1.stop + 9 * alloc.n_tensor2)
    s3 = slice(s2.stop, s2.stop + alloc.n_gates)
    return s0, s1, s2, s3


def gated_activation(x: np.ndarray, alloc: HiddenRepAllocation) -> np.ndarray:
    """Swish on scalars and gates; non-scalar objects scaled by sigmoid(gate)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != alloc.width:
        raise ValueError(f"input width {x.shape[-1]} != allocation width {alloc.width}")
    y, _ = _gated_forward(x, alloc)
    return y


def _gated_forward(x: np.ndarray, alloc: HiddenRepAllocation):
    s0, s1, s2, s3 = _alloc_slices(alloc)
    n = x.shape[0]
    y = np.empty_like(x)
    y[:, s0] = swish(x[:, s0])
    gates = x[:, s3]
    sig = sigmoid(gates) if alloc.n_gates else np.zeros((n, 0))
    if alloc.n_vector:
        v = x[:, s1].reshape(n, alloc.n_vector, 3)
        y[:, s1] = (v * sig[:, : alloc.n_vector, None]).reshape(n, -1)
    if alloc.n_tensor2:
        t = x[:, s2].reshape(n, alloc.n_tensor2, 9)
        y[:, s2] = (t * sig[:, alloc.n_vector :, None]).reshape(n, -1)
    if alloc.n_gates:
        y[:, s3] = swish(gates)
    return y, sig


def _gated_backward(x: np.ndarray, dy: np.ndarray, sig: np.ndarray, alloc: HiddenRepAllocation) -> np.ndarray:
    s0, s1, s2, s3 = _alloc_slices(alloc)
    n = x.shape[0]
    dx = np.empty_like(dy)
    dx[:, s0] = dy[:, s0] * _swish_grad(x[:, s0])
    if alloc.n_gates:
        gates = x[:, s3]
        dgate = dy[:, s3] * _swish_grad(gates)
        dsig = sig * (1.0 - sig)
        if alloc.n_vector:
            v = x[:, s1].reshape(n, alloc.n_vector, 3)
            dyv = dy[:, s1].reshape(n, alloc.n_vector, 3)
            dx[:, s1] = (dyv * sig[:, : alloc.n_vector, None]).reshape(n, -1)
            dgate[:, : alloc.n_vector] += (dyv * v).sum(axis=2) * dsig[:, : alloc.n_vector]
        if alloc.n_tensor2:
            t = x[:, s2].reshape(n, alloc.n_tensor2, 9)
            dyt = dy[:, s2].reshape(n, alloc.n_tensor2, 9)
            dx[:, s2] = (dyt * sig[:, alloc.n_vector :, None]).reshape(n, -1)
            dgate[:, alloc.n_vector :] += (dyt * t).sum(axis=2) * dsig[:, alloc.n_vector :]
        dx[:, s3] = dgate
    return dx


def gated_lipschitz_bound(alloc: HiddenRepAllocation, object_norm_bound: float) -> float:
    """Certified Lipschitz constant of the gated activation on a bounded domain.

    Each (object, gate) block has Jacobian [[sig*I, sig'*o], [0, swish']];
    with ||o|| <= U the squared operator norm is bounded by the top eigenvalue
    of [[1, U/4], [U/4, U^2/16 + swish_max^2]] (entries are monotone bounds).
    """
    if alloc.n_vector == 0 and alloc.n_tensor2 == 0:
        return SWISH_LIPSCHITZ
    u = float(object_norm_bound)
    a, b, c = 1.0, u / 4.0, u * u / 16.0 + SWISH_LIPSCHITZ**2
    lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return float(max(SWISH_LIPSCHITZ, np.sqrt(lam)))


# ---------------------------------------------------------------------------
# Linear layers
# ---------------------------------------------------------------------------


class StandardLinear:
    kind = "standard"

    def __init__(self, n_in: int, n_out: int):
        self.n_in, self.n_out = n_in, n_out
        self.W = np.zeros((n_out, n_in))
        self.b = np.zeros(n_out)

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def realize(self) -> tuple[np.ndarray, np.ndarray]:
        return self.W, self.b

    def grads(self, dW: np.ndarray, db: np.ndarray) -> dict[str, np.ndarray]:
        return {"W": dW, "b": db}


class EmlpLinear:
    kind = "emlp"

    def __init__(self, n_in: int, n_out: int, q_basis: eqb.EquivariantBasis, r_basis: eqb.EquivariantBasis):
        self.n_in, self.n_out = n_in, n_out
        self.q_basis, self.r_basis = q_basis, r_basis
        self.theta = np.zeros(q_basis.basis_dim)
        self.beta = np.zeros(r_basis.basis_dim)

    def params(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "beta": self.beta}

    def realize(self) -> tuple[np.ndarray, np.ndarray]:
        W = _unvec(self.q_basis.expand(self.theta), self.n_out, self.n_in)
        b = self.r_basis.expand(self.beta)
        return W, b

    def grads(self, dW: np.ndarray, db: np.ndarray) -> dict[str, np.ndarray]:
        return {"theta": self.q_basis.coords(_vec(dW)), "beta": self.r_basis.coords(db)}


class RppLinear:
    kind = "rpp"

    def __init__(self, n_in: int, n_out: int, q_basis: eqb.EquivariantBasis, r_basis: eqb.EquivariantBasis):
        self.n_in, self.n_out = n_in, n_out
        self.q_basis, self.r_basis = q_basis, r_basis
        self.W1 = np.zeros((n_out, n_in))
        self.b1 = np.zeros(n_out)
        self.W2 = np.zeros((n_out, n_in))
        self.b2 = np.zeros(n_out)

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def realize(self) -> tuple[np.ndarray, np.ndarray]:
        W = _unvec(eqb.project(self.q_basis, _vec(self.W1)), self.n_out, self.n_in) + self.W2
        b = eqb.project(self.r_basis, self.b1) + self.b2
        return W, b

    def grads(self, dW: np.ndarray, db: np.ndarray) -> dict[str, np.ndarray]:
        dW1 = _unvec(eqb.project(self.q_basis, _vec(dW)), self.n_out, self.n_in)
        return {"W1": dW1, "b1": eqb.project(self.r_basis, db), "W2": dW, "b2": db}


class MemlpLinear:
    kind = "memlp"

    def __init__(
        self,
        n_in: int,
        n_out: int,
        q_exact: eqb.EquivariantBasis,
        r_exact: eqb.EquivariantBasis,
        q_all: eqb.EquivariantBasis,
        r_all: eqb.EquivariantBasis,
    ):
        self.n_in, self.n_out = n_in, n_out
        self.q_exact, self.r_exact = q_exact, r_exact
        self.q_all, self.r_all = q_all, r_all
        self.theta_exact = np.zeros(q_exact.basis_dim)
        self.beta_exact = np.zeros(r_exact.basis_dim)
        self.theta_all = np.zeros(q_all.basis_dim)
        self.beta_all = np.zeros(r_all.basis_dim)

    def params(self) -> dict[str, np.ndarray]:
        return {
            "theta_exact": self.theta_exact,
            "beta_exact": self.beta_exact,
            "theta_all": self.theta_all,
            "beta_all": self.beta_all,
        }

    def realize(self) -> tuple[np.ndarray, np.ndarray]:
        vec_w = self.q_exact.expand(self.theta_exact) + self.q_all.expand(self.theta_all)
        b = self.r_exact.expand(self.beta_exact) + self.r_all.expand(self.beta_all)
        return _unvec(vec_w, self.n_out, self.n_in), b

    def grads(self, dW: np.ndarray, db: np.ndarray) -> dict[str, np.ndarray]:
        dv = _vec(dW)
        return {
            "theta_exact": self.q_exact.coords(dv),
            "beta_exact": self.r_exact.coords(db),
            "theta_all": self.q_all.coords(dv),
            "beta_all": self.r_all.coords(db),
        }


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class Network:
    """A chain of linear layers and activations plus per-group basis registry."""

    def __init__(
        self,
        layers: list,
        activations: list[str],
        allocs: list,
        groups: tuple[Group, ...],
        exact_groups: tuple[Group, ...],
        rep_in_spec: str,
        rep_out_spec: str,
        width: int,
        kind: str,
        tolerance: float,
    ):
        self.layers = layers
        self.activations = activations
        self.allocs = allocs
        self.groups = groups
        self.exact_groups = exact_groups
        self.rep_in_spec = rep_in_spec
        self.rep_out_spec = rep_out_spec
        self.width = width
        self.kind = kind
        self.tolerance = tolerance
        self.bases: dict[tuple[int, tuple[str, ...]], tuple[eqb.EquivariantBasis, eqb.EquivariantBasis]] = {}
        self._layer_rep_templates: list[tuple[Representation, Representation]] = []

    # -- introspection ------------------------------------------------------

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def param_count(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params().values())

    def input_rep(self, group: Group) -> Representation:
        return parse_rep_spec(self.rep_in_spec, group)

    def output_rep(self, group: Group) -> Representation:
        return parse_rep_spec(self.rep_out_spec, group)

    def layer_reps(self, group: Group) -> list[tuple[Representation, Representation]]:
        return [(ri.with_group(group), ro.with_group(group)) for ri, ro in self._layer_rep_templates]

    def layer_bases(self, layer_idx: int, key: tuple[str, ...]):
        pair = self.bases.get((layer_idx, key))
        if pair is None:
            raise KeyError(f"no basis registered for layer {layer_idx}, groups {key}")
        return pair

    def ensure_bases(self, layer_idx: int, gset: tuple[Group, ...]):
        """Basis pair for a group set on one layer, computed and cached on demand."""
        key = (layer_idx, tuple(g.name for g in gset))
        if key not in self.bases:
            ri, ro = self._layer_rep_templates[layer_idx]
            q = eqb.structured_map_basis(gset, ri, ro, self.tolerance)
            r = eqb.structured_invariant_basis(gset, ro, self.tolerance)
            self.bases[key] = (q, r)
        return self.bases[key]

    def params(self) -> dict[tuple[int, str], np.ndarray]:
        return {(i, name): arr for i, layer in enumerate(self.layers) for name, arr in layer.params().items()}

    def set_params(self, values: dict[tuple[int, str], np.ndarray]) -> None:
        for (i, name), arr in values.items():
            self.layers[i].params()[name][...] = arr

    def copy_params(self) -> dict[tuple[int, str], np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_in:
            raise ValueError(f"batch feature dim {x.shape[1]} != network input dim {self.n_in}")
        for layer, activation, alloc in zip(self.layers, self.activations, self.allocs):
            W, b = layer.realize()
            x = x @ W.T + b
            if activation == "swish":
                x = swish(x)
            elif activation == "gated":
                x, _ = _gated_forward(x, alloc)
        return x

    def _forward_cached(self, x: np.ndarray):
        caches = []
        for layer, activation, alloc in zip(self.layers, self.activations, self.allocs):
            W, b = layer.realize()
            pre = x @ W.T + b
            if activation == "swish":
                out, sig = swish(pre), None
            elif activation == "gated":
                out, sig = _gated_forward(pre, alloc)
            else:
                out, sig = pre, None
            caches.append((x, W, pre, sig))
            x = out
        return x, caches

    def backward(
        self,
        x: np.ndarray,
        targets: np.ndarray,
        loss: str = "mse",
        extra_reg_grads: dict | None = None,
    ) -> tuple[float, dict[tuple[int, str], np.ndarray]]:
        """Mean-per-sample squared-error loss and exact parameter gradients."""
        if loss != "mse":
            raise ValueError(f"unsupported loss {loss!r}")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        if targets.shape != (x.shape[0], self.n_out):
            raise ValueError("target shape does not match batch and output dims")
        out, caches = self._forward_cached(x)
        diff = out - targets
        loss_value = float(np.mean(np.sum(diff * diff, axis=1)))
        if not np.isfinite(loss_value):
            raise FloatingPointError("non-finite loss (training diverged)")
        grads: dict[tuple[int, str], np.ndarray] = {}
        dy = 2.0 * diff / x.shape[0]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x_in, W, pre, sig = caches[i]
            activation = self.activations[i]
            if activation == "swish":
                dy = dy * _swish_grad(pre)
            elif activation == "gated":
                dy = _gated_backward(pre, dy, sig, self.allocs[i])
            dW = dy.T @ x_in
            db = dy.sum(axis=0)
            for name, g in layer.grads(dW, db).items():
                grads[(i, name)] = g
            if i > 0:
                dy = dy @ W
        if extra_reg_grads:
            for key, g in extra_reg_grads.items():
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = np.array(g, dtype=float)
        return loss_value, grads


def build_network(
    kind: str,
    groups: list[Group] | tuple[Group, ...],
    rep_in_spec: str,
    rep_out_spec: str,
    width: int,
    n_layers: int,
    exact_groups: list[Group] | tuple[Group, ...] = (),
    tolerance: float = eqb.DEFAULT_TOLERANCE,
) -> Network:
    """Assemble a network of the requested layer kind with its basis registry.

    ``groups`` lists every candidate symmetry group.  For ``emlp``/``rpp`` the
    layer bases are joint over all of them; ``memlp`` additionally needs
    ``exact_groups`` (a subset held exactly).  ``mlp`` ignores groups for the
    architecture (scalar hidden features, swish) while ``per`` keeps the
    unconstrained layers but uses gated activations over a group-structured
    hidden space and registers one basis pair per candidate group.
    """
    kind = kind.lower()
    if kind not in ("mlp", "per", "emlp", "rpp", "memlp"):
        raise ValueError(f"unknown network kind {kind!r}")
    groups = tuple(groups)
    exact_groups = tuple(exact_groups)
    if kind != "mlp" and not groups:
        raise ValueError(f"network kind {kind!r} requires at least one group")
    if kind == "memlp":
        if not exact_groups:
            raise ValueError("memlp requires a nonempty exact-symmetry group subset")
        if not set(g.name for g in exact_groups) <= set(g.name for g in groups):
            raise ValueError("exact groups must be a subset of the candidate groups")
    if n_layers < 1:
        raise ValueError("need at least one layer")

    struct_group = groups[0] if (groups and kind != "mlp") else group_from_name("trivial")
    rep_in = parse_rep_spec(rep_in_spec, struct_group)
    rep_out = parse_rep_spec(rep_out_spec, struct_group)
    hidden_rep, alloc = (None, None)
    if n_layers > 1:
        hidden_rep, alloc = allocate_hidden_rep(struct_group, width)

    hidden_act = "swish" if kind == "mlp" else "gated"
    layer_templates: list[tuple[Representation, Representation]] = []
    layers: list = []
    activations: list[str] = []
    allocs: list = []
    net = None  # filled after layers, but bases need dims first

    dims_reps = []
    for l in range(n_layers):
        ri = rep_in if l == 0 else hidden_rep
        ro = rep_out if l == n_layers - 1 else hidden_rep
        dims_reps.append((ri, ro))

    bases: dict[tuple[int, tuple[str, ...]], tuple[eqb.EquivariantBasis, eqb.EquivariantBasis]] = {}

    def pair_for(layer_idx: int, gset: tuple[Group, ...]):
        key = (layer_idx, tuple(g.name for g in gset))
        if key not in bases:
            ri, ro = dims_reps[layer_idx]
            q = eqb.structured_map_basis(gset, ri, ro, tolerance)
            r = eqb.structured_invariant_basis(gset, ro, tolerance)
            bases[key] = (q, r)
        return bases[key]

    for l, (ri, ro) in enumerate(dims_reps):
        n_in, n_out = ri.dim, ro.dim
        if kind in ("mlp", "per"):
            layer = StandardLinear(n_in, n_out)
        elif kind == "emlp":
            q, r = pair_for(l, groups)
            layer = EmlpLinear(n_in, n_out, q, r)
        elif kind == "rpp":
            q, r = pair_for(l, groups)
            layer = RppLinear(n_in, n_out, q, r)
        else:
            qe, re = pair_for(l, exact_groups)
            qa, ra = pair_for(l, groups)
            layer = MemlpLinear(n_in, n_out, qe, re, qa, ra)
        if kind == "per":
            for g in groups:
                pair_for(l, (g,))
        layers.append(layer)
        is_last = l == n_layers - 1
        activations.append("none" if is_last else hidden_act)
        allocs.append(None if is_last else alloc)
        layer_templates.append((ri, ro))

    net = Network(
        layers,
        activations,
        allocs,
        groups,
        exact_groups,
        rep_in_spec,
        rep_out_spec,
        width,
        kind,
        tolerance,
    )
    net.bases = bases
    net._layer_rep_templates = layer_templates
    return net


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _joint_pair(net: Network, layer_idx: int) -> tuple[eqb.EquivariantBasis, eqb.EquivariantBasis]:
    """Joint basis pair over every candidate group, computed on demand."""
    if not net.groups:
        raise ValueError("layer has no basis: network was built without groups")
    return net.ensure_bases(layer_idx, net.groups)


def init_weights(net: Network, scheme: str, rng: np.random.Generator, soft_eps: float = SOFT_INIT_EPS) -> None:
    """He-style fan-in initialization in one of three flavors.

    ``standard`` draws vec(W) ~ N(0, s^2 I) with s^2 = 2/n_in; ``soft`` draws
    from N(0, s^2 Q Q^T + soft_eps s^2 I); ``half_soft`` from
    N(0, s^2 Q Q^T + 0.5 s^2 (I - Q Q^T)).  Biases start at zero everywhere;
    subspace-parameterized layers draw their coefficients at the same scale.
    """
    if scheme not in ("standard", "soft", "half_soft"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    for i, layer in enumerate(net.layers):
        sigma = np.sqrt(2.0 / layer.n_in)
        if layer.kind == "standard":
            ambient = layer.n_in * layer.n_out
            if scheme == "standard":
                w = sigma * rng.standard_normal(ambient)
            elif scheme == "soft":
                q, _ = _joint_pair(net, i)
                z1 = rng.standard_normal(q.basis_dim)
                z2 = rng.standard_normal(ambient)
                w = q.expand(sigma * z1) + np.sqrt(soft_eps) * sigma * z2
            else:
                q, _ = _joint_pair(net, i)
                z = sigma * rng.standard_normal(ambient)
                p = eqb.project(q, z)
                w = p + np.sqrt(HALF_SOFT_LAMBDA) * (z - p)
            layer.W[...] = _unvec(w, layer.n_out, layer.n_in)
            layer.b[...] = 0.0
        elif layer.kind == "emlp":
            layer.theta[...] = sigma * rng.standard_normal(layer.theta.size)
            layer.beta[...] = 0.0
        elif layer.kind == "rpp":
            layer.W1[...] = sigma * rng.standard_normal(layer.W1.shape)
            layer.W2[...] = np.sqrt(soft_eps) * sigma * rng.standard_normal(layer.W2.shape)
            layer.b1[...] = 0.0
            layer.b2[...] = 0.0
        else:
            layer.theta_all[...] = sigma * rng.standard_normal(layer.theta_all.size)
            layer.theta_exact[...] = np.sqrt(soft_eps) * sigma * rng.standard_normal(layer.theta_exact.size)
            layer.beta_all[...] = 0.0
            layer.beta_exact[...] = 0.0


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: Network, path_prefix: str) -> tuple[str, str]:
    """Write parameters as a flat CSV plus a JSON sidecar describing the net."""
    params_path = path_prefix + ".params.csv"
    meta_path = path_prefix + ".model.json"
    with open(params_path, "w", encoding="ascii") as fh:
        fh.write("layer,param,index,value\n")
        for i, layer in enumerate(net.layers):
            for name, arr in layer.params().items():
                flat = arr.reshape(-1)
                for j, v in enumerate(flat):
                    fh.write(f"{i},{name},{j},{float(v)!r}\n")
    meta = {
        "format": 1,
        "kind": net.kind,
        "groups": [g.name for g in net.groups],
        "exact_groups": [g.name for g in net.exact_groups],
        "rep_in": net.rep_in_spec,
        "rep_out": net.rep_out_spec,
        "width": net.width,
        "n_layers": len(net.layers),
        "tolerance": net.tolerance,
        "layers": [
            {
                "kind": layer.kind,
                "n_in": layer.n_in,
                "n_out": layer.n_out,
                "activation": act,
            }
            for layer, act in zip(net.layers, net.activations)
        ],
    }
    with open(meta_path, "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return params_path, meta_path


def load_checkpoint(path_prefix: str) -> Network:
    meta_path = path_prefix + ".model.json"
    params_path = path_prefix + ".params.csv"
    if not (os.path.exists(meta_path) and os.path.exists(params_path)):
        raise FileNotFoundError(f"checkpoint files missing at {path_prefix!r}")
    with open(meta_path, encoding="ascii") as fh:
        meta = json.load(fh)
    if meta.get("format") != 1:
        raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
    groups = tuple(group_from_name(n) for n in meta["groups"])
    exact = tuple(group_from_name(n) for n in meta["exact_groups"])
    net = build_network(
        meta["kind"] if meta["kind"] != "standard" else "mlp",
        groups,
        meta["rep_in"],
        meta["rep_out"],
        meta["width"],
        meta["n_layers"],
        exact_groups=exact,
        tolerance=meta["tolerance"],
    )
    flats: dict[tuple[int, str], list[float]] = {}
    with open(params_path, encoding="ascii") as fh:
        header = fh.readline()
        if header.strip() != "layer,param,index,value":
            raise ValueError("unexpected checkpoint parameter header")
        for line in fh:
            layer_s, name, idx_s, val_s = line.rstrip("\n").split(",")
            flats.setdefault((int(layer_s), name), []).append(float(val_s))
    for (i, name), values in flats.items():
        target = net.layers[i].params()[name]
        target[...] = np.asarray(values).reshape(target.shape)
    return net
