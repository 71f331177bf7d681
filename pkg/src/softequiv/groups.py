"""Matrix groups acting on R^3 and finite-dimensional representations built on them.

The catalog covers the rotation/reflection family (SO(3), O(3), planar O(2)
about a coordinate axis), uniform positive scaling, and the special/general
linear groups of a coordinate plane.  Representations are assembled from
scalar, vector, tensor-power and direct-sum constructors and expose lifted
generator matrices plus the lift of an arbitrary sampled element, which is
all downstream basis solvers and Monte Carlo estimators need.

Conventions:
  * ``vec`` is column-stacking (Fortran order) everywhere a matrix is
    flattened into a representation space.
  * an "axis" group acts on the two coordinates complementary to its axis
    and fixes the axis coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "Group",
    "GroupElement",
    "Representation",
    "make_group",
    "group_from_name",
    "scalar_rep",
    "vector_rep",
    "tensor_power",
    "direct_sum",
    "copies",
    "parse_rep_spec",
    "sample_element",
    "act",
]

_AXES = {"x": 0, "y": 1, "z": 2}

# Rotation generators of so(3); L_a generates rotations about axis a.
_L = {
    "x": np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    "y": np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    "z": np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
}


def _plane(axis: str) -> tuple[int, int]:
    """Indices of the plane an axis group acts on, in cyclic order."""
    i = _AXES[axis]
    return (i + 1) % 3, (i + 2) % 3


def _embed_2x2(m2: np.ndarray, axis: str) -> np.ndarray:
    p, q = _plane(axis)
    m = np.eye(3)
    m[p, p], m[p, q], m[q, p], m[q, q] = m2[0, 0], m2[0, 1], m2[1, 0], m2[1, 1]
    return m


def _embed_2x2_lie(m2: np.ndarray, axis: str) -> np.ndarray:
    p, q = _plane(axis)
    m = np.zeros((3, 3))
    m[p, p], m[p, q], m[q, p], m[q, q] = m2[0, 0], m2[0, 1], m2[1, 0], m2[1, 1]
    return m


@dataclass(frozen=True)
class Group:
    """A matrix group given by discrete and infinitesimal generators.

    ``element_norm_bound`` is an analytic upper bound on the operator norm of
    any element the sampler can produce; equivariance-error bounds rely on it.
    """

    name: str
    base_dim: int
    discrete_generators: tuple[np.ndarray, ...]
    lie_generators: tuple[np.ndarray, ...]
    sampler_kind: str
    element_norm_bound: float

    def __hash__(self) -> int:
        return hash(self.name)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Group) and other.name == self.name

    def __repr__(self) -> str:
        return f"Group({self.name})"


@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray
    group: Group


def make_group(kind: str, axis: str | None = None) -> Group:
    """Construct a catalog group.

    kind is one of ``trivial, so3, o3, o2, s3, sl2, gl2``; ``o2``, ``sl2`` and
    ``gl2`` require an axis label (the fixed coordinate), the others reject one.
    """
    kind = kind.lower()
    axis_kinds = {"o2", "sl2", "gl2"}
    if kind in axis_kinds:
        if axis not in _AXES:
            raise ValueError(f"group kind {kind!r} requires axis in {{x,y,z}}, got {axis!r}")
    elif axis is not None:
        raise ValueError(f"group kind {kind!r} does not take an axis")

    if kind == "trivial":
        return Group("trivial", 3, (), (), "identity", 1.0)
    if kind == "so3":
        return Group("so3", 3, (), (_L["x"], _L["y"], _L["z"]), "haar_orthogonal", 1.0)
    if kind == "o3":
        refl = np.diag([-1.0, 1.0, 1.0])
        return Group("o3", 3, (refl,), (_L["x"], _L["y"], _L["z"]), "haar_orthogonal", 1.0)
    if kind == "o2":
        p, q = _plane(axis)
        refl = np.eye(3)
        refl[q, q] = -1.0
        return Group(f"o2{axis}", 3, (refl,), (_L[axis],), "haar_subgroup", 1.0)
    if kind == "s3":
        # Uniform positive scaling e^{t I}; sampler draws t in [-1, 1].
        return Group("s3", 3, (), (np.eye(3),), "log_uniform_scaling", float(np.e))
    if kind == "sl2":
        e = np.array([[0.0, 1.0], [0.0, 0.0]])
        f = np.array([[0.0, 0.0], [1.0, 0.0]])
        gens = tuple(_embed_2x2_lie(m, axis) for m in (e, f))
        # |c_e| + |c_f| <= 2 with unit-op-norm generators -> ||exp|| <= e^2
        return Group(f"sl2{axis}", 3, (), gens, "bounded_matrix", float(np.exp(2.0)))
    if kind == "gl2":
        basis = [np.zeros((2, 2)) for _ in range(4)]
        for k, (i, j) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            basis[k][i, j] = 1.0
        gens = tuple(_embed_2x2_lie(m, axis) for m in basis)
        return Group(f"gl2{axis}", 3, (), gens, "bounded_matrix", float(np.exp(4.0)))
    raise ValueError(f"unknown group kind {kind!r}")


def group_from_name(name: str) -> Group:
    """Parse a config-file group string such as ``"o2z"`` or ``"so3"``."""
    name = name.strip().lower()
    if name in ("trivial", "so3", "o3", "s3"):
        return make_group(name)
    for kind in ("o2", "sl2", "gl2"):
        if name.startswith(kind) and len(name) == len(kind) + 1:
            return make_group(kind, name[-1])
    raise ValueError(f"unknown group name {name!r}")


# ---------------------------------------------------------------------------
# Representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Node:
    """Structure node: kind in {'S','V','T','sum'}.

    'T' carries the base node and a rank; 'sum' carries child nodes.
    """

    kind: str
    rank: int = 0
    base: "_Node | None" = None
    children: tuple["_Node", ...] = ()

    def dim(self, base_dim: int) -> int:
        if self.kind == "S":
            return 1
        if self.kind == "V":
            return base_dim
        if self.kind == "T":
            return self.base.dim(base_dim) ** self.rank
        return sum(c.dim(base_dim) for c in self.children)

    def key(self) -> str:
        if self.kind == "S":
            return "S"
        if self.kind == "V":
            return "V"
        if self.kind == "T":
            return f"T{self.rank}({self.base.key()})"
        return "sum(" + ",".join(c.key() for c in self.children) + ")"


_SCALAR = _Node("S")
_VECTOR = _Node("V")


@dataclass(frozen=True)
class Representation:
    """A linear action of a catalog group, built from structural constructors."""

    group: Group
    structure: _Node
    dim: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dim", self.structure.dim(self.group.base_dim))

    # -- lifting ----------------------------------------------------------

    def lift(self, g: np.ndarray | GroupElement) -> np.ndarray:
        """Representation matrix of a base-space group element."""
        if isinstance(g, GroupElement):
            g = g.matrix
        return _lift_node(self.structure, np.asarray(g, dtype=float))

    def lift_lie(self, a: np.ndarray) -> np.ndarray:
        """Lifted Lie-algebra generator (derivative of the lift at identity)."""
        return _lift_lie_node(self.structure, np.asarray(a, dtype=float))

    def discrete_lifts(self) -> list[np.ndarray]:
        return [self.lift(h) for h in self.group.discrete_generators]

    def lie_lifts(self) -> list[np.ndarray]:
        return [self.lift_lie(a) for a in self.group.lie_generators]

    # -- structure --------------------------------------------------------

    def blocks(self) -> list[tuple[int, "Representation"]]:
        """Flatten top-level direct sums into (offset, leaf representation)."""
        out: list[tuple[int, Representation]] = []
        off = 0
        for node in _flatten(self.structure):
            rep = Representation(self.group, node)
            out.append((off, rep))
            off += rep.dim
        return out

    def with_group(self, group: Group) -> "Representation":
        if group.base_dim != self.group.base_dim:
            raise ValueError("cannot rebind representation across base dimensions")
        return Representation(group, self.structure)

    def structure_key(self) -> str:
        return self.structure.key()

    def op_norm_bound(self) -> float:
        """Upper bound on ||lift(g)||_op over elements the sampler can draw."""
        return _op_bound_node(self.structure, self.group.element_norm_bound)

    def __repr__(self) -> str:
        return f"Representation({self.structure_key()}, {self.group.name}, dim={self.dim})"


def _flatten(node: _Node) -> list[_Node]:
    if node.kind == "sum":
        out: list[_Node] = []
        for c in node.children:
            out.extend(_flatten(c))
        return out
    return [node]


def _lift_node(node: _Node, g: np.ndarray) -> np.ndarray:
    if node.kind == "S":
        return np.ones((1, 1))
    if node.kind == "V":
        return g
    if node.kind == "T":
        base = _lift_node(node.base, g)
        out = np.ones((1, 1))
        for _ in range(node.rank):
            out = np.kron(out, base)
        return out
    mats = [_lift_node(c, g) for c in node.children]
    return _block_diag(mats)


def _lift_lie_node(node: _Node, a: np.ndarray) -> np.ndarray:
    if node.kind == "S":
        return np.zeros((1, 1))
    if node.kind == "V":
        return a
    if node.kind == "T":
        # Leibniz rule: sum over positions of I x..x dlift(a) x..x I
        d_base = _lift_lie_node(node.base, a)
        n = d_base.shape[0]
        eye = np.eye(n)
        total = np.zeros((n**node.rank, n**node.rank))
        for pos in range(node.rank):
            term = np.ones((1, 1))
            for k in range(node.rank):
                term = np.kron(term, d_base if k == pos else eye)
            total += term
        return total
    mats = [_lift_lie_node(c, a) for c in node.children]
    return _block_diag(mats)


def _op_bound_node(node: _Node, gb: float) -> float:
    if node.kind == "S":
        return 1.0
    if node.kind == "V":
        return gb
    if node.kind == "T":
        return _op_bound_node(node.base, gb) ** node.rank
    return max(_op_bound_node(c, gb) for c in node.children) if node.children else 1.0


def _block_diag(mats: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    off = 0
    for m in mats:
        k = m.shape[0]
        out[off : off + k, off : off + k] = m
        off += k
    return out


def scalar_rep(group: Group) -> Representation:
    return Representation(group, _SCALAR)


def vector_rep(group: Group) -> Representation:
    return Representation(group, _VECTOR)


def tensor_power(base: Representation, rank: int) -> Representation:
    if rank < 0:
        raise ValueError("tensor rank must be nonnegative")
    if rank == 0:
        return scalar_rep(base.group)
    if rank == 1:
        return base
    return Representation(base.group, _Node("T", rank=rank, base=base.structure))


def direct_sum(reps: Sequence[Representation]) -> Representation:
    if not reps:
        raise ValueError("direct_sum of an empty list")
    group = reps[0].group
    for r in reps[1:]:
        if r.group != group:
            raise ValueError("direct_sum requires a common group")
    children = tuple(c for r in reps for c in _flatten(r.structure))
    if len(children) == 1:
        return Representation(group, children[0])
    return Representation(group, _Node("sum", children=children))


def copies(rep: Representation, count: int) -> Representation:
    if count < 1:
        raise ValueError("copies requires count >= 1")
    return direct_sum([rep] * count)


def parse_rep_spec(spec: str, group: Group) -> Representation:
    """Parse a representation string like ``"5S+5V"``, ``"T2"`` or ``"6V"``.

    Terms are ``<count><kind>`` with kind in {S, V, T2}; counts default to 1.
    """
    parts = [p.strip() for p in spec.replace("⊕", "+").split("+") if p.strip()]
    if not parts:
        raise ValueError(f"empty representation spec {spec!r}")
    reps: list[Representation] = []
    for part in parts:
        i = 0
        while i < len(part) and part[i].isdigit():
            i += 1
        count = int(part[:i]) if i else 1
        kind = part[i:].upper()
        if kind == "S":
            base = scalar_rep(group)
        elif kind == "V":
            base = vector_rep(group)
        elif kind == "T2":
            base = tensor_power(vector_rep(group), 2)
        else:
            raise ValueError(f"unknown representation term {part!r}")
        reps.append(copies(base, count) if count > 1 else base)
    return direct_sum(reps)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed O(n) matrix via sign-corrected QR of a Gaussian."""
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    return q


def sample_element(group: Group, rng: np.random.Generator) -> GroupElement:
    """Draw a group element; Haar for the compact groups, bounded laws otherwise."""
    kind = group.sampler_kind
    if kind == "identity":
        return GroupElement(np.eye(group.base_dim), group)
    if kind == "haar_orthogonal":
        q = _haar_orthogonal(3, rng)
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]  # fold onto SO(3)
        if group.name == "o3" and rng.random() < 0.5:
            q = np.diag([-1.0, 1.0, 1.0]) @ q
        return GroupElement(q, group)
    if kind == "haar_subgroup":
        axis = group.name[-1]
        q2 = _haar_orthogonal(2, rng)
        if np.linalg.det(q2) < 0:
            q2[:, 0] = -q2[:, 0]
        if rng.random() < 0.5:
            q2 = np.diag([1.0, -1.0]) @ q2
        return GroupElement(_embed_2x2(q2, axis), group)
    if kind == "log_uniform_scaling":
        u = rng.uniform(-1.0, 1.0)
        return GroupElement(np.exp(u) * np.eye(3), group)
    if kind == "bounded_matrix":
        coeffs = rng.uniform(-1.0, 1.0, size=len(group.lie_generators))
        m = sum(c * a for c, a in zip(coeffs, group.lie_generators))
        return GroupElement(expm(m), group)
    raise ValueError(f"unknown sampler kind {kind!r}")


def act(rep: Representation, g: GroupElement | np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply the lifted action of g to a vector in the representation space."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != rep.dim:
        raise ValueError(f"vector dim {v.shape[-1]} != representation dim {rep.dim}")
    return v @ rep.lift(g).T
