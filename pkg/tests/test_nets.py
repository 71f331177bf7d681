"""Layer kinds, activations, initializations, and gradient correctness."""

import numpy as np
import pytest

from softequiv.basis import residual_norm
from softequiv.groups import make_group, sample_element
from softequiv.nets import (
    HiddenRepAllocation,
    allocate_hidden_rep,
    build_network,
    gated_activation,
    gated_lipschitz_bound,
    init_weights,
    load_checkpoint,
    save_checkpoint,
    swish,
)

from oracles import finite_difference_grads

O3 = make_group("o3")
O2Z = make_group("o2", "z")
TRIVIAL = make_group("trivial")
AXES = [make_group("o2", a) for a in "xyz"]


# -- allocation -------------------------------------------------------------


def test_allocation_width_13():
    rep, alloc = allocate_hidden_rep(O3, 13)
    # rank-2 budget (13/3 = 4) cannot host a 9-dim tensor
    assert (alloc.n_scalar, alloc.n_vector, alloc.n_tensor2, alloc.n_gates) == (9, 1, 0, 1)
    assert rep.dim == 13


def test_allocation_width_64():
    rep, alloc = allocate_hidden_rep(O3, 64)
    assert alloc.n_tensor2 == 2 and alloc.n_vector == 7
    assert alloc.n_gates == alloc.n_vector + alloc.n_tensor2
    assert alloc.n_scalar + 3 * alloc.n_vector + 9 * alloc.n_tensor2 + alloc.n_gates == 64
    assert rep.dim == 64


def test_allocation_width_384_invariants():
    _, alloc = allocate_hidden_rep(O3, 384)
    assert alloc.n_scalar + 3 * alloc.n_vector + 9 * alloc.n_tensor2 + alloc.n_gates == 384
    assert alloc.n_gates == alloc.n_vector + alloc.n_tensor2
    assert alloc.n_tensor2 >= 1


def test_allocation_deterministic():
    a = allocate_hidden_rep(O3, 64)[1]
    b = allocate_hidden_rep(O3, 64)[1]
    assert a == b


def test_allocation_trivial_group_all_scalars():
    rep, alloc = allocate_hidden_rep(TRIVIAL, 10)
    assert (alloc.n_scalar, alloc.n_vector, alloc.n_tensor2, alloc.n_gates) == (10, 0, 0, 0)
    assert rep.dim == 10


def test_allocation_too_small():
    with pytest.raises(ValueError):
        allocate_hidden_rep(O3, 12)


def test_allocation_invariant_enforced():
    with pytest.raises(ValueError):
        HiddenRepAllocation(width=10, n_scalar=9, n_vector=1, n_tensor2=0, n_gates=0)


# -- activations ------------------------------------------------------------


def test_gated_all_scalar_is_swish():
    _, alloc = allocate_hidden_rep(TRIVIAL, 8)
    x = np.linspace(-3, 3, 8)[None]
    assert gated_activation(x, alloc) == pytest.approx(swish(x))


def test_gated_zero_gate_halves_objects():
    _, alloc = allocate_hidden_rep(O3, 13)  # 9 scalars, 1 vector, 1 gate
    x = np.zeros((1, 13))
    x[0, 9:12] = [2.0, -4.0, 6.0]  # the vector object, gate stays 0
    y = gated_activation(x, alloc)
    assert y[0, 9:12] == pytest.approx([1.0, -2.0, 3.0])  # sigmoid(0) = 1/2
    assert y[0, 12] == pytest.approx(0.0)  # swish(0) = 0


def test_gated_equivariance_under_group_action():
    rng = np.random.default_rng(0)
    for group in (O3, O2Z, make_group("s3")):
        rep, alloc = allocate_hidden_rep(group, 32)
        x = rng.standard_normal((6, 32))
        for _ in range(10):
            g = sample_element(group, rng)
            lift = rep.lift(g)
            lhs = gated_activation(x, alloc) @ lift.T
            rhs = gated_activation(x @ lift.T, alloc)
            assert np.abs(lhs - rhs).max() < 1e-6


def test_gated_width_mismatch():
    _, alloc = allocate_hidden_rep(O3, 16)
    with pytest.raises(ValueError):
        gated_activation(np.zeros((2, 15)), alloc)


def test_gated_lipschitz_bound_small_domain():
    _, alloc = allocate_hidden_rep(O3, 16)
    assert gated_lipschitz_bound(alloc, 4.0) <= 2.0
    _, scalars = allocate_hidden_rep(TRIVIAL, 16)
    assert gated_lipschitz_bound(scalars, 100.0) == pytest.approx(1.1)


def test_gated_lipschitz_bound_holds_empirically():
    rng = np.random.default_rng(1)
    _, alloc = allocate_hidden_rep(O3, 16)
    bound = gated_lipschitz_bound(alloc, 3.0)
    for _ in range(200):
        x = rng.uniform(-1, 1, size=(1, 16))
        x *= 3.0 / max(3.0, np.linalg.norm(x))
        d = rng.standard_normal((1, 16)) * 1e-6
        num = np.linalg.norm(gated_activation(x + d, alloc) - gated_activation(x, alloc))
        assert num <= bound * np.linalg.norm(d) * (1 + 1e-6)


# -- network forward behavior ------------------------------------------------


def test_identity_standard_layer_passthrough():
    net = build_network("mlp", [], "V", "V", 16, 1)
    net.layers[0].W[...] = np.eye(3)
    x = np.random.default_rng(0).standard_normal((5, 3))
    assert net.forward(x) == pytest.approx(x)


def test_forward_deterministic():
    net = build_network("per", AXES, "5S+5V", "T2", 16, 3)
    init_weights(net, "standard", np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((11, 20))
    a = net.forward(x)
    b = net.forward(x)
    assert np.array_equal(a, b)


def test_forward_shape_validation():
    net = build_network("mlp", [], "5S+5V", "T2", 16, 2)
    with pytest.raises(ValueError):
        net.forward(np.zeros((3, 19)))


def test_emlp_zero_params_zero_map():
    net = build_network("emlp", [O3], "5S+5V", "T2", 16, 2)
    x = np.random.default_rng(0).standard_normal((4, 20))
    assert net.forward(x) == pytest.approx(np.zeros((4, 9)))


def test_emlp_layer_equivariance():
    rng = np.random.default_rng(2)
    net = build_network("emlp", [O3], "5S+5V", "T2", 32, 3)
    init_weights(net, "standard", rng)
    rep_in, rep_out = net.input_rep(O3), net.output_rep(O3)
    x = rng.standard_normal((8, 20))
    fx = net.forward(x)
    for _ in range(20):
        g = sample_element(O3, rng)
        lhs = fx @ rep_out.lift(g).T
        rhs = net.forward(x @ rep_in.lift(g).T)
        assert np.abs(lhs - rhs).max() <= 1e-5 * (1 + np.abs(x).max())


def test_rpp_with_zero_residual_matches_emlp_projection():
    rng = np.random.default_rng(3)
    net = build_network("rpp", [O3], "V", "V", 16, 1)
    layer = net.layers[0]
    layer.W1[...] = rng.standard_normal((3, 3))
    layer.W2[...] = 0.0
    w_eff, _ = layer.realize()
    vec_w1 = layer.W1.reshape(-1, order="F")
    q = layer.q_basis
    proj = (q.columns @ (q.columns.T @ vec_w1)).reshape(3, 3, order="F")
    assert w_eff == pytest.approx(proj)
    # the projected map is exactly equivariant
    for _ in range(10):
        g = sample_element(O3, rng).matrix
        assert np.abs(g @ w_eff - w_eff @ g).max() < 1e-8


def test_memlp_term_structure():
    net = build_network("memlp", [make_group("so3"), make_group("s3")], "3V", "S", 16, 2,
                        exact_groups=[make_group("so3")])
    layer = net.layers[0]
    assert layer.q_exact.basis_dim >= layer.q_all.basis_dim
    rng = np.random.default_rng(4)
    init_weights(net, "standard", rng)
    x = rng.standard_normal((6, 9))
    # exactly equivariant for the exact subset
    rep_in, rep_out = net.input_rep(make_group("so3")), net.output_rep(make_group("so3"))
    fx = net.forward(x)
    for _ in range(10):
        g = sample_element(make_group("so3"), rng)
        rhs = net.forward(x @ rep_in.lift(g).T)
        assert np.abs(fx @ rep_out.lift(g).T - rhs).max() < 1e-6


def test_param_count_parity_mlp_vs_per():
    plain = build_network("mlp", [], "5S+5V", "T2", 64, 4)
    regd = build_network("per", AXES, "5S+5V", "T2", 64, 4)
    assert plain.param_count == regd.param_count


def test_build_validation_errors():
    with pytest.raises(ValueError):
        build_network("emlp", [], "V", "V", 16, 2)
    with pytest.raises(ValueError):
        build_network("memlp", [O3], "V", "V", 16, 2)  # no exact subset
    with pytest.raises(ValueError):
        build_network("memlp", [O3], "V", "V", 16, 2, exact_groups=[O2Z])
    with pytest.raises(ValueError):
        build_network("resnet", [O3], "V", "V", 16, 2)


# -- gradients ---------------------------------------------------------------


@pytest.mark.parametrize("kind,exact", [("mlp", ()), ("per", ()), ("emlp", ()), ("rpp", ()), ("memlp", ("o2z",))])
def test_backward_matches_finite_differences(kind, exact):
    rng = np.random.default_rng(5)
    groups = [O3, O2Z] if kind == "memlp" else ([O3] if kind != "mlp" else [])
    exact_groups = [O2Z] if exact else []
    net = build_network(kind, groups, "5S+5V", "T2", 14, 2, exact_groups=exact_groups)
    init_weights(net, "standard", rng)
    x = rng.standard_normal((6, 20))
    y = rng.standard_normal((6, 9))
    loss, grads = net.backward(x, y)
    numeric = finite_difference_grads(lambda: net.backward(x, y)[0], net.params(), seed=6)
    for key, probes in numeric.items():
        ana = grads[key].reshape(-1)
        for j, num in probes:
            assert abs(ana[j] - num) <= 1e-4 * max(1.0, abs(num)), (kind, key)


def test_backward_perfect_predictions():
    net = build_network("mlp", [], "V", "V", 16, 1)
    net.layers[0].W[...] = np.eye(3)
    x = np.random.default_rng(0).standard_normal((5, 3))
    loss, grads = net.backward(x, x)
    assert loss == pytest.approx(0.0)
    for g in grads.values():
        assert np.abs(g).max() == pytest.approx(0.0)


def test_backward_output_gradient_linearity():
    rng = np.random.default_rng(6)
    net = build_network("mlp", [], "V", "V", 16, 1)
    init_weights(net, "standard", rng)
    x = rng.standard_normal((5, 3))
    y = net.forward(x)
    _, g1 = net.backward(x, y + 1.0)
    _, g2 = net.backward(x, y + 2.0)
    assert g2[(0, "W")] == pytest.approx(2.0 * g1[(0, "W")])


def test_backward_shape_and_divergence_errors():
    net = build_network("mlp", [], "V", "V", 16, 1)
    with pytest.raises(ValueError):
        net.backward(np.zeros((2, 3)), np.zeros((3, 3)))
    net.layers[0].W[...] = np.nan
    with pytest.raises(FloatingPointError):
        net.backward(np.ones((2, 3)), np.ones((2, 3)))


def test_extra_reg_grads_are_added():
    rng = np.random.default_rng(7)
    net = build_network("mlp", [], "V", "V", 16, 1)
    init_weights(net, "standard", rng)
    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((4, 3))
    _, base = net.backward(x, y)
    bump = np.ones_like(base[(0, "W")])
    _, combined = net.backward(x, y, extra_reg_grads={(0, "W"): bump})
    assert combined[(0, "W")] == pytest.approx(base[(0, "W")] + bump)


# -- initialization ----------------------------------------------------------


def test_standard_init_variance():
    draws = []
    for seed in range(200):
        net = build_network("mlp", [], "S+S", "S", 1, 1)
        init_weights(net, "standard", np.random.default_rng(seed))
        draws.extend(net.layers[0].W.ravel())
    assert np.var(draws) == pytest.approx(1.0, rel=0.05)  # sigma^2 = 2/n_in = 1
    assert net.layers[0].b == pytest.approx(np.zeros(1))


def test_soft_init_concentrates_on_subspace():
    rng = np.random.default_rng(8)
    net = build_network("per", [O3], "5S+5V", "T2", 16, 2)
    init_weights(net, "soft", rng)
    for i, layer in enumerate(net.layers):
        q, _ = net.ensure_bases(i, tuple(net.groups))
        vec_w = layer.W.reshape(-1, order="F")
        # residual variance is eps * sigma^2 per coordinate; the span holds the rest
        ratio = residual_norm(q, vec_w) / np.linalg.norm(vec_w)
        assert ratio < 0.25


def test_soft_init_vanishing_perturbation_limit():
    # with the perturbation scale at zero the draw lies in the subspace exactly
    rng = np.random.default_rng(18)
    net = build_network("per", [O3], "5S+5V", "T2", 16, 2)
    init_weights(net, "soft", rng, soft_eps=0.0)
    for i, layer in enumerate(net.layers):
        q, _ = net.ensure_bases(i, tuple(net.groups))
        vec_w = layer.W.reshape(-1, order="F")
        assert residual_norm(q, vec_w) < 1e-8 * np.linalg.norm(vec_w)


def test_half_soft_residual_energy_ratio():
    # E[resid^2] / E[||W||^2] = lam*dim(complement) / (dim(span) + lam*dim(complement))
    net = build_network("per", [O3], "V", "V", 16, 1)
    q, _ = net.ensure_bases(0, tuple(net.groups))
    d_span, d_comp = q.basis_dim, q.ambient_dim - q.basis_dim
    expected = 0.5 * d_comp / (d_span + 0.5 * d_comp)
    resid_sq = total_sq = 0.0
    for seed in range(3000):
        init_weights(net, "half_soft", np.random.default_rng(seed))
        vec_w = net.layers[0].W.reshape(-1, order="F")
        resid_sq += residual_norm(q, vec_w) ** 2
        total_sq += float(vec_w @ vec_w)
    assert resid_sq / total_sq == pytest.approx(expected, rel=0.10)


def test_soft_init_without_basis_fails():
    net = build_network("mlp", [], "V", "V", 16, 2)
    with pytest.raises(ValueError):
        init_weights(net, "soft", np.random.default_rng(0))
    with pytest.raises(ValueError):
        init_weights(net, "izarre", np.random.default_rng(0))


# -- checkpoints ---------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    net = build_network("memlp", [make_group("so3"), make_group("s3")], "3V", "S", 16, 2,
                        exact_groups=[make_group("so3")])
    init_weights(net, "standard", rng)
    prefix = str(tmp_path / "ckpt")
    save_checkpoint(net, prefix)
    loaded = load_checkpoint(prefix)
    x = rng.standard_normal((7, 9))
    assert loaded.forward(x) == pytest.approx(net.forward(x), abs=1e-12)
    assert loaded.param_count == net.param_count


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "nope"))
