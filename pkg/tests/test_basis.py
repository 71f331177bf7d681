"""Null-space bases: oracle agreement, orthonormality, projector behavior."""

import numpy as np
import pytest

from softequiv.basis import (
    dump_basis_csv,
    equivariant_map_basis,
    invariant_vector_basis,
    joint_basis,
    joint_invariant_basis,
    project,
    residual_norm,
    structured_invariant_basis,
    structured_map_basis,
)
from softequiv.groups import (
    direct_sum,
    make_group,
    parse_rep_spec,
    sample_element,
    scalar_rep,
    tensor_power,
    vector_rep,
)

from oracles import sampled_map_null_dim, sampled_vector_null_dim

O3 = make_group("o3")
SO3 = make_group("so3")
O2Z = make_group("o2", "z")
S3 = make_group("s3")
TRIVIAL = make_group("trivial")


def test_o3_vector_commutant_is_identity_line():
    basis = equivariant_map_basis(vector_rep(O3), vector_rep(O3))
    assert basis.basis_dim == 1
    col = basis.columns[:, 0]
    expected = np.eye(3).reshape(-1, order="F") / np.sqrt(3.0)
    assert np.allclose(col, expected) or np.allclose(col, -expected)


def test_o2z_vector_commutant_pattern():
    basis = equivariant_map_basis(vector_rep(O2Z), vector_rep(O2Z))
    assert basis.basis_dim == 2
    # span must contain blockdiag(a I2, c) and nothing skew
    in_span = np.diag([1.0, 1.0, 0.0]).reshape(-1, order="F")
    assert residual_norm(basis, in_span) < 1e-8
    in_span2 = np.diag([0.0, 0.0, 1.0]).reshape(-1, order="F")
    assert residual_norm(basis, in_span2) < 1e-8
    skew = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).reshape(-1, order="F")
    assert residual_norm(basis, skew) > 0.9  # killed by the reflection


def test_invariant_vector_dims():
    assert invariant_vector_basis(vector_rep(O3)).basis_dim == 0
    basis = invariant_vector_basis(vector_rep(O2Z))
    assert basis.basis_dim == 1
    assert np.allclose(np.abs(basis.columns[:, 0]), [0.0, 0.0, 1.0])
    assert invariant_vector_basis(vector_rep(S3)).basis_dim == 0
    # scalars carry the trivial action, so every coefficient is invariant
    assert invariant_vector_basis(scalar_rep(S3)).basis_dim == 1


def test_trivial_group_gives_full_space():
    rep_in = parse_rep_spec("2V", TRIVIAL)
    rep_out = parse_rep_spec("S+V", TRIVIAL)
    basis = equivariant_map_basis(rep_in, rep_out)
    assert basis.basis_dim == rep_in.dim * rep_out.dim
    assert np.allclose(basis.columns @ basis.columns.T, np.eye(basis.ambient_dim))


def test_joint_axis_groups_match_full_rotation_group():
    axes = [make_group("o2", a) for a in "xyz"]
    for spec_in, spec_out in (("V", "V"), ("S+V", "V"), ("5S+5V", "T2")):
        rep_in = parse_rep_spec(spec_in, O3)
        rep_out = parse_rep_spec(spec_out, O3)
        joint = joint_basis(axes, rep_in, rep_out)
        full = equivariant_map_basis(rep_in, rep_out)
        assert joint.basis_dim == full.basis_dim


def test_joint_so3_s3_vector_map():
    basis = joint_basis([SO3, S3], vector_rep(SO3), vector_rep(SO3))
    assert basis.basis_dim == 1  # uniform scalings add no constraint on V -> V


def test_joint_dim_bounded_by_members():
    axes = [make_group("o2", a) for a in "xyz"]
    rep_in = parse_rep_spec("S+V", O3)
    rep_out = parse_rep_spec("V", O3)
    joint = joint_basis(axes, rep_in, rep_out)
    for g in axes:
        single = equivariant_map_basis(rep_in.with_group(g), rep_out.with_group(g))
        assert joint.basis_dim <= single.basis_dim


def test_joint_requires_groups():
    with pytest.raises(ValueError):
        joint_basis([], vector_rep(O3), vector_rep(O3))


def test_group_mismatch_rejected():
    with pytest.raises(ValueError):
        equivariant_map_basis(vector_rep(O3), vector_rep(SO3))


def test_columns_orthonormal_and_satisfy_constraints():
    rng = np.random.default_rng(0)
    for group in (O3, O2Z, S3, make_group("sl2", "z")):
        rep_in = parse_rep_spec("S+V", group)
        rep_out = parse_rep_spec("V+T2", group)
        basis = equivariant_map_basis(rep_in, rep_out)
        q = basis.columns
        assert np.linalg.norm(q.T @ q - np.eye(basis.basis_dim)) < 1e-8
        for j in range(basis.basis_dim):
            w = q[:, j].reshape(rep_out.dim, rep_in.dim, order="F")
            for _ in range(5):
                g = sample_element(group, rng)
                defect = rep_out.lift(g) @ w - w @ rep_in.lift(g)
                assert np.abs(defect).max() < 1e-6


def test_projected_map_is_equivariant():
    rng = np.random.default_rng(1)
    rep_in = parse_rep_spec("5S+5V", O3)
    rep_out = parse_rep_spec("T2", O3)
    basis = equivariant_map_basis(rep_in, rep_out)
    v = rng.standard_normal(basis.ambient_dim)
    w = project(basis, v).reshape(rep_out.dim, rep_in.dim, order="F")
    wn = np.linalg.norm(w)
    for _ in range(30):
        g = sample_element(O3, rng)
        defect = rep_out.lift(g) @ w - w @ rep_in.lift(g)
        assert np.linalg.norm(defect) < 1e-6 * wn


def test_projection_properties():
    rng = np.random.default_rng(2)
    basis = equivariant_map_basis(vector_rep(O2Z), vector_rep(O2Z))
    v = rng.standard_normal(9)
    p = project(basis, v)
    assert project(basis, p) == pytest.approx(p, abs=1e-10)
    assert residual_norm(basis, p) < 1e-10
    r = residual_norm(basis, v)
    assert abs(r**2 + np.dot(p, p) - np.dot(v, v)) < 1e-9
    assert 0.0 <= r <= np.linalg.norm(v) + 1e-12
    # vectors in the orthogonal complement keep their full norm
    orth = v - p
    assert residual_norm(basis, orth) == pytest.approx(np.linalg.norm(orth), abs=1e-10)


def test_empty_basis_projects_to_zero():
    basis = invariant_vector_basis(vector_rep(O3))
    assert basis.basis_dim == 0
    assert project(basis, np.ones(3)) == pytest.approx(np.zeros(3))
    assert residual_norm(basis, np.ones(3)) == pytest.approx(np.sqrt(3.0))


def test_projection_dim_mismatch():
    basis = equivariant_map_basis(vector_rep(O3), vector_rep(O3))
    with pytest.raises(ValueError):
        project(basis, np.ones(4))


def test_tolerance_decade_stability():
    cases = [
        (O3, "V", "V"),
        (O2Z, "S+V", "V"),
        (S3, "3V", "S"),
        (O3, "5S+5V", "T2"),
    ]
    for group, spec_in, spec_out in cases:
        rep_in = parse_rep_spec(spec_in, group)
        rep_out = parse_rep_spec(spec_out, group)
        dims = {
            equivariant_map_basis(rep_in, rep_out, tolerance=tol).basis_dim
            for tol in (1e-9, 1e-8, 1e-7)
        }
        assert len(dims) == 1


def test_group_order_does_not_change_span():
    axes = [make_group("o2", a) for a in "xyz"]
    rep_in = parse_rep_spec("S+V", O3)
    rep_out = parse_rep_spec("V+T2", O3)
    fwd = joint_basis(axes, rep_in, rep_out)
    rev = joint_basis(axes[::-1], rep_in, rep_out)
    assert fwd.basis_dim == rev.basis_dim
    pf = fwd.columns @ fwd.columns.T
    pr = rev.columns @ rev.columns.T
    assert np.abs(pf - pr).max() < 1e-9


def test_structured_matches_direct():
    cases = [
        ([O3], "5S+5V", "T2"),
        ([O2Z], "2S+2V+T2", "S+V"),
        ([SO3, S3], "3V", "S+V"),
    ]
    for groups, spec_in, spec_out in cases:
        rep_in = parse_rep_spec(spec_in, groups[0])
        rep_out = parse_rep_spec(spec_out, groups[0])
        direct = joint_basis(groups, rep_in, rep_out)
        structured = structured_map_basis(groups, rep_in, rep_out)
        assert structured.basis_dim == direct.basis_dim
        pd = direct.columns @ direct.columns.T
        ps = structured.columns @ structured.columns.T
        assert np.abs(pd - ps).max() < 1e-9
        dv = joint_invariant_basis(groups, rep_out)
        sv = structured_invariant_basis(groups, rep_out)
        assert dv.basis_dim == sv.basis_dim


def test_size_cap_fails_fast():
    rep = parse_rep_spec("5S+5V", O3)
    with pytest.raises(ValueError, match="cap"):
        equivariant_map_basis(rep, rep, max_entries=1000)


def test_oracle_agreement_small_battery():
    battery = [
        ([O3], "V", "V"),
        ([O3], "S", "V"),
        ([SO3], "V", "V"),
        ([O2Z], "V", "V"),
        ([S3], "V", "V"),
        ([make_group("sl2", "z")], "V", "V"),
        ([make_group("gl2", "y")], "V", "V"),
        ([SO3, S3], "3V", "S"),
    ]
    for groups, spec_in, spec_out in battery:
        rep_in = parse_rep_spec(spec_in, groups[0])
        rep_out = parse_rep_spec(spec_out, groups[0])
        ours = joint_basis(groups, rep_in, rep_out).basis_dim
        oracle = sampled_map_null_dim(groups, rep_in, rep_out, n_samples=40, seed=7)
        assert ours == oracle, (groups[0].name, spec_in, spec_out)
        ours_v = joint_invariant_basis(groups, rep_out).basis_dim
        oracle_v = sampled_vector_null_dim(groups, rep_out, n_samples=40, seed=8)
        assert ours_v == oracle_v


def test_basis_dump_csv(tmp_path):
    basis = equivariant_map_basis(vector_rep(O2Z), vector_rep(O2Z))
    path = tmp_path / "basis.csv"
    dump_basis_csv(basis, str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == basis.basis_dim
    first = np.array([float(v) for v in lines[0].split(",")])
    assert first == pytest.approx(basis.columns[:, 0])


def test_tensor_output_invariant_bias_is_isotropic():
    basis = invariant_vector_basis(tensor_power(vector_rep(O3), 2))
    assert basis.basis_dim == 1
    mat = basis.columns[:, 0].reshape(3, 3)
    assert np.abs(mat - mat[0, 0] * np.eye(3)).max() < 1e-8


def test_direct_sum_block_bases_compose():
    rep_in = direct_sum([scalar_rep(O3), vector_rep(O3)])
    rep_out = vector_rep(O3)
    basis = equivariant_map_basis(rep_in, rep_out)
    # S->V contributes nothing (no invariant vectors); V->V contributes the identity line
    assert basis.basis_dim == 1
