"""Soft-equivariance regularization for MLPs under mixed approximate symmetries."""

from .basis import (
    EquivariantBasis,
    equivariant_map_basis,
    invariant_vector_basis,
    joint_basis,
    project,
    residual_norm,
)
from .groups import (
    Group,
    GroupElement,
    Representation,
    act,
    direct_sum,
    group_from_name,
    make_group,
    parse_rep_spec,
    sample_element,
    scalar_rep,
    tensor_power,
    vector_rep,
)
from .nets import Network, allocate_hidden_rep, build_network, gated_activation, init_weights
from .regularize import BoundInputs, PerConfig, autotune, equivariance_bound, per_term, per_total, rpp_prior
from .tasks import (
    Dataset,
    Trajectory,
    ade,
    avg_cos_sim,
    data_equivariance_error,
    gen_cossim,
    gen_inertia,
    gen_trajectories,
    model_equivariance_error,
    moment_of_inertia,
)
from .train import RunResult, TrainConfig, adam_step, cosine_lr, evaluate, train

__version__ = "0.1.0"
