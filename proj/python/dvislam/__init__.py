"""Distributed stereo MSCKF with consensus averaging over shared objects."""

from ._core import (
    Pose,
    so3_exp,
    so3_log,
    se3_exp,
    se3_log,
    se3_adjoint,
    reconstruct_joint,
    info_average,
    correlated_gain,
    ckf_predict,
    ckf_update,
    metropolis_weights,
    LinearModel,
    LiftedModel,
    batch_solution,
    dvi_round,
    CameraModel,
    project,
    linearize_observation,
    triangulate,
    generate_scenario,
    run_config,
    run_single,
)

__all__ = [name for name in dir() if not name.startswith("_")]
