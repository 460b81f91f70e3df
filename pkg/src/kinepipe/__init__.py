"""Staged monocular-biomechanics pipeline engine.

Baseline (disk-serialized, sequential) and optimized (in-memory, batched,
parallel) execution of a detect -> estimate -> fit pipeline, an inverse
kinematics fitter over a 40-DOF humanoid, a benchmark harness and a
kinematic-consistency metric suite.
"""
from .errors import KinepipeError
from .fitting import FitResult, SolverConfig, fit_frame, fit_sequence, frame_objective
from .kernels import BACKEND as KERNEL_BACKEND
from .kinematics import (
    BodyConfiguration,
    CoordinateTrajectory,
    KinematicModel,
    default_model,
    forward_kinematics,
    load_model,
    position_jacobian,
)
from .pipeline import PipelineConfig, PipelineRunRecord, run_pipeline, split_batches
from .stages import (
    DetectionSequence,
    GaitParameters,
    NoiseModel,
    StageInitProfile,
    generate_synthetic_sequence,
    init_stages,
)

__version__ = "0.1.0"
__all__ = [
    "KERNEL_BACKEND",
    "BodyConfiguration",
    "CoordinateTrajectory",
    "DetectionSequence",
    "FitResult",
    "GaitParameters",
    "KinematicModel",
    "KinepipeError",
    "NoiseModel",
    "PipelineConfig",
    "PipelineRunRecord",
    "SolverConfig",
    "StageInitProfile",
    "default_model",
    "fit_frame",
    "fit_sequence",
    "forward_kinematics",
    "frame_objective",
    "generate_synthetic_sequence",
    "init_stages",
    "load_model",
    "position_jacobian",
    "run_pipeline",
    "split_batches",
]
