"""Robust online image alignment with a Grassmannian subspace model."""
from .admm import AdmmOptions, AdmmSolution, LinearizedProblem, solve
from .align import (AlignmentResult, BatchConfig, OnlineState, TrainedModel, align_batch,
                    align_online, align_trained, has_converged, init_online, online_step)
from .errors import (BadRank, ConfigError, DegenerateJacobian, DimensionMismatch, NonFinite,
                     OutOfBounds, ParseError, SingularTransform, TGrastaError, UnsupportedFormat,
                     ZeroNorm)
from .grassmann import StepSizeRule, Subspace, geodesic_step, init_random, loss_gradient, next_step_size
from .imaging import CanonicalFrame, Group, Image, TransformParams, warp, warp_jacobian, warp_with_jacobian
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AdmmOptions", "AdmmSolution", "LinearizedProblem", "solve",
    "AlignmentResult", "BatchConfig", "OnlineState", "TrainedModel", "align_batch", "align_online",
    "align_trained", "has_converged", "init_online", "online_step",
    "BadRank", "ConfigError", "DegenerateJacobian", "DimensionMismatch", "NonFinite", "OutOfBounds",
    "ParseError", "SingularTransform", "TGrastaError", "UnsupportedFormat", "ZeroNorm",
    "StepSizeRule", "Subspace", "geodesic_step", "init_random", "loss_gradient", "next_step_size",
    "CanonicalFrame", "Group", "Image", "TransformParams", "warp", "warp_jacobian", "warp_with_jacobian",
    "BACKEND", "__version__",
]
