"""Robust Bayesian fusion of uncertain semantic predictions into sparse voxel maps."""

from .core import CameraIntrinsics, LabelSet, Pose, VoxelKey, argmax_class, check_simplex, normalize
from .errors import (DegenerateDistribution, EmptyGroundTruth, InvalidConfig, InvalidScene,
                     LabelSetMismatch, MalformedFile, MalformedFrame, OrderViolation, OutputError,
                     SemFuseError)
from .fusion import (BAYESIAN, ROBUST_D, ROBUST_DR, ROBUST_R, STRATEGIES, SUM_LABELS, SUM_PROBS,
                     TABLE_ORDER, FusionStrategy, VoxelState, fuse, fuse_classic, fuse_robust,
                     fuse_sum_labels, fuse_sum_probs, init_voxel, parse_strategy, posterior)
from .mapping import Frame, SemanticVoxelMap, back_project, voxelize
from .metrics import EvalReport, compare_strategies, evaluate
from .observation import (DirichletObservation, FusionConfig, build_observation, concentration,
                          epistemic_variance, predictive_mean, regularize)

__version__ = "0.1.0"
