"""
From MC-dropout samples to a fusion input
=========================================

A segmentation network run with dropout active gives M softmax vectors per
pixel. Their mean is the prediction; their per-class variance says how much
the network itself disagrees. This script follows one confident correct
pixel and one overconfident outlier through that pipeline.
"""

import numpy as np

from semfuse import FusionConfig, build_observation, epistemic_variance, predictive_mean
from semfuse.sim import SensorModel, make_rng, sample_sensor

cfg = FusionConfig()
K, M = 4, 32
model = SensorModel(p_correct=0.85, outlier_rate=0.0, spread_correct=0.002, spread_outlier=5.0)
rng = make_rng(0, 7)

# A correct pixel: samples cluster tightly around the peaked mean.
good = sample_sensor(2, model, K, M, rng)

# An outlier: mean peaked on the wrong class, samples widely scattered.
# Setting the rate to 1 forces the outlier branch for this draw.
bad_model = SensorModel(outlier_rate=1.0, outlier_confidence=0.9, spread_outlier=5.0,
                        uncertainty_error_correlation=1.0)
bad = sample_sensor(2, bad_model, K, M, rng)

for name, samples in (("correct", good), ("outlier", bad)):
    obs = build_observation(samples, cfg)
    print(f"{name}:")
    print("  mean      ", predictive_mean(samples).round(3))
    print("  variance  ", epistemic_variance(samples, cfg).round(5))
    print("  p_tilde   ", obs.p_tilde.round(3))
    print("  alpha     ", obs.alpha.round(2))

# Low variance maps to a large alpha, so the correct pixel will dominate
# any voxel that both pixels land in.
