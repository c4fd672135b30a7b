"""
One voxel, one overconfident outlier
====================================

A voxel has seen consistent evidence for class 0 and now receives a single
wrong prediction at 99 % confidence. The classic product leaves about 2 %
on the old class; the uncertainty-weighted update leaves about 38 %, enough
for a few more agreeing frames to restore the label.
"""

from dataclasses import replace

import numpy as np

from semfuse import FusionConfig, fuse_classic, fuse_robust, init_voxel, posterior
from semfuse.fusion import Kind
from semfuse.observation import DirichletObservation, clamp_variance, concentration, regularize

cfg = FusionConfig()
prior = np.log([0.7, 0.3])
outlier = np.array([0.01, 0.99])

# Classic Bayesian fusion multiplies the prior by the outlier directly.
classic = replace(init_voxel(2, cfg, Kind.BAYESIAN), log_score=prior)
classic = fuse_classic(classic, [outlier], cfg)
print("classic posterior:", posterior(classic).round(4))

# The robust update first mixes the prediction with the uniform distribution,
# then weights it by its Dirichlet concentration relative to the largest one
# this voxel has seen. Earlier consistent frames left alpha-bar at 2.0; the
# outlier's MC samples disagree (variance 0.2), so its weight is lower.
obs = DirichletObservation(regularize(outlier, cfg.beta),
                           concentration(clamp_variance(np.full(2, 0.2), cfg)))
print("regularized outlier:", obs.p_tilde.round(3), " alpha:", obs.alpha.round(3))

robust = replace(init_voxel(2, cfg, Kind.ROBUST), log_score=prior, alpha_bar=np.full(2, 2.0))
robust = fuse_robust(robust, obs, cfg)
print("robust posterior: ", posterior(robust).round(4))

ratio = posterior(robust)[0] / posterior(classic)[0]
print(f"mass kept on the prior class: {ratio:.1f}x the classic result")
