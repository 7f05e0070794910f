"""Clustered multitask diffusion LMS: simulator, performance models, harness."""

from .datagen import (LinearModelSpec, LocalizationSpec, Sample,
                      gen_linear_sample, gen_localization_sample)
from .engine import (Hyperparams, Trajectory, adapt_step, combine_step, run,
                     run_noncooperative_lms, run_spatial_reg_lms)
from .harness import (ExperimentConfig, ExperimentResult, monte_carlo,
                      experiment_localization, experiment_model_validation)
from .network import (CombinationMatrices, NetworkSpec, RegularizationWeights,
                      build_uniform_a, build_uniform_c, build_uniform_p,
                      random_geometric_network, random_ring_network, validate)
from .theory import (MomentMatrices, apply_k, apply_k_transpose, bias_limit,
                     build_moments, k_spectral_radius, mean_recursion,
                     steady_state_msd, step_size_bound, transient_msd)

__version__ = "0.1.0"
