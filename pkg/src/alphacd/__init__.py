"""Randomized block coordinate descent with arbitrary sampling.

One iteration family covers gradient descent, accelerated gradient
descent, serial and parallel coordinate descent and their proximal and
accelerated variants, selected by the sampling and the theta schedule.
"""

from .blockspace import BlockMetric, BlockPartition, BlockVector, weighted_norm_sq
from .objective import LogisticLoss, SmoothObjective, SquareLoss
from .regularizer import Regularizer
from .sampling import (DistributedSampling, ExplicitSampling, FullSampling, SerialSampling,
                       TauNiceSampling, parse_sampling)
from .eso import certify_quadratic, falsify_monte_carlo, full_eso, optimal_serial_probabilities, serial_eso
from .solver import (ConfigError, PRESETS, Problem, SolverConfig, ThetaSchedule, Trace, preset,
                     run, run_efficient, run_generic, run_smooth)
from . import analysis

__version__ = "0.1.0"
