"""Minimum-energy steering of a linear Gauss-Markov system to a Gaussian
output distribution, with covariance propagation and Monte Carlo checks."""

__version__ = "0.1.0"

from .errors import (BridgeError, ConfigError, ConstraintInfeasible, DimensionMismatch,
                     InsufficientPaths, IntegrationFailure, NoConvergence, NotControllable,
                     NotPositiveDefinite, RankDeficient, SingularFlow)
from .model import (FullState, MatrixFunction, ModelSpec, Output, PriorMoments, TimeGrid,
                    assert_controllable, compute_prior_moments, ou_example)
from .staticbridge import (StaticSolution, oracle_minimize, output_transform, solve_bridge,
                           solve_output_bridge, solve_state_bridge, static_objective,
                           static_residuals)
from .dynbridge import (CovSchedule, EnergyReport, GainSchedule, expected_energy, pi_schedule,
                        pq_boundary_residuals, propagate_closed_loop, solve_pipeline,
                        terminal_pi)
from .mc import SimConfig, TrajectoryBatch, empirical_moments, simulate_paths, tube_radii
from .symmat import kl_gaussian, quadratic_solve, sym_sqrt
