"""Small proportional transaction costs under exponential utility: corridor
strategies, shadow prices, explicit dual bounds and Monte Carlo diagnostics."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .dual import DualBound, DualDensity, conjugate, density_path, dual_bound, stop_rho1, theta_path
from .engine import EnsembleResult, path_statistics, run_ensemble
from .ledger import TradeLedger, apply_strategy, shadow_consistency_gap, stop_time_tau
from .metrics import (
    CEResult,
    SweepRow,
    UndefinedAverage,
    bs_leading_loss,
    certainty_equivalent,
    eps_scaling_fit,
    ergodic_ratio,
    leading_loss,
    primal_utility,
    qv_weighted_average,
)
from .models import (
    BlackScholesModel,
    FrictionParams,
    ModelPaths,
    StochVolModel,
    activity_rate_path,
    frictionless_dual_y,
    frictionless_position,
    memm_density_factor,
    simulate_ensemble,
    simulate_under_P,
    simulate_under_Q,
)
from .notrade import (
    CorridorCoeffs,
    DegenerateModel,
    InconsistentInput,
    ShadowPath,
    corridor_coeffs,
    halfwidth,
    shadow_displacement,
    shadow_price,
)
from .paths import InvalidArgument, RngStream, SamplePath, TimeGrid, integrate_ito, make_grid, realized_cov, simulate_bm
from .reflect import ReflectedSolution, initial_offset, reflect_bm, solve_skorohod

__version__ = "0.1.0"
