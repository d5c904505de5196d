"""Time-consistent mean-risk asset allocation under alpha-stable Levy markets."""

from .errors import (ConfigError, ConvergenceError, DomainError, InsufficientSamples,
                     UnsupportedConfiguration)
from .market import (CoefficientCurve, GainMoments, MarketModel, Strategy, TimeGrid, gain_moments, integrate,
                     m_at, w_at)
from .montecarlo import SimResult, empirical_J, empirical_risk, simulate_gains
from .objective import ObjectiveSpec, PenaltySpec, TargetSpec, evaluate_J, expected_target, grad_J
from .risk import RiskSpec, rho_base, rho_closed
from .solver import (EquilibriumResult, SolverConfig, foc_residual_continuous, generator_risk_continuous,
                     hjb_residual_discrete, mean_variance_closed, mean_variance_continuous, no_penalty_closed,
                     no_penalty_continuous, solve_continuous_equilibrium, solve_equilibrium)
from .stable import SpectralMeasure, StableLaw, c_alpha, char_fn, quantile, sample

__version__ = "0.1.0"
