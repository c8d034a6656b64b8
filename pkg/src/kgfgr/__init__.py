"""Resonant energy transfer from bound states to radiation in cubic Klein-Gordon models."""
from ._accel import backend
from .fgr import ContinuumOperator, build_matrices, check_fgr
from .kgsim import KGConfig, discretize, run_experiment
from .modedyn import OdeSystem, build_system, integrate, verify_theorem_bounds
from .normalform import SparsePolynomial, birkhoff, poisson_bracket
from .pipeline import ExperimentConfig, emit_report, run_pipeline
from .resonance import (ContractError, FrequencySpec, ResonanceBoundaryError, ResonancePair,
                        check_assumptions, compute_exponents, enumerate_lambda, lambda_star,
                        minimal_set)

__version__ = "0.1.0"
