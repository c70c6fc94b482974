"""Numerical toolkit for the Witsenhausen counterexample with LoPE controllers."""

__version__ = "0.1.0"

from .costs import CostPoint, QuadratureConfig, closed_form_cost, estimation_cost, gaussian_envelope, linear_cost
from .estimator import LopeController, MMSEDecoder
from .montecarlo import SimConfig, SimResult, simulate
from .optimizer import OptimizerOptions, SweepOptions, WeightedObjective, optimize_at, optimize_at_power, sweep
from .strategies import Bpsk, Linear, Lope, LopeParams, ProblemConfig, TwoPoint, Zero

__all__ = [
    "Bpsk", "CostPoint", "Linear", "Lope", "LopeController", "LopeParams", "MMSEDecoder",
    "OptimizerOptions", "ProblemConfig", "QuadratureConfig", "SimConfig", "SimResult",
    "SweepOptions", "TwoPoint", "WeightedObjective", "Zero", "closed_form_cost",
    "estimation_cost", "gaussian_envelope", "linear_cost", "optimize_at", "optimize_at_power",
    "simulate", "sweep",
]
