"""Jump diffusions with state-dependent catastrophes: criteria, regime checks and Monte Carlo."""

__version__ = "0.1.0"

from .model import (CoefficientFn, FragmentationKernel, JumpMeasure, ModelSpec, build_model,
                    validate_assumptions)
from .simulate import PathRecord, SimConfig, simulate_path

__all__ = ["CoefficientFn", "FragmentationKernel", "JumpMeasure", "ModelSpec", "build_model",
           "validate_assumptions", "SimConfig", "PathRecord", "simulate_path", "__version__"]
