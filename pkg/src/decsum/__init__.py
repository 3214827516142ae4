"""Streaming estimation of decreasing-function sums g(f) = sum_d g(|f_d|)."""

from .core import (DomainError, FrequencyVector, FunctionSpec, StreamFormatError, StreamParams,
                   StreamUpdate, accumulate, evaluate_g, exact_sum, parse_function, read_stream,
                   validate_stream, write_stream)
from .estimate import (EstimateReport, build_s, estimate, fp_sigma, harmonic_mean,
                       median_estimate, required_s, universal_ok)
from .recovery import L0Estimator, RecoveryFailed, SparseRecovery
from .sigma import SigmaResult, check_ps_relation, sigma_exact, sigma_fast
from .sketch import (ExtractionFailed, InsertionSketch, Sample, TurnstileSketch, load_sketch,
                     new_sketch)

__version__ = "0.1.0"

__all__ = [
    "DomainError", "EstimateReport", "ExtractionFailed", "FrequencyVector", "FunctionSpec",
    "InsertionSketch", "L0Estimator", "RecoveryFailed", "Sample", "SigmaResult",
    "SparseRecovery", "StreamFormatError", "StreamParams", "StreamUpdate", "TurnstileSketch",
    "accumulate", "build_s", "check_ps_relation", "estimate", "evaluate_g", "exact_sum",
    "fp_sigma", "harmonic_mean", "load_sketch", "median_estimate", "new_sketch",
    "parse_function", "read_stream", "required_s", "sigma_exact", "sigma_fast",
    "universal_ok", "validate_stream", "write_stream",
]
