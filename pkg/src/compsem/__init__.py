"""Structural equation modeling with latent variables and composites."""

from .assess import FitStatistics, fit_statistics, srmr, standardize
from .data import (
    complete_cases,
    exact_population_sample,
    read_cov_csv,
    read_csv,
    sample_moments,
)
from .estimate import (
    FitOptions,
    FitResult,
    SampleMoments,
    fit,
    gls_discrepancy,
    ml_discrepancy,
)
from .identify import IdentificationReport, check_identification, count_df
from .matrices import (
    ModelStructure,
    SingularModelError,
    apply_composite_variance_constraints,
    assemble,
    composite_loadings,
    implied_covariance,
    structural_covariance,
)
from .ptable import (
    ParameterTable,
    ScalingOptions,
    build_parameter_table,
    start_values,
)
from .syntax import ModelSpec, ModelSyntaxError, parse_model

__version__ = "0.1.0"

__all__ = [
    "FitOptions",
    "FitResult",
    "FitStatistics",
    "IdentificationReport",
    "ModelSpec",
    "ModelStructure",
    "ModelSyntaxError",
    "ParameterTable",
    "SampleMoments",
    "ScalingOptions",
    "SingularModelError",
    "apply_composite_variance_constraints",
    "assemble",
    "build_parameter_table",
    "check_identification",
    "complete_cases",
    "composite_loadings",
    "count_df",
    "exact_population_sample",
    "fit",
    "fit_statistics",
    "gls_discrepancy",
    "implied_covariance",
    "ml_discrepancy",
    "parse_model",
    "read_cov_csv",
    "read_csv",
    "sample_moments",
    "srmr",
    "standardize",
    "start_values",
    "structural_covariance",
]
