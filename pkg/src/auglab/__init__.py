"""Simulation laboratory for data augmentation under domain shift.

The linear-Gaussian modules (datagen, augment, estimators, risk, bounds,
sweep) generate multi-domain data, apply block-level augmentation
strategies, fit closed-form and ridge estimators, and score them against
exact risk formulas and theoretical bounds. The pixel module provides two
targeted image augmentations that operate on real images.
"""
from ._version import __version__
from .augment import STRATEGY_ALIASES, STRATEGY_KINDS, AugmentationStrategy, augment_dataset, augment_example
from .blocks import BlockLayout, LinearModel, PartitionedVector
from .bounds import (
    BoundQuery,
    BoundReport,
    bound_report,
    eigenvalue_envelope,
    gap_window,
    invariant_excess_exact,
    lower_bound_unaugmented,
    upper_bound_targeted,
)
from .datagen import (
    Dataset,
    DomainAttributes,
    GeneratorConfig,
    LabeledExample,
    default_config,
    sample_dataset,
    sample_domains,
    split_id_validation,
)
from .estimators import (
    DomainMoment,
    compute_moments,
    oracle_model,
    population_estimator,
    ridge_fit,
    tune_penalty,
)
from .pixel import (
    BackgroundPool,
    MaskedImage,
    StainBasis,
    copy_paste,
    hue_jitter,
    stain_jitter,
)
from .risk import (
    RiskReport,
    analytic_id_risk,
    analytic_ood_risk,
    monte_carlo_risk,
    oracle_ood_risk,
    spectral_excess_ood,
)
from .sweep import SweepRow, SweepSpec, emit_results, run_cell, run_sweep
from .verify import run_verification

__all__ = [
    "__version__",
    "AugmentationStrategy",
    "STRATEGY_ALIASES",
    "STRATEGY_KINDS",
    "augment_dataset",
    "augment_example",
    "BlockLayout",
    "LinearModel",
    "PartitionedVector",
    "BoundQuery",
    "BoundReport",
    "bound_report",
    "eigenvalue_envelope",
    "gap_window",
    "invariant_excess_exact",
    "lower_bound_unaugmented",
    "upper_bound_targeted",
    "Dataset",
    "DomainAttributes",
    "GeneratorConfig",
    "LabeledExample",
    "default_config",
    "sample_dataset",
    "sample_domains",
    "split_id_validation",
    "DomainMoment",
    "compute_moments",
    "oracle_model",
    "population_estimator",
    "ridge_fit",
    "tune_penalty",
    "BackgroundPool",
    "MaskedImage",
    "StainBasis",
    "copy_paste",
    "hue_jitter",
    "stain_jitter",
    "RiskReport",
    "analytic_id_risk",
    "analytic_ood_risk",
    "monte_carlo_risk",
    "oracle_ood_risk",
    "spectral_excess_ood",
    "SweepRow",
    "SweepSpec",
    "emit_results",
    "run_cell",
    "run_sweep",
    "run_verification",
]
