"""Risk evaluation: exact quadratic forms, spectral form, and Monte-Carlo.

OOD risk integrates the squared error over fresh domains drawn from the
meta-distribution; ID risk integrates over the training domains. Both have
closed forms for linear models in this setting. The spectral form expresses
the excess OOD risk of the population estimators through the eigensystem of
the empirical domain moment and must agree with the quadratic form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import RngLike, as_seed_sequence
from .blocks import LinearModel
from .datagen import GeneratorConfig
from .estimators import DomainMoment, _check_moment_dims

# Eigenvalues at or below this are treated as the rank-deficient tail.
_EIG_TAIL_THRESHOLD = 1e-10

DEFAULT_MC_DOMAINS = 1000
DEFAULT_MC_SAMPLES_PER_DOMAIN = 100


@dataclass(frozen=True)
class RiskReport:
    """Risk summary of one model: OOD, ID, and excess over the oracle."""

    ood_risk: float
    id_risk: float
    excess_ood: float
    method: str
    num_domains: int

    def __post_init__(self) -> None:
        if not self.ood_risk >= 0:
            raise ValueError(f"ood_risk must be nonnegative, got {self.ood_risk}")
        if self.excess_ood < -1e-8:
            raise ValueError(
                f"excess_ood {self.excess_ood} is below the oracle by more than 1e-8"
            )


def _check_model_dims(model: LinearModel, config: GeneratorConfig) -> None:
    if model.layout != config.layout:
        raise ValueError(
            f"model layout {model.layout} does not match config layout {config.layout}"
        )


def _dom_diag(config: GeneratorConfig, core_value: float, spu_value: float) -> np.ndarray:
    return np.concatenate(
        [np.full(config.d_core, core_value), np.full(config.d_spu, spu_value)]
    )


def analytic_ood_risk(model: LinearModel, config: GeneratorConfig) -> float:
    """Expected squared error on unseen domains, in closed form.

    Mismatch on the object block and any noise-block weight add directly;
    domain-block weights pay the within-domain variance on their own size
    and the across-domain variance on their gap to the true weights.
    """
    _check_model_dims(model, config)
    theta_star = config.theta_star
    sigma = _dom_diag(config, config.sigma_core_sq, config.sigma_spu_sq)
    tau = _dom_diag(config, config.tau_core_sq, config.tau_spu_sq)
    dom = model.dom
    gap = theta_star.dom - dom
    obj_gap = model.obj - theta_star.obj
    return float(
        config.sigma_y_sq
        + obj_gap @ obj_gap
        + model.noise @ model.noise
        + dom @ (sigma * dom)
        + gap @ (tau * gap)
    )


def analytic_id_risk(model: LinearModel, moments: DomainMoment, config: GeneratorConfig) -> float:
    """Expected squared error on the training domains, in closed form.

    Identical to the OOD form except the across-domain variance is replaced
    by the empirical second moment of the training domains.
    """
    _check_model_dims(model, config)
    _check_moment_dims(moments, config)
    theta_star = config.theta_star
    sigma = _dom_diag(config, config.sigma_core_sq, config.sigma_spu_sq)
    dom = model.dom
    gap = theta_star.dom - dom
    obj_gap = model.obj - theta_star.obj
    return float(
        config.sigma_y_sq
        + obj_gap @ obj_gap
        + model.noise @ model.noise
        + dom @ (sigma * dom)
        + gap @ (moments.M_full @ gap)
    )


def oracle_ood_risk(config: GeneratorConfig) -> float:
    """Minimal achievable OOD risk over linear models."""
    core = config.theta_star.core
    spu = config.theta_star.spu
    core_term = (
        config.tau_core_sq
        * config.sigma_core_sq
        / (config.sigma_core_sq + config.tau_core_sq)
        * float(core @ core)
    )
    spu_term = (
        config.tau_spu_sq
        * config.sigma_spu_sq
        / (config.sigma_spu_sq + config.tau_spu_sq)
        * float(spu @ spu)
    )
    return config.sigma_y_sq + core_term + spu_term


def spectral_weight(eigenvalue: float, sigma_sq: float, tau_sq: float) -> float:
    """Per-eigendirection excess-risk weight.

    Zero exactly when the eigenvalue equals tau^2 (the infinite-domain
    limit); at eigenvalue zero it reaches tau^4 / (sigma^2 + tau^2).
    """
    num = sigma_sq**2 * (tau_sq - eigenvalue) ** 2
    den = (sigma_sq + tau_sq) * (eigenvalue + sigma_sq) ** 2
    return num / den


def _shared_dom_scales(config: GeneratorConfig) -> tuple[float, float]:
    """(sigma^2, tau^2) shared by every domain-dependent block."""
    scales = []
    if config.d_core > 0:
        scales.append((config.sigma_core_sq, config.tau_core_sq))
    if config.d_spu > 0:
        scales.append((config.sigma_spu_sq, config.tau_spu_sq))
    if len(set(scales)) > 1:
        raise ValueError(
            "the full-block spectral form requires core and spu blocks to share "
            "sigma^2 and tau^2; use matching variances or the Targeted form"
        )
    return scales[0]


def spectral_excess_ood(
    model_kind: str, moments: DomainMoment, config: GeneratorConfig
) -> float:
    """Excess OOD risk of a population estimator via the moment eigensystem.

    Unaugmented uses the full domain moment: directions the training domains
    span get the spectral weight of their eigenvalue, the unseen orthogonal
    complement gets the zero-eigenvalue weight. Targeted restricts to the
    core moment. Both must match the quadratic-form excess of the matching
    population estimator.
    """
    _check_moment_dims(moments, config)
    if model_kind == "Unaugmented":
        sigma_sq, tau_sq = _shared_dom_scales(config)
        matrix = moments.M_full
        target = config.theta_star.dom
    elif model_kind == "Targeted":
        sigma_sq, tau_sq = config.sigma_core_sq, config.tau_core_sq
        matrix = moments.M_core
        target = config.theta_star.core
    else:
        raise ValueError(
            f"model_kind must be 'Unaugmented' or 'Targeted', got {model_kind!r}"
        )
    if matrix.shape[0] == 0:
        return 0.0
    eigvals, eigvecs = np.linalg.eigh(matrix)
    proj_sq = (eigvecs.T @ target) ** 2
    tail_weight = tau_sq**2 / (sigma_sq + tau_sq)
    weights = np.where(
        eigvals > _EIG_TAIL_THRESHOLD,
        spectral_weight(np.maximum(eigvals, 0.0), sigma_sq, tau_sq),
        tail_weight,
    )
    return float(weights @ proj_sq)


def monte_carlo_risk(
    model: LinearModel,
    config: GeneratorConfig,
    num_test_domains: int = DEFAULT_MC_DOMAINS,
    samples_per_domain: int = DEFAULT_MC_SAMPLES_PER_DOMAIN,
    rng_stream: RngLike = 0,
) -> tuple[float, float]:
    """Empirical OOD error on fresh domains: (rmse, stderr of the rmse).

    Domains are independent, so the standard error comes from the spread of
    per-domain mean squared errors and is mapped to the rmse scale by the
    delta method. With a single test domain the stderr is NaN.
    """
    results = monte_carlo_risk_many(
        [model], config, num_test_domains, samples_per_domain, rng_stream
    )
    return results[0]


def monte_carlo_risk_many(
    models: Sequence[LinearModel],
    config: GeneratorConfig,
    num_test_domains: int = DEFAULT_MC_DOMAINS,
    samples_per_domain: int = DEFAULT_MC_SAMPLES_PER_DOMAIN,
    rng_stream: RngLike = 0,
) -> list[tuple[float, float]]:
    """Evaluate several models on one shared set of Monte-Carlo draws.

    The draws depend only on (config, counts, rng_stream), and each model is
    scored with its own vector products, so every result is bitwise equal to
    a single-model monte_carlo_risk call with the same stream. Sharing draws
    across models makes their comparison paired.
    """
    if num_test_domains < 1 or samples_per_domain < 1:
        raise ValueError("num_test_domains and samples_per_domain must be at least 1")
    for model in models:
        _check_model_dims(model, config)

    layout = config.layout
    slices = layout.slices()
    thetas = [model.concat() for model in models]
    theta_star = config.theta_star
    n = samples_per_domain

    children = as_seed_sequence(rng_stream).spawn(num_test_domains)
    per_domain_mse = np.empty((len(models), num_test_domains))
    x = np.empty((n, layout.d_total))
    for d, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        mu_core = rng.standard_normal(config.d_core) * math.sqrt(config.tau_core_sq)
        mu_spu = rng.standard_normal(config.d_spu) * math.sqrt(config.tau_spu_sq)
        x[:, slices["obj"]] = rng.standard_normal((n, config.d_obj))
        x[:, slices["noise"]] = rng.standard_normal((n, config.d_noise))
        x[:, slices["core"]] = (
            rng.standard_normal((n, config.d_core)) * math.sqrt(config.sigma_core_sq) + mu_core
        )
        x[:, slices["spu"]] = (
            rng.standard_normal((n, config.d_spu)) * math.sqrt(config.sigma_spu_sq) + mu_spu
        )
        eps = rng.standard_normal(n) * math.sqrt(config.sigma_y_sq)
        y = x[:, slices["obj"]] @ theta_star.obj + mu_core @ theta_star.core + eps
        for k, theta in enumerate(thetas):
            resid = x @ theta - y
            per_domain_mse[k, d] = resid @ resid / n

    results = []
    for k in range(len(models)):
        mse = float(per_domain_mse[k].mean())
        rmse = math.sqrt(mse)
        if num_test_domains > 1:
            se_mse = float(per_domain_mse[k].std(ddof=1)) / math.sqrt(num_test_domains)
            stderr = se_mse / (2.0 * rmse) if rmse > 0 else 0.0
        else:
            stderr = math.nan
        results.append((rmse, stderr))
    return results


def risk_report(
    model: LinearModel,
    moments: DomainMoment,
    config: GeneratorConfig,
    method: str,
    num_domains: int,
) -> RiskReport:
    """Score a model analytically on both axes and against the oracle."""
    ood = analytic_ood_risk(model, config)
    return RiskReport(
        ood_risk=ood,
        id_risk=analytic_id_risk(model, moments, config),
        excess_ood=ood - oracle_ood_risk(config),
        method=method,
        num_domains=num_domains,
    )
