"""Cross-formula consistency checks runnable from the command line.

Each check pits two independent routes to the same quantity against each
other (closed form vs. spectral form, population formula vs. Monte-Carlo,
bound vs. realized excess). They are fast enough to run before trusting any
sweep output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import tagged_sequence
from .augment import AugmentationStrategy
from .bounds import (
    BoundQuery,
    bound_report,
    eigenvalue_envelope,
    gap_polynomial_check,
    invariant_excess_exact,
    lower_bound_unaugmented,
    upper_bound_targeted,
)
from .datagen import default_config, sample_domains
from .estimators import compute_moments, oracle_model, population_estimator
from .risk import (
    analytic_ood_risk,
    monte_carlo_risk,
    oracle_ood_risk,
    spectral_excess_ood,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_oracle_identity() -> CheckResult:
    worst = 0.0
    for seed in (0, 1, 2):
        for overrides in ({}, {"sigma_core_sq": 0.5, "sigma_spu_sq": 0.5},
                          {"tau_core_sq": 2.0, "tau_spu_sq": 2.0}):
            cfg = default_config(seed=seed, **overrides)
            direct = oracle_ood_risk(cfg)
            via_model = analytic_ood_risk(oracle_model(cfg), cfg)
            worst = max(worst, abs(direct - via_model) / direct)
    return CheckResult(
        name="oracle-risk-identity",
        passed=worst <= 1e-12,
        detail=f"max relative gap {worst:.2e} (tolerance 1e-12)",
    )


def _check_shelf_equals_unaugmented() -> CheckResult:
    exact = True
    for seed in (0, 1, 2):
        cfg = default_config(seed=seed)
        domains = sample_domains(cfg, 50, tagged_sequence(seed, "verify|domains"))
        moments = compute_moments(domains)
        unaug = population_estimator(moments, cfg, AugmentationStrategy("Unaugmented"))
        shelf = population_estimator(moments, cfg, AugmentationStrategy("OffTheShelf"))
        exact = exact and all(
            np.array_equal(getattr(unaug, b), getattr(shelf, b))
            for b in ("obj", "noise", "core", "spu")
        )
    return CheckResult(
        name="population-shelf-equals-unaugmented",
        passed=exact,
        detail="estimators identical" if exact else "estimators differ",
    )


def _check_spectral_agreement() -> CheckResult:
    worst = 0.0
    oracle_gap = 0.0
    for seed, D in ((0, 20), (1, 100), (2, 600), (3, 1500)):
        cfg = default_config(seed=seed)
        domains = sample_domains(cfg, D, tagged_sequence(seed, f"verify|domains|D={D}"))
        moments = compute_moments(domains)
        base = oracle_ood_risk(cfg)
        for kind in ("Unaugmented", "Targeted"):
            model = population_estimator(moments, cfg, AugmentationStrategy(kind))
            analytic = analytic_ood_risk(model, cfg) - base
            spectral = spectral_excess_ood(kind, moments, cfg)
            scale = max(abs(analytic), 1e-30)
            worst = max(worst, abs(analytic - spectral) / scale)
            oracle_gap = min(oracle_gap, analytic)
    passed = worst <= 1e-8 and oracle_gap >= -1e-8
    return CheckResult(
        name="spectral-matches-analytic",
        passed=passed,
        detail=f"max relative gap {worst:.2e} (tolerance 1e-8)",
    )


def _check_invariant_exactness() -> CheckResult:
    worst = 0.0
    for seed, D in ((0, 5), (1, 50), (2, 500)):
        cfg = default_config(seed=seed)
        domains = sample_domains(cfg, D, tagged_sequence(seed, f"verify|domains|D={D}"))
        moments = compute_moments(domains)
        model = population_estimator(moments, cfg, AugmentationStrategy("DomainInvariant"))
        excess = analytic_ood_risk(model, cfg) - oracle_ood_risk(cfg)
        expected = invariant_excess_exact(BoundQuery.from_config(cfg, D))
        worst = max(worst, abs(excess - expected) / expected)
    return CheckResult(
        name="invariant-excess-exact",
        passed=worst <= 1e-12,
        detail=f"max relative gap {worst:.2e} (tolerance 1e-12)",
    )


def _check_monte_carlo() -> CheckResult:
    cfg = default_config(seed=0)
    analytic = oracle_ood_risk(cfg)
    rmse, stderr = monte_carlo_risk(
        oracle_model(cfg), cfg, 1000, 100, tagged_sequence(0, "verify|oodeval")
    )
    se_mse = 2.0 * rmse * stderr
    gap = abs(rmse**2 - analytic)
    passed = gap <= 3.0 * se_mse
    return CheckResult(
        name="monte-carlo-matches-analytic",
        passed=passed,
        detail=f"|mse - analytic| = {gap:.2e} vs 3 stderr = {3 * se_mse:.2e}",
    )


def _check_bound_sandwich() -> CheckResult:
    cfg = default_config(seed=0)
    D = 250
    seeds = range(5)
    unaug_excesses = []
    targeted_excesses = []
    for seed in seeds:
        cfg_s = default_config(seed=seed)
        domains = sample_domains(cfg_s, D, tagged_sequence(seed, f"verify|domains|D={D}"))
        moments = compute_moments(domains)
        unaug_excesses.append(spectral_excess_ood("Unaugmented", moments, cfg_s))
        targeted_excesses.append(spectral_excess_ood("Targeted", moments, cfg_s))
    query = BoundQuery.from_config(cfg, D)
    lower = lower_bound_unaugmented(query)
    general, simple = upper_bound_targeted(query)
    n = len(unaug_excesses)
    unaug_mean = float(np.mean(unaug_excesses))
    unaug_se = float(np.std(unaug_excesses, ddof=1)) / math.sqrt(n)
    tgt_mean = float(np.mean(targeted_excesses))
    tgt_se = float(np.std(targeted_excesses, ddof=1)) / math.sqrt(n)
    conditions = dict(bound_report(query).conditions_met)
    passed = (
        conditions["in_gap_window"]
        and lower is not None
        and general is not None
        and simple is not None
        and unaug_mean >= lower - 2 * unaug_se
        and tgt_mean <= general + 2 * tgt_se
        and general <= simple
        and unaug_mean > tgt_mean
    )
    return CheckResult(
        name="bound-sandwich",
        passed=passed,
        detail=(
            f"D={D}: unaug {unaug_mean:.4f} (+/- {unaug_se:.4f} se) vs lower {lower:.4f}; "
            f"targeted {tgt_mean:.5f} <= general {general:.5f} <= simple {simple:.5f}"
        ),
    )


def _check_gap_polynomial() -> CheckResult:
    rng = np.random.Generator(np.random.PCG64(tagged_sequence(0, "verify|gap-poly")))
    failures = 0
    trials = 100
    for _ in range(trials):
        d_dom = int(rng.integers(10, 2000))
        d_core = int(rng.integers(1, d_dom + 1))
        D = int(rng.integers(1, 3000))
        if not (1.0 < math.log(2.0 * d_dom) * (d_core + 2)) or D * d_dom <= 1:
            continue
        if not gap_polynomial_check(D, d_core, d_dom):
            failures += 1
    return CheckResult(
        name="gap-polynomial-scaled",
        passed=failures == 0,
        detail=f"{failures} failures over {trials} sampled triples",
    )


def _check_envelope_shape() -> CheckResult:
    tau_sq = 1.0
    widths = []
    for D in (100, 1000, 10000, 100000):
        lo, hi = eigenvalue_envelope(5, D, tau_sq, 0.1)
        widths.append(hi - lo)
    narrowing = all(a > b for a, b in zip(widths, widths[1:]))
    lo, hi = eigenvalue_envelope(5, 10**9, tau_sq, 0.1)
    converges = abs(lo - tau_sq) < 1e-3 and abs(hi - tau_sq) < 1e-3
    passed = narrowing and converges
    return CheckResult(
        name="envelope-shape",
        passed=passed,
        detail=f"widths {['%.3f' % w for w in widths]}, limit ({lo:.5f}, {hi:.5f})",
    )


def run_verification() -> list[CheckResult]:
    """Run every check; order is stable for scripting."""
    return [
        _check_oracle_identity(),
        _check_shelf_equals_unaugmented(),
        _check_spectral_agreement(),
        _check_invariant_exactness(),
        _check_monte_carlo(),
        _check_bound_sandwich(),
        _check_gap_polynomial(),
        _check_envelope_shape(),
    ]
