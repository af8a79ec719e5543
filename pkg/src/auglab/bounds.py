"""Closed-form excess-risk bounds and their validity conditions.

Every bound is a scalar function of a few population quantities. Bounds come
with explicit applicability conditions; an inapplicable bound is reported as
None (never as zero) so downstream tables can mask invalid regions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .datagen import GeneratorConfig


@dataclass(frozen=True)
class BoundQuery:
    """Scalar inputs shared by the bound formulas.

    gamma_sq is the ratio of across-domain to within-domain variance of the
    core block; tau_sq the across-domain variance; r and r0 are slack knobs
    of the two upper-bound forms (r defaults to 1/gamma_sq when unset);
    delta is the failure probability for eigenvalue concentration.
    """

    gamma_sq: float
    tau_sq: float
    theta_core_norm_sq: float
    d_core: int
    d_dom: int
    num_domains: int
    r: float | None = None
    r0: float = 1.0
    delta: float = 0.1

    def __post_init__(self) -> None:
        if not self.gamma_sq > 0:
            raise ValueError(f"gamma_sq must be positive, got {self.gamma_sq}")
        if not self.tau_sq > 0:
            raise ValueError(f"tau_sq must be positive, got {self.tau_sq}")
        if self.theta_core_norm_sq < 0:
            raise ValueError("theta_core_norm_sq must be nonnegative")
        if self.d_core < 1:
            raise ValueError(f"d_core must be at least 1, got {self.d_core}")
        if self.d_dom < self.d_core:
            raise ValueError("d_dom cannot be smaller than d_core")
        if self.num_domains < 1:
            raise ValueError(f"num_domains must be at least 1, got {self.num_domains}")
        if self.r is not None and not 0 < self.r < 1:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not 0 < self.r0 <= 1:
            raise ValueError(f"r0 must lie in (0, 1], got {self.r0}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def effective_r(self) -> float | None:
        if self.r is not None:
            return self.r
        if self.gamma_sq > 1:
            return 1.0 / self.gamma_sq
        return None

    @property
    def prefactor(self) -> float:
        """tau^2 gamma^2 ||theta_core||^2 / (1 + gamma^2), common to all bounds."""
        return self.tau_sq * self.gamma_sq * self.theta_core_norm_sq / (1.0 + self.gamma_sq)

    def at_num_domains(self, num_domains: int) -> "BoundQuery":
        return replace(self, num_domains=num_domains)

    @classmethod
    def from_config(
        cls,
        config: GeneratorConfig,
        num_domains: int,
        r: float | None = None,
        r0: float = 1.0,
        delta: float = 0.1,
    ) -> "BoundQuery":
        """Extract the bound scalars from a generator configuration.

        The full-block bounds assume one (sigma^2, tau^2) pair across both
        domain-dependent blocks; mismatched scales are rejected.
        """
        if config.d_spu > 0 and config.d_core > 0:
            if (config.sigma_core_sq, config.tau_core_sq) != (
                config.sigma_spu_sq,
                config.tau_spu_sq,
            ):
                raise ValueError(
                    "bound formulas require core and spu blocks to share "
                    "sigma^2 and tau^2"
                )
        core = config.theta_star.core
        return cls(
            gamma_sq=config.gamma_sq,
            tau_sq=config.tau_core_sq,
            theta_core_norm_sq=float(core @ core),
            d_core=config.d_core,
            d_dom=config.d_dom,
            num_domains=num_domains,
            r=r,
            r0=r0,
            delta=delta,
        )


@dataclass(frozen=True)
class BoundReport:
    """Every bound evaluated at one domain count, with validity flags."""

    lower_unaug: float | None
    upper_tgt_general: float | None
    upper_tgt_simple: float | None
    invariant_exact: float
    gap_window: tuple[float, float] | None
    conditions_met: tuple[tuple[str, bool], ...]


def lower_bound_unaugmented(q: BoundQuery) -> float | None:
    """Excess-risk floor without augmentation; needs fewer domains than
    domain-dependent dimensions."""
    if q.num_domains >= q.d_dom:
        return None
    return q.prefactor * (1.0 - q.num_domains / q.d_dom)


def _general_threshold(q: BoundQuery) -> float:
    return 2.0 * (q.d_core + 2) * math.log(4.0 * q.num_domains * q.d_core / q.r0)


def _simple_threshold(q: BoundQuery, r: float) -> float:
    return 2.0 * (q.d_core + 2) * math.log(4.0 * q.num_domains * q.d_core) / (1.0 - r) ** 2


def upper_bound_targeted(q: BoundQuery) -> tuple[float | None, float | None]:
    """Excess-risk ceilings with the spurious block randomized.

    Returns (general, simple). The general form keeps the slack r0 explicit
    and is tighter; the simple form fixes its constants. Both need
    gamma_sq > 1 and enough domains for the eigenvalue concentration to
    bite; otherwise the corresponding entry is None.
    """
    if q.gamma_sq <= 1:
        return None, None
    general = None
    log_term = math.log(4.0 * q.num_domains * q.d_core / q.r0)
    if q.num_domains > _general_threshold(q):
        eta = math.sqrt(2.0 * (q.d_core + 2) * log_term / q.num_domains)
        denom = (1.0 + q.gamma_sq * (1.0 - eta)) ** 2
        general = q.prefactor * (
            q.r0 / q.num_domains
            + 2.0 * (q.d_core + 2) * log_term / (q.num_domains * denom)
        )
    simple = None
    r = q.effective_r
    if r is not None and q.num_domains > _simple_threshold(q, r):
        log_plain = math.log(4.0 * q.num_domains * q.d_core)
        simple = q.prefactor * (
            1.0 / q.num_domains
            + 2.0 * log_plain * (q.d_core + 2) / (q.num_domains * (1.0 + q.gamma_sq * r) ** 2)
        )
    return general, simple


def invariant_excess_exact(q: BoundQuery) -> float:
    """Exact excess risk when both domain blocks are randomized away;
    independent of the number of domains."""
    return q.prefactor


def gap_window(q: BoundQuery) -> tuple[float, float] | None:
    """Domain-count interval on which targeted provably beats unaugmented.

    Requires gamma_sq > 1 and a small enough core dimension; returns None
    when the conditions fail or the interval is empty.
    """
    if q.gamma_sq <= 1:
        return None
    ratio = q.gamma_sq**2 / (q.gamma_sq - 1.0) ** 2
    log_term = math.log(2.0 * q.d_dom)
    smallness = q.d_core < q.d_dom / (log_term * 4.0 * (1.0 + ratio))
    if not smallness:
        return None
    d_min = 4.0 * ratio * (q.d_core + 2) * log_term
    d_max = q.d_dom - 4.0 * (q.d_core + 2) * log_term
    if not d_min < d_max:
        return None
    return d_min, d_max


def eigenvalue_envelope(
    d_core: int, num_domains: int, tau_sq: float, delta: float
) -> tuple[float, float]:
    """High-probability envelope for the extreme eigenvalues of the core
    moment matrix: (lower bound on the smallest, upper bound on the largest),
    each holding outside probability delta."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if d_core < 1 or num_domains < 1:
        raise ValueError("d_core and num_domains must be at least 1")
    eta = math.sqrt(-2.0 * (d_core + 2) * math.log(delta / (4.0 * d_core)) / num_domains)
    return tau_sq * (1.0 - eta), tau_sq * (1.0 + eta + eta**2)


def gap_polynomial_check(num_domains: int, d_core: int, d_dom: int) -> bool:
    """Numeric check of the auxiliary polynomial inequality, in scaled form.

    The unscaled right-hand side carries a spurious factor of D * d_dom that
    makes the comparison dimensionally inconsistent (its derivation rescales
    only one side); dividing it out yields the inequality actually used by
    the window argument. Preconditions mirror that argument.
    """
    if not (1.0 < math.log(2.0 * d_dom) * (d_core + 2)):
        raise ValueError("requires 1 < log(2 d_dom) (d_core + 2)")
    if not num_domains * d_dom > 1:
        raise ValueError("requires num_domains * d_dom > 1")
    if d_core > d_dom:
        raise ValueError("requires d_core <= d_dom")
    d, dc, big_d = float(d_dom), float(d_core), float(num_domains)
    lhs = 1.0 - big_d / d - (2.0 + math.log(4.0 * d * dc) * (dc + 2)) / (2.0 * big_d)
    rhs = -((big_d - d / 2.0) ** 2) + d**2 / 4.0 - 2.0 * d * (dc + 2) * math.log(2.0 * d)
    return lhs > rhs / (big_d * d)


def bound_report(q: BoundQuery) -> BoundReport:
    """Evaluate every bound at q.num_domains and record which applied."""
    lower = lower_bound_unaugmented(q)
    general, simple = upper_bound_targeted(q)
    window = gap_window(q)
    r = q.effective_r
    conditions = (
        ("gamma_sq_gt_1", q.gamma_sq > 1),
        ("lower_D_lt_d_dom", q.num_domains < q.d_dom),
        ("general_D_above_threshold", q.num_domains > _general_threshold(q)),
        (
            "simple_D_above_threshold",
            r is not None and q.num_domains > _simple_threshold(q, r),
        ),
        ("gap_window_nonempty", window is not None),
        (
            "in_gap_window",
            window is not None and window[0] < q.num_domains < window[1],
        ),
    )
    return BoundReport(
        lower_unaug=lower,
        upper_tgt_general=general,
        upper_tgt_simple=simple,
        invariant_exact=invariant_excess_exact(q),
        gap_window=window,
        conditions_met=conditions,
    )


def bound_curve(base: BoundQuery, domain_counts: Sequence[int]) -> list[tuple[int, BoundReport]]:
    """Evaluate the full report at each domain count."""
    return [(int(c), bound_report(base.at_num_domains(int(c)))) for c in domain_counts]


def write_bounds_csv(curve: Sequence[tuple[int, BoundReport]], path) -> None:
    """One row per domain count; inapplicable bounds are left empty."""

    def cell(value: float | None) -> str:
        return "" if value is None else repr(float(value))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "D",
                "lower_unaug",
                "upper_tgt_general",
                "upper_tgt_simple",
                "invariant_exact",
                "in_gap_window",
                "conditions",
            ]
        )
        for count, report in curve:
            conditions = dict(report.conditions_met)
            writer.writerow(
                [
                    int(count),
                    cell(report.lower_unaug),
                    cell(report.upper_tgt_general),
                    cell(report.upper_tgt_simple),
                    repr(float(report.invariant_exact)),
                    int(conditions["in_gap_window"]),
                    ";".join(f"{name}={int(flag)}" for name, flag in report.conditions_met),
                ]
            )
