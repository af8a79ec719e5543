"""Closed-form population estimators and the finite-sample ridge estimator.

Population estimators solve the infinite-sample least-squares problem for
each augmentation strategy; all of them recover the object block exactly and
put zero weight on the noise block, so only the domain-dependent blocks
differ. The finite-sample path is plain ridge regression through the normal
equations, with the Gram matrix built once and shared across penalty values.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .augment import AugmentationStrategy
from .blocks import BLOCK_NAMES, BlockLayout, LinearModel
from .datagen import Dataset, DomainAttributes, GeneratorConfig

# Relative eigenvalue cutoff for the rank-deficient fallback solve.
_PSEUDO_SOLVE_CUTOFF = 1e-10
# Symmetry/PSD slack accepted when validating moment matrices.
_MOMENT_TOL = 1e-10

DEFAULT_PENALTY_GRID = tuple(np.logspace(-6.0, 2.0, 13))
DEFAULT_VALIDATION_FRACTION = 0.1


@dataclass(frozen=True)
class DomainMoment:
    """Empirical second moments of a set of domain means.

    M_full is the moment matrix of the stacked (core, spu) means; M_core is
    the same quantity computed from the core means alone, which coincides
    with the leading block of M_full up to floating-point accumulation.
    """

    M_full: np.ndarray
    M_core: np.ndarray

    def __post_init__(self) -> None:
        for name, mat in (("M_full", self.M_full), ("M_core", self.M_core)):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got shape {mat.shape}")
            if not np.allclose(mat, mat.T, atol=_MOMENT_TOL, rtol=0.0):
                raise ValueError(f"{name} is not symmetric within {_MOMENT_TOL}")
            if mat.shape[0] and float(np.linalg.eigvalsh(mat)[0]) < -_MOMENT_TOL:
                raise ValueError(f"{name} is not positive semidefinite within {_MOMENT_TOL}")
        if self.M_core.shape[0] > self.M_full.shape[0]:
            raise ValueError("M_core cannot be larger than M_full")

    @property
    def d_dom(self) -> int:
        return self.M_full.shape[0]

    @property
    def d_core(self) -> int:
        return self.M_core.shape[0]


def compute_moments(domains: Sequence[DomainAttributes]) -> DomainMoment:
    """Average outer products of the domain means."""
    if len(domains) == 0:
        raise ValueError("domains must be nonempty")
    core = np.stack([d.mu_core for d in domains])
    spu = np.stack([d.mu_spu for d in domains])
    full = np.concatenate([core, spu], axis=1)
    d = len(domains)
    return DomainMoment(M_full=full.T @ full / d, M_core=core.T @ core / d)


def _check_moment_dims(moments: DomainMoment, config: GeneratorConfig) -> None:
    if moments.d_dom != config.d_dom or moments.d_core != config.d_core:
        raise ValueError(
            f"moment dimensions ({moments.d_dom}, {moments.d_core}) do not match "
            f"config ({config.d_dom}, {config.d_core})"
        )


def _dom_noise_variances(config: GeneratorConfig) -> np.ndarray:
    """Diagonal of the within-domain covariance on the (core, spu) block."""
    return np.concatenate(
        [
            np.full(config.d_core, config.sigma_core_sq),
            np.full(config.d_spu, config.sigma_spu_sq),
        ]
    )


def population_estimator(
    moments: DomainMoment, config: GeneratorConfig, strategy: AugmentationStrategy
) -> LinearModel:
    """Infinite-sample least-squares solution under one augmentation strategy.

    Every strategy recovers the object weights and zeroes the noise weights;
    the domain blocks shrink according to what the strategy randomizes:
    nothing (Unaugmented, OffTheShelf), the spurious block (Targeted), or
    both domain blocks (DomainInvariant, which forces them to zero).
    """
    _check_moment_dims(moments, config)
    layout = config.layout
    theta = config.theta_star
    out = {
        "obj": theta.obj.copy(),
        "noise": np.zeros(layout.d_noise),
        "core": np.zeros(layout.d_core),
        "spu": np.zeros(layout.d_spu),
    }
    if strategy.kind in ("Unaugmented", "OffTheShelf"):
        sigma = _dom_noise_variances(config)
        theta_dom = theta.dom
        lhs = moments.M_full + np.diag(sigma)
        sol = scipy.linalg.solve(lhs, moments.M_full @ theta_dom, assume_a="pos")
        out["core"] = sol[: layout.d_core]
        out["spu"] = sol[layout.d_core :]
    elif strategy.kind == "Targeted":
        lhs = moments.M_core + config.sigma_core_sq * np.eye(layout.d_core)
        out["core"] = scipy.linalg.solve(lhs, moments.M_core @ theta.core, assume_a="pos")
    elif strategy.kind == "DomainInvariant":
        pass
    else:
        raise AssertionError(strategy.kind)
    return LinearModel(**out)


def oracle_model(config: GeneratorConfig) -> LinearModel:
    """Risk-optimal linear model over unseen domains.

    Domain blocks are the true weights shrunk by tau^2 / (sigma^2 + tau^2)
    per block; with a zero spurious weight vector that leaves only the core
    block populated.
    """
    shrink_core = config.tau_core_sq / (config.sigma_core_sq + config.tau_core_sq)
    shrink_spu = config.tau_spu_sq / (config.sigma_spu_sq + config.tau_spu_sq)
    return LinearModel(
        obj=config.theta_star.obj.copy(),
        noise=np.zeros(config.d_noise),
        core=shrink_core * config.theta_star.core,
        spu=shrink_spu * config.theta_star.spu,
    )


def gram_matrix(x: np.ndarray) -> np.ndarray:
    """X^T X as a full symmetric matrix, using a rank-k update kernel."""
    x = np.ascontiguousarray(x, dtype=float)
    lower = scipy.linalg.blas.dsyrk(1.0, x.T, trans=0, lower=1)
    full = lower + lower.T
    np.fill_diagonal(full, np.diagonal(lower))
    return full


def solve_normal_equations(gram: np.ndarray, rhs: np.ndarray, penalty: float) -> np.ndarray:
    """Solve (gram + penalty I) theta = rhs.

    With a positive penalty the system is positive definite and solved by a
    Cholesky factorization. At penalty zero a rank-deficient system falls
    back to an eigendecomposition pseudo-solve (relative cutoff 1e-10) and
    emits a RuntimeWarning carrying a condition estimate.
    """
    if penalty < 0:
        raise ValueError(f"penalty must be nonnegative, got {penalty}")
    d = gram.shape[0]
    lhs = gram if penalty == 0 else gram + penalty * np.eye(d)
    try:
        factor = scipy.linalg.cho_factor(lhs, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        if penalty != 0:
            raise
    eigvals, eigvecs = scipy.linalg.eigh(lhs, check_finite=False)
    top = float(eigvals[-1]) if d else 0.0
    cutoff = _PSEUDO_SOLVE_CUTOFF * max(top, np.finfo(float).tiny)
    keep = eigvals > cutoff
    smallest_kept = float(eigvals[keep][0]) if keep.any() else math.inf
    cond = top / smallest_kept if math.isfinite(smallest_kept) and smallest_kept else math.inf
    warnings.warn(
        f"normal equations are rank-deficient at penalty 0 "
        f"(condition estimate {cond:.3e}); using pseudo-solve",
        RuntimeWarning,
        stacklevel=2,
    )
    inv = np.zeros_like(eigvals)
    inv[keep] = 1.0 / eigvals[keep]
    return eigvecs @ (inv * (eigvecs.T @ rhs))


def ridge_fit(train: Dataset, penalty: float) -> LinearModel:
    """Ridge regression through the normal equations, averaged by sample size."""
    if train.num_examples == 0:
        raise ValueError("training set must be nonempty")
    n = train.num_examples
    gram = gram_matrix(train.x) / n
    rhs = train.x.T @ train.y / n
    theta = solve_normal_equations(gram, rhs, penalty)
    return LinearModel.from_concat(theta, train.config.layout)


def select_penalty(
    gram: np.ndarray,
    rhs: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    grid: Sequence[float],
) -> tuple[float, np.ndarray]:
    """Pick the grid penalty with the lowest validation MSE (ties -> larger).

    gram and rhs must already be averaged by the training sample size. The
    Gram matrix is shared read-only across grid points; each point costs one
    factorization.
    """
    if len(grid) == 0:
        raise ValueError("penalty grid must be nonempty")
    best_penalty = None
    best_theta = None
    best_mse = math.inf
    for penalty in sorted(float(p) for p in grid):
        theta = solve_normal_equations(gram, rhs, penalty)
        resid = val_x @ theta - val_y
        mse = float(resid @ resid) / resid.size
        if mse <= best_mse:
            best_penalty, best_theta, best_mse = penalty, theta, mse
    return best_penalty, best_theta


def tune_penalty(
    train: Dataset, id_val: Dataset, grid: Sequence[float] = DEFAULT_PENALTY_GRID
) -> tuple[float, LinearModel]:
    """Fit at every grid penalty and keep the best one on held-out ID data."""
    if train.num_examples == 0 or id_val.num_examples == 0:
        raise ValueError("train and id_val must both be nonempty")
    n = train.num_examples
    gram = gram_matrix(train.x) / n
    rhs = train.x.T @ train.y / n
    penalty, theta = select_penalty(gram, rhs, id_val.x, id_val.y, grid)
    return penalty, LinearModel.from_concat(theta, train.config.layout)


def model_to_csv(model: LinearModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "index", "weight"])
        for name in BLOCK_NAMES:
            for i, value in enumerate(getattr(model, name)):
                writer.writerow([name, i, repr(float(value))])


def model_from_csv(path) -> LinearModel:
    blocks: dict[str, list[tuple[int, float]]] = {name: [] for name in BLOCK_NAMES}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            name = row["block"]
            if name not in blocks:
                raise ValueError(f"unknown block name {name!r} in model file")
            blocks[name].append((int(row["index"]), float(row["weight"])))
    arrays = {}
    for name, entries in blocks.items():
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))):
            raise ValueError(f"non-contiguous indices for block {name!r}")
        arrays[name] = np.array([v for _, v in entries])
    return LinearModel(**arrays)
