"""Experiment orchestration: domain-count sweeps over strategies and seeds.

A sweep cell is one (domain count, strategy, seed) triple. Finite-sample
cells run the full pipeline: sample, split, augment the training portion,
tune the ridge penalty on ID validation data, and score the tuned model on
held-out ID examples and fresh Monte-Carlo domains. Population cells skip
sampling of examples entirely and report the closed-form risks of the
population estimator.

Determinism contract: every cell's random streams are derived from
(seed, D, N, strategy kind) tags alone, Monte-Carlo evaluation draws do not
depend on the model being scored, and the per-pass Gram accumulation below
consumes the generator exactly like materializing the augmented dataset
would. Cells therefore produce identical bytes whether run alone, in a
sweep, or across any worker count.
"""
from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _toml
from ._rng import tagged_sequence
from ._version import __version__
from .augment import AugmentationStrategy, replacement_plan
from .blocks import LinearModel
from .bounds import BoundQuery, BoundReport, bound_curve, bound_report, write_bounds_csv
from .datagen import (
    Dataset,
    GeneratorConfig,
    _draw_theta_star,
    sample_dataset,
    sample_domains,
    split_id_validation,
)
from .estimators import (
    DEFAULT_PENALTY_GRID,
    compute_moments,
    gram_matrix,
    population_estimator,
    select_penalty,
)
from .risk import (
    DEFAULT_MC_DOMAINS,
    DEFAULT_MC_SAMPLES_PER_DOMAIN,
    analytic_id_risk,
    analytic_ood_risk,
    monte_carlo_risk_many,
    oracle_ood_risk,
)

DEFAULT_DOMAIN_COUNTS = (5, 10, 20, 50, 100, 200, 500, 1000)

MODES = ("finite_sample", "population")

RESULTS_COLUMNS = (
    "D",
    "N",
    "strategy",
    "seed",
    "penalty_selected",
    "id_rmse",
    "ood_rmse",
    "ood_rmse_stderr",
    "analytic_ood",
    "excess_ood",
    "lower_unaug",
    "upper_tgt_general",
    "upper_tgt_simple",
    "invariant_exact",
    "in_gap_window",
    "error",
)


@dataclass(frozen=True)
class SweepSpec:
    """Everything needed to reproduce one experiment grid."""

    base_config: GeneratorConfig
    domain_counts: tuple[int, ...]
    total_samples: int
    strategies: tuple[AugmentationStrategy, ...]
    seeds: tuple[int, ...]
    penalty_grid: tuple[float, ...] = DEFAULT_PENALTY_GRID
    mc_test_domains: int = DEFAULT_MC_DOMAINS
    mc_samples_per_domain: int = DEFAULT_MC_SAMPLES_PER_DOMAIN
    mode: str = "finite_sample"
    id_test_fraction: float = 0.2
    validation_fraction: float = 0.1
    redraw_theta_per_seed: bool = True

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.domain_counts)
        if list(counts) != sorted(counts):
            raise ValueError("domain_counts must be sorted ascending")
        if any(c < 1 for c in counts):
            raise ValueError("domain counts must be at least 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_samples < 1:
            raise ValueError("total_samples must be at least 1")
        if self.mc_test_domains < 1 or self.mc_samples_per_domain < 1:
            raise ValueError("Monte-Carlo counts must be at least 1")
        if not 0 < self.id_test_fraction < 1 or not 0 < self.validation_fraction < 1:
            raise ValueError("split fractions must lie strictly between 0 and 1")
        if not self.penalty_grid:
            raise ValueError("penalty_grid must be nonempty")

    def config_for_seed(self, seed: int) -> GeneratorConfig:
        """Per-seed configuration; redraws theta_star unless disabled."""
        if not self.redraw_theta_per_seed:
            return self.base_config
        cfg = self.base_config
        theta = _draw_theta_star(cfg.d_obj, cfg.d_noise, cfg.d_core, cfg.d_spu, seed)
        return replace(cfg, theta_star=theta, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "total_samples": int(self.total_samples),
            "domain_counts": [int(c) for c in self.domain_counts],
            "seeds": [int(s) for s in self.seeds],
            "strategy_kinds": [s.kind for s in self.strategies],
            "strategy_multiplicities": [int(s.multiplicity) for s in self.strategies],
            "penalty_grid": [float(p) for p in self.penalty_grid],
            "mc_test_domains": int(self.mc_test_domains),
            "mc_samples_per_domain": int(self.mc_samples_per_domain),
            "id_test_fraction": float(self.id_test_fraction),
            "validation_fraction": float(self.validation_fraction),
            "redraw_theta_per_seed": bool(self.redraw_theta_per_seed),
            "config": self.base_config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        if "config" not in data:
            raise ValueError("sweep spec is missing the [config] table")
        config = GeneratorConfig.from_dict(data["config"])
        if "strategy_kinds" in data:
            kinds = list(data["strategy_kinds"])
            mults = list(data.get("strategy_multiplicities", [5] * len(kinds)))
            if len(mults) != len(kinds):
                raise ValueError("strategy_multiplicities must match strategy_kinds")
            strategies = tuple(
                AugmentationStrategy.from_alias(k, multiplicity=int(m))
                for k, m in zip(kinds, mults)
            )
        else:
            shared = int(data.get("multiplicity", 5))
            strategies = tuple(
                AugmentationStrategy.from_alias(k, multiplicity=shared)
                for k in data.get("strategies", [])
            )
        kwargs = {}
        for key in (
            "penalty_grid",
            "mc_test_domains",
            "mc_samples_per_domain",
            "mode",
            "id_test_fraction",
            "validation_fraction",
            "redraw_theta_per_seed",
        ):
            if key in data:
                kwargs[key] = data[key]
        if "penalty_grid" in kwargs:
            kwargs["penalty_grid"] = tuple(float(p) for p in kwargs["penalty_grid"])
        return cls(
            base_config=config,
            domain_counts=tuple(int(c) for c in data.get("domain_counts", DEFAULT_DOMAIN_COUNTS)),
            total_samples=int(data["total_samples"]),
            strategies=strategies,
            seeds=tuple(int(s) for s in data["seeds"]),
            **kwargs,
        )

    def to_toml(self) -> str:
        return _toml.dumps(self.to_dict())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_toml())

    @classmethod
    def load(cls, path) -> "SweepSpec":
        return cls.from_dict(_toml.load_path(path))


@dataclass(frozen=True)
class SweepRow:
    """One cell's results; None marks not-applicable, error marks failure."""

    D: int
    N: int
    strategy: str
    seed: int
    penalty_selected: float | None
    id_rmse: float | None
    ood_rmse: float | None
    ood_rmse_stderr: float | None
    analytic_ood: float | None
    excess_ood: float | None
    lower_unaug: float | None
    upper_tgt_general: float | None
    upper_tgt_simple: float | None
    invariant_exact: float | None
    in_gap_window: bool | None
    error: str | None = None

    def __post_init__(self) -> None:
        for name in ("id_rmse", "ood_rmse"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


def _bound_columns(config: GeneratorConfig, num_domains: int) -> dict:
    """Bound cells for a row; all None when the scalars are unavailable."""
    try:
        query = BoundQuery.from_config(config, num_domains)
    except ValueError:
        return dict(
            lower_unaug=None,
            upper_tgt_general=None,
            upper_tgt_simple=None,
            invariant_exact=None,
            in_gap_window=None,
        )
    report = bound_report(query)
    return dict(
        lower_unaug=report.lower_unaug,
        upper_tgt_general=report.upper_tgt_general,
        upper_tgt_simple=report.upper_tgt_simple,
        invariant_exact=report.invariant_exact,
        in_gap_window=dict(report.conditions_met)["in_gap_window"],
    )


def _error_row(spec: SweepSpec, D: int, strategy: AugmentationStrategy, seed: int, message: str) -> SweepRow:
    return SweepRow(
        D=int(D),
        N=int(spec.total_samples),
        strategy=strategy.kind,
        seed=int(seed),
        penalty_selected=None,
        id_rmse=None,
        ood_rmse=None,
        ood_rmse_stderr=None,
        analytic_ood=None,
        excess_ood=None,
        lower_unaug=None,
        upper_tgt_general=None,
        upper_tgt_simple=None,
        invariant_exact=None,
        in_gap_window=None,
        error=message,
    )


def _augmented_normal_equations(
    train: Dataset,
    strategy: AugmentationStrategy,
    seed: int,
    D: int,
    N: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Averaged Gram matrix and right-hand side of the augmented train set.

    Accumulates one pass at a time instead of materializing the multiplied
    dataset; each pass consumes its child stream exactly as the augmentation
    routine does, so the pass blocks match it draw for draw.
    """
    config = train.config
    plan = replacement_plan(strategy, config)
    n = train.num_examples
    if not plan:
        gram = gram_matrix(train.x)
        rhs = train.x.T @ train.y
        return gram / n, rhs / n

    m = strategy.multiplicity
    tag = f"augment|D={D}|N={N}|strategy={strategy.kind}"
    children = tagged_sequence(seed, tag).spawn(m)
    slices = config.layout.slices()
    gram = np.zeros((config.d_total, config.d_total))
    rhs = np.zeros(config.d_total)
    buffer = np.empty_like(train.x)
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        np.copyto(buffer, train.x)
        for name, variance in plan:
            sl = slices[name]
            draw = rng.standard_normal((n, sl.stop - sl.start))
            draw *= math.sqrt(variance)
            buffer[:, sl] = draw
        gram += gram_matrix(buffer)
        rhs += buffer.T @ train.y
    total = m * n
    return gram / total, rhs / total


def _rmse(x: np.ndarray, y: np.ndarray, theta: np.ndarray) -> float:
    resid = x @ theta - y
    return math.sqrt(float(resid @ resid) / resid.size)


@dataclass(frozen=True)
class _GroupData:
    """Shared per-(D, seed) state reused by every strategy's cell."""

    config: GeneratorConfig
    domains: tuple
    train: Dataset | None
    id_val: Dataset | None
    id_test: Dataset | None


def _prepare_group(spec: SweepSpec, D: int, seed: int) -> _GroupData:
    config = spec.config_for_seed(seed)
    domains = sample_domains(config, D, tagged_sequence(seed, f"domains|D={D}"))
    if spec.mode == "population":
        return _GroupData(config=config, domains=domains, train=None, id_val=None, id_test=None)
    N = spec.total_samples
    dataset = sample_dataset(
        config, domains, N, tagged_sequence(seed, f"dataset|D={D}|N={N}")
    )
    rest, id_test = split_id_validation(
        dataset, spec.id_test_fraction, tagged_sequence(seed, f"idtest|D={D}|N={N}")
    )
    train, id_val = split_id_validation(
        rest, spec.validation_fraction, tagged_sequence(seed, f"val|D={D}|N={N}")
    )
    return _GroupData(config=config, domains=domains, train=train, id_val=id_val, id_test=id_test)


def _finite_models(
    spec: SweepSpec, group: _GroupData, D: int, seed: int
) -> list[tuple[AugmentationStrategy, float, LinearModel] | Exception]:
    out: list = []
    for strategy in spec.strategies:
        try:
            gram, rhs = _augmented_normal_equations(
                group.train, strategy, seed, D, spec.total_samples
            )
            penalty, theta = select_penalty(
                gram, rhs, group.id_val.x, group.id_val.y, spec.penalty_grid
            )
            model = LinearModel.from_concat(theta, group.config.layout)
            out.append((strategy, penalty, model))
        except Exception as err:
            out.append(err)
    return out


def _run_group(spec: SweepSpec, D: int, seed: int) -> list[SweepRow]:
    """All strategies of one (D, seed) cell group, in spec order.

    Strategies share the sampled data, splits, and Monte-Carlo evaluation
    draws, which pairs their comparison without coupling their results: each
    quantity is bitwise what a standalone run_cell would produce.
    """
    try:
        group = _prepare_group(spec, D, seed)
    except Exception as err:
        message = f"{type(err).__name__}: {err}"
        return [_error_row(spec, D, s, seed, message) for s in spec.strategies]

    config = group.config
    bound_cols = _bound_columns(config, D)
    oracle = oracle_ood_risk(config)
    rows: list[SweepRow] = []

    if spec.mode == "population":
        moments = compute_moments(group.domains)
        for strategy in spec.strategies:
            try:
                model = population_estimator(moments, config, strategy)
                ood = analytic_ood_risk(model, config)
                id_risk = analytic_id_risk(model, moments, config)
                rows.append(
                    SweepRow(
                        D=int(D),
                        N=int(spec.total_samples),
                        strategy=strategy.kind,
                        seed=int(seed),
                        penalty_selected=None,
                        id_rmse=math.sqrt(id_risk),
                        ood_rmse=math.sqrt(ood),
                        ood_rmse_stderr=None,
                        analytic_ood=ood,
                        excess_ood=ood - oracle,
                        error=None,
                        **bound_cols,
                    )
                )
            except Exception as err:
                rows.append(_error_row(spec, D, strategy, seed, f"{type(err).__name__}: {err}"))
        return rows

    fitted = _finite_models(spec, group, D, seed)
    ok = [(i, f) for i, f in enumerate(fitted) if not isinstance(f, Exception)]
    mc_results: dict[int, tuple[float, float]] = {}
    if ok:
        models = [model for _, (_, _, model) in ok]
        scored = monte_carlo_risk_many(
            models,
            config,
            spec.mc_test_domains,
            spec.mc_samples_per_domain,
            tagged_sequence(seed, f"oodeval|D={D}"),
        )
        mc_results = {i: res for (i, _), res in zip(ok, scored)}

    for i, item in enumerate(fitted):
        strategy = spec.strategies[i]
        if isinstance(item, Exception):
            rows.append(_error_row(spec, D, strategy, seed, f"{type(item).__name__}: {item}"))
            continue
        _, penalty, model = item
        ood_rmse, ood_stderr = mc_results[i]
        analytic = analytic_ood_risk(model, config)
        rows.append(
            SweepRow(
                D=int(D),
                N=int(spec.total_samples),
                strategy=strategy.kind,
                seed=int(seed),
                penalty_selected=penalty,
                id_rmse=_rmse(group.id_test.x, group.id_test.y, model.concat()),
                ood_rmse=ood_rmse,
                ood_rmse_stderr=ood_stderr,
                analytic_ood=analytic,
                excess_ood=analytic - oracle,
                error=None,
                **bound_cols,
            )
        )
    return rows


def run_cell(
    spec: SweepSpec, D: int, strategy: AugmentationStrategy, seed: int
) -> SweepRow:
    """One cell on its own; bitwise equal to the same cell inside run_sweep."""
    if D < 1:
        raise ValueError(f"D must be at least 1, got {D}")
    single = replace(spec, strategies=(strategy,))
    return _run_group(single, D, seed)[0]


def _group_task(args: tuple[SweepSpec, int, int]) -> tuple[tuple[int, int], list[SweepRow]]:
    spec, D, seed = args
    return (D, seed), _run_group(spec, D, seed)


def run_sweep(spec: SweepSpec, parallelism: int = 1) -> list[SweepRow]:
    """Every cell of the grid, ordered by (D, strategy, seed).

    Cell groups are independent tasks; results are assembled in a fixed
    order, so the output is identical for any worker count.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be at least 1, got {parallelism}")
    if not spec.strategies:
        return []
    tasks = [(spec, D, seed) for D in spec.domain_counts for seed in spec.seeds]
    results: dict[tuple[int, int], list[SweepRow]] = {}
    if parallelism == 1 or len(tasks) == 1:
        for task in tasks:
            key, rows = _group_task(task)
            results[key] = rows
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            for key, rows in pool.map(_group_task, tasks):
                results[key] = rows

    ordered: list[SweepRow] = []
    for D in spec.domain_counts:
        for index in range(len(spec.strategies)):
            for seed in spec.seeds:
                ordered.append(results[(D, seed)][index])
    return ordered


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for row in rows:
            writer.writerow([_cell_text(getattr(row, col)) for col in RESULTS_COLUMNS])


def read_results_csv(path) -> list[SweepRow]:
    """Exact inverse of write_results_csv."""

    def parse(text: str, kind: str):
        if text == "":
            return None
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            return bool(int(text))
        return text

    kinds = {
        "D": "int",
        "N": "int",
        "strategy": "str",
        "seed": "int",
        "in_gap_window": "bool",
        "error": "str",
    }
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_COLUMNS:
            raise ValueError(f"unexpected results schema: {reader.fieldnames}")
        for record in reader:
            kwargs = {
                col: parse(record[col], kinds.get(col, "float")) for col in RESULTS_COLUMNS
            }
            rows.append(SweepRow(**kwargs))
    return rows


def _theta_star_table(spec: SweepSpec) -> dict:
    table: dict = {}
    if spec.redraw_theta_per_seed:
        for seed in spec.seeds:
            theta = spec.config_for_seed(seed).theta_star
            table[f"seed_{seed}"] = {
                "obj": [float(v) for v in theta.obj],
                "core": [float(v) for v in theta.core],
            }
    else:
        theta = spec.base_config.theta_star
        table["shared"] = {
            "obj": [float(v) for v in theta.obj],
            "core": [float(v) for v in theta.core],
        }
    return table


def emit_results(
    rows: Sequence[SweepRow],
    bound_curves: Sequence[tuple[int, BoundReport]],
    destination,
    spec: SweepSpec,
) -> dict[str, Path]:
    """Write results.csv, bounds.csv, and metadata.toml under destination.

    The metadata file records the full sweep spec, every theta_star used,
    and the software version; it contains no timestamps, so identical specs
    produce identical bytes.
    """
    if not rows:
        raise ValueError("rows must be nonempty")
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": dest / "results.csv",
        "bounds": dest / "bounds.csv",
        "metadata": dest / "metadata.toml",
    }
    write_results_csv(rows, paths["results"])
    write_bounds_csv(bound_curves, paths["bounds"])
    metadata = {
        "version": __version__,
        "spec": spec.to_dict(),
        "theta_star": _theta_star_table(spec),
    }
    with open(paths["metadata"], "w", encoding="utf-8") as fh:
        fh.write(_toml.dumps(metadata))
    return paths


def sweep_bound_curve(spec: SweepSpec) -> list[tuple[int, BoundReport]]:
    """Bound reports along the sweep's domain-count axis (empty when the
    config's scales do not admit the scalar bound form)."""
    try:
        base = BoundQuery.from_config(spec.base_config, int(spec.domain_counts[0]))
    except ValueError:
        return []
    return bound_curve(base, spec.domain_counts)
