"""Feature-block augmentation strategies.

Every strategy keeps the label and domain assignment and rewrites a fixed
subset of feature blocks with independent centered Gaussian draws whose
variance matches the marginal variance of the block it replaces:

  Unaugmented     no blocks (identity),
  OffTheShelf     noise block, unit variance,
  DomainInvariant core and spu blocks, variance sigma^2 + tau^2 each,
  Targeted        spu block only, variance sigma_spu^2 + tau_spu^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace as _replace

import numpy as np

from ._rng import RngLike, as_generator, as_seed_sequence
from .blocks import PartitionedVector
from .datagen import Dataset, GeneratorConfig, LabeledExample

STRATEGY_KINDS = ("Unaugmented", "OffTheShelf", "DomainInvariant", "Targeted")

# Short names used on the command line and in result tables.
STRATEGY_ALIASES = {
    "none": "Unaugmented",
    "shelf": "OffTheShelf",
    "invariant": "DomainInvariant",
    "targeted": "Targeted",
}


@dataclass(frozen=True)
class AugmentationStrategy:
    """Which blocks to resample, and how many augmented passes to emit."""

    kind: str
    multiplicity: int = 5

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(
                f"unknown strategy kind {self.kind!r}; expected one of {STRATEGY_KINDS}"
            )
        if int(self.multiplicity) != self.multiplicity or self.multiplicity < 1:
            raise ValueError(f"multiplicity must be a positive integer, got {self.multiplicity!r}")

    @classmethod
    def from_alias(cls, alias: str, multiplicity: int = 5) -> "AugmentationStrategy":
        if alias in STRATEGY_ALIASES:
            return cls(kind=STRATEGY_ALIASES[alias], multiplicity=multiplicity)
        if alias in STRATEGY_KINDS:
            return cls(kind=alias, multiplicity=multiplicity)
        raise ValueError(f"unknown strategy alias {alias!r}")


def replacement_plan(
    strategy: AugmentationStrategy, config: GeneratorConfig
) -> tuple[tuple[str, float], ...]:
    """(block name, replacement variance) pairs, in block order."""
    if strategy.kind == "Unaugmented":
        return ()
    if strategy.kind == "OffTheShelf":
        return (("noise", 1.0),)
    if strategy.kind == "DomainInvariant":
        return (
            ("core", config.sigma_core_sq + config.tau_core_sq),
            ("spu", config.sigma_spu_sq + config.tau_spu_sq),
        )
    if strategy.kind == "Targeted":
        return (("spu", config.sigma_spu_sq + config.tau_spu_sq),)
    raise AssertionError(strategy.kind)


def augment_example(
    example: LabeledExample,
    strategy: AugmentationStrategy,
    config: GeneratorConfig,
    rng_stream: RngLike,
) -> LabeledExample:
    """One independently augmented copy; label and domain are untouched."""
    if example.x.layout != config.layout:
        raise ValueError(
            f"example layout {example.x.layout} does not match config layout {config.layout}"
        )
    plan = replacement_plan(strategy, config)
    if not plan:
        return example
    rng = as_generator(rng_stream)
    blocks = {name: getattr(example.x, name) for name in ("obj", "noise", "core", "spu")}
    for name, variance in plan:
        draw = rng.standard_normal(blocks[name].shape[0])
        draw *= math.sqrt(variance)
        blocks[name] = draw
    return _replace(example, x=PartitionedVector(**blocks))


def augment_dataset(
    dataset: Dataset, strategy: AugmentationStrategy, rng_stream: RngLike
) -> Dataset:
    """Emit `multiplicity` augmented passes over the dataset, in input order.

    Pass p occupies rows [p*N, (p+1)*N) and reuses the input's labels and
    domain ids; each pass draws its replacements from its own child stream.
    Unaugmented returns the input unchanged regardless of multiplicity.
    """
    plan = replacement_plan(strategy, dataset.config)
    if not plan:
        return dataset

    n = dataset.num_examples
    m = strategy.multiplicity
    slices = dataset.config.layout.slices()
    children = as_seed_sequence(rng_stream).spawn(m)

    x = np.empty((m * n, dataset.config.d_total))
    for p, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        chunk = x[p * n : (p + 1) * n]
        np.copyto(chunk, dataset.x)
        for name, variance in plan:
            sl = slices[name]
            draw = rng.standard_normal((n, sl.stop - sl.start))
            draw *= math.sqrt(variance)
            chunk[:, sl] = draw

    return Dataset(
        x=x,
        y=np.tile(dataset.y, m),
        domain_ids=np.tile(dataset.domain_ids, m),
        domains=dataset.domains,
        config=dataset.config,
    )
