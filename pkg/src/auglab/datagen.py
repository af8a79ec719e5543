"""Synthetic data generation for the linear-Gaussian multi-domain setting.

Feature vectors carry four blocks in a fixed order: object features that
drive the label, pure noise, core features whose domain-level means also
drive the label, and spurious features whose domain-level means do not.
Domains are characterized entirely by the means of their core and spurious
blocks; all within-domain covariances are shared and isotropic per block.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import _toml
from ._rng import RngLike, as_generator, as_seed_sequence, tagged_sequence
from .blocks import BLOCK_NAMES, BlockLayout, LinearModel, PartitionedVector

# Spawn order of the per-block child streams inside sample_dataset.
_SAMPLE_STREAMS = ("obj", "noise", "core", "spu", "eps")


@dataclass(frozen=True)
class GeneratorConfig:
    """Population parameters of the sampling process.

    Variances are expressed as squares (sigma_*_sq, tau_*_sq). theta_star
    holds the label weights; its noise and spu blocks must be zero because
    labels depend on the object features and on the domain's core mean only.
    """

    d_obj: int
    d_noise: int
    d_core: int
    d_spu: int
    sigma_core_sq: float
    tau_core_sq: float
    sigma_spu_sq: float
    tau_spu_sq: float
    sigma_y_sq: float
    theta_star: LinearModel
    seed: int

    def __post_init__(self) -> None:
        dims = (self.d_obj, self.d_noise, self.d_core, self.d_spu)
        if any(int(d) != d or d < 0 for d in dims):
            raise ValueError(f"dimensions must be nonnegative integers, got {dims}")
        if self.d_core + self.d_spu < 1:
            raise ValueError("at least one domain-dependent feature is required")
        for name in ("sigma_core_sq", "tau_core_sq", "sigma_spu_sq", "tau_spu_sq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.sigma_y_sq >= 0:
            raise ValueError(f"sigma_y_sq must be nonnegative, got {self.sigma_y_sq!r}")
        expect = BlockLayout(self.d_obj, self.d_noise, self.d_core, self.d_spu)
        if self.theta_star.layout != expect:
            raise ValueError(
                f"theta_star layout {self.theta_star.layout} does not match dimensions {expect}"
            )
        if self.theta_star.noise.any() or self.theta_star.spu.any():
            raise ValueError("theta_star must have all-zero noise and spu blocks")

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout(self.d_obj, self.d_noise, self.d_core, self.d_spu)

    @property
    def d_total(self) -> int:
        return self.layout.d_total

    @property
    def d_dom(self) -> int:
        return self.d_core + self.d_spu

    @property
    def gamma_sq(self) -> float:
        """Between-domain to within-domain variance ratio of the core block."""
        return self.tau_core_sq / self.sigma_core_sq

    def block_variance(self, block: str) -> float:
        """Within-domain variance of one feature block."""
        return {
            "obj": 1.0,
            "noise": 1.0,
            "core": self.sigma_core_sq,
            "spu": self.sigma_spu_sq,
        }[block]

    def mean_variance(self, block: str) -> float:
        """Across-domain variance of one block's mean (zero if not domain-dependent)."""
        return {
            "obj": 0.0,
            "noise": 0.0,
            "core": self.tau_core_sq,
            "spu": self.tau_spu_sq,
        }[block]

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "dimensions": {
                "d_obj": int(self.d_obj),
                "d_noise": int(self.d_noise),
                "d_core": int(self.d_core),
                "d_spu": int(self.d_spu),
            },
            "variances": {
                "sigma_core_sq": float(self.sigma_core_sq),
                "tau_core_sq": float(self.tau_core_sq),
                "sigma_spu_sq": float(self.sigma_spu_sq),
                "tau_spu_sq": float(self.tau_spu_sq),
                "sigma_y_sq": float(self.sigma_y_sq),
            },
            "weights": {
                "obj": [float(v) for v in self.theta_star.obj],
                "core": [float(v) for v in self.theta_star.core],
            },
        }

    def to_toml(self) -> str:
        return _toml.dumps(self.to_dict())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_toml())

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        try:
            dims = data["dimensions"]
            var = data["variances"]
            seed = int(data.get("seed", 0))
            kwargs = dict(
                d_obj=int(dims["d_obj"]),
                d_noise=int(dims["d_noise"]),
                d_core=int(dims["d_core"]),
                d_spu=int(dims["d_spu"]),
                sigma_core_sq=float(var["sigma_core_sq"]),
                tau_core_sq=float(var["tau_core_sq"]),
                sigma_spu_sq=float(var["sigma_spu_sq"]),
                tau_spu_sq=float(var["tau_spu_sq"]),
                sigma_y_sq=float(var["sigma_y_sq"]),
            )
        except KeyError as err:
            raise ValueError(f"config file is missing key {err.args[0]!r}") from None
        if "weights" in data:
            layout = BlockLayout(
                kwargs["d_obj"], kwargs["d_noise"], kwargs["d_core"], kwargs["d_spu"]
            )
            theta = LinearModel.validated(
                obj=np.asarray(data["weights"]["obj"], dtype=float),
                noise=np.zeros(kwargs["d_noise"]),
                core=np.asarray(data["weights"]["core"], dtype=float),
                spu=np.zeros(kwargs["d_spu"]),
                layout=layout,
            )
        else:
            theta = _draw_theta_star(
                kwargs["d_obj"], kwargs["d_noise"], kwargs["d_core"], kwargs["d_spu"], seed
            )
        return cls(theta_star=theta, seed=seed, **kwargs)

    @classmethod
    def from_toml(cls, text: str) -> "GeneratorConfig":
        return cls.from_dict(_toml.loads(text))

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_toml(fh.read())


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    while True:
        v = rng.standard_normal(dim)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm


def _draw_theta_star(
    d_obj: int, d_noise: int, d_core: int, d_spu: int, seed: int
) -> LinearModel:
    rng = np.random.Generator(np.random.PCG64(tagged_sequence(seed, "theta_star")))
    return LinearModel(
        obj=_unit_vector(rng, d_obj),
        noise=np.zeros(d_noise),
        core=_unit_vector(rng, d_core),
        spu=np.zeros(d_spu),
    )


def default_config(seed: int = 0, **overrides) -> GeneratorConfig:
    """Standard parameterization: unit-norm weights drawn from the seed.

    Dimension and variance overrides are applied before the weights are
    drawn, so theta_star always matches the final layout.
    """
    params = dict(
        d_obj=5,
        d_noise=500,
        d_core=5,
        d_spu=500,
        sigma_core_sq=0.1,
        tau_core_sq=1.0,
        sigma_spu_sq=0.1,
        tau_spu_sq=1.0,
        sigma_y_sq=0.01,
    )
    theta_override = overrides.pop("theta_star", None)
    params.update(overrides)
    theta = theta_override if theta_override is not None else _draw_theta_star(
        params["d_obj"], params["d_noise"], params["d_core"], params["d_spu"], seed
    )
    return GeneratorConfig(theta_star=theta, seed=seed, **params)


@dataclass(frozen=True)
class DomainAttributes:
    """One domain: its identifier and the means of its two shifted blocks."""

    id: int
    mu_core: np.ndarray
    mu_spu: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, DomainAttributes):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.mu_core, other.mu_core)
            and np.array_equal(self.mu_spu, other.mu_spu)
        )

    __hash__ = None


@dataclass(frozen=True)
class LabeledExample:
    x: PartitionedVector
    y: float
    domain_id: int


class _ExampleView(Sequence[LabeledExample]):
    """Read-only per-example view over a column-backed dataset."""

    def __init__(self, dataset: "Dataset") -> None:
        self._dataset = dataset

    def __len__(self) -> int:
        return self._dataset.num_examples

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        ds = self._dataset
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError("example index out of range")
        x = PartitionedVector.from_concat(ds.x[index], ds.config.layout)
        return LabeledExample(x=x, y=float(ds.y[index]), domain_id=int(ds.domain_ids[index]))

    def __iter__(self) -> Iterator[LabeledExample]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class Dataset:
    """Column-backed sample: feature matrix, labels, and domain assignment.

    x has one row per example with blocks laid out per config.layout; y and
    domain_ids align with its rows. domains lists every domain that examples
    may reference (domains[i].id == i).
    """

    x: np.ndarray
    y: np.ndarray
    domain_ids: np.ndarray
    domains: tuple[DomainAttributes, ...]
    config: GeneratorConfig

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.domain_ids, other.domain_ids)
            and self.domains == other.domains
            and self.config == other.config
        )

    __hash__ = None

    def __post_init__(self) -> None:
        n, d = self.x.shape
        if d != self.config.d_total:
            raise ValueError(f"x has {d} columns, config expects {self.config.d_total}")
        if self.y.shape != (n,) or self.domain_ids.shape != (n,):
            raise ValueError("y and domain_ids must align with the rows of x")
        for i, dom in enumerate(self.domains):
            if dom.id != i:
                raise ValueError("domains must be listed in id order starting at 0")
        if n and (self.domain_ids.min() < 0 or self.domain_ids.max() >= len(self.domains)):
            raise ValueError("domain_ids reference domains outside the provided list")

    @property
    def num_examples(self) -> int:
        return self.x.shape[0]

    @property
    def num_domains(self) -> int:
        return len(self.domains)

    @property
    def examples(self) -> Sequence[LabeledExample]:
        return _ExampleView(self)

    def block(self, name: str) -> np.ndarray:
        """View of one feature block's columns."""
        return self.x[:, self.config.layout.slices()[name]]

    def domain_counts(self) -> np.ndarray:
        return np.bincount(self.domain_ids, minlength=self.num_domains)

    def select(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            x=self.x[idx],
            y=self.y[idx],
            domain_ids=self.domain_ids[idx],
            domains=self.domains,
            config=self.config,
        )

    def to_csv(self, path) -> None:
        layout = self.config.layout
        header = ["domain_id", "y"]
        for name in BLOCK_NAMES:
            header.extend(f"{name}_{j}" for j in range(getattr(layout, f"d_{name}")))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.num_examples):
                row = [int(self.domain_ids[i]), repr(float(self.y[i]))]
                row.extend(repr(float(v)) for v in self.x[i])
                writer.writerow(row)


def sample_domains(
    config: GeneratorConfig, num_domains: int, rng_stream: RngLike
) -> tuple[DomainAttributes, ...]:
    """Draw domain means: each block mean is centered Gaussian, isotropic."""
    if num_domains < 1:
        raise ValueError(f"num_domains must be at least 1, got {num_domains}")
    rng = as_generator(rng_stream)
    mu_core = rng.standard_normal((num_domains, config.d_core)) * math.sqrt(config.tau_core_sq)
    mu_spu = rng.standard_normal((num_domains, config.d_spu)) * math.sqrt(config.tau_spu_sq)
    return tuple(
        DomainAttributes(id=i, mu_core=mu_core[i].copy(), mu_spu=mu_spu[i].copy())
        for i in range(num_domains)
    )


def _stack_means(domains: Sequence[DomainAttributes]) -> tuple[np.ndarray, np.ndarray]:
    mu_core = np.stack([d.mu_core for d in domains]) if domains else np.zeros((0, 0))
    mu_spu = np.stack([d.mu_spu for d in domains]) if domains else np.zeros((0, 0))
    return mu_core, mu_spu


def sample_dataset(
    config: GeneratorConfig,
    domains: Sequence[DomainAttributes],
    num_examples: int,
    rng_stream: RngLike,
    block_streams: Mapping[str, RngLike] | None = None,
) -> Dataset:
    """Draw examples round-robin across domains.

    Labels combine the object block and the domain's core mean; they are
    independent of the realized noise, core, and spu draws. Each block (and
    the label noise) consumes its own child stream spawned from rng_stream in
    the order obj, noise, core, spu, eps, so redrawing one block through
    block_streams leaves every other column and all labels untouched.
    """
    if num_examples < 1:
        raise ValueError(f"num_examples must be at least 1, got {num_examples}")
    if not domains:
        raise ValueError("domains must be nonempty")
    for i, dom in enumerate(domains):
        if dom.id != i:
            raise ValueError("domains must be listed in id order starting at 0")

    children = as_seed_sequence(rng_stream).spawn(len(_SAMPLE_STREAMS))
    streams = {name: np.random.Generator(np.random.PCG64(seq))
               for name, seq in zip(_SAMPLE_STREAMS, children)}
    if block_streams:
        unknown = set(block_streams) - set(_SAMPLE_STREAMS)
        if unknown:
            raise ValueError(f"unknown stream overrides: {sorted(unknown)}")
        for name, stream in block_streams.items():
            streams[name] = as_generator(stream)

    ids = np.arange(num_examples, dtype=np.intp) % len(domains)
    mu_core, mu_spu = _stack_means(domains)

    layout = config.layout
    slices = layout.slices()
    x = np.empty((num_examples, layout.d_total))

    x[:, slices["obj"]] = streams["obj"].standard_normal((num_examples, config.d_obj))
    x[:, slices["noise"]] = streams["noise"].standard_normal((num_examples, config.d_noise))

    core = streams["core"].standard_normal((num_examples, config.d_core))
    core *= math.sqrt(config.sigma_core_sq)
    core += mu_core[ids]
    x[:, slices["core"]] = core
    del core

    spu = streams["spu"].standard_normal((num_examples, config.d_spu))
    spu *= math.sqrt(config.sigma_spu_sq)
    spu += mu_spu[ids]
    x[:, slices["spu"]] = spu
    del spu

    eps = streams["eps"].standard_normal(num_examples) * math.sqrt(config.sigma_y_sq)
    y = x[:, slices["obj"]] @ config.theta_star.obj + mu_core[ids] @ config.theta_star.core + eps

    return Dataset(
        x=x,
        y=y,
        domain_ids=ids.astype(np.int64),
        domains=tuple(domains),
        config=config,
    )


def split_id_validation(
    dataset: Dataset, fraction: float, rng_stream: RngLike
) -> tuple[Dataset, Dataset]:
    """Split off a held-out in-distribution part, stratified by domain.

    Each domain contributes round(fraction * n_d) examples to the held-out
    side; a final adjustment guarantees both sides are nonempty. Row order
    within each side follows the original dataset's order.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    n = dataset.num_examples
    if n < 2:
        raise ValueError("need at least 2 examples to split")
    rng = as_generator(rng_stream)

    held: list[np.ndarray] = []
    kept: list[np.ndarray] = []
    # Iterate domains in id order so the draw sequence is deterministic.
    for d in range(dataset.num_domains):
        idx = np.flatnonzero(dataset.domain_ids == d)
        if idx.size == 0:
            continue
        perm = rng.permutation(idx.size)
        k = int(math.floor(fraction * idx.size + 0.5))
        k = min(k, idx.size)
        held.append(idx[perm[:k]])
        kept.append(idx[perm[k:]])

    held_idx = np.concatenate(held) if held else np.zeros(0, dtype=np.intp)
    kept_idx = np.concatenate(kept) if kept else np.zeros(0, dtype=np.intp)
    if held_idx.size == 0:
        # Pull one example from the largest kept block.
        donor = max(kept, key=len)
        held_idx = donor[-1:]
        kept_idx = np.concatenate([a[:-1] if a is donor else a for a in kept])
    elif kept_idx.size == 0:
        donor = max(held, key=len)
        kept_idx = donor[-1:]
        held_idx = np.concatenate([a[:-1] if a is donor else a for a in held])

    return dataset.select(np.sort(kept_idx)), dataset.select(np.sort(held_idx))
