"""Feature-block layout shared by inputs and linear models.

Every input vector and every weight vector in the linear setting is the
concatenation of four blocks in a fixed order: object features, noise
features, core domain features, spurious domain features. This module holds
the layout arithmetic plus the two vector containers built on it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_NAMES = ("obj", "noise", "core", "spu")


@dataclass(frozen=True)
class BlockLayout:
    """Widths of the four feature blocks, in concatenation order."""

    d_obj: int
    d_noise: int
    d_core: int
    d_spu: int

    def __post_init__(self) -> None:
        for name in BLOCK_NAMES:
            width = getattr(self, f"d_{name}")
            if width < 0:
                raise ValueError(f"block width d_{name} must be >= 0, got {width}")

    @property
    def d_dom(self) -> int:
        """Width of the domain-dependent part (core + spu)."""
        return self.d_core + self.d_spu

    @property
    def d_total(self) -> int:
        return self.d_obj + self.d_noise + self.d_core + self.d_spu

    def slices(self) -> dict[str, slice]:
        """Column slice of each block within the concatenated vector."""
        out: dict[str, slice] = {}
        start = 0
        for name in BLOCK_NAMES:
            width = getattr(self, f"d_{name}")
            out[name] = slice(start, start + width)
            start += width
        return out

    @property
    def dom_slice(self) -> slice:
        """Columns of the contiguous core+spu range."""
        s = self.slices()
        return slice(s["core"].start, s["spu"].stop)


def _as_block(vec, width: int, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float).reshape(-1)
    if arr.shape != (width,):
        raise ValueError(f"{name} block has length {arr.shape[0]}, expected {width}")
    return arr


@dataclass(frozen=True)
class PartitionedVector:
    """An input x split into its four feature blocks.

    Concatenation order is fixed as [obj, noise, core, spu].
    """

    obj: np.ndarray
    noise: np.ndarray
    core: np.ndarray
    spu: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, type(self)):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in BLOCK_NAMES
        )

    __hash__ = None

    def concat(self) -> np.ndarray:
        return np.concatenate([self.obj, self.noise, self.core, self.spu])

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout(len(self.obj), len(self.noise), len(self.core), len(self.spu))

    @classmethod
    def from_concat(cls, vec: np.ndarray, layout: BlockLayout) -> "PartitionedVector":
        arr = np.asarray(vec, dtype=float).reshape(-1)
        if arr.shape[0] != layout.d_total:
            raise ValueError(
                f"vector has length {arr.shape[0]}, layout expects {layout.d_total}"
            )
        s = layout.slices()
        return cls(
            obj=arr[s["obj"]].copy(),
            noise=arr[s["noise"]].copy(),
            core=arr[s["core"]].copy(),
            spu=arr[s["spu"]].copy(),
        )

    @classmethod
    def validated(cls, obj, noise, core, spu, layout: BlockLayout) -> "PartitionedVector":
        return cls(
            obj=_as_block(obj, layout.d_obj, "obj"),
            noise=_as_block(noise, layout.d_noise, "noise"),
            core=_as_block(core, layout.d_core, "core"),
            spu=_as_block(spu, layout.d_spu, "spu"),
        )


@dataclass(frozen=True)
class LinearModel:
    """A weight vector partitioned like an input x.

    Prediction is the plain inner product of the concatenated weights with the
    concatenated input.
    """

    obj: np.ndarray
    noise: np.ndarray
    core: np.ndarray
    spu: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, type(self)):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in BLOCK_NAMES
        )

    __hash__ = None

    def concat(self) -> np.ndarray:
        return np.concatenate([self.obj, self.noise, self.core, self.spu])

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout(len(self.obj), len(self.noise), len(self.core), len(self.spu))

    @property
    def dom(self) -> np.ndarray:
        """Concatenated domain-dependent weights [core, spu]."""
        return np.concatenate([self.core, self.spu])

    def predict(self, x) -> float:
        if isinstance(x, PartitionedVector):
            return float(self.concat() @ x.concat())
        return float(self.concat() @ np.asarray(x, dtype=float))

    @classmethod
    def from_concat(cls, vec: np.ndarray, layout: BlockLayout) -> "LinearModel":
        pv = PartitionedVector.from_concat(vec, layout)
        return cls(obj=pv.obj, noise=pv.noise, core=pv.core, spu=pv.spu)

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "LinearModel":
        return cls(
            obj=np.zeros(layout.d_obj),
            noise=np.zeros(layout.d_noise),
            core=np.zeros(layout.d_core),
            spu=np.zeros(layout.d_spu),
        )

    @classmethod
    def validated(cls, obj, noise, core, spu, layout: BlockLayout) -> "LinearModel":
        return cls(
            obj=_as_block(obj, layout.d_obj, "obj"),
            noise=_as_block(noise, layout.d_noise, "noise"),
            core=_as_block(core, layout.d_core, "core"),
            spu=_as_block(spu, layout.d_spu, "spu"),
        )
