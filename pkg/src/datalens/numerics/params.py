from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from datalens.errors import DimensionError


class Segment(NamedTuple):
    name: str
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 parameter array with named, contiguous segments.

    Segments must tile ``[0, len(values))`` in order. Values are stored as a
    read-only copy so a ParamVector can be shared freely.
    """

    values: np.ndarray
    segments: tuple[Segment, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        segments = tuple(Segment(str(s[0]), int(s[1]), int(s[2])) for s in self.segments)
        object.__setattr__(self, "segments", segments)
        pos = 0
        names = set()
        for seg in segments:
            if seg.offset != pos or seg.length < 0:
                raise DimensionError(f"segment {seg.name!r} does not start at {pos}")
            if seg.name in names:
                raise DimensionError(f"duplicate segment name {seg.name!r}")
            names.add(seg.name)
            pos += seg.length
        if pos != values.size:
            raise DimensionError(f"segments cover {pos} values, array has {values.size}")
        if not np.all(np.isfinite(values)):
            raise DimensionError("parameter values must be finite")

    @classmethod
    def from_arrays(cls, named: Iterable[tuple[str, np.ndarray]]) -> "ParamVector":
        parts, segments, pos = [], [], 0
        for name, arr in named:
            arr = np.asarray(arr, dtype=np.float64).ravel()
            segments.append(Segment(name, pos, arr.size))
            parts.append(arr)
            pos += arr.size
        values = np.concatenate(parts) if parts else np.zeros(0)
        return cls(values, tuple(segments))

    def __len__(self) -> int:
        return self.values.size

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.segments]

    def segment(self, name: str) -> np.ndarray:
        for seg in self.segments:
            if seg.name == name:
                return self.values[seg.offset:seg.offset + seg.length]
        raise KeyError(name)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != self.values.size:
            raise DimensionError(f"expected {self.values.size} values, got {values.size}")
        return ParamVector(values, self.segments)

    def zeros_like(self) -> "ParamVector":
        return self.with_values(np.zeros_like(self.values))

    def mask(self, names: Sequence[str]) -> np.ndarray:
        """Boolean mask over ``values`` selecting the named segments."""
        out = np.zeros(self.values.size, dtype=bool)
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise KeyError(sorted(unknown))
        for seg in self.segments:
            if seg.name in wanted:
                out[seg.offset:seg.offset + seg.length] = True
        return out

    def restrict(self, names: Sequence[str]) -> "ParamVector":
        kept = [s for s in self.segments if s.name in set(names)]
        return ParamVector.from_arrays((s.name, self.segment(s.name)) for s in kept)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.segments == other.segments

    def __repr__(self) -> str:
        parts = ", ".join(f"{s.name}[{s.length}]" for s in self.segments)
        return f"ParamVector({len(self)}: {parts})"


def as_array(v) -> np.ndarray:
    return v.values if isinstance(v, ParamVector) else np.asarray(v, dtype=np.float64)


@dataclass(frozen=True)
class LinearOperator:
    """A square linear map given only by its action ``v -> A v``."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.dimension < 1:
            raise DimensionError("operator dimension must be positive")

    def __call__(self, v) -> np.ndarray:
        v = as_array(v)
        if v.shape != (self.dimension,):
            raise DimensionError(f"operator expects shape ({self.dimension},), got {v.shape}")
        out = np.asarray(self.apply(v), dtype=np.float64)
        if out.shape != (self.dimension,):
            raise DimensionError(f"operator returned shape {out.shape}")
        return out

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "LinearOperator":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError("matrix must be square")
        return cls(matrix.shape[0], lambda v: matrix @ v)

    @classmethod
    def identity(cls, dimension: int) -> "LinearOperator":
        return cls(dimension, lambda v: v.copy())

    def damped(self, damping: float) -> "LinearOperator":
        if damping == 0:
            return self
        return LinearOperator(self.dimension, lambda v: self.apply(v) + damping * v)

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.dimension)
        return np.column_stack([self(eye[:, j]) for j in range(self.dimension)])
