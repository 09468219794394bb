"""Model parameters and sufficient statistics share one block layout.

A block vector holds:

- ``attr``: (C, D) attribute weights, one row per category,
- ``deep``: (C, H2) weights over the frozen embedding (H2 may be 0),
- ``corr_directed`` / ``corr_undirected``: (C, C) correlation weights,
  one matrix per edge-kind class.

The flat view concatenates the blocks in that order (row-major).  Statistics
aggregates (single-configuration statistics, expectations, gradients) use the
same layout, so objectives reduce to ``params.dot(stats)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass
class ParameterVector:
    attr: np.ndarray
    deep: np.ndarray
    corr_directed: np.ndarray
    corr_undirected: np.ndarray

    @classmethod
    def zeros(cls, num_categories: int, num_features: int, embed_dim: int = 0):
        c = num_categories
        return cls(
            attr=np.zeros((c, num_features)),
            deep=np.zeros((c, embed_dim)),
            corr_directed=np.zeros((c, c)),
            corr_undirected=np.zeros((c, c)),
        )

    def __post_init__(self):
        c = self.attr.shape[0]
        for name in ("deep", "corr_directed", "corr_undirected"):
            block = getattr(self, name)
            if block.shape[0] != c:
                raise DimensionMismatch(
                    f"{name} has {block.shape[0]} rows, expected {c}"
                )
        if self.corr_directed.shape != (c, c) or self.corr_undirected.shape != (c, c):
            raise DimensionMismatch("correlation blocks must be square (C, C)")

    @property
    def num_categories(self) -> int:
        return self.attr.shape[0]

    @property
    def num_features(self) -> int:
        return self.attr.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.deep.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.num_categories, self.num_features, self.embed_dim)

    def blocks(self) -> tuple[np.ndarray, ...]:
        return (self.attr, self.deep, self.corr_directed, self.corr_undirected)

    def to_flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks()])

    @classmethod
    def from_flat(cls, flat, num_categories: int, num_features: int, embed_dim: int = 0):
        c, d, h = num_categories, num_features, embed_dim
        flat = np.asarray(flat, dtype=np.float64)
        expected = c * d + c * h + 2 * c * c
        if flat.shape != (expected,):
            raise DimensionMismatch(
                f"flat vector has length {flat.shape}, expected ({expected},)"
            )
        pos = 0
        out = []
        for shape in ((c, d), (c, h), (c, c), (c, c)):
            size = shape[0] * shape[1]
            out.append(flat[pos : pos + size].reshape(shape).copy())
            pos += size
        return cls(*out)

    def copy(self) -> "ParameterVector":
        return ParameterVector(*(b.copy() for b in self.blocks()))

    def dot(self, other: "ParameterVector") -> float:
        return float(
            sum(np.vdot(a, b) for a, b in zip(self.blocks(), other.blocks()))
        )

    def add_scaled(self, other: "ParameterVector", scale: float) -> None:
        """In-place ``self += scale * other``."""
        self.attr += scale * other.attr
        self.deep += scale * other.deep
        self.corr_directed += scale * other.corr_directed
        self.corr_undirected += scale * other.corr_undirected

    def __add__(self, other: "ParameterVector") -> "ParameterVector":
        return ParameterVector(
            *(a + b for a, b in zip(self.blocks(), other.blocks()))
        )

    def __sub__(self, other: "ParameterVector") -> "ParameterVector":
        return ParameterVector(
            *(a - b for a, b in zip(self.blocks(), other.blocks()))
        )

    def __mul__(self, scale: float) -> "ParameterVector":
        return ParameterVector(*(b * scale for b in self.blocks()))

    __rmul__ = __mul__

    def symmetrize_undirected(self) -> None:
        """Project the undirected correlation block onto symmetric matrices."""
        g = self.corr_undirected
        self.corr_undirected = (g + g.T) / 2.0

    def max_undirected_asymmetry(self) -> float:
        g = self.corr_undirected
        return float(np.max(np.abs(g - g.T))) if g.size else 0.0

    def max_abs(self) -> float:
        return max(
            (float(np.max(np.abs(b))) for b in self.blocks() if b.size), default=0.0
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(b)) for b in self.blocks())


# Statistics aggregates reuse the parameter layout verbatim.
SufficientStatistics = ParameterVector
