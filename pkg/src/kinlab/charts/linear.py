from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, Optional, Sequence

import numpy as np

from kinlab.charts._base import BaseChart, ChartBounds
from kinlab.common import GeometryError, UsageError


@dataclass(frozen=True, eq=False)
class LinearChart(BaseChart):
    """phi(x) = M x + shift."""

    CHART_NAME: ClassVar[str] = "linear"

    matrix: Sequence[Sequence[float]]
    shift: Optional[Sequence[float]] = None

    def __post_init__(self) -> None:
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] not in (1, 2):
            raise UsageError(f"A linear chart needs a 1x1 or 2x2 matrix, got {matrix.shape}.")
        shift = np.zeros(matrix.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "shift", np.broadcast_to(shift, (matrix.shape[0],)).copy())

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def bounds(self) -> ChartBounds:
        singular_values = np.linalg.svd(self.matrix, compute_uv=False)
        smallest = singular_values.min()
        return ChartBounds(
            jacobian=float(singular_values.max()),
            inverse_jacobian=float(1.0 / smallest) if smallest > 0 else np.inf,
            hessian=0.0,
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T + self.shift

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.matrix, np.shape(x)[:-1] + self.matrix.shape).copy()

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 3)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        if abs(np.linalg.det(self.matrix)) <= 1e-14:
            raise GeometryError(f"Singular chart Jacobian: {self.matrix.tolist()}.")
        return np.linalg.solve(self.matrix, (np.asarray(y, dtype=float) - self.shift).T).T


@dataclass(frozen=True, eq=False)
class IdentityChart(LinearChart):
    CHART_NAME: ClassVar[str] = "identity"

    matrix: Sequence[Sequence[float]] = field(init=False, repr=False)
    shift: Optional[Sequence[float]] = field(init=False, repr=False)
    dimension: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", np.eye(self.dimension))
        object.__setattr__(self, "shift", None)
        super().__post_init__()

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> BaseChart:
        return cls(**config)
