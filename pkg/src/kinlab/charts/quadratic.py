from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Optional

import numpy as np

from kinlab.charts._base import BaseChart, ChartBounds
from kinlab.common import UsageError


@dataclass(frozen=True)
class QuadraticChart(BaseChart):
    """phi(x) = x + curvature * x^2 / 2 on the line, restricted to |x| < radius.

    Without an explicit radius the chart is kept where phi' lies in [1/2, 3/2].
    """

    CHART_NAME: ClassVar[str] = "quadratic-1d"

    curvature: float = 1.0
    radius: Optional[float] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.curvature):
            raise UsageError(f"Curvature must be finite, got {self.curvature}.")
        radius = self.radius
        if radius is None:
            radius = math.inf if self.curvature == 0 else 1 / (2 * abs(self.curvature))
        if not radius > 0 or abs(self.curvature) * radius >= 1:
            raise UsageError(
                f"The chart radius {radius} must be positive and below 1/|curvature|."
            )
        object.__setattr__(self, "radius", float(radius))

    @property
    def dim(self) -> int:
        return 1

    @property
    def bounds(self) -> ChartBounds:
        stretch = 0.0 if self.curvature == 0 else abs(self.curvature) * self.radius
        return ChartBounds(
            jacobian=1 + stretch,
            inverse_jacobian=1 / (1 - stretch),
            hessian=abs(self.curvature),
        )

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(x, dtype=float)[..., 0]) < self.radius

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + self.curvature * x**2 / 2

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (1 + self.curvature * x)[..., None]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x)[:-1] + (1, 1, 1), float(self.curvature))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        # Rationalised root of k x^2 / 2 + x - y = 0, finite at k = 0.
        return 2 * y / (1 + np.sqrt(1 + 2 * self.curvature * y))
