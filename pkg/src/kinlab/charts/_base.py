from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Dict, Optional

import numpy as np

from kinlab.common import GeometryError, UsageError, make_generator

__all__ = [
    "BaseChart",
    "ChartBounds",
    "InverseChart",
]


@dataclass(frozen=True)
class ChartBounds:
    """Declared bounds of a chart on its domain: sup |Dphi|, sup |Dphi^-1| and
    sup |D^2 phi| (operator norms)."""

    jacobian: float
    inverse_jacobian: float
    hessian: float


class BaseChart:
    """A diffeomorphism phi of a neighbourhood of a boundary point that maps the
    domain to {y_1 < 0}. Positions carry the dimension in their last axis."""

    CHART_NAME: ClassVar[Optional[str]] = None

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> BaseChart:
        """Create a new chart from the given configuration."""
        return cls(**config)

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def bounds(self) -> ChartBounds:
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Dphi(x) with shape (..., d, d)."""
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """D^2 phi(x) with shape (..., d, d, d), indexed [i, j, k] for
        d^2 phi_i / dx_j dx_k."""
        raise NotImplementedError

    def inverse(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Whether each position lies in the chart's domain of definition."""
        return np.ones(np.shape(x)[:-1], dtype=bool)

    def check_domain(self, x: np.ndarray) -> None:
        inside = self.contains(x)
        if not np.all(inside):
            outside = np.asarray(x)[~inside][0]
            raise UsageError(f"Position {outside.tolist()} is outside of the chart domain.")

    def inverse_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Dphi(x)^-1, refusing singular points."""
        jacobian = self.jacobian(x)
        determinant = np.linalg.det(jacobian)
        singular = np.abs(determinant) <= 1e-14
        if np.any(singular):
            location = np.asarray(x)[singular][0]
            raise GeometryError(f"Singular chart Jacobian at x = {location.tolist()}.")
        return np.linalg.inv(jacobian)

    def condition_number(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.cond(self.jacobian(x))

    def inverse_chart(self) -> BaseChart:
        return InverseChart(self)

    def sample_domain(self, count: int, seed: int = 0, radius: float = 0.5) -> np.ndarray:
        """Random points in the ball of the given radius, kept if inside the chart."""
        rng = make_generator(seed)
        points = rng.uniform(-radius, radius, size=(count, self.dim))
        return points[self.contains(points)]

    def check_jacobian(
        self,
        points: Optional[np.ndarray] = None,
        *,
        step: float = 1e-6,
        seed: int = 0,
    ) -> float:
        """Largest deviation between the Jacobian oracle and central differences
        of the forward map."""
        if points is None:
            points = self.sample_domain(16, seed)
        points = np.asarray(points, dtype=float)

        columns = []
        for axis in range(self.dim):
            shift = np.zeros(self.dim)
            shift[axis] = step
            columns.append((self.forward(points + shift) - self.forward(points - shift)) / (2 * step))
        differenced = np.stack(columns, axis=-1)
        return float(np.abs(differenced - self.jacobian(points)).max())


@dataclass(frozen=True)
class InverseChart(BaseChart):
    """phi^-1, with derivatives obtained from the parent's oracles."""

    parent: BaseChart

    @property
    def dim(self) -> int:
        return self.parent.dim

    @property
    def bounds(self) -> ChartBounds:
        bounds = self.parent.bounds
        return ChartBounds(
            jacobian=bounds.inverse_jacobian,
            inverse_jacobian=bounds.jacobian,
            hessian=bounds.inverse_jacobian**3 * bounds.hessian,
        )

    def contains(self, y: np.ndarray) -> np.ndarray:
        return self.parent.contains(self.parent.inverse(y))

    def forward(self, y: np.ndarray) -> np.ndarray:
        return self.parent.inverse(y)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return self.parent.forward(x)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        return self.parent.inverse_jacobian(self.parent.inverse(y))

    def hessian(self, y: np.ndarray) -> np.ndarray:
        # D^2(phi^-1)_i = -B_il D^2 phi_l[B., B.] with B = Dphi^-1.
        x = self.parent.inverse(y)
        inverse = self.parent.inverse_jacobian(x)
        curvature = self.parent.hessian(x)
        return -np.einsum("...il,...lmn,...mj,...nk->...ijk", inverse, curvature, inverse, inverse)

    def inverse_chart(self) -> BaseChart:
        return self.parent
