"""Boundary flattening with coefficient transport, and the mirror extension
used to turn specular reflection into an interior problem.

Coefficient samplers take (t, x, v) with positions and velocities shaped
(..., d) and return a (..., d, d), b (..., d) and G (...). The equation reads

    (d_t + v . grad_x) f = div_v(a grad_v f) - b . grad_v f + G.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional, Tuple

import numpy as np
import sympy

from kinlab.charts import BaseChart
from kinlab.common import GeometryError, UsageError, VerificationError, make_generator
from kinlab.galilean import PhasePoint
from kinlab.geometry import Domain, HalfSpace

if TYPE_CHECKING:
    from kinlab.solver import SolutionField

__all__ = [
    "CoefficientField",
    "flatten_point",
    "unflatten_point",
    "push_coefficients",
    "reflect_velocity",
    "reflection_matrix",
    "mirror_extend",
]

Sampler = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

# Symmetry and ellipticity are checked up to this slack.
ELLIPTICITY_TOLERANCE = 1e-12

# Symbols of the closed form coefficients, shared with the manufactured source.
T, X, V = sympy.symbols("t x v", real=True)


@dataclass(frozen=True)
class CoefficientField:
    diffusion: Sampler
    drift: Sampler
    source: Sampler
    lower: float
    upper: float
    dim: int = 1
    # Closed forms of (a, b) in (t, x, v) for d = 1, when they exist.
    symbolic: Optional[Tuple[sympy.Expr, sympy.Expr]] = None

    def __post_init__(self) -> None:
        if not 0 < self.lower <= self.upper:
            raise UsageError(
                f"Ellipticity bounds must satisfy 0 < lambda <= Lambda, "
                f"got ({self.lower}, {self.upper})."
            )

    @classmethod
    def constant(
        cls,
        diffusion: float = 1.0,
        drift: float = 0.0,
        source: float = 0.0,
        *,
        dim: int = 1,
    ) -> CoefficientField:
        """a = diffusion * I, b = drift * (1, ..., 1), G = source."""
        if not diffusion > 0:
            raise UsageError(f"Diffusion must be positive, got {diffusion}.")

        def a(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
            shape = np.broadcast(np.asarray(t)[..., None], x, v).shape[:-1]
            return np.broadcast_to(diffusion * np.eye(dim), shape + (dim, dim)).copy()

        def b(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
            shape = np.broadcast(np.asarray(t)[..., None], x, v).shape[:-1]
            return np.full(shape + (dim,), float(drift))

        def g(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
            shape = np.broadcast(np.asarray(t)[..., None], x, v).shape[:-1]
            return np.full(shape, float(source))

        symbolic = (sympy.Float(diffusion), sympy.Float(drift)) if dim == 1 else None
        return cls(a, b, g, diffusion, diffusion, dim, symbolic)

    def with_source(self, source: Sampler) -> CoefficientField:
        return replace(self, source=source)

    def check_ellipticity(
        self,
        samples: int = 1000,
        *,
        seed: int = 0,
        box: Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]] = (
            (-1.0, 0.0),
            (-1.0, 0.0),
            (-1.0, 1.0),
        ),
    ) -> Tuple[float, float]:
        """Check symmetry and lambda I <= a <= Lambda I at random samples of the
        (t, x, v) box, and return the extreme eigenvalues seen."""
        rng = make_generator(seed)
        (t_lo, t_hi), (x_lo, x_hi), (v_lo, v_hi) = box
        t = rng.uniform(t_lo, t_hi, samples)
        x = rng.uniform(x_lo, x_hi, (samples, self.dim))
        v = rng.uniform(v_lo, v_hi, (samples, self.dim))
        matrices = np.asarray(self.diffusion(t, x, v), dtype=float)

        asymmetry = np.abs(matrices - np.swapaxes(matrices, -1, -2)).max(axis=(-1, -2))
        if asymmetry.max() > ELLIPTICITY_TOLERANCE:
            index = int(asymmetry.argmax())
            raise VerificationError(
                f"Diffusion matrix is not symmetric at (t, x, v) = "
                f"({t[index]:.6g}, {x[index].tolist()}, {v[index].tolist()})."
            )

        eigenvalues = np.linalg.eigvalsh(matrices)
        smallest, largest = float(eigenvalues.min()), float(eigenvalues.max())
        if (
            smallest < self.lower - ELLIPTICITY_TOLERANCE
            or largest > self.upper + ELLIPTICITY_TOLERANCE
        ):
            raise VerificationError(
                f"Diffusion eigenvalues [{smallest:.6g}, {largest:.6g}] leave the "
                f"declared bounds [{self.lower:.6g}, {self.upper:.6g}]."
            )
        return smallest, largest


def flatten_point(chart: BaseChart, z: PhasePoint) -> PhasePoint:
    """(t, x, v) -> (t, phi(x), Dphi(x) v)."""
    x = z.x[None, :]
    chart.check_domain(x)
    position = chart.forward(x)[0]
    velocity = chart.jacobian(x)[0] @ z.v
    return PhasePoint(z.t, position, velocity)


def unflatten_point(chart: BaseChart, z: PhasePoint) -> PhasePoint:
    x = chart.inverse(z.x[None, :])
    chart.check_domain(x)
    velocity = chart.inverse_jacobian(x)[0] @ z.v
    return PhasePoint(z.t, x[0], velocity)


@dataclass(frozen=True)
class _PulledBack:
    """(t, y, w) -> (t, x, v, A) through the chart, evaluated on demand."""

    chart: BaseChart

    def __call__(
        self, t: np.ndarray, y: np.ndarray, w: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        x = self.chart.inverse(np.asarray(y, dtype=float))
        self.chart.check_domain(x)
        jacobian = self.chart.jacobian(x)
        inverse = self.chart.inverse_jacobian(x)
        v = np.einsum("...ij,...j->...i", inverse, np.asarray(w, dtype=float))
        return np.asarray(t, dtype=float), x, v, jacobian


def push_coefficients(chart: BaseChart, c: CoefficientField) -> CoefficientField:
    """Coefficients of the flattened equation: a -> A a A^T,
    b -> A b + D^2 phi[v, v] and G unchanged, with A = Dphi(x)."""
    if chart.dim != c.dim:
        raise UsageError(
            f"Dimension mismatch between chart (d = {chart.dim}) and coefficients (d = {c.dim})."
        )
    pull = _PulledBack(chart)

    def diffusion(t: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        t, x, v, jacobian = pull(t, y, w)
        a = c.diffusion(t, x, v)
        return np.einsum("...ir,...rs,...js->...ij", jacobian, a, jacobian)

    def drift(t: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        t, x, v, jacobian = pull(t, y, w)
        transported = np.einsum("...ij,...j->...i", jacobian, c.drift(t, x, v))
        curvature = np.einsum("...ijk,...j,...k->...i", chart.hessian(x), v, v)
        return transported + curvature

    def source(t: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        t, x, v, _ = pull(t, y, w)
        return c.source(t, x, v)

    bounds = chart.bounds
    return CoefficientField(
        diffusion=diffusion,
        drift=drift,
        source=source,
        lower=c.lower / bounds.inverse_jacobian**2,
        upper=c.upper * bounds.jacobian**2,
        dim=c.dim,
    )


def reflection_matrix(normal: np.ndarray) -> np.ndarray:
    """R = I - 2 n n^T for a unit normal."""
    normal = np.asarray(normal, dtype=float)
    return np.eye(normal.size) - 2 * np.outer(normal, normal)


def reflect_velocity(v: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Rv = v - 2 (v . n) n."""
    v = np.asarray(v, dtype=float)
    normal = np.asarray(normal, dtype=float)
    return v - 2 * (v @ normal)[..., None] * normal


def _mirrored_coefficients(c: CoefficientField, dom: HalfSpace) -> CoefficientField:
    reflection = reflection_matrix(dom.normal_vector)

    def fold(
        t: np.ndarray, x: np.ndarray, v: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        mirror = dom.signed_distance(x) > 0
        folded_x = np.where(mirror[..., None], dom.reflect(x), x)
        folded_v = np.where(mirror[..., None], v @ reflection, v)
        return np.asarray(t, dtype=float), folded_x, folded_v, mirror

    def diffusion(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        t, folded_x, folded_v, mirror = fold(t, x, v)
        a = c.diffusion(t, folded_x, folded_v)
        reflected = np.einsum("ij,...jk,kl->...il", reflection, a, reflection)
        return np.where(mirror[..., None, None], reflected, a)

    def drift(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        t, folded_x, folded_v, mirror = fold(t, x, v)
        b = c.drift(t, folded_x, folded_v)
        return np.where(mirror[..., None], b @ reflection, b)

    def source(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        t, folded_x, folded_v, _ = fold(t, x, v)
        return c.source(t, folded_x, folded_v)

    return CoefficientField(diffusion, drift, source, c.lower, c.upper, c.dim)


def mirror_extend(
    f: SolutionField, c: CoefficientField, dom: Domain
) -> Tuple[SolutionField, CoefficientField]:
    """Extend a field and its coefficients evenly across a flat boundary:
    f(t, x, v) := f(t, Rx, Rv) on the mirror side."""
    if not isinstance(dom, HalfSpace):
        raise GeometryError("flatten first: the mirror extension needs a half-space domain")
    if dom.dim != 1:
        raise UsageError("Gridded mirror extension is implemented for d = 1 fields.")

    coefficients = _mirrored_coefficients(c, dom)

    if not np.allclose(f.v, -f.v[::-1], rtol=0, atol=1e-12):
        raise UsageError("The velocity grid must be symmetric about v = 0.")
    inside = dom.signed_distance(f.x[:, None]) <= 1e-12
    if not inside.all():
        raise UsageError("The field must live in the closure of the domain.")

    mirrored_x = dom.reflect(f.x[:, None])[:, 0]
    # Nodes on the boundary are their own mirror image.
    fresh = np.abs(mirrored_x[:, None] - f.x[None, :]).min(axis=1) > 1e-12
    mirrored_values = f.values[:, fresh, ::-1]

    xs = np.concatenate([f.x, mirrored_x[fresh]])
    values = np.concatenate([f.values, mirrored_values], axis=1)
    order = np.argsort(xs, kind="stable")
    return f.regridded(x=xs[order], values=values[:, order, :]), coefficients
