"""Algebra of the Galilean group acting on phase space (t, x, v).

The group law is

    (t1, x1, v1) o (t2, x2, v2) = (t1 + t2, x1 + x2 + t2 v1, v1 + v2)

and the kinetic dilation is S_r (t, x, v) = (r^2 t, r^3 x, r v). The kinetic
distance is left invariant under the group law and 1-homogeneous under S_r.

The minimisation over the velocity shift w is not done by a search over w.
The distance is the smallest level D at which the velocity balls B_D(v1),
B_D(v2) meet the position ball around dx/dt; the gap to that ball is
monotone in D, so D is a scalar root (brentq for single pairs, bisection for
arrays), exact to DISTANCE_TOLERANCE. `distance_oracle` keeps an independent
grid search over w for cross-checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, List, Optional, Tuple

import numpy as np
from scipy import optimize

from kinlab.common import (
    GeometryError,
    RegionError,
    UsageError,
    ensure_finite,
    make_generator,
)

if TYPE_CHECKING:
    from kinlab.geometry import Domain
    from kinlab.solver import SolutionField

__all__ = [
    "PhasePoint",
    "DistanceResult",
    "IncomingDistance",
    "MollifierKernel",
    "Orientation",
    "compose",
    "invert",
    "scale",
    "kinetic_distance",
    "kinetic_distance_with_witness",
    "kinetic_distance_many",
    "distance_oracle",
    "distance_to_incoming",
    "incoming_distance_oracle",
    "build_mollifier",
    "group_convolve",
]

SUPPORTED_DIMENSIONS = (1, 2)

# Absolute tolerance of the root finder behind the kinetic distance.
DISTANCE_TOLERANCE = 1e-12

# Bisection steps of the vectorised distance (the bracket shrinks by 2^-64).
_BISECTION_STEPS = 64


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """An event z = (t, x, v) of the 1 + 2d dimensional phase space."""

    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        if x.ndim != 1 or x.shape != v.shape:
            raise UsageError(
                f"Position and velocity must have the same dimension "
                f"(got {x.shape} and {v.shape})."
            )
        if x.size not in SUPPORTED_DIMENSIONS:
            raise UsageError(f"Unsupported phase space dimension: d = {x.size}.")

        t = float(self.t)
        ensure_finite("PhasePoint", np.asarray(t), x, v)
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @classmethod
    def identity(cls, dim: int = 1) -> PhasePoint:
        return cls(0.0, np.zeros(dim), np.zeros(dim))

    @classmethod
    def from_array(cls, values: Iterable[float]) -> PhasePoint:
        """Build a point from the flat layout [t, x_1..x_d, v_1..v_d]."""
        flat = np.asarray(list(values), dtype=float)
        if flat.size % 2 != 1:
            raise UsageError(
                f"A flat phase point needs 1 + 2d components, got {flat.size}."
            )
        dim = (flat.size - 1) // 2
        return cls(flat[0], flat[1 : 1 + dim], flat[1 + dim :])

    @property
    def dim(self) -> int:
        return self.x.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t], self.x, self.v])

    def isclose(self, other: PhasePoint, atol: float = 1e-12) -> bool:
        return self.dim == other.dim and bool(
            np.allclose(self.as_array(), other.as_array(), rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return f"PhasePoint(t={self.t!r}, x={self.x.tolist()!r}, v={self.v.tolist()!r})"


def _check_pair(z1: PhasePoint, z2: PhasePoint) -> None:
    if z1.dim != z2.dim:
        raise UsageError(
            f"Dimension mismatch between phase points (d = {z1.dim} and d = {z2.dim})."
        )


def _compose_arrays(
    t1: np.ndarray,
    x1: np.ndarray,
    v1: np.ndarray,
    t2: np.ndarray,
    x2: np.ndarray,
    v2: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Broadcasting group law; positions and velocities carry the dimension
    in their last axis."""
    t2 = np.asarray(t2, dtype=float)
    return t1 + t2, x1 + x2 + t2[..., None] * v1, v1 + v2


def _invert_arrays(
    t: np.ndarray, x: np.ndarray, v: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    return -t, -x + t[..., None] * v, -v


def compose(z1: PhasePoint, z2: PhasePoint) -> PhasePoint:
    """Return z1 o z2."""
    _check_pair(z1, z2)
    return PhasePoint(z1.t + z2.t, z1.x + z2.x + z2.t * z1.v, z1.v + z2.v)


def invert(z: PhasePoint) -> PhasePoint:
    """Return the unique z' with z o z' = z' o z = 0."""
    return PhasePoint(-z.t, -z.x + z.t * z.v, -z.v)


def scale(r: float, z: PhasePoint) -> PhasePoint:
    """Kinetic dilation S_r z = (r^2 t, r^3 x, r v)."""
    if not r > 0 or not math.isfinite(r):
        raise UsageError(f"Scaling factor must be a positive number, got {r}.")
    return PhasePoint(r**2 * z.t, r**3 * z.x, r * z.v)


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    w: np.ndarray


def _objective(
    w: np.ndarray, dt: np.ndarray, dx: np.ndarray, v1: np.ndarray, v2: np.ndarray
) -> np.ndarray:
    """The max-expression minimised by the kinetic distance, broadcast over
    leading axes of w."""
    dt = np.asarray(dt, dtype=float)
    return np.maximum.reduce(
        [
            np.broadcast_to(np.sqrt(np.abs(dt)), w.shape[:-1]),
            np.cbrt(np.linalg.norm(dx - dt[..., None] * w, axis=-1)),
            np.linalg.norm(v1 - w, axis=-1),
            np.linalg.norm(v2 - w, axis=-1),
        ]
    )


def _lens_projection(
    p: np.ndarray, h: np.ndarray, u: np.ndarray, level: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest point to `p` of the lens {|q + h u| <= D} n {|q - h u| <= D}
    (coordinates relative to the lens center, D = level >= h).

    Returns the offset of the nearest point and the distance to it."""

    a = np.asarray(np.sum(p * u, axis=-1))
    perp = p - a[..., None] * u
    b = np.asarray(np.linalg.norm(perp, axis=-1))
    e = np.divide(perp, b[..., None], out=np.zeros_like(perp), where=b[..., None] > 0)
    side = np.where(a < 0, -1.0, 1.0)
    abs_a = np.abs(a)

    radius = np.hypot(abs_a + h, b)
    inside = radius <= level
    safe_radius = np.where(radius > 0, radius, 1.0)
    arc_a = -h + level * (abs_a + h) / safe_radius
    arc_b = level * b / safe_radius

    corner_b = np.sqrt(np.maximum(level**2 - h**2, 0.0))
    on_arc = arc_a >= 0
    near_a = np.where(inside, abs_a, np.where(on_arc, arc_a, 0.0))
    near_b = np.where(inside, b, np.where(on_arc, arc_b, corner_b))
    distance = np.where(
        inside,
        0.0,
        np.where(on_arc, radius - level, np.hypot(abs_a, b - corner_b)),
    )
    offset = (side * near_a)[..., None] * u + near_b[..., None] * e
    return offset, distance


@dataclass
class _DistanceProblem:
    """Level-set form of the kinetic distance: the smallest D >= max(|dt|^1/2, h)
    for which the two velocity balls B_D(v1), B_D(v2) meet the position ball
    B_{D^3/|dt|}(dx/dt)."""

    dt: np.ndarray
    dx: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self) -> None:
        self.dt = np.asarray(self.dt, dtype=float)
        self.center = (self.v1 + self.v2) / 2
        half = (self.v2 - self.v1) / 2
        self.h = np.asarray(np.linalg.norm(half, axis=-1))
        self.u = np.divide(
            half,
            self.h[..., None],
            out=np.zeros_like(half),
            where=self.h[..., None] > 0,
        )
        self.moving = np.asarray(self.dt != 0)
        safe_dt = np.where(self.moving, self.dt, 1.0)
        self.target = self.dx / safe_dt[..., None]
        self.lower = np.maximum(np.sqrt(np.abs(self.dt)), self.h)
        # Where dt = 0 the position term does not depend on w at all.
        self.lower = np.where(
            self.moving,
            self.lower,
            np.maximum(self.lower, np.cbrt(np.linalg.norm(self.dx, axis=-1))),
        )

    def gap(self, level: np.ndarray) -> np.ndarray:
        _, distance = _lens_projection(
            self.target - self.center, self.h, self.u, level
        )
        safe_dt = np.where(self.moving, np.abs(self.dt), 1.0)
        return np.where(self.moving, distance - level**3 / safe_dt, -1.0)

    def upper(self) -> np.ndarray:
        starts = [self.v1, self.v2, self.center, np.where(
            self.moving[..., None], self.target, self.center
        )]
        return np.min(
            [_objective(w, self.dt, self.dx, self.v1, self.v2) for w in starts],
            axis=0,
        )

    def witness(self, level: np.ndarray) -> np.ndarray:
        offset, _ = _lens_projection(self.target - self.center, self.h, self.u, level)
        return np.where(self.moving[..., None], self.center + offset, self.center)


def kinetic_distance_with_witness(z1: PhasePoint, z2: PhasePoint) -> DistanceResult:
    """Compute the kinetic distance together with the optimal velocity shift w."""
    _check_pair(z1, z2)
    problem = _DistanceProblem(
        np.asarray(z1.t - z2.t), z1.x - z2.x, np.asarray(z1.v), np.asarray(z2.v)
    )
    lower = float(problem.lower)
    if not problem.moving or problem.gap(np.asarray(lower)) <= 0:
        return DistanceResult(lower, problem.witness(np.asarray(lower)))

    upper = float(problem.upper())
    # The best start is feasible at its own value; widen only against rounding.
    while problem.gap(np.asarray(upper)) > 0:
        upper = upper * (1 + 1e-12) + 1e-300

    level = optimize.brentq(
        lambda level: float(problem.gap(np.asarray(level))),
        lower,
        upper,
        xtol=DISTANCE_TOLERANCE,
        rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )
    return DistanceResult(level, problem.witness(np.asarray(level)))


def kinetic_distance(z1: PhasePoint, z2: PhasePoint) -> float:
    """min over w of max(|t1-t2|^1/2, |x1-x2-(t1-t2)w|^1/3, |v1-w|, |v2-w|)."""
    return kinetic_distance_with_witness(z1, z2).distance


def _distance_arrays(
    t1: np.ndarray,
    x1: np.ndarray,
    v1: np.ndarray,
    t2: np.ndarray,
    x2: np.ndarray,
    v2: np.ndarray,
) -> np.ndarray:
    """Pairwise d(z1_i, z2_i) over broadcast arrays of events, by bisection on
    the level-set gap."""
    v1, v2 = np.broadcast_arrays(np.asarray(v1, dtype=float), np.asarray(v2, dtype=float))
    problem = _DistanceProblem(
        np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float),
        np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float),
        v1,
        v2,
    )
    lower = problem.lower
    upper = np.maximum(problem.upper(), lower)
    settled = problem.gap(lower) <= 0
    for _ in range(_BISECTION_STEPS):
        middle = (lower + upper) / 2
        feasible = problem.gap(middle) <= 0
        upper = np.where(feasible, middle, upper)
        lower = np.where(feasible, lower, middle)
    return np.where(settled, problem.lower, upper)


def kinetic_distance_many(
    z0: PhasePoint, t: np.ndarray, x: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """Vectorised distance d((t, x, v), z0) for arrays of events.

    `x` and `v` carry the dimension in their last axis (a trailing axis of
    size one may be omitted when d = 1)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if z0.dim == 1 and x.shape == t.shape:
        x, v = x[..., None], v[..., None]
    return _distance_arrays(t, x, v, z0.t, z0.x, z0.v)


def distance_oracle(
    z1: PhasePoint, z2: PhasePoint, *, grid: int = 201, rounds: int = 8
) -> float:
    """Dense-grid minimisation of the distance objective over w, refined by
    repeatedly zooming into the best cell. Used only for cross-checks."""
    _check_pair(z1, z2)
    dt, dx = z1.t - z2.t, z1.x - z2.x
    center = (z1.v + z2.v) / 2
    half_width = max(float(_objective(center, dt, dx, z1.v, z2.v)), 1e-6)
    best = math.inf
    for _ in range(rounds):
        axes = [np.linspace(c - half_width, c + half_width, grid) for c in center]
        w = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, z1.dim)
        values = _objective(w, dt, dx, z1.v, z2.v)
        index = int(np.argmin(values))
        if values[index] < best:
            best = float(values[index])
            center = w[index]
        half_width *= 8.0 / (grid - 1)
    return best


@dataclass(frozen=True)
class IncomingDistance:
    distance: float
    witness: PhasePoint
    w: np.ndarray


def _half_space_incoming(
    z: PhasePoint, normal: np.ndarray, offset: float, margin: float
) -> IncomingDistance:
    """Exact distance to the closure of the incoming set {x.n = offset,
    v.n <= -margin} of a half space.

    Only the normal components of the shift w and of the boundary velocity
    enter, which leaves the scalar conditions

        |nv - a| <= D,  a + margin <= D,  |delta - s a| <= D^3,  |s| <= D^2

    in the unknowns (s, a). They are solvable iff |delta| <= D^3 + D^2 max|a|
    over the admissible a, which is increasing in D."""

    delta = float(normal @ z.x) - offset
    nv = float(normal @ z.v)

    def admissible(level: float) -> Tuple[float, float]:
        return nv - level, min(nv + level, level - margin)

    def slack(level: float) -> float:
        low, high = admissible(level)
        return level**3 + level**2 * max(abs(low), abs(high)) - abs(delta)

    lower = max(0.0, (nv + margin) / 2)
    if slack(lower) >= 0:
        level = lower
    else:
        upper = max(2 * lower, 1.0)
        while slack(upper) < 0:
            upper *= 2
        level = optimize.brentq(
            slack, lower, upper, xtol=DISTANCE_TOLERANCE, maxiter=500
        )

    low, high = admissible(level)
    a = low if abs(low) >= abs(high) else high
    s = float(np.clip(delta / a, -(level**2), level**2)) if a != 0 else 0.0

    w = z.v + (a - nv) * normal
    boundary_v = w - max(a + margin, 0.0) * normal
    foot = z.x - s * w
    boundary_x = foot - (float(normal @ foot) - offset) * normal
    witness = PhasePoint(z.t - s, boundary_x, boundary_v)
    return IncomingDistance(level, witness, w)


def incoming_distance_oracle(
    z: PhasePoint,
    dom: Domain,
    *,
    samples: int = 20_000,
    seed: int = 0,
    margin: float = 0.0,
) -> IncomingDistance:
    """Brute-force upper estimate of the distance to the incoming boundary,
    minimising over randomly sampled boundary states."""
    if not dom.has_boundary:
        raise GeometryError("no incoming boundary")

    rng = make_generator(seed)
    anchor = dom.project_to_boundary(z.x[None, :])[0]
    n_anchor = dom.normal(anchor[None, :])[0]
    # The state (t, anchor, v projected to incoming) bounds the search radius.
    start_v = z.v - max(float(n_anchor @ z.v) + margin, 0.0) * n_anchor
    radius = max(kinetic_distance(z, PhasePoint(z.t, anchor, start_v)), 1e-9)

    reach = radius**3 + radius**2 * (float(np.linalg.norm(z.v)) + radius)
    positions = dom.sample_boundary(rng, samples, z.x, reach)
    if positions.shape[0] == 0:
        positions = anchor[None, :]
    count = positions.shape[0]
    normals = dom.normal(positions)
    velocities = z.v + radius * rng.uniform(-1.0, 1.0, size=(count, z.dim))
    outward = np.sum(velocities * normals, axis=-1) + margin
    velocities = velocities - np.maximum(outward, 0.0)[:, None] * normals
    times = z.t + radius**2 * rng.uniform(-1.0, 1.0, size=count)

    distances = kinetic_distance_many(z, times, positions, velocities)
    index = int(np.argmin(distances))
    witness = PhasePoint(times[index], positions[index], velocities[index])
    candidate = kinetic_distance_with_witness(z, witness)
    if candidate.distance > radius:
        witness = PhasePoint(z.t, anchor, start_v)
        candidate = kinetic_distance_with_witness(z, witness)
    return IncomingDistance(candidate.distance, witness, candidate.w)


def distance_to_incoming(
    z: PhasePoint, dom: Domain, *, margin: float = 0.0
) -> IncomingDistance:
    """Infimum of the kinetic distance from `z` to the closure of the incoming
    boundary (all times), with a witnessing boundary state.

    `margin` restricts the target to boundary velocities with v.n <= -margin."""
    from kinlab.geometry import ConvexPolytope, HalfSpace

    if margin < 0:
        raise UsageError(f"Velocity margin must be non-negative, got {margin}.")
    if not dom.has_boundary:
        raise GeometryError("no incoming boundary")
    if dom.dim != z.dim:
        raise UsageError(
            f"Dimension mismatch between point (d = {z.dim}) and domain (d = {dom.dim})."
        )

    if isinstance(dom, HalfSpace):
        return _half_space_incoming(z, dom.normal_vector, dom.offset, margin)

    if isinstance(dom, ConvexPolytope):
        # Each face alone is a relaxation; a face witness that stays on the
        # closure of the polytope is optimal.
        candidates: List[IncomingDistance] = [
            _half_space_incoming(z, face.normal_vector, face.offset, margin)
            for face in dom.faces
        ]
        admissible = [
            candidate
            for candidate in candidates
            if dom.signed_distance(candidate.witness.x[None, :])[0] <= 1e-9
        ]
        if admissible and min(c.distance for c in admissible) <= min(
            c.distance for c in candidates
        ):
            return min(admissible, key=lambda candidate: candidate.distance)

    return incoming_distance_oracle(z, dom, margin=margin)


class Orientation(str, Enum):
    """Sign pattern of the mollifier support in (t, x_1, v_1)."""

    # Supported in {t > 0} n {x_1 > 0} n {v_1 < 0}.
    INFLUX = "influx"

    # Centered in every coordinate.
    SYMMETRIC = "symmetric"

    @property
    def signs(self) -> Tuple[int, int, int]:
        if self is Orientation.INFLUX:
            return (1, 1, -1)
        return (0, 0, 0)


# Mass of (1 - s^2)^3 over (-1, 1).
_BUMP_MASS = 32.0 / 35.0


def _bump(s: np.ndarray) -> np.ndarray:
    return np.where(np.abs(s) < 1, (1 - s**2) ** 3, 0.0) / _BUMP_MASS


@dataclass(frozen=True)
class MollifierKernel:
    """Tensor polynomial bump scaled by (eps^2, eps^3, eps) in (t, x, v).

    At eps = 1 every signed coordinate lives on a unit interval on its side of
    zero and the remaining coordinates on (-1, 1)."""

    epsilon: float
    orientation: Orientation = Orientation.INFLUX
    dim: int = 1

    @property
    def exponents(self) -> np.ndarray:
        return np.array([2] + [3] * self.dim + [1] * self.dim, dtype=float)

    def _axis_signs(self) -> np.ndarray:
        t_sign, x_sign, v_sign = self.orientation.signs
        signs = np.zeros(1 + 2 * self.dim)
        signs[0] = t_sign
        signs[1] = x_sign
        signs[1 + self.dim] = v_sign
        return signs

    def support_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners in the flat (t, x, v) layout."""
        signs = self._axis_signs()
        lower = np.where(signs > 0, 0.0, -1.0)
        upper = np.where(signs < 0, 0.0, 1.0)
        widths = self.epsilon**self.exponents
        return lower * widths, upper * widths

    def density(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the kernel at flat points of shape (..., 1 + 2d)."""
        lower, upper = self.support_box()
        middle = (lower + upper) / 2
        half = (upper - lower) / 2
        values = np.prod(_bump((points - middle) / half) / half, axis=-1)
        return values

    def quadrature(self, nodes: int = 128) -> Tuple[np.ndarray, np.ndarray]:
        """Midpoint nodes per axis and the matching 1D weights (the kernel is a
        tensor product, so the full rule is their outer product)."""
        lower, upper = self.support_box()
        axes, weights = [], []
        for low, high in zip(lower, upper):
            spacing = (high - low) / nodes
            axis = low + spacing * (np.arange(nodes) + 0.5)
            middle, half = (low + high) / 2, (high - low) / 2
            axes.append(axis)
            weights.append(_bump((axis - middle) / half) / half * spacing)
        return np.array(axes), np.array(weights)

    def mass(self, nodes: int = 128) -> float:
        _, weights = self.quadrature(nodes)
        return float(np.prod(weights.sum(axis=-1)))

    def sample_support(self, count: int, seed: int = 0) -> np.ndarray:
        lower, upper = self.support_box()
        rng = make_generator(seed)
        # Open box: shrink away from the faces by a relative hair.
        span = upper - lower
        return lower + span * (1e-12 + (1 - 2e-12) * rng.random((count, lower.size)))


def build_mollifier(
    epsilon: float,
    orientation: Orientation = Orientation.INFLUX,
    dim: int = 1,
) -> MollifierKernel:
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise UsageError(f"Mollifier scale must be positive, got {epsilon}.")
    if dim not in SUPPORTED_DIMENSIONS:
        raise UsageError(f"Unsupported phase space dimension: d = {dim}.")
    return MollifierKernel(float(epsilon), Orientation(orientation), dim)


def _convolution_margins(
    kernel: MollifierKernel, max_abs_t: float
) -> Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]]:
    """How far (below, above) each evaluation node reaches into the field,
    per axis, for the pulled back points (t - tau, x - xi - (t - tau) nu, v - nu)."""
    lower, upper = kernel.support_box()
    (tau_lo, xi_lo, nu_lo), (tau_hi, xi_hi, nu_hi) = lower, upper
    drift = max_abs_t + max(abs(tau_lo), abs(tau_hi))
    nu_reach = max(abs(nu_lo), abs(nu_hi))
    return (
        (tau_hi, -tau_lo),
        (xi_hi + drift * nu_reach, -xi_lo + drift * nu_reach),
        (nu_hi, -nu_lo),
    )


def group_convolve(
    kernel: MollifierKernel,
    field: SolutionField,
    *,
    nodes: Optional[int] = None,
) -> SolutionField:
    """Left group convolution (k * f)(z) = int k(w) f(w^-1 o z) dw on the
    field's grid.

    The result lives on the sub-grid whose nodes keep every pulled back point
    inside the stored data."""
    if kernel.dim != 1:
        raise UsageError("Group convolution is implemented for gridded d = 1 fields.")

    times, xs, vs = field.times, field.x, field.v
    (t_below, t_above), (x_below, x_above), (v_below, v_above) = _convolution_margins(
        kernel, float(np.max(np.abs(times)))
    )
    keep_t = (times - t_below >= times[0] - 1e-14) & (times + t_above <= times[-1] + 1e-14)
    keep_x = (xs - x_below >= xs[0] - 1e-14) & (xs + x_above <= xs[-1] + 1e-14)
    keep_v = (vs - v_below >= vs[0] - 1e-14) & (vs + v_above <= vs[-1] + 1e-14)
    if not (keep_t.any() and keep_x.any() and keep_v.any()):
        raise RegionError(
            "insufficient padding: the kernel needs margins "
            f"t: {max(t_below, t_above):.3g}, x: {max(x_below, x_above):.3g}, "
            f"v: {max(v_below, v_above):.3g} around the evaluation region"
        )

    if nodes is None:
        # The velocity width is the widest of the three; resolve it like the grid.
        nodes = int(np.clip(math.ceil(kernel.epsilon / np.diff(vs).min()), 2, 8))
    axes, weights = kernel.quadrature(nodes)
    total = float(np.prod(weights.sum(axis=-1)))

    t_grid, x_grid, v_grid = np.meshgrid(
        times[keep_t], xs[keep_x], vs[keep_v], indexing="ij"
    )
    values = np.zeros_like(t_grid)
    for (tau, w_tau), (xi, w_xi), (nu, w_nu) in itertools.product(
        zip(axes[0], weights[0]), zip(axes[1], weights[1]), zip(axes[2], weights[2])
    ):
        pulled_t = t_grid - tau
        pulled_x = x_grid - xi - pulled_t * nu
        values += (w_tau * w_xi * w_nu / total) * field(
            pulled_t, pulled_x, v_grid - nu
        )
    return field.restricted(keep_t, keep_x, keep_v, values)
