"""Spatial domains, kinetic cylinders and the volume estimates built on them.

A kinetic cylinder is Q_r(z0) = z0 o ((-r^2, 0] x B_{r^3} x B_r) and H_r(z0) is
its part whose position lies in the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Any,
    Callable,
    ClassVar,
    Dict,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from scipy import special

from kinlab.common import GeometryError, UsageError, make_generator
from kinlab.galilean import PhasePoint, _compose_arrays
from kinlab.logs import LogLevel, LogSource
from kinlab.settings import DEFAULT_SETTINGS, LabSettings

if TYPE_CHECKING:
    from kinlab.charts import BaseChart

__all__ = [
    "BoundaryClass",
    "Domain",
    "FullSpace",
    "HalfSpace",
    "ConvexPolytope",
    "LevelSetDomain",
    "BallDomain",
    "KineticCylinder",
    "VolumeMethod",
    "VolumeEstimate",
    "QMinusReport",
    "classify",
    "cylinder_contains",
    "inside_fraction",
    "qminus_exterior_measure",
    "qminus_lower_bound",
    "touches_incoming",
    "trace_weight",
    "unit_ball_volume",
]

# Band around v.n = 0 treated as grazing.
GRAZING_TOLERANCE = 1e-12

# Band around the boundary (in signed distance) treated as on the boundary.
BOUNDARY_TOLERANCE = 1e-10

# Relative slack on the ends of the half-open time interval (-r^2, 0].
_TIME_EDGE = 1e-12

# Q- = (-3/4, -1/2] x B_{1/8} x B_{1/2}, compactly contained in Q_1.
QMINUS_TIMES = (-0.75, -0.5)
QMINUS_POSITION_RADIUS = 1.0 / 8.0
QMINUS_VELOCITY_RADIUS = 1.0 / 2.0
QMINUS_CAP_HEIGHT = 3.0 / 32.0


class BoundaryClass(str, Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"
    GRAZING = "grazing"
    INTERIOR = "interior"
    EXTERIOR = "exterior"


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / float(special.gamma(dim / 2 + 1))


def _uniform_ball(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    if dim == 1:
        return rng.uniform(-1.0, 1.0, size=(count, 1))
    direction = rng.standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    return direction * rng.random(count)[:, None] ** (1.0 / dim)


def _as_points(x: Any, dim: int) -> np.ndarray:
    points = np.asarray(x, dtype=float)
    if dim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
        points = points[..., None]
    return points


class Domain:
    """A spatial region with boundary queries. Membership is strict (the
    boundary itself is not part of the domain)."""

    DOMAIN_KIND: ClassVar[Optional[str]] = None

    has_boundary: ClassVar[bool] = True

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> Domain:
        """Create a new domain from the given configuration."""
        return cls(**config)

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def convex(self) -> bool:
        raise NotImplementedError

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Negative inside, positive outside, zero on the boundary. Positions
        carry the dimension in their last axis."""
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        """Outward unit normal at (or near) the boundary."""
        raise NotImplementedError

    def project_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """Nearest boundary point of each position."""
        raise NotImplementedError

    def sample_boundary(
        self,
        rng: np.random.Generator,
        count: int,
        center: np.ndarray,
        radius: float,
    ) -> np.ndarray:
        """Boundary points within (roughly) `radius` of `center`."""
        candidates = center + radius * _uniform_ball(rng, count, self.dim)
        projected = self.project_to_boundary(candidates)
        on_boundary = np.abs(self.signed_distance(projected)) <= 1e-9
        return projected[on_boundary]

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.signed_distance(_as_points(x, self.dim)) < 0


@dataclass(frozen=True, eq=False)
class FullSpace(Domain):
    """The whole space, without any boundary."""

    DOMAIN_KIND: ClassVar[str] = "full"
    has_boundary: ClassVar[bool] = False

    dimension: int = 1

    @property
    def dim(self) -> int:
        return self.dimension

    @property
    def convex(self) -> bool:
        return True

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x)[:-1], -np.inf)

    def normal(self, x: np.ndarray) -> np.ndarray:
        raise GeometryError("no incoming boundary")

    def project_to_boundary(self, x: np.ndarray) -> np.ndarray:
        raise GeometryError("no incoming boundary")


@dataclass(frozen=True, eq=False)
class HalfSpace(Domain):
    """The half space {x : n.x < offset} with outward unit normal n."""

    DOMAIN_KIND: ClassVar[str] = "half-space"

    normal_vector: np.ndarray
    offset: float = 0.0

    def __post_init__(self) -> None:
        normal = np.atleast_1d(np.asarray(self.normal_vector, dtype=float))
        length = float(np.linalg.norm(normal))
        if normal.ndim != 1 or not length > 0 or not math.isfinite(length):
            raise UsageError(f"Invalid half-space normal: {self.normal_vector!r}.")
        object.__setattr__(self, "normal_vector", normal / length)
        object.__setattr__(self, "offset", float(self.offset) / length)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> Domain:
        config = dict(config)
        normal = config.pop("normal", config.pop("normal_vector", None))
        if normal is None:
            raise UsageError("A half-space needs a 'normal'.")
        return cls(normal, **config)

    @property
    def dim(self) -> int:
        return self.normal_vector.size

    @property
    def convex(self) -> bool:
        return True

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return _as_points(x, self.dim) @ self.normal_vector - self.offset

    def normal(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        return np.broadcast_to(self.normal_vector, points.shape).copy()

    def project_to_boundary(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        return points - self.signed_distance(points)[..., None] * self.normal_vector

    def reflect(self, x: np.ndarray) -> np.ndarray:
        """Mirror positions across the boundary plane."""
        points = _as_points(x, self.dim)
        return points - 2 * self.signed_distance(points)[..., None] * self.normal_vector


@dataclass(frozen=True, eq=False)
class ConvexPolytope(Domain):
    """Intersection of half spaces."""

    DOMAIN_KIND: ClassVar[str] = "polytope"

    faces: Tuple[HalfSpace, ...]

    def __post_init__(self) -> None:
        faces = tuple(self.faces)
        if not faces:
            raise UsageError("A polytope needs at least one face.")
        if len({face.dim for face in faces}) != 1:
            raise UsageError("All polytope faces must share one dimension.")
        object.__setattr__(self, "faces", faces)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> Domain:
        faces = []
        for face in config["faces"]:
            if isinstance(face, HalfSpace):
                faces.append(face)
            else:
                normal, offset = face
                faces.append(HalfSpace(normal, offset))
        return cls(tuple(faces))

    @property
    def dim(self) -> int:
        return self.faces[0].dim

    @property
    def convex(self) -> bool:
        return True

    def _face_distances(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        return np.stack([face.signed_distance(points) for face in self.faces], axis=-1)

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return self._face_distances(x).max(axis=-1)

    def normal(self, x: np.ndarray) -> np.ndarray:
        active = self._face_distances(x).argmax(axis=-1)
        normals = np.stack([face.normal_vector for face in self.faces])
        return normals[active]

    def project_to_boundary(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        distances = self._face_distances(points)
        active = distances.argmax(axis=-1)
        normals = np.stack([face.normal_vector for face in self.faces])[active]
        return points - np.take_along_axis(distances, active[..., None], -1) * normals


@dataclass(frozen=True, eq=False)
class LevelSetDomain(Domain):
    """The region {psi < 0} of a level set function with gradient and Hessian
    oracles. The signed distance is the first order estimate psi / |grad psi|."""

    DOMAIN_KIND: ClassVar[str] = "level-set"

    function: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    dimension: int = 1
    is_convex: bool = False
    chart: Optional[BaseChart] = None

    @classmethod
    def from_chart(cls, chart: BaseChart, *, convex: bool = False) -> LevelSetDomain:
        """The domain {phi_1 < 0} that the chart maps onto {y_1 < 0}."""
        return cls(
            function=lambda x: chart.forward(x)[..., 0],
            gradient=lambda x: chart.jacobian(x)[..., 0, :],
            hessian=lambda x: chart.hessian(x)[..., 0, :, :],
            dimension=chart.dim,
            is_convex=convex,
            chart=chart,
        )

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> Domain:
        from kinlab.registry import prepare_chart

        config = dict(config)
        convex = bool(config.pop("convex", False))
        kind = config.pop("chart")
        return cls.from_chart(prepare_chart(kind, **config), convex=convex)

    @property
    def dim(self) -> int:
        return self.dimension

    @property
    def convex(self) -> bool:
        return self.is_convex

    def chart_condition(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Condition number of Dphi at each position for chart-built domains,
        NaN outside of the chart."""
        if self.chart is None:
            return None
        points = _as_points(x, self.dim)
        inside = self.chart.contains(points)
        safe = np.where(inside[..., None], points, 0.0)
        return np.where(inside, self.chart.condition_number(safe), np.nan)

    def _gradient_norm(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.gradient(points), axis=-1)

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        values = np.asarray(self.function(points), dtype=float)
        norms = self._gradient_norm(points)
        return np.divide(values, norms, out=values.copy(), where=norms > 0)

    def normal(self, x: np.ndarray) -> np.ndarray:
        points = _as_points(x, self.dim)
        gradient = np.asarray(self.gradient(points), dtype=float)
        norms = np.linalg.norm(gradient, axis=-1, keepdims=True)
        if np.any(norms <= GRAZING_TOLERANCE):
            raise GeometryError(
                "ambiguous boundary sign: gradient magnitude "
                f"{float(norms.min()):.3e} is below {GRAZING_TOLERANCE:.0e}"
            )
        return gradient / norms

    def project_to_boundary(self, x: np.ndarray, *, steps: int = 30) -> np.ndarray:
        points = _as_points(x, self.dim).copy()
        for _ in range(steps):
            gradient = np.asarray(self.gradient(points), dtype=float)
            squared = np.sum(gradient**2, axis=-1, keepdims=True)
            values = np.asarray(self.function(points), dtype=float)[..., None]
            points = points - np.divide(
                values * gradient, squared, out=np.zeros_like(gradient), where=squared > 0
            )
        return points


@dataclass(frozen=True, eq=False)
class BallDomain(LevelSetDomain):
    """The open ball {|x - center| < radius}."""

    DOMAIN_KIND: ClassVar[str] = "ball"

    function: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)
    gradient: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)
    hessian: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)
    center: Sequence[float] = (0.0,)
    radius: float = 1.0

    def __post_init__(self) -> None:
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise UsageError(f"Ball radius must be positive, got {self.radius}.")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dimension", center.size)
        object.__setattr__(self, "is_convex", True)
        object.__setattr__(self, "function", self._function)
        object.__setattr__(self, "gradient", self._gradient)
        object.__setattr__(self, "hessian", self._hessian)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> Domain:
        return cls(**config)

    def _function(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center
        norms = np.linalg.norm(offset, axis=-1, keepdims=True)
        return np.divide(offset, norms, out=np.zeros_like(offset), where=norms > 0)

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        normal = self._gradient(x)
        norms = np.linalg.norm(x - self.center, axis=-1)[..., None, None]
        projector = np.eye(self.dim) - normal[..., :, None] * normal[..., None, :]
        return np.divide(projector, norms, out=np.zeros_like(projector), where=norms > 0)

    def project_to_boundary(self, x: np.ndarray, *, steps: int = 0) -> np.ndarray:
        points = _as_points(x, self.dim)
        direction = self._gradient(points)
        direction[np.linalg.norm(direction, axis=-1) == 0, 0] = 1.0
        return self.center + self.radius * direction


def classify(
    z: PhasePoint, dom: Domain, *, tolerance: float = GRAZING_TOLERANCE
) -> BoundaryClass:
    """Interior / exterior by position, and incoming / outgoing / grazing by
    the sign of v.n on the boundary."""
    if z.dim != dom.dim:
        raise UsageError(
            f"Dimension mismatch between point (d = {z.dim}) and domain (d = {dom.dim})."
        )
    if not dom.has_boundary:
        return BoundaryClass.INTERIOR

    distance = float(dom.signed_distance(z.x[None, :])[0])
    if distance < -BOUNDARY_TOLERANCE:
        return BoundaryClass.INTERIOR
    if distance > BOUNDARY_TOLERANCE:
        return BoundaryClass.EXTERIOR

    flux = float(dom.normal(z.x[None, :])[0] @ z.v)
    if flux < -tolerance:
        return BoundaryClass.INCOMING
    if flux > tolerance:
        return BoundaryClass.OUTGOING
    return BoundaryClass.GRAZING


@dataclass(frozen=True)
class KineticCylinder:
    """Q_r(center) = center o ((-r^2, 0] x B_{r^3} x B_r)."""

    center: PhasePoint
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise UsageError(f"Cylinder radius must be positive, got {self.radius}.")

    @property
    def dim(self) -> int:
        return self.center.dim

    @property
    def volume(self) -> float:
        r, dim = self.radius, self.dim
        return r ** (2 + 4 * dim) * unit_ball_volume(dim) ** 2

    @property
    def velocity_extent(self) -> float:
        """Largest speed reached inside the cylinder."""
        return float(np.linalg.norm(self.center.v)) + self.radius

    def pullback(
        self, t: np.ndarray, x: np.ndarray, v: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """center^-1 o z for arrays of events."""
        t = np.asarray(t, dtype=float)
        x = _as_points(x, self.dim)
        v = _as_points(v, self.dim)
        c = self.center
        elapsed = t - c.t
        return elapsed, x - c.x - elapsed[..., None] * c.v, v - c.v

    def contains_arrays(self, t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        s, y, u = self.pullback(t, x, v)
        r = self.radius
        return (
            (s > -(r**2) * (1 - _TIME_EDGE))
            & (s <= r**2 * _TIME_EDGE)
            & (np.linalg.norm(y, axis=-1) < r**3)
            & (np.linalg.norm(u, axis=-1) < r)
        )

    def contains(self, z: PhasePoint) -> bool:
        return bool(self.contains_arrays(np.asarray(z.t), z.x, z.v))

    def embed(
        self, s: np.ndarray, y: np.ndarray, u: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """center o S_r(s, y, u) for unit-cylinder coordinates."""
        r, c = self.radius, self.center
        return _compose_arrays(c.t, c.x, c.v, r**2 * s, r**3 * y, r * u)

    def sample(
        self, count: int, seed: int = 0, *, stratified: bool = False
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Uniform events of the cylinder, drawn in pulled back coordinates."""
        return self.embed(*sample_unit_cylinder(count, self.dim, seed, stratified=stratified))


def sample_unit_cylinder(
    count: int, dim: int, seed: int = 0, *, stratified: bool = False
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform samples of (-1, 0] x B_1 x B_1. The stratified variant puts one
    time sample in each of `count` equal slabs."""
    if count <= 0:
        raise UsageError(f"Sample count must be positive, got {count}.")
    rng = make_generator(seed)
    if stratified:
        slabs = (np.arange(count) + rng.random(count)) / count
        s = -rng.permutation(slabs)
    else:
        s = -rng.random(count)
    return s, _uniform_ball(rng, count, dim), _uniform_ball(rng, count, dim)


def cylinder_contains(cylinder: KineticCylinder, z: PhasePoint) -> bool:
    return cylinder.contains(z)


class VolumeMethod(str, Enum):
    EXACT_1D = "exact-1d"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class VolumeEstimate:
    fraction: float
    std_error: float
    samples: int
    method: VolumeMethod


def _integrate_clipped_linear(a: float, b: float, lower: float, upper: float) -> float:
    """Integral of clip(a + b s, 0, 1) over [lower, upper]."""
    if b == 0:
        return (upper - lower) * min(max(a, 0.0), 1.0)

    breaks = [lower, upper]
    for knot in (-a / b, (1 - a) / b):
        if lower < knot < upper:
            breaks.append(knot)
    breaks.sort()

    total = 0.0
    for left, right in zip(breaks, breaks[1:]):
        middle = a + b * (left + right) / 2
        if middle >= 1:
            total += right - left
        elif middle > 0:
            total += (right - left) * middle
    return total


def _half_line_inside_probability(
    dom: HalfSpace,
    center: PhasePoint,
    times: Tuple[float, float],
    position_radius: float,
) -> float:
    """Exact probability that x0 + y + s v0 lies in a half line, for s uniform on
    `times` and y uniform on (-R, R)."""
    n = float(dom.normal_vector[0])
    delta = n * float(center.x[0]) - dom.offset
    beta = n * float(center.v[0])
    a = (position_radius - delta) / (2 * position_radius)
    b = -beta / (2 * position_radius)
    lower, upper = times
    return _integrate_clipped_linear(a, b, lower, upper) / (upper - lower)


def _check_exact_1d(cylinder_dim: int, dom: Domain) -> HalfSpace:
    if cylinder_dim != 1 or not isinstance(dom, HalfSpace) or dom.dim != 1:
        raise UsageError("The exact-1d method needs d = 1 and a half-line domain.")
    return dom


def inside_fraction(
    cylinder: KineticCylinder,
    dom: Domain,
    method: Union[str, VolumeMethod] = VolumeMethod.MONTE_CARLO,
    *,
    samples: int = 100_000,
    seed: int = 0,
) -> VolumeEstimate:
    """|H_r(z0)| / |Q_r(z0)|, exactly for half lines or by Monte-Carlo."""
    method = VolumeMethod(method)
    if method is VolumeMethod.EXACT_1D:
        half_line = _check_exact_1d(cylinder.dim, dom)
        r = cylinder.radius
        fraction = _half_line_inside_probability(
            half_line, cylinder.center, (-(r**2), 0.0), r**3
        )
        return VolumeEstimate(fraction, 0.0, 0, method)

    if samples <= 0:
        raise UsageError(f"Sample count must be positive, got {samples}.")
    _, x, _ = cylinder.sample(samples, seed)
    inside = dom.contains(x)
    fraction = float(inside.mean())
    std_error = math.sqrt(fraction * (1 - fraction) / samples)
    return VolumeEstimate(fraction, std_error, samples, method)


def _cap_volume(radius: float, height: float, dim: int) -> float:
    """Volume of {|y| < radius, y.n > height}."""
    if height >= radius:
        return 0.0
    if dim == 1:
        return radius - height
    if dim == 2:
        return radius**2 * math.acos(height / radius) - height * math.sqrt(
            radius**2 - height**2
        )
    raise UsageError(f"Unsupported phase space dimension: d = {dim}.")


def qminus_lower_bound(dim: int) -> float:
    """(1/4) |B_{1/8} n {y.n > 3/32}| |B_{1/2}|."""
    duration = QMINUS_TIMES[1] - QMINUS_TIMES[0]
    return (
        duration
        * _cap_volume(QMINUS_POSITION_RADIUS, QMINUS_CAP_HEIGHT, dim)
        * unit_ball_volume(dim)
        * QMINUS_VELOCITY_RADIUS**dim
    )


def qminus_volume(dim: int) -> float:
    duration = QMINUS_TIMES[1] - QMINUS_TIMES[0]
    return (
        duration
        * unit_ball_volume(dim) ** 2
        * (QMINUS_POSITION_RADIUS * QMINUS_VELOCITY_RADIUS) ** dim
    )


def touches_incoming(
    cylinder: KineticCylinder, dom: Domain, *, samples: int = 20_000, seed: int = 0
) -> bool:
    """Whether the cylinder contains a state of the incoming boundary."""
    if not dom.has_boundary:
        return False

    if isinstance(dom, HalfSpace):
        r, c = cylinder.radius, cylinder.center
        delta = float(dom.normal_vector @ c.x) - dom.offset
        beta = float(dom.normal_vector @ c.v)
        reach_low = delta - r**3 + min(0.0, -(r**2) * beta)
        reach_high = delta + r**3 + max(0.0, -(r**2) * beta)
        return reach_low < 0 < reach_high and beta - r < 0

    t, x, v = cylinder.sample(samples, seed)
    boundary_x = dom.project_to_boundary(x)
    flux = np.sum(dom.normal(boundary_x) * v, axis=-1)
    kept = cylinder.contains_arrays(t, boundary_x, v) & (flux < 0)
    return bool(kept.any())


@dataclass(frozen=True)
class QMinusReport:
    measure: float
    std_error: float
    mu_star: float
    hypothesis: bool
    satisfied: Optional[bool]
    volume: float


def qminus_exterior_measure(
    z0: PhasePoint,
    dom: Domain,
    *,
    samples: int = 100_000,
    seed: int = 0,
    method: Union[str, VolumeMethod] = VolumeMethod.MONTE_CARLO,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> QMinusReport:
    """Measure of Q-(z0) outside the domain, against the closed form lower
    bound that holds when the incoming boundary meets Q_{1/8}(z0)."""
    if not dom.convex:
        raise GeometryError("convexity required by Lemma")

    method = VolumeMethod(method)
    volume = qminus_volume(z0.dim)
    if method is VolumeMethod.EXACT_1D:
        half_line = _check_exact_1d(z0.dim, dom)
        inside = _half_line_inside_probability(
            half_line, z0, QMINUS_TIMES, QMINUS_POSITION_RADIUS
        )
        measure, std_error = volume * (1 - inside), 0.0
    else:
        if samples <= 0:
            raise UsageError(f"Sample count must be positive, got {samples}.")
        rng = make_generator(seed)
        low, high = QMINUS_TIMES
        s = high - (high - low) * rng.random(samples)
        y = QMINUS_POSITION_RADIUS * _uniform_ball(rng, samples, z0.dim)
        u = QMINUS_VELOCITY_RADIUS * _uniform_ball(rng, samples, z0.dim)
        _, x, _ = _compose_arrays(z0.t, z0.x, z0.v, s, y, u)
        outside = 1.0 - float(dom.contains(x).mean())
        measure = volume * outside
        std_error = volume * math.sqrt(outside * (1 - outside) / samples)

    mu_star = qminus_lower_bound(z0.dim)
    hypothesis = touches_incoming(KineticCylinder(z0, 1.0 / 8.0), dom, seed=seed)
    satisfied = measure >= mu_star - 3 * std_error if hypothesis else None
    settings.emit(
        f"Q- exterior measure {measure:.6g} (mu* = {mu_star:.6g}, "
        f"hypothesis {'holds' if hypothesis else 'fails'})",
        source=LogSource.GEOMETRY,
        level=LogLevel.DEBUG,
    )
    return QMinusReport(measure, std_error, mu_star, hypothesis, satisfied, volume)


def trace_weight(z: PhasePoint, dom: Domain) -> float:
    """min(|v.n|, (v.n)^2) for a boundary state."""
    if not dom.has_boundary:
        raise UsageError("The trace weight needs a domain with a boundary.")
    distance = float(dom.signed_distance(z.x[None, :])[0])
    if abs(distance) > BOUNDARY_TOLERANCE:
        raise UsageError(
            f"Position {z.x.tolist()} is not on the boundary (signed distance {distance:.3e})."
        )
    flux = float(dom.normal(z.x[None, :])[0] @ z.v)
    return min(abs(flux), flux**2)

