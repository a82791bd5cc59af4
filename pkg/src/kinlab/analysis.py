"""Measurements over fields: oscillation and supremum decay over dyadic
cylinders, Hölder seminorms in the kinetic distance, the weak formulation
residual and the local L-infinity ratio.

Every measurement accepts either a gridded `SolutionField` (grid nodes are then
part of the sampled set) or a plain callable f(t, x, v) on d = 1 arrays.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from kinlab.common import DegenerateReportError, RegionError, UsageError
from kinlab.galilean import (
    PhasePoint,
    _compose_arrays,
    _invert_arrays,
    kinetic_distance_many,
)
from kinlab.geometry import (
    BoundaryClass,
    Domain,
    KineticCylinder,
    classify,
)
from kinlab.logs import LogLevel, LogSource
from kinlab.settings import DEFAULT_SETTINGS, LabSettings
from kinlab.solver import (
    BoundaryMode,
    ProblemSpec,
    SolutionField,
    diffusion_1d,
    drift_1d,
    source_1d,
)

__all__ = [
    "DecayReport",
    "DecayConsistency",
    "ExponentFit",
    "TestFunction",
    "WeakResidual",
    "dyadic_radii",
    "oscillation",
    "fit_exponent",
    "holder_seminorm",
    "holder_norm",
    "weak_residual",
    "linfty_ratio",
    "decay_report",
    "vanishing_order",
    "decay_consistency",
]

Field = Union[SolutionField, Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]

# Stratified cylinder samples per measurement.
DEFAULT_REGION_SAMPLES = 4096

# Pairwise seminorms are O(N^2); N is capped here.
HOLDER_SAMPLE_CAP = 2000

# Local exponents above this count as "infinite order" at desk scale.
INFINITE_ORDER_THRESHOLD = 3.0

# Slack allowed when checking that local exponents increase.
MONOTONICITY_SLACK = 0.1

# Values below this fraction of the largest one are at the precision floor.
PRECISION_FLOOR = 1e-13

# A test function support must span this many cells per axis.
MIN_CELLS_PER_SUPPORT = 4

# Bounds on how far the fitted exponent may exceed the envelope exponent:
# the fit residual, clipped to this range.
CONSISTENCY_SLACK_MIN = 0.05
CONSISTENCY_SLACK_MAX = 0.2

# Pairs per block of the pairwise distance sweep.
_PAIR_BLOCK = 200_000


def dyadic_radii(r0: float, count: int) -> np.ndarray:
    """r_k = r0 2^-k for k = 0, ..., count - 1."""
    if not r0 > 0 or count < 1:
        raise UsageError(f"Need r0 > 0 and at least one radius, got ({r0}, {count}).")
    return r0 * 2.0 ** -np.arange(count)


def _check_field_center(z0: PhasePoint) -> None:
    if z0.dim != 1:
        raise UsageError("Field measurements are implemented for d = 1.")


def _evaluate(f: Field, t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.asarray(f(t, x, v), dtype=float)


@dataclass
class _RegionSample:
    """Events of H_r(z0) (positions inside the domain) and their field values."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.values.size


def _grid_nodes_in(
    f: SolutionField, cylinder: KineticCylinder, dom: Domain
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    c, r = cylinder.center, cylinder.radius
    # Only nodes of the bounding box can qualify.
    t_keep = (f.times > c.t - r**2) & (f.times <= c.t)
    reach = r**3 + r**2 * (abs(float(c.v[0])) + r)
    x_keep = np.abs(f.x - float(c.x[0])) < reach
    v_keep = np.abs(f.v - float(c.v[0])) < r
    grids = np.meshgrid(f.times[t_keep], f.x[x_keep], f.v[v_keep], indexing="ij")
    t, x, v = (grid.ravel() for grid in grids)
    inside = cylinder.contains_arrays(t, x, v) & dom.contains(x)
    return t[inside], x[inside], v[inside]


def _required_extents(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> str:
    return ", ".join(
        f"{name} in [{values.min():.6g}, {values.max():.6g}]"
        for name, values in zip("txv", (t, x, v))
    )


def _sample_region(
    f: Field,
    cylinder: KineticCylinder,
    dom: Domain,
    *,
    samples: int,
    seed: int,
    include_nodes: bool = True,
) -> _RegionSample:
    t, x, v = cylinder.sample(samples, seed, stratified=True)
    t, x, v = t, x[:, 0], v[:, 0]
    inside = dom.contains(x)
    t, x, v = t[inside], x[inside], v[inside]

    if isinstance(f, SolutionField):
        if t.size and not np.all(f.covers(t, x, v)):
            raise RegionError(
                f"H_{cylinder.radius:.4g} leaves the stored region: requires "
                f"{_required_extents(t, x, v)}"
            )
        if include_nodes:
            node_t, node_x, node_v = _grid_nodes_in(f, cylinder, dom)
            t = np.concatenate([t, node_t])
            x = np.concatenate([x, node_x])
            v = np.concatenate([v, node_v])

    values = _evaluate(f, t, x, v) if t.size else np.empty(0)
    return _RegionSample(t, x, v, values)


def oscillation(
    f: Field,
    z0: PhasePoint,
    r: float,
    dom: Domain,
    *,
    samples: int = DEFAULT_REGION_SAMPLES,
    seed: int = 0,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> float:
    """max - min of f over grid nodes and stratified samples of H_r(z0). An
    empty intersection gives NaN."""
    _check_field_center(z0)
    region = _sample_region(f, KineticCylinder(z0, r), dom, samples=samples, seed=seed)
    if region.size == 0:
        settings.emit(
            f"H_{r:.4g}({z0}) holds no samples; oscillation is undefined",
            source=LogSource.ANALYSIS,
            level=LogLevel.WARNING,
        )
        return math.nan
    return float(region.values.max() - region.values.min())


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    residual: float
    intercept: float
    pairs: int
    infinite_order: bool = False

    def __iter__(self) -> Iterator[float]:
        yield self.exponent
        yield self.residual


def fit_exponent(radii: Sequence[float], values: Sequence[float]) -> ExponentFit:
    """Least-squares slope of log(value) against log(radius). Zero values are
    left out and flagged as a sign of infinite order vanishing."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.shape != values.shape:
        raise UsageError(f"Got {radii.size} radii and {values.size} values.")

    zeros = values == 0
    usable = (radii > 0) & (values > 0) & np.isfinite(values) & np.isfinite(radii)
    if usable.sum() < 3:
        raise DegenerateReportError(
            f"Need at least 3 positive (radius, value) pairs, got {int(usable.sum())}."
        )

    log_r, log_values = np.log(radii[usable]), np.log(values[usable])
    slope, intercept = np.polyfit(log_r, log_values, 1)
    misfit = log_values - (slope * log_r + intercept)
    residual = float(np.sqrt(np.mean(misfit**2)))
    return ExponentFit(
        exponent=float(slope),
        residual=residual,
        intercept=float(intercept),
        pairs=int(usable.sum()),
        infinite_order=bool(zeros.any()),
    )


def _pairwise_ratio_max(
    t: np.ndarray, x: np.ndarray, v: np.ndarray, values: np.ndarray, alpha: float
) -> float:
    """max |f_i - f_j| / d(z_i, z_j)^alpha over i < j, using left invariance
    to measure every pair from the identity."""
    rows, cols = np.triu_indices(values.size, k=1)
    identity = PhasePoint.identity(1)
    best = 0.0
    for start in range(0, rows.size, _PAIR_BLOCK):
        i = rows[start : start + _PAIR_BLOCK]
        j = cols[start : start + _PAIR_BLOCK]
        inv_t, inv_x, inv_v = _invert_arrays(t[i], x[i][:, None], v[i][:, None])
        rel_t, rel_x, rel_v = _compose_arrays(inv_t, inv_x, inv_v, t[j], x[j][:, None], v[j][:, None])
        distances = kinetic_distance_many(identity, rel_t, rel_x, rel_v)
        jumps = np.abs(values[i] - values[j])
        separated = distances > 0
        if separated.any():
            best = max(best, float((jumps[separated] / distances[separated] ** alpha).max()))
    return best


def _holder_sample(
    f: Field, cylinder: KineticCylinder, dom: Domain, samples: int, seed: int
) -> _RegionSample:
    if not 2 <= samples <= HOLDER_SAMPLE_CAP:
        samples = min(max(samples, 2), HOLDER_SAMPLE_CAP)
    # Grid nodes are left out so that N stays bounded.
    return _sample_region(f, cylinder, dom, samples=samples, seed=seed, include_nodes=False)


def holder_seminorm(
    f: Field,
    cylinder: KineticCylinder,
    dom: Domain,
    alpha: float,
    *,
    samples: int = HOLDER_SAMPLE_CAP,
    seed: int = 0,
) -> float:
    """sup |f(z1) - f(z2)| / d(z1, z2)^alpha over sampled pairs of the cylinder
    intersected with the domain."""
    if not 0 < alpha <= 1:
        raise UsageError(f"Hölder exponent must lie in (0, 1], got {alpha}.")
    _check_field_center(cylinder.center)
    region = _holder_sample(f, cylinder, dom, samples, seed)
    if region.size < 2:
        return 0.0
    return _pairwise_ratio_max(region.t, region.x, region.v, region.values, alpha)


def holder_norm(
    f: Field,
    cylinder: KineticCylinder,
    dom: Domain,
    alpha: float,
    *,
    samples: int = HOLDER_SAMPLE_CAP,
    seed: int = 0,
) -> float:
    """sup |f| plus the Hölder seminorm, both over the same sample."""
    if not 0 < alpha <= 1:
        raise UsageError(f"Hölder exponent must lie in (0, 1], got {alpha}.")
    _check_field_center(cylinder.center)
    region = _holder_sample(f, cylinder, dom, samples, seed)
    if region.size == 0:
        return 0.0
    seminorm = (
        _pairwise_ratio_max(region.t, region.x, region.v, region.values, alpha)
        if region.size > 1
        else 0.0
    )
    return float(np.abs(region.values).max()) + seminorm


def _bump(s: np.ndarray) -> np.ndarray:
    return np.where(np.abs(s) < 1, (1 - s**2) ** 2, 0.0)


def _bump_slope(s: np.ndarray) -> np.ndarray:
    return np.where(np.abs(s) < 1, -4 * s * (1 - s**2), 0.0)


# Integral of (1 - s^2)^2 over (-1, 1).
_BUMP_INTEGRAL = 16.0 / 15.0


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x, v) = B((t - c_t) / w_t) B((x - c_x) / w_x) B((v - c_v) / w_v)
    with the C^1 bump B(s) = (1 - s^2)^2 on |s| < 1."""

    center: Tuple[float, float, float]
    width: Tuple[float, float, float]

    # Keeps pytest from collecting this class.
    __test__ = False

    def __post_init__(self) -> None:
        if len(self.center) != 3 or len(self.width) != 3 or min(self.width) <= 0:
            raise UsageError("A test function needs three centers and three positive widths.")

    def _scaled(self, t: Any, x: Any, v: Any) -> List[np.ndarray]:
        return [
            (np.asarray(q, dtype=float) - c) / w
            for q, c, w in zip((t, x, v), self.center, self.width)
        ]

    def __call__(self, t: Any, x: Any, v: Any) -> np.ndarray:
        s_t, s_x, s_v = self._scaled(t, x, v)
        return _bump(s_t) * _bump(s_x) * _bump(s_v)

    def gradient(self, t: Any, x: Any, v: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        s_t, s_x, s_v = self._scaled(t, x, v)
        w_t, w_x, w_v = self.width
        b_t, b_x, b_v = _bump(s_t), _bump(s_x), _bump(s_v)
        return (
            _bump_slope(s_t) / w_t * b_x * b_v,
            b_t * _bump_slope(s_x) / w_x * b_v,
            b_t * b_x * _bump_slope(s_v) / w_v,
        )

    def support(self, axis: int) -> Tuple[float, float]:
        return (self.center[axis] - self.width[axis], self.center[axis] + self.width[axis])

    def wall_flux(self, wall: float, normal: float) -> float:
        """Integral of phi(t, wall, v) (v n) over t and over the v with v n < 0,
        in closed form when the velocity support lies on one side of 0."""
        c_v, w_v = self.center[2], self.width[2]
        profile = float(_bump(np.asarray((wall - self.center[1]) / self.width[1])))
        time_mass = self.width[0] * _BUMP_INTEGRAL
        reach = ((c_v - w_v) * normal, (c_v + w_v) * normal)
        if max(reach) <= 0:
            return time_mass * profile * normal * c_v * w_v * _BUMP_INTEGRAL
        if min(reach) >= 0:
            return 0.0
        nodes = np.linspace(c_v - w_v, c_v + w_v, 4001)
        integrand = np.where(nodes * normal < 0, _bump((nodes - c_v) / w_v) * nodes * normal, 0.0)
        return time_mass * profile * float(trapezoid(integrand, nodes))


@dataclass(frozen=True)
class WeakResidual:
    residual: float
    signed: float
    boundary_term: float
    under_resolved: bool

    def __float__(self) -> float:
        return self.residual


def _walls(p: ProblemSpec) -> List[Tuple[float, float]]:
    """(position, outward normal) of each wall."""
    return [(p.x_right, 1.0), (p.x_left, -1.0)]


def weak_residual(
    f: SolutionField,
    phi: TestFunction,
    p: ProblemSpec,
    *,
    influx: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> WeakResidual:
    """Residual of the weak formulation tested against phi,

        int -f (d_t + v d_x) phi + a d_v f d_v phi + b d_v f phi - G phi
          + int_{walls} trace(f) phi (v n),

    where the trace is g on the incoming part (f itself on the outgoing part,
    and on both parts for specular walls). `influx` overrides the datum of p.
    """
    if p.mode is BoundaryMode.PERIODIC:
        raise UsageError("The weak residual is defined for walled problems.")
    low_t, high_t = phi.support(0)
    if low_t < f.times[0] - 1e-12 or high_t > f.times[-1] + 1e-12:
        raise UsageError(
            f"The test function lives on t in [{low_t:.6g}, {high_t:.6g}], outside of "
            f"the stored slab [{f.times[0]:.6g}, {f.times[-1]:.6g}]."
        )
    low_v, high_v = phi.support(2)
    if low_v < f.v[0] or high_v > f.v[-1]:
        raise UsageError("The test function's velocity support leaves the grid.")

    spacings = (np.diff(f.times).max(), np.diff(f.x).max(), np.diff(f.v).max())
    under_resolved = any(
        2 * width / spacing < MIN_CELLS_PER_SUPPORT for width, spacing in zip(phi.width, spacings)
    )
    if under_resolved:
        settings.emit(
            f"test function support spans fewer than {MIN_CELLS_PER_SUPPORT} cells on some axis",
            source=LogSource.ANALYSIS,
            level=LogLevel.WARNING,
        )

    t, x, v = np.meshgrid(f.times, f.x, f.v, indexing="ij")
    values = f.values
    slope_v = np.gradient(values, f.v, axis=2, edge_order=2)
    phi_t, phi_x, phi_v = phi.gradient(t, x, v)
    test = phi(t, x, v)

    c = p.coefficients
    a = diffusion_1d(c, t, x, v)
    b = drift_1d(c, t, x, v)
    g = source_1d(c, t, x, v)
    integrand = -values * (phi_t + v * phi_x) + a * slope_v * phi_v + b * slope_v * test - g * test
    interior = trapezoid(trapezoid(trapezoid(integrand, f.v, axis=2), f.x, axis=1), f.times)

    datum = influx if influx is not None else p.influx
    boundary = 0.0
    for wall, normal in _walls(p):
        index = int(np.argmin(np.abs(f.x - wall)))
        wall_t, wall_v = np.meshgrid(f.times, f.v, indexing="ij")
        trace = values[:, index, :].copy()
        if p.mode is BoundaryMode.INFLUX:
            entering = wall_v * normal < 0
            trace[entering] = np.asarray(
                datum(wall_t[entering], np.full(entering.sum(), wall), wall_v[entering]),
                dtype=float,
            )
        flux = trace * phi(wall_t, wall, wall_v) * wall_v * normal
        boundary += float(trapezoid(trapezoid(flux, f.v, axis=1), f.times))

    signed = float(interior) + boundary
    return WeakResidual(abs(signed), signed, boundary, under_resolved)


def _zero_extended(
    f: Field,
    cylinder: KineticCylinder,
    dom: Domain,
    *,
    samples: int,
    seed: int,
    extend_by_zero: bool,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Events of Q_r with the field value there (zero outside the domain), and
    the mask of events inside the domain."""
    t, x, v = cylinder.sample(samples, seed, stratified=True)
    t, x, v = t, x[:, 0], v[:, 0]
    inside = dom.contains(x)
    values = np.zeros_like(t)
    if inside.any():
        if isinstance(f, SolutionField) and not np.all(f.covers(t[inside], x[inside], v[inside])):
            raise RegionError(
                f"H_{cylinder.radius:.4g} leaves the stored region: requires "
                f"{_required_extents(t[inside], x[inside], v[inside])}"
            )
        values[inside] = _evaluate(f, t[inside], x[inside], v[inside])
    if not extend_by_zero:
        return t[inside], x[inside], v[inside], values[inside]
    return t, x, v, values


def linfty_ratio(
    f: Field,
    p: ProblemSpec,
    z0: PhasePoint,
    *,
    level: float = 0.0,
    samples: int = DEFAULT_REGION_SAMPLES,
    seed: int = 0,
    extend_by_zero: bool = True,
    scale: float = 1.0,
) -> float:
    """sup over H_1/2(z0) of (f - level)_+ divided by
    |(f - level)_+|_{L^2(H_1(z0))} + |G|_{L^inf(H_1(z0))}.

    The truncated function is extended by zero outside the domain. `scale`
    multiplies both f and G, which leaves the ratio unchanged."""
    _check_field_center(z0)
    dom = p.domain
    outer = KineticCylinder(z0, 1.0)
    inner = KineticCylinder(z0, 0.5)

    def truncated(values: np.ndarray) -> np.ndarray:
        return np.maximum(scale * values - level, 0.0)

    t, x, v, values = _zero_extended(
        f, outer, dom, samples=samples, seed=seed, extend_by_zero=extend_by_zero
    )
    inside = dom.contains(x)
    positive = np.where(inside, truncated(values), 0.0)
    # Uniform samples of Q_1: the L^2 norm is |Q_1| times the sample mean.
    l2_norm = math.sqrt(outer.volume * float(np.sum(positive**2)) / samples)
    sources = scale * source_1d(p.coefficients, t, x, v)
    source_norm = float(np.abs(sources[inside]).max()) if inside.any() else 0.0

    t, x, v, values = _zero_extended(
        f, inner, dom, samples=samples, seed=seed + 1, extend_by_zero=extend_by_zero
    )
    inside = dom.contains(x)
    peak = float(np.where(inside, truncated(values), 0.0).max()) if values.size else 0.0

    denominator = l2_norm + source_norm
    if denominator == 0:
        return 0.0
    return peak / denominator


@dataclass
class DecayReport:
    center: Tuple[float, ...]
    radii: List[float]
    osc: List[float]
    sup: List[float]
    observable: str
    exponent: float
    residual: float
    local_exponents: List[float]
    infinite_order: bool
    verdict: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def rows(self) -> List[Dict[str, Any]]:
        exponents = self.local_exponents + [math.nan]
        return [
            {"k": k, "r": r, "osc": o, "sup": s, "q_k": q}
            for k, (r, o, s, q) in enumerate(zip(self.radii, self.osc, self.sup, exponents))
        ]

    def to_json(self) -> str:
        return json.dumps(_json_safe(asdict(self)), sort_keys=True, indent=2)

    def write_json(self, path: Union[str, os.PathLike]) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    def write_csv(self, path: Union[str, os.PathLike]) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as stream:
            writer = csv.DictWriter(stream, fieldnames=["k", "r", "osc", "sup", "q_k"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow({key: _format_number(value) for key, value in row.items()})
        return path


def _format_number(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_safe(value: Any) -> Any:
    """NaN and infinities become strings so the output stays strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def _nested_measurements(
    f: Field,
    z0: PhasePoint,
    radii: np.ndarray,
    dom: Domain,
    samples: int,
    seed: int,
) -> Tuple[List[float], List[float]]:
    """Oscillation and sup |f| over nested sample sets: the set of radius r_k
    holds the samples drawn for every radius below it."""
    order = np.argsort(radii)
    osc = np.full(radii.size, math.nan)
    sup = np.full(radii.size, math.nan)
    pooled: List[np.ndarray] = []
    for index in order:
        cylinder = KineticCylinder(z0, float(radii[index]))
        region = _sample_region(f, cylinder, dom, samples=samples, seed=seed + int(index))
        pooled.append(region.values)
        values = np.concatenate(pooled)
        if values.size:
            osc[index] = float(values.max() - values.min())
            sup[index] = float(np.abs(values).max())
    return osc.tolist(), sup.tolist()


def _local_exponents(values: Sequence[float], radii: Sequence[float]) -> List[float]:
    """log(v_k / v_k+1) / log(r_k / r_k+1); this is log2 of the ratio for
    dyadic radii."""
    exponents = []
    for (v_big, v_small), (r_big, r_small) in zip(
        zip(values, values[1:]), zip(radii, radii[1:])
    ):
        if v_big > 0 and v_small > 0:
            exponents.append(math.log(v_big / v_small) / math.log(r_big / r_small))
        else:
            exponents.append(math.inf if v_big > 0 else math.nan)
    return exponents


def decay_report(
    f: Field,
    z0: PhasePoint,
    radii: Sequence[float],
    dom: Domain,
    *,
    observable: str = "osc",
    samples: int = DEFAULT_REGION_SAMPLES,
    seed: int = 0,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> DecayReport:
    """Decay of the oscillation (or of sup |f|) over the cylinders H_r(z0)."""
    _check_field_center(z0)
    if observable not in ("osc", "sup"):
        raise UsageError(f"Unknown decay observable: '{observable}'.")
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise UsageError("Radii must be positive and strictly decreasing.")

    osc, sup = _nested_measurements(f, z0, radii, dom, samples, seed)
    measured = osc if observable == "osc" else sup
    top = max((value for value in measured if math.isfinite(value)), default=0.0)
    floored = [value if value > PRECISION_FLOOR * top else 0.0 for value in measured]

    fit = fit_exponent(radii, floored)
    local = _local_exponents(floored, radii.tolist())
    report = DecayReport(
        center=tuple(z0.as_array().tolist()),
        radii=radii.tolist(),
        osc=osc,
        sup=sup,
        observable=observable,
        exponent=fit.exponent,
        residual=fit.residual,
        local_exponents=local,
        infinite_order=fit.infinite_order,
        verdict=_verdict(local, fit),
        metadata={"samples": samples, "seed": seed},
    )
    settings.emit(
        f"{observable} decay at {z0}: exponent {fit.exponent:.4g} "
        f"(residual {fit.residual:.2g}), verdict {report.verdict}",
        source=LogSource.ANALYSIS,
    )
    return report


def _verdict(local: Sequence[float], fit: ExponentFit) -> str:
    finite = [q for q in local if not math.isnan(q)]
    increasing = all(
        later >= earlier - MONOTONICITY_SLACK for earlier, later in zip(finite, finite[1:])
    )
    if finite and increasing and max(finite) > INFINITE_ORDER_THRESHOLD:
        return "infinite-order-consistent"
    return "finite-order"


def vanishing_order(
    f: Field,
    z0: PhasePoint,
    radii: Sequence[float],
    dom: Domain,
    *,
    samples: int = DEFAULT_REGION_SAMPLES,
    seed: int = 0,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> DecayReport:
    """Decay of sup |f| over H_r(z0) at an incoming boundary state."""
    if classify(z0, dom) is not BoundaryClass.INCOMING:
        raise UsageError(f"The center {z0} is not on the incoming boundary.")
    report = decay_report(
        f, z0, radii, dom, observable="sup", samples=samples, seed=seed, settings=settings
    )
    report.metadata["normal_velocity"] = float(dom.normal(z0.x[None, :])[0] @ z0.v)
    return report


@dataclass(frozen=True)
class DecayConsistency:
    theta: float
    alpha: float
    rate: float
    envelope_theta: float
    holds: bool


def decay_consistency(report: DecayReport) -> DecayConsistency:
    """Compare the power law fit osc ~ r^alpha against the geometric iteration
    osc_k <= osc_0 (1 - theta/2)^k.

    `theta` and `rate` come from a least-squares fit on the index k and only
    restate the power law. `envelope_theta` is the largest theta for which the
    iteration bound holds at every measured level; the check asks for
    2^-alpha >= 1 - envelope_theta/2, with alpha allowed to exceed the
    envelope exponent by the fit residual, clipped to
    [CONSISTENCY_SLACK_MIN, CONSISTENCY_SLACK_MAX]."""
    radii = np.asarray(report.radii)
    osc = np.asarray(report.osc)
    usable = np.isfinite(osc) & (osc > 0)
    if usable.sum() < 3:
        raise DegenerateReportError("Need at least 3 positive oscillations.")

    steps = np.log2(radii[usable][0] / radii[usable])
    slope, _ = np.polyfit(steps, np.log(osc[usable]), 1)
    rate = float(np.exp(slope))

    alpha = fit_exponent(radii, np.where(usable, osc, 0.0)).exponent
    ratios = osc[usable][1:] / osc[usable][0]
    envelope_rate = float(np.max(ratios ** (1 / steps[1:])))
    envelope_alpha = -math.log2(envelope_rate)
    tolerance = min(max(report.residual, CONSISTENCY_SLACK_MIN), CONSISTENCY_SLACK_MAX)
    return DecayConsistency(
        theta=2 * (1 - rate),
        alpha=alpha,
        rate=rate,
        envelope_theta=2 * (1 - envelope_rate),
        holds=bool(alpha <= envelope_alpha + tolerance),
    )
