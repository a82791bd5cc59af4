"""A desk-scale solver for the kinetic Fokker-Planck equation on the line,

    (d_t + v d_x) f = d_v(a d_v f) - b d_v f + G    on (T1, T2] x (x_L, x_R) x (-V, V),

with influx, specular or periodic walls. Each step transports along straight
characteristics (semi-Lagrangian) and then solves the velocity diffusion
implicitly, one tridiagonal system per position.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from kinlab.common import (
    RegionError,
    SolverError,
    UsageError,
    _step,
    ensure_finite,
    make_generator,
    sha256_digest_of,
)
from kinlab.geometry import ConvexPolytope, Domain, FullSpace, HalfSpace
from kinlab.logs import LogLevel, LogSource
from kinlab.settings import DEFAULT_SETTINGS, LabSettings
from kinlab.transform import T, V, X, CoefficientField, Sampler

__all__ = [
    "BoundaryMode",
    "GridSpec",
    "ProblemSpec",
    "SolutionField",
    "SnapshotFormat",
    "PiecewiseConstant",
    "sample_rough_coefficients",
    "solve",
    "manufactured_source",
    "lambdify_field",
    "dump_snapshot",
    "load_snapshot",
]

# Phase-space samplers of the solver act on plain (t, x, v) arrays.
ScalarField = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
InitialDatum = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Largest snapshot (in values) that is written as CSV.
CSV_SIZE_LIMIT = 250_000

# Queries this close to the stored region are clipped onto it.
_REGION_TOLERANCE = 1e-9


class BoundaryMode(str, Enum):
    # f = g on the incoming part of both walls.
    INFLUX = "influx"

    # f(t, x, v) = f(t, x, -v) on both walls.
    SPECULAR = "specular"

    # x_L and x_R are identified.
    PERIODIC = "periodic"


@dataclass(frozen=True)
class GridSpec:
    nx: int
    nv: int
    dt: float

    def __post_init__(self) -> None:
        if self.nx < 3 or self.nv < 3:
            raise UsageError(f"Grids need at least 3 nodes per axis, got ({self.nx}, {self.nv}).")
        if not self.dt > 0:
            raise UsageError(f"Time step must be positive, got {self.dt}.")

    def refined(self, factor: int = 2) -> GridSpec:
        """The grid with every spacing divided by `factor`."""
        return GridSpec(
            nx=(self.nx - 1) * factor + 1,
            nv=(self.nv - 1) * factor + 1,
            dt=self.dt / factor,
        )


@dataclass(frozen=True)
class ProblemSpec:
    coefficients: CoefficientField
    initial: InitialDatum
    grid: GridSpec
    x_left: float = -1.0
    x_right: float = 0.0
    velocity_bound: float = 4.0
    t_start: float = 0.0
    t_end: float = 0.1
    influx: Optional[ScalarField] = None
    mode: BoundaryMode = BoundaryMode.INFLUX
    implicit: bool = True
    seed: int = 0
    name: str = "problem"

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", BoundaryMode(self.mode))
        if not self.x_left < self.x_right:
            raise UsageError(f"Empty spatial interval ({self.x_left}, {self.x_right}).")
        if not self.velocity_bound > 0:
            raise UsageError(f"Velocity bound must be positive, got {self.velocity_bound}.")
        if not self.t_start < self.t_end:
            raise UsageError(f"Empty time slab [{self.t_start}, {self.t_end}].")
        if self.coefficients.dim != 1:
            raise UsageError("The solver works in one spatial dimension.")
        if self.mode is BoundaryMode.INFLUX and self.influx is None:
            raise UsageError("Influx mode needs a boundary datum g.")

    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / (self.grid.nx - 1)

    @property
    def dv(self) -> float:
        return 2 * self.velocity_bound / (self.grid.nv - 1)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_left, self.x_right, self.grid.nx)

    @cached_property
    def v_nodes(self) -> np.ndarray:
        nodes = np.linspace(-self.velocity_bound, self.velocity_bound, self.grid.nv)
        # Exactly symmetric, so that v -> -v maps nodes onto nodes.
        return (nodes - nodes[::-1]) / 2

    @property
    def steps(self) -> int:
        return max(1, math.ceil((self.t_end - self.t_start) / self.grid.dt - 1e-9))

    @property
    def time_step(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def run_id(self) -> str:
        return sha256_digest_of(
            self.name,
            repr(self.grid),
            self.mode.value,
            repr((self.x_left, self.x_right, self.velocity_bound, self.t_start, self.t_end)),
            str(self.seed),
        )

    def stability_bounds(self) -> Dict[str, float]:
        bounds = {"transport (dx / V)": self.dx / self.velocity_bound}
        if not self.implicit:
            bounds["diffusion (dv^2 / (2 Lambda))"] = self.dv**2 / (2 * self.coefficients.upper)
        return bounds

    def check_stability(self) -> None:
        for name, bound in self.stability_bounds().items():
            if self.grid.dt > bound * (1 + 1e-12):
                raise SolverError(
                    f"stability bound violated: dt = {self.grid.dt:.6g} exceeds "
                    f"the {name} bound {bound:.6g}"
                )

    @property
    def domain(self) -> Domain:
        """The spatial domain as a geometry object: the interval, or the whole
        line for periodic runs."""
        if self.mode is BoundaryMode.PERIODIC:
            return FullSpace(1)
        return ConvexPolytope(
            (HalfSpace(np.array([1.0]), self.x_right), HalfSpace(np.array([-1.0]), -self.x_left))
        )

    def check_velocity_margin(self, extent: float, margin: float = 1.0) -> None:
        """Diagnostics must stay `margin` away from the velocity truncation."""
        if extent > self.velocity_bound - margin:
            raise UsageError(
                f"Diagnostic velocities up to {extent:.6g} need V >= {extent + margin:.6g}, "
                f"got V = {self.velocity_bound:.6g}."
            )


def _as_vectors(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float)[..., None]


def diffusion_1d(c: CoefficientField, t: Any, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(x, v).shape)
    return np.asarray(c.diffusion(t, _as_vectors(x), _as_vectors(v)), dtype=float)[..., 0, 0]


def drift_1d(c: CoefficientField, t: Any, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(x, v).shape)
    return np.asarray(c.drift(t, _as_vectors(x), _as_vectors(v)), dtype=float)[..., 0]


def source_1d(c: CoefficientField, t: Any, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(x, v).shape)
    return np.asarray(c.source(t, _as_vectors(x), _as_vectors(v)), dtype=float)


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Gridded f[t_n, x_i, v_j], interpolated multilinearly in (t, x, v)."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    values: np.ndarray
    problem: Optional[ProblemSpec] = field(default=None, repr=False)
    periodic: bool = False

    def __post_init__(self) -> None:
        for name in ("times", "x", "v", "values"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        expected = (self.times.size, self.x.size, self.v.size)
        if self.values.shape != expected:
            raise UsageError(f"Values of shape {self.values.shape} do not match the grid {expected}.")
        for axis in (self.times, self.x, self.v):
            if axis.size > 1 and np.any(np.diff(axis) <= 0):
                raise UsageError("Grid axes must be strictly increasing.")
        ensure_finite("values", self.values)

    @classmethod
    def from_function(
        cls,
        func: ScalarField,
        times: Sequence[float],
        x: Sequence[float],
        v: Sequence[float],
        **kwargs: Any,
    ) -> SolutionField:
        grids = np.meshgrid(
            np.asarray(times, dtype=float),
            np.asarray(x, dtype=float),
            np.asarray(v, dtype=float),
            indexing="ij",
        )
        values = np.broadcast_to(np.asarray(func(*grids), dtype=float), grids[0].shape)
        return cls(grids[0][:, 0, 0], grids[1][0, :, 0], grids[2][0, 0, :], values.copy(), **kwargs)

    @property
    def extents(self) -> Tuple[Tuple[float, float], ...]:
        return tuple((float(axis[0]), float(axis[-1])) for axis in (self.times, self.x, self.v))

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        if self.times.size == 1:
            return RegularGridInterpolator((self.x, self.v), self.values[0])
        return RegularGridInterpolator((self.times, self.x, self.v), self.values)

    def covers(self, t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        inside = np.ones(np.broadcast(t, x, v).shape, dtype=bool)
        for query, (low, high) in zip((t, x, v), self.extents):
            if query is x and self.periodic:
                continue
            inside &= (query >= low - _REGION_TOLERANCE) & (query <= high + _REGION_TOLERANCE)
        return inside

    def __call__(self, t: Any, x: Any, v: Any) -> np.ndarray:
        t, x, v = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        )
        if self.periodic:
            low, high = self.extents[1]
            x = low + np.mod(x - low, high - low)

        if not np.all(self.covers(t, x, v)):
            required = ", ".join(
                f"{name} in [{query.min():.6g}, {query.max():.6g}]"
                for name, query in zip("txv", (t, x, v))
            )
            stored = ", ".join(
                f"{name} in [{low:.6g}, {high:.6g}]" for name, (low, high) in zip("txv", self.extents)
            )
            raise RegionError(f"query outside the stored region: requires {required}; stored {stored}")

        clipped = [
            np.clip(query, low, high) for query, (low, high) in zip((t, x, v), self.extents)
        ]
        if self.times.size == 1:
            points = np.stack(clipped[1:], axis=-1)
        else:
            points = np.stack(clipped, axis=-1)
        return self._interpolator(points.reshape(-1, points.shape[-1])).reshape(t.shape)

    def restricted(
        self,
        keep_t: np.ndarray,
        keep_x: np.ndarray,
        keep_v: np.ndarray,
        values: np.ndarray,
    ) -> SolutionField:
        """A field on the sub-grid selected by the three masks."""
        return SolutionField(
            self.times[keep_t], self.x[keep_x], self.v[keep_v], values, problem=self.problem
        )

    def regridded(
        self,
        *,
        values: np.ndarray,
        times: Optional[np.ndarray] = None,
        x: Optional[np.ndarray] = None,
        v: Optional[np.ndarray] = None,
    ) -> SolutionField:
        return SolutionField(
            self.times if times is None else times,
            self.x if x is None else x,
            self.v if v is None else v,
            values,
            problem=None,
            periodic=False,
        )

    def partial_v(self) -> SolutionField:
        """Second order differences of f along v."""
        return self.regridded(values=np.gradient(self.values, self.v, axis=2, edge_order=2))

    def snapshot(self, index: int = -1) -> np.ndarray:
        return self.values[index]

    def dump(
        self,
        path: Union[str, os.PathLike],
        fmt: Union[str, SnapshotFormat] = "bin",
        *,
        index: int = -1,
    ) -> Path:
        return dump_snapshot(self, path, index=index, fmt=fmt)


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """A scalar diffusion coefficient that is constant on the cells of a regular
    (t, x, v) partition; queries beyond the partition use the nearest cell."""

    origin: np.ndarray
    cell_sizes: np.ndarray
    values: np.ndarray

    def __call__(self, t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        coordinates = (np.asarray(t, dtype=float), np.asarray(x)[..., 0], np.asarray(v)[..., 0])
        index = tuple(
            np.clip(np.floor((query - start) / size), 0, count - 1).astype(int)
            for query, start, size, count in zip(
                coordinates, self.origin, self.cell_sizes, self.values.shape
            )
        )
        return self.values[index][..., None, None]


def sample_rough_coefficients(
    seed: int,
    lower: float,
    upper: float,
    cell_sizes: Sequence[float] = (0.25, 0.25, 0.5),
    *,
    box: Sequence[Tuple[float, float]] = ((0.0, 1.0), (-1.0, 0.0), (-4.0, 4.0)),
    drift: float = 0.0,
    source: float = 0.0,
) -> CoefficientField:
    """Piecewise constant diffusion with cell values uniform in [lower, upper]."""
    if not lower > 0:
        raise UsageError(f"lambda must be positive, got {lower}.")
    if not lower <= upper:
        raise UsageError(f"lambda must not exceed Lambda, got ({lower}, {upper}).")
    sizes = np.asarray(cell_sizes, dtype=float)
    if sizes.shape != (3,) or not np.all(sizes > 0):
        raise UsageError(f"Cell sizes must be three positive numbers, got {cell_sizes!r}.")

    origin = np.array([low for low, _ in box], dtype=float)
    counts = [max(1, math.ceil((high - low) / size - 1e-9)) for (low, high), size in zip(box, sizes)]
    rng = make_generator(seed)
    values = rng.uniform(lower, upper, size=counts)

    base = CoefficientField.constant(lower, drift, source)
    return replace(
        base,
        diffusion=PiecewiseConstant(origin, sizes, values),
        upper=upper,
        symbolic=None,
    )


def _symbolic(exact: Union[str, sympy.Expr]) -> sympy.Expr:
    names = {"t": T, "x": X, "v": V}
    if isinstance(exact, str):
        return sympy.sympify(exact, locals=names)
    return exact.subs({symbol: names[symbol.name] for symbol in exact.free_symbols})


def _broadcasting(function: Callable[..., Any]) -> ScalarField:
    def evaluate(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        shape = np.broadcast(t, x, v).shape
        return np.broadcast_to(np.asarray(function(t, x, v), dtype=float), shape).copy()

    return evaluate


def lambdify_field(exact: Union[str, sympy.Expr]) -> ScalarField:
    """Vectorised evaluation of a closed form f(t, x, v)."""
    return _broadcasting(sympy.lambdify((T, X, V), _symbolic(exact), "numpy"))


def manufactured_source(
    exact: Union[str, sympy.Expr],
    c: CoefficientField,
    *,
    face_step: float = 1e-4,
) -> Sampler:
    """The source G that makes `exact` solve the equation with coefficients c.

    With closed form coefficients the divergence is differentiated symbolically;
    otherwise it is the flux difference across faces v -/+ face_step / 2 with
    exact velocity derivatives of f.
    """
    expr = _symbolic(exact)
    transport = sympy.diff(expr, T) + V * sympy.diff(expr, X)
    slope = sympy.diff(expr, V)

    if c.symbolic is not None:
        diffusion, drift = c.symbolic
        total = transport - sympy.diff(diffusion * slope, V) + drift * slope
        evaluate = _broadcasting(sympy.lambdify((T, X, V), sympy.simplify(total), "numpy"))

        def source(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
            return evaluate(np.asarray(t, dtype=float), np.asarray(x)[..., 0], np.asarray(v)[..., 0])

        return source

    transport_of = _broadcasting(sympy.lambdify((T, X, V), transport, "numpy"))
    slope_of = _broadcasting(sympy.lambdify((T, X, V), slope, "numpy"))
    half = face_step / 2

    def source(t: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        xs, vs = np.asarray(x)[..., 0], np.asarray(v)[..., 0]
        flux_above = diffusion_1d(c, t, xs, vs + half) * slope_of(t, xs, vs + half)
        flux_below = diffusion_1d(c, t, xs, vs - half) * slope_of(t, xs, vs - half)
        divergence = (flux_above - flux_below) / face_step
        return transport_of(t, xs, vs) - divergence + drift_1d(c, t, xs, vs) * slope_of(t, xs, vs)

    return source


def _transport(
    problem: ProblemSpec, previous: np.ndarray, t_new: float, dt: float
) -> np.ndarray:
    xs, vs = problem.x_nodes, problem.v_nodes
    feet = xs[:, None] - vs[None, :] * dt
    result = np.empty_like(previous)

    if problem.mode is BoundaryMode.PERIODIC:
        period = problem.x_right - problem.x_left
        for j in range(vs.size):
            result[:, j] = np.interp(feet[:, j], xs[:-1], previous[:-1, j], period=period)
        return result

    for j in range(vs.size):
        result[:, j] = np.interp(feet[:, j], xs, previous[:, j])

    above = feet > xs[-1]
    below = feet < xs[0]
    outside = above | below
    if not outside.any():
        return result

    walls = np.where(above, problem.x_right, problem.x_left)
    speeds = np.broadcast_to(vs[None, :], feet.shape)
    if problem.mode is BoundaryMode.INFLUX:
        # The characteristic entered through the wall at the crossing time.
        positions = np.broadcast_to(xs[:, None], feet.shape)
        crossing = t_new - (positions[outside] - walls[outside]) / speeds[outside]
        result[outside] = np.asarray(
            problem.influx(crossing, walls[outside], speeds[outside]), dtype=float
        )
        return result

    # Specular: follow the reflected characteristic back from the mirrored foot.
    mirrored_feet = 2 * walls - feet
    for j in np.flatnonzero(outside.any(axis=0)):
        rows = outside[:, j]
        result[rows, j] = np.interp(mirrored_feet[rows, j], xs, previous[:, vs.size - 1 - j])
    return result


def _velocity_operator(
    problem: ProblemSpec, t_new: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sub-, main and super-diagonal of the discrete d_v(a d_v .) - b d_v
    per position, with reflecting ghost nodes at v = -V and v = V."""
    xs, vs = problem.x_nodes, problem.v_nodes
    dv = problem.dv
    grid_x, grid_v = np.meshgrid(xs, vs, indexing="ij")
    a = diffusion_1d(problem.coefficients, t_new, grid_x, grid_v)
    b = drift_1d(problem.coefficients, t_new, grid_x, grid_v)

    # Harmonic face means keep the face values inside [lambda, Lambda].
    faces = 2 * a[:, :-1] * a[:, 1:] / (a[:, :-1] + a[:, 1:])
    below = np.zeros_like(a)
    above = np.zeros_like(a)
    below[:, 1:] = faces / dv**2
    above[:, :-1] = faces / dv**2
    below[:, 1:-1] += b[:, 1:-1] / (2 * dv)
    above[:, 1:-1] -= b[:, 1:-1] / (2 * dv)
    # Neumann: the ghost value mirrors the first interior node.
    above[:, 0] *= 2
    below[:, -1] *= 2
    return below, -(below + above), above


def _diffuse(
    problem: ProblemSpec, transported: np.ndarray, t_new: float, dt: float
) -> np.ndarray:
    below, diagonal, above = _velocity_operator(problem, t_new)
    grid_x, grid_v = np.meshgrid(problem.x_nodes, problem.v_nodes, indexing="ij")
    rhs = transported + dt * source_1d(problem.coefficients, t_new, grid_x, grid_v)

    if not problem.implicit:
        applied = diagonal * transported
        applied[:, 1:] += below[:, 1:] * transported[:, :-1]
        applied[:, :-1] += above[:, :-1] * transported[:, 1:]
        return rhs + dt * applied

    result = np.empty_like(transported)
    banded = np.zeros((3, problem.grid.nv))
    for i in range(problem.grid.nx):
        banded[0, 1:] = -dt * above[i, :-1]
        banded[1] = 1 - dt * diagonal[i]
        banded[2, :-1] = -dt * below[i, 1:]
        result[i] = solve_banded((1, 1), banded, rhs[i])
    return result


def _impose_influx(problem: ProblemSpec, values: np.ndarray, t: float) -> np.ndarray:
    vs = problem.v_nodes
    entering_right = vs < 0
    entering_left = vs > 0
    values[-1, entering_right] = problem.influx(
        np.full(entering_right.sum(), t),
        np.full(entering_right.sum(), problem.x_right),
        vs[entering_right],
    )
    values[0, entering_left] = problem.influx(
        np.full(entering_left.sum(), t),
        np.full(entering_left.sum(), problem.x_left),
        vs[entering_left],
    )
    return values


def solve(problem: ProblemSpec, settings: LabSettings = DEFAULT_SETTINGS) -> SolutionField:
    problem.check_stability()
    xs, vs = problem.x_nodes, problem.v_nodes
    steps, dt = problem.steps, problem.time_step
    times = problem.t_start + dt * np.arange(steps + 1)
    times[-1] = problem.t_end

    with _step("evaluating the initial datum", SolverError):
        grid_x, grid_v = np.meshgrid(xs, vs, indexing="ij")
        current = np.broadcast_to(
            np.asarray(problem.initial(grid_x, grid_v), dtype=float), grid_x.shape
        ).copy()
    if problem.mode is BoundaryMode.INFLUX:
        current = _impose_influx(problem, current, problem.t_start)
    if problem.mode is BoundaryMode.PERIODIC:
        current[-1] = current[0]
    if not np.all(np.isfinite(current)):
        raise SolverError("non-finite value in the initial datum (step 0)")

    run_id = problem.run_id
    settings.emit(
        f"Marching '{problem.name}': {steps} steps of dt = {dt:.4g} on a "
        f"{problem.grid.nx} x {problem.grid.nv} grid ({problem.mode.value} walls)",
        source=LogSource.SOLVER,
        level=LogLevel.INFO,
        run_id=run_id,
    )

    report_every = max(1, steps // 10)
    values = np.empty((steps + 1,) + current.shape)
    values[0] = current
    for n in range(1, steps + 1):
        transported = _transport(problem, current, times[n], dt)
        current = _diffuse(problem, transported, times[n], dt)
        if problem.mode is BoundaryMode.INFLUX:
            current = _impose_influx(problem, current, times[n])
        elif problem.mode is BoundaryMode.PERIODIC:
            current[-1] = current[0]

        if not np.all(np.isfinite(current)):
            raise SolverError(f"non-finite value during the march at step {n} (t = {times[n]:.6g})")
        values[n] = current
        if n % report_every == 0:
            settings.emit(
                f"step {n}/{steps}: max |f| = {np.abs(current).max():.6g}",
                source=LogSource.SOLVER,
                run_id=run_id,
            )

    settings.emit(
        f"Finished '{problem.name}' at t = {times[-1]:.6g}",
        source=LogSource.SOLVER,
        level=LogLevel.INFO,
        run_id=run_id,
    )

    return SolutionField(
        times,
        xs,
        vs,
        values,
        problem=problem,
        periodic=problem.mode is BoundaryMode.PERIODIC,
    )


class SnapshotFormat(str, Enum):
    BINARY = "bin"
    CSV = "csv"


def dump_snapshot(
    f: SolutionField,
    path: Union[str, os.PathLike],
    *,
    index: int = -1,
    fmt: Union[str, SnapshotFormat] = SnapshotFormat.BINARY,
) -> Path:
    """Write one time slice: a text header "nx nv x0 x1 v0 v1 t" followed by the
    row-major little-endian float64 payload, or by "x,v,f" rows for CSV."""
    fmt = SnapshotFormat(fmt)
    path = Path(path)
    values = f.values[index]
    (x0, x1), (v0, v1) = f.extents[1], f.extents[2]
    header = (
        f"{f.x.size} {f.v.size} {float(x0)!r} {float(x1)!r} "
        f"{float(v0)!r} {float(v1)!r} {float(f.times[index])!r}"
    )

    if fmt is SnapshotFormat.BINARY:
        for axis in (f.x, f.v):
            if not np.allclose(np.diff(axis), np.diff(axis)[0], rtol=1e-9, atol=0):
                raise UsageError("Binary snapshots need uniform grids; use CSV instead.")
        with open(path, "wb") as stream:
            stream.write((header + "\n").encode())
            stream.write(values.astype("<f8").tobytes(order="C"))
        return path

    if values.size > CSV_SIZE_LIMIT:
        raise UsageError(
            f"CSV snapshots are limited to {CSV_SIZE_LIMIT} values, got {values.size}."
        )
    grid_x, grid_v = np.meshgrid(f.x, f.v, indexing="ij")
    rows = np.column_stack([grid_x.ravel(), grid_v.ravel(), values.ravel()])
    np.savetxt(path, rows, delimiter=",", header=header + "\nx,v,f", comments="# ", fmt="%.17g")
    return path


def load_snapshot(path: Union[str, os.PathLike]) -> SolutionField:
    path = Path(path)
    with open(path, "rb") as stream:
        first = stream.readline().decode()
        if first.startswith("#"):
            fields = first[1:].split()
            payload = None
        else:
            fields = first.split()
            payload = stream.read()

    with _step(f"reading the snapshot header of '{path}'"):
        nx, nv = int(fields[0]), int(fields[1])
        x0, x1, v0, v1, t = map(float, fields[2:7])

    if payload is None:
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if rows.shape != (nx * nv, 3):
            raise UsageError(f"Snapshot '{path}' holds {rows.shape[0]} rows, expected {nx * nv}.")
        xs = rows[::nv, 0]
        vs = rows[:nv, 1]
        values = rows[:, 2].reshape(nx, nv)
    else:
        values = np.frombuffer(payload, dtype="<f8")
        if values.size != nx * nv:
            raise UsageError(f"Snapshot '{path}' holds {values.size} values, expected {nx * nv}.")
        values = values.reshape(nx, nv).astype(float)
        xs = np.linspace(x0, x1, nx)
        vs = np.linspace(v0, v1, nv)
    return SolutionField(np.array([t]), xs, vs, values[None, :, :])
