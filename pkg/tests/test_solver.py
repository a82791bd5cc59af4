import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from kinlab.common import RegionError, SolverError, UsageError
from kinlab.geometry import ConvexPolytope, FullSpace
from kinlab.harness import mms_problem
from kinlab.settings import DEFAULT_SETTINGS
from kinlab.solver import (
    BoundaryMode,
    GridSpec,
    ProblemSpec,
    SolutionField,
    lambdify_field,
    load_snapshot,
    manufactured_source,
    sample_rough_coefficients,
    solve,
)
from kinlab.transform import CoefficientField, mirror_extend


@pytest.fixture
def quiet_settings():
    return replace(DEFAULT_SETTINGS, log_hook=lambda log: None)


def constant(value):
    def evaluate(*args):
        return np.full(np.broadcast(*args).shape, value)

    return evaluate


def small_problem(**overrides):
    options = dict(
        coefficients=CoefficientField.constant(1.0, 0.5),
        initial=constant(1.0),
        grid=GridSpec(nx=9, nv=17, dt=1 / 32),
        velocity_bound=4.0,
        t_end=0.25,
        influx=constant(1.0),
    )
    options.update(overrides)
    return ProblemSpec(**options)


@pytest.mark.parametrize("mode", list(BoundaryMode))
def test_constants_are_preserved(mode, quiet_settings):
    solution = solve(small_problem(mode=mode), quiet_settings)
    assert solution.values.shape == (9, 9, 17)
    assert np.abs(solution.values - 1.0).max() <= 1e-12


def test_explicit_diffusion_preserves_constants(quiet_settings):
    problem = small_problem(implicit=False, grid=GridSpec(nx=9, nv=9, dt=1 / 32))
    solution = solve(problem, quiet_settings)
    assert np.abs(solution.values - 1.0).max() <= 1e-12


def test_time_grid_ends_at_the_final_time(quiet_settings):
    problem = small_problem(grid=GridSpec(nx=9, nv=17, dt=0.03))
    solution = solve(problem, quiet_settings)
    assert solution.times[0] == 0.0
    assert solution.times[-1] == 0.25
    assert np.diff(solution.times) == pytest.approx(np.full(problem.steps, 0.25 / problem.steps))


def test_stability_violation():
    problem = small_problem(grid=GridSpec(nx=9, nv=17, dt=0.1))
    with pytest.raises(SolverError, match="stability bound violated"):
        solve(problem)


def test_explicit_stability_violation():
    problem = small_problem(implicit=False, grid=GridSpec(nx=9, nv=65, dt=1 / 32))
    assert "diffusion (dv^2 / (2 Lambda))" in problem.stability_bounds()
    with pytest.raises(SolverError):
        problem.check_stability()


def test_non_finite_initial_datum():
    problem = small_problem(initial=constant(math.nan))
    with pytest.raises(SolverError, match="step 0"):
        solve(problem)


@pytest.mark.parametrize(
    "overrides",
    [
        {"x_left": 0.0},
        {"velocity_bound": 0.0},
        {"t_end": 0.0},
        {"influx": None},
        {"coefficients": CoefficientField.constant(dim=2)},
    ],
)
def test_invalid_problems(overrides):
    with pytest.raises(UsageError):
        small_problem(**overrides)


@pytest.mark.parametrize("nx, nv, dt", [(2, 9, 0.1), (9, 9, 0.0)])
def test_invalid_grids(nx, nv, dt):
    with pytest.raises(UsageError):
        GridSpec(nx=nx, nv=nv, dt=dt)


def test_grid_refinement():
    assert GridSpec(nx=17, nv=9, dt=0.1).refined() == GridSpec(nx=33, nv=17, dt=0.05)


def test_problem_domain():
    problem = small_problem()
    assert isinstance(problem.domain, ConvexPolytope)
    assert problem.domain.contains(np.array([[-0.5]]))[0]
    assert isinstance(small_problem(mode="periodic").domain, FullSpace)


def test_velocity_margin():
    problem = small_problem()
    problem.check_velocity_margin(2.5)
    with pytest.raises(UsageError, match="need V"):
        problem.check_velocity_margin(3.5)


def test_run_id_is_stable():
    assert small_problem().run_id == small_problem().run_id
    assert small_problem(seed=1).run_id != small_problem().run_id


def test_manufactured_sources():
    c = CoefficientField.constant()
    t = np.linspace(0.0, 1.0, 5)
    x = np.full((5, 1), -0.5)
    v = np.linspace(-1.0, 1.0, 5)[:, None]
    assert manufactured_source("v", c)(t, x, v) == pytest.approx(np.zeros(5))
    assert manufactured_source("v**2", c)(t, x, v) == pytest.approx(np.full(5, -2.0))


def test_manufactured_source_for_rough_coefficients():
    # With lambda = Lambda every cell holds the same value.
    c = sample_rough_coefficients(0, 1.0, 1.0)
    t = np.array([0.1])
    x = np.array([[-0.6]])
    v = np.array([[0.3]])
    assert manufactured_source("v**2", c)(t, x, v) == pytest.approx([-2.0], abs=1e-8)
    assert manufactured_source("t*x", c)(t, x, v) == pytest.approx([-0.6 + 0.3 * 0.1], abs=1e-8)


def test_rough_coefficients_are_deterministic():
    first = sample_rough_coefficients(5, 0.5, 2.0)
    second = sample_rough_coefficients(5, 0.5, 2.0)
    other = sample_rough_coefficients(6, 0.5, 2.0)
    assert np.array_equal(first.diffusion.values, second.diffusion.values)
    assert not np.array_equal(first.diffusion.values, other.diffusion.values)
    assert first.diffusion.values.shape == (4, 4, 16)


def test_degenerate_rough_coefficients_are_constant():
    c = sample_rough_coefficients(2, 1.0, 1.0)
    rng = np.random.Generator(np.random.Philox(0))
    t = rng.uniform(0.0, 1.0, 50)
    x = rng.uniform(-1.0, 0.0, (50, 1))
    v = rng.uniform(-4.0, 4.0, (50, 1))
    assert c.diffusion(t, x, v) == pytest.approx(np.ones((50, 1, 1)))


@pytest.mark.parametrize("lower, upper", [(0.0, 1.0), (2.0, 1.0)])
def test_invalid_rough_bounds(lower, upper):
    with pytest.raises(UsageError):
        sample_rough_coefficients(0, lower, upper)


def test_manufactured_solution_converges(quiet_settings):
    exact = lambdify_field("exp(-t) * sin(x) * cos(v)")
    errors = []
    for level in (0, 1):
        solution = solve(mms_problem(level), quiet_settings)
        grids = np.meshgrid(solution.times, solution.x, solution.v, indexing="ij")
        errors.append(np.abs(solution.values - exact(*grids)).max())
    assert errors[1] < errors[0]


def test_specular_walls_keep_velocity_symmetry(quiet_settings):
    problem = small_problem(
        mode="specular",
        initial=lambda x, v: np.exp(-(v**2)) * np.cos(np.pi * (2 * x + 1)),
        coefficients=CoefficientField.constant(1.0),
    )
    solution = solve(problem, quiet_settings)
    final = solution.snapshot()
    assert final == pytest.approx(final[::-1, ::-1], abs=1e-10)


def test_solution_field_interpolation():
    field = SolutionField.from_function(
        lambda t, x, v: 2 * t + x - v,
        np.linspace(0.0, 1.0, 5),
        np.linspace(-1.0, 0.0, 5),
        np.linspace(-1.0, 1.0, 5),
    )
    assert field(0.3, -0.2, 0.1) == pytest.approx(0.6 - 0.2 - 0.1)
    with pytest.raises(RegionError, match="outside the stored region"):
        field(0.3, 0.5, 0.0)


def test_periodic_field_wraps_positions():
    field = SolutionField.from_function(
        lambda t, x, v: np.cos(2 * np.pi * x) + 0 * v,
        [0.0, 1.0],
        np.linspace(-1.0, 0.0, 41),
        np.linspace(-1.0, 1.0, 3),
        periodic=True,
    )
    assert field(0.5, 0.25, 0.0) == pytest.approx(field(0.5, -0.75, 0.0))


def test_solution_field_validation():
    with pytest.raises(UsageError, match="do not match"):
        SolutionField(np.zeros(2), np.zeros(3), np.zeros(3), np.zeros((2, 3, 4)))
    with pytest.raises(UsageError, match="strictly increasing"):
        SolutionField([0.0], [0.0, 0.0, 1.0], [0.0, 1.0], np.zeros((1, 3, 2)))


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_snapshot_dump_and_load(fmt, tmp_path, quiet_settings):
    solution = solve(small_problem(initial=lambda x, v: x * v + 1), quiet_settings)
    path = solution.dump(tmp_path / f"snapshot.{fmt}", fmt)
    loaded = load_snapshot(path)

    assert loaded.times == pytest.approx([0.25])
    assert loaded.x == pytest.approx(solution.x)
    assert loaded.v == pytest.approx(solution.v)
    assert np.array_equal(loaded.values[0], solution.values[-1])


def test_binary_snapshot_header(tmp_path):
    field = SolutionField.from_function(
        lambda t, x, v: x + v, [0.5], np.linspace(-1.0, 0.0, 3), np.linspace(-1.0, 1.0, 5)
    )
    path = field.dump(tmp_path / "snapshot.bin")
    with open(path, "rb") as stream:
        header = stream.readline().decode().split()
        payload = stream.read()
    assert header == ["3", "5", "-1.0", "0.0", "-1.0", "1.0", "0.5"]
    assert len(payload) == 3 * 5 * 8


def test_binary_snapshot_needs_uniform_grids(tmp_path):
    field = SolutionField.from_function(
        lambda t, x, v: x + v, [0.0], [-1.0, -0.9, 0.0], np.linspace(-1.0, 1.0, 5)
    )
    with pytest.raises(UsageError, match="uniform"):
        field.dump(tmp_path / "snapshot.bin", "bin")
    assert load_snapshot(field.dump(tmp_path / "snapshot.csv", "csv")).x == pytest.approx(field.x)


def test_truncated_snapshot(tmp_path):
    path = tmp_path / "snapshot.bin"
    path.write_bytes(b"3 5 -1.0 0.0 -1.0 1.0 0.5\n" + b"\x00" * 16)
    with pytest.raises(UsageError, match="expected 15"):
        load_snapshot(path)


def bump(x, v):
    return np.exp(-4 * v**2) * (1 - (2 * x + 1) ** 2)


@pytest.mark.parametrize("mode", list(BoundaryMode))
def test_discrete_maximum_principle(mode, quiet_settings):
    problem = small_problem(
        mode=mode,
        coefficients=sample_rough_coefficients(4, 0.5, 2.0),
        initial=bump,
        influx=constant(0.25),
    )
    values = solve(problem, quiet_settings).values
    assert values.min() >= -1e-12
    assert values.max() <= 1.0 + 1e-12


def test_solve_is_bitwise_deterministic(quiet_settings):
    def build():
        return small_problem(
            coefficients=sample_rough_coefficients(7, 0.5, 2.0),
            initial=bump,
            influx=constant(0.0),
            seed=7,
        )

    first = solve(build(), quiet_settings)
    second = solve(build(), quiet_settings)
    assert np.array_equal(first.values, second.values)
    assert np.array_equal(first.times, second.times)


@pytest.mark.parametrize("sigma2", [0.05, 0.1])
def test_heat_variance_grows_linearly(sigma2, quiet_settings):
    problem = ProblemSpec(
        coefficients=CoefficientField.constant(1.0),
        initial=lambda x, v: np.exp(-(v**2) / (2 * sigma2)) + 0 * x,
        grid=GridSpec(nx=5, nv=161, dt=0.0025),
        velocity_bound=4.0,
        t_end=0.1,
        mode=BoundaryMode.PERIODIC,
    )
    solution = solve(problem, quiet_settings)
    for index in (20, -1):
        profile = solution.values[index, 0]
        variance = trapezoid(profile * solution.v**2, solution.v) / trapezoid(profile, solution.v)
        expected = 2 * solution.times[index] + sigma2
        assert variance == pytest.approx(expected, rel=0.02)


def test_mirror_extension_matches_the_full_specular_solve(quiet_settings):
    from kinlab.harness import _mirror_problem

    half = solve(_mirror_problem(33, 49, 1 / 128, 0.0), quiet_settings)
    coarse = solve(_mirror_problem(17, 25, 1 / 64, 0.0), quiet_settings)
    full = solve(_mirror_problem(65, 49, 1 / 128, 1.0), quiet_settings)

    extended, _ = mirror_extend(half, half.problem.coefficients, half.problem.domain.faces[0])
    assert extended.x == pytest.approx(full.x)
    gap = np.abs(extended.values[-1] - full.values[-1]).max()
    one_sided = np.abs(half.values[-1, ::2, ::2] - coarse.values[-1]).max()
    assert gap <= 3 * one_sided
