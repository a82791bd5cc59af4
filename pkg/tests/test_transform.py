import numpy as np
import pytest

from kinlab.charts import IdentityChart, LinearChart, QuadraticChart
from kinlab.common import GeometryError, UsageError, VerificationError
from kinlab.galilean import PhasePoint
from kinlab.geometry import BallDomain, HalfSpace
from kinlab.solver import SolutionField, sample_rough_coefficients
from kinlab.transform import (
    CoefficientField,
    flatten_point,
    mirror_extend,
    push_coefficients,
    reflect_velocity,
    reflection_matrix,
    unflatten_point,
)

HALF_LINE = HalfSpace(np.array([1.0]), 0.0)


def sample_events(count=25, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    t = rng.uniform(0.0, 1.0, count)
    y = rng.uniform(-0.4, 0.0, (count, 1))
    w = rng.uniform(-2.0, 2.0, (count, 1))
    return t, y, w


def test_flatten_scaling_chart():
    chart = LinearChart([[2.0]])
    z = PhasePoint.from_array([0.3, 1.0, 3.0])
    flat = flatten_point(chart, z)
    assert flat.isclose(PhasePoint.from_array([0.3, 2.0, 6.0]))
    assert unflatten_point(chart, flat).isclose(z)


def test_flatten_rejects_points_outside_the_chart():
    with pytest.raises(UsageError):
        flatten_point(QuadraticChart(curvature=1.0), PhasePoint.from_array([0.0, 0.9, 0.0]))


def test_identity_chart_keeps_coefficients():
    c = CoefficientField.constant(2.0, 0.5)
    pushed = push_coefficients(IdentityChart(), c)
    t, y, w = sample_events()
    assert pushed.diffusion(t, y, w) == pytest.approx(c.diffusion(t, y, w))
    assert pushed.drift(t, y, w) == pytest.approx(c.drift(t, y, w))
    assert (pushed.lower, pushed.upper) == (2.0, 2.0)


def test_scaling_chart_scales_the_diffusion():
    pushed = push_coefficients(LinearChart([[2.0]]), CoefficientField.constant())
    t, y, w = sample_events()
    assert pushed.diffusion(t, y, w) == pytest.approx(np.full((25, 1, 1), 4.0))
    assert pushed.lower == pytest.approx(4.0)
    assert pushed.upper == pytest.approx(4.0)


def test_curvature_becomes_drift():
    pushed = push_coefficients(QuadraticChart(curvature=1.0), CoefficientField.constant())
    v = np.linspace(-2.0, 2.0, 9)[:, None]
    drift = pushed.drift(np.zeros(9), np.zeros((9, 1)), v)
    assert drift[:, 0] == pytest.approx(v[:, 0] ** 2)

    # The pushed bounds follow the chart's declared derivative bounds.
    assert pushed.lower == pytest.approx(0.25)
    assert pushed.upper == pytest.approx(2.25)
    assert pushed.check_ellipticity(box=((0.0, 1.0), (-0.3, 0.0), (-1.0, 1.0)))


def test_push_dimension_mismatch():
    with pytest.raises(UsageError, match="Dimension mismatch"):
        push_coefficients(IdentityChart(dimension=2), CoefficientField.constant())


def test_reflection():
    assert reflect_velocity(np.array([1.0, 2.0]), np.array([1.0, 0.0])) == pytest.approx(
        [-1.0, 2.0]
    )
    normal = np.array([3.0, 4.0]) / 5.0
    reflection = reflection_matrix(normal)
    assert reflection @ reflection == pytest.approx(np.eye(2))
    assert reflection @ normal == pytest.approx(-normal)


def symmetric_field():
    return SolutionField.from_function(
        lambda t, x, v: np.cos(x) * np.cos(v) + x * v + t,
        np.linspace(0.0, 0.5, 3),
        np.linspace(-1.0, 0.0, 11),
        np.linspace(-1.0, 1.0, 21),
    )


def test_mirror_extension_of_a_symmetric_field():
    field = symmetric_field()
    extended, _ = mirror_extend(field, CoefficientField.constant(), HALF_LINE)

    assert extended.x.size == 21
    assert extended.x[-1] == pytest.approx(1.0)
    grids = np.meshgrid(extended.times, extended.x, extended.v, indexing="ij")
    expected = np.cos(grids[1]) * np.cos(grids[2]) + grids[1] * grids[2] + grids[0]
    assert extended.values == pytest.approx(expected, abs=1e-12)


def test_mirror_extension_reflects_the_drift():
    _, mirrored = mirror_extend(symmetric_field(), CoefficientField.constant(1.5, 0.5), HALF_LINE)
    x = np.array([[-0.5], [0.5]])
    v = np.array([[1.0], [1.0]])
    assert mirrored.drift(np.zeros(2), x, v)[:, 0] == pytest.approx([0.5, -0.5])
    assert mirrored.diffusion(np.zeros(2), x, v)[:, 0, 0] == pytest.approx([1.5, 1.5])


def test_mirror_extension_needs_a_flat_boundary():
    with pytest.raises(GeometryError, match="flatten first"):
        mirror_extend(symmetric_field(), CoefficientField.constant(), BallDomain((0.0,), 1.0))


def test_mirror_extension_needs_symmetric_velocities():
    lopsided = SolutionField.from_function(
        lambda t, x, v: x + v,
        [0.0],
        np.linspace(-1.0, 0.0, 5),
        np.linspace(-1.0, 2.0, 7),
    )
    with pytest.raises(UsageError, match="symmetric"):
        mirror_extend(lopsided, CoefficientField.constant(), HALF_LINE)


def test_ellipticity_of_rough_coefficients():
    c = sample_rough_coefficients(3, 0.5, 2.0)
    smallest, largest = c.check_ellipticity(box=((0.0, 1.0), (-1.0, 0.0), (-4.0, 4.0)))
    assert 0.5 <= smallest <= largest <= 2.0


def test_ellipticity_violations():
    def too_large(t, x, v):
        return np.full(np.shape(t) + (1, 1), 3.0)

    c = CoefficientField.constant()
    with pytest.raises(VerificationError, match="declared bounds"):
        CoefficientField(too_large, c.drift, c.source, 1.0, 2.0).check_ellipticity()

    def lopsided(t, x, v):
        return np.broadcast_to(np.array([[1.0, 0.5], [0.0, 1.0]]), np.shape(t) + (2, 2))

    planar = CoefficientField.constant(dim=2)
    with pytest.raises(VerificationError, match="not symmetric"):
        CoefficientField(lopsided, planar.drift, planar.source, 0.5, 2.0, dim=2).check_ellipticity()


@pytest.mark.parametrize("lower, upper", [(0.0, 1.0), (2.0, 1.0)])
def test_invalid_ellipticity_bounds(lower, upper):
    c = CoefficientField.constant()
    with pytest.raises(UsageError):
        CoefficientField(c.diffusion, c.drift, c.source, lower, upper)
