from typing import Any, Dict, Type

import numpy as np
import pytest

import kinlab
from kinlab.charts import BaseChart, IdentityChart, LinearChart, QuadraticChart
from kinlab.common import GeometryError, UsageError


class GenericChartTests:
    """Tests every chart kind has to pass."""

    chart_kind: str
    config: Dict[str, Any]
    chart_cls: Type[BaseChart]

    def get_chart(self) -> BaseChart:
        return kinlab.prepare_chart(self.chart_kind, **self.config)

    def points(self, chart: BaseChart) -> np.ndarray:
        points = chart.sample_domain(64, seed=1, radius=0.4)
        assert points.shape[0] > 0
        return points

    def test_registry_builds_the_kind(self):
        assert isinstance(self.get_chart(), self.chart_cls)

    def test_round_trip(self):
        chart = self.get_chart()
        points = self.points(chart)
        assert np.abs(chart.inverse(chart.forward(points)) - points).max() <= 1e-10

    def test_jacobian_matches_differences(self):
        chart = self.get_chart()
        assert chart.check_jacobian(self.points(chart)) <= 1e-6

    def test_declared_bounds_hold(self):
        chart = self.get_chart()
        points = self.points(chart)
        bounds = chart.bounds
        jacobian_norms = np.linalg.norm(chart.jacobian(points), ord=2, axis=(-2, -1))
        inverse_norms = np.linalg.norm(chart.inverse_jacobian(points), ord=2, axis=(-2, -1))
        assert jacobian_norms.max() <= bounds.jacobian + 1e-12
        assert inverse_norms.max() <= bounds.inverse_jacobian + 1e-12

    def test_inverse_chart(self):
        chart = self.get_chart()
        inverse = chart.inverse_chart()
        images = chart.forward(self.points(chart))
        assert inverse.inverse_chart() is chart
        assert np.abs(chart.forward(inverse.forward(images)) - images).max() <= 1e-10
        assert inverse.check_jacobian(images) <= 1e-6


class TestIdentity(GenericChartTests):
    chart_kind = "identity"
    chart_cls = IdentityChart
    config = {"dimension": 2}

    def test_is_the_identity(self):
        chart = self.get_chart()
        x = np.array([[0.3, -0.1]])
        assert chart.forward(x) == pytest.approx(x)
        assert chart.jacobian(x)[0] == pytest.approx(np.eye(2))


class TestLinear(GenericChartTests):
    chart_kind = "linear"
    chart_cls = LinearChart
    config = {"matrix": [[2.0, 1.0], [0.0, 1.0]], "shift": [0.5, 0.0]}

    def test_scaling_example(self):
        chart = kinlab.prepare_chart("linear", matrix=[[2.0]])
        assert chart.forward(np.array([[1.0]])) == pytest.approx([[2.0]])
        assert chart.bounds.hessian == 0.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(UsageError):
            LinearChart(np.ones((3, 3)))
        with pytest.raises(UsageError):
            LinearChart(np.ones((1, 2)))


class TestQuadratic(GenericChartTests):
    chart_kind = "quadratic-1d"
    chart_cls = QuadraticChart
    config = {"curvature": 1.0}

    def test_default_radius(self):
        chart = self.get_chart()
        assert chart.radius == pytest.approx(0.5)
        assert chart.bounds.jacobian == pytest.approx(1.5)
        assert chart.bounds.inverse_jacobian == pytest.approx(2.0)

    def test_flat_chart_has_unbounded_radius(self):
        chart = QuadraticChart(curvature=0.0)
        assert chart.radius == float("inf")
        assert chart.inverse(np.array([[0.25]])) == pytest.approx([[0.25]])

    def test_rejects_radius_beyond_the_fold(self):
        with pytest.raises(UsageError):
            QuadraticChart(curvature=1.0, radius=1.0)

    def test_outside_of_the_domain(self):
        chart = self.get_chart()
        with pytest.raises(UsageError, match="outside of the chart domain"):
            chart.check_domain(np.array([[0.7]]))


def test_singular_jacobian():
    chart = LinearChart([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(GeometryError, match="Singular"):
        chart.inverse_jacobian(np.zeros((1, 2)))
    with pytest.raises(GeometryError, match="Singular"):
        chart.inverse(np.zeros((1, 2)))


def test_unknown_chart_kind():
    with pytest.raises(ValueError, match="Unknown chart"):
        kinlab.prepare_chart("spherical")
