import math
from dataclasses import replace
from typing import Any, Dict, Type

import numpy as np
import pytest

import kinlab
from kinlab.charts import LinearChart, QuadraticChart
from kinlab.common import GeometryError, UsageError
from kinlab.galilean import PhasePoint, compose
from kinlab.geometry import (
    BallDomain,
    BoundaryClass,
    ConvexPolytope,
    Domain,
    FullSpace,
    HalfSpace,
    KineticCylinder,
    LevelSetDomain,
    classify,
    inside_fraction,
    qminus_exterior_measure,
    qminus_lower_bound,
    qminus_volume,
    touches_incoming,
    trace_weight,
    unit_ball_volume,
)
from kinlab.settings import DEFAULT_SETTINGS


@pytest.fixture
def quiet_settings():
    return replace(DEFAULT_SETTINGS, log_hook=lambda log: None)


def point(*values):
    return PhasePoint.from_array(values)


HALF_LINE = HalfSpace(np.array([1.0]), 0.0)


class GenericDomainTests:
    """Tests every domain kind with a boundary has to pass."""

    domain_kind: str
    config: Dict[str, Any]
    domain_cls: Type[Domain]

    # Positions strictly inside and strictly outside the domain.
    inside_points: np.ndarray
    outside_points: np.ndarray

    def get_domain(self) -> Domain:
        return kinlab.prepare_domain(self.domain_kind, **self.config)

    def test_registry_builds_the_kind(self):
        domain = self.get_domain()
        assert isinstance(domain, self.domain_cls)
        assert domain.dim == self.inside_points.shape[-1]

    def test_membership(self):
        domain = self.get_domain()
        assert np.all(domain.contains(self.inside_points))
        assert not np.any(domain.contains(self.outside_points))
        assert np.all(domain.signed_distance(self.inside_points) < 0)
        assert np.all(domain.signed_distance(self.outside_points) > 0)

    def test_projection_lands_on_the_boundary(self):
        domain = self.get_domain()
        projected = domain.project_to_boundary(self.inside_points)
        assert np.abs(domain.signed_distance(projected)).max() <= 1e-9

    def test_normals_are_unit_and_outward(self):
        domain = self.get_domain()
        boundary = domain.project_to_boundary(self.inside_points)
        normals = domain.normal(boundary)
        assert np.linalg.norm(normals, axis=-1) == pytest.approx(1.0)

        # A small step along the normal leaves the domain.
        assert not np.any(domain.contains(boundary + 1e-6 * normals))
        assert np.all(domain.contains(boundary - 1e-6 * normals))

    def test_boundary_samples(self):
        domain = self.get_domain()
        rng = np.random.Generator(np.random.Philox(0))
        boundary = domain.project_to_boundary(self.inside_points[:1])[0]
        samples = domain.sample_boundary(rng, 200, boundary, 0.1)
        assert samples.shape[0] > 0
        assert np.abs(domain.signed_distance(samples)).max() <= 1e-9


class TestHalfSpace(GenericDomainTests):
    domain_kind = "half-space"
    domain_cls = HalfSpace
    config = {"normal": [1.0, 1.0], "offset": 0.0}
    inside_points = np.array([[-1.0, 0.0], [-0.1, -0.1], [0.5, -0.6]])
    outside_points = np.array([[1.0, 0.0], [0.1, 0.1]])

    def test_normalizes_the_normal(self):
        domain = self.get_domain()
        assert domain.normal_vector == pytest.approx([1 / math.sqrt(2)] * 2)

    def test_reflection(self):
        domain = HalfSpace(np.array([1.0, 0.0]), 0.0)
        assert domain.reflect(np.array([[-1.0, 2.0]])) == pytest.approx([[1.0, 2.0]])

    def test_missing_normal(self):
        with pytest.raises(UsageError, match="normal"):
            kinlab.prepare_domain("half-space", offset=1.0)


class TestPolytope(GenericDomainTests):
    domain_kind = "polytope"
    domain_cls = ConvexPolytope
    config = {"faces": [([1.0], 0.0), ([-1.0], 1.0)]}
    inside_points = np.array([[-0.2], [-0.5], [-0.9]])
    outside_points = np.array([[0.5], [-1.5]])

    def test_needs_faces(self):
        with pytest.raises(UsageError):
            ConvexPolytope(())


class TestBall(GenericDomainTests):
    domain_kind = "ball"
    domain_cls = BallDomain
    config = {"center": [0.0, 0.0], "radius": 1.0}
    inside_points = np.array([[0.5, 0.0], [0.0, -0.3], [0.2, 0.2]])
    outside_points = np.array([[1.5, 0.0], [0.9, 0.9]])

    def test_is_convex(self):
        assert self.get_domain().convex


class TestLevelSet(GenericDomainTests):
    domain_kind = "level-set"
    domain_cls = LevelSetDomain
    config = {"chart": "quadratic-1d", "curvature": 1.0, "convex": True}
    inside_points = np.array([[-0.2], [-0.4]])
    outside_points = np.array([[0.1], [0.3]])

    def test_matches_the_chart(self):
        domain = LevelSetDomain.from_chart(QuadraticChart(curvature=1.0))
        assert domain.signed_distance(np.array([[0.0]])) == pytest.approx([0.0])
        assert not domain.convex

    def test_reports_the_chart_condition(self):
        domain = LevelSetDomain.from_chart(QuadraticChart(curvature=1.0))
        conditions = domain.chart_condition(np.array([[-0.2], [0.0], [0.9]]))
        assert conditions[:2] == pytest.approx([1.0, 1.0])
        assert np.isnan(conditions[2])

    def test_condition_of_an_anisotropic_chart(self):
        domain = LevelSetDomain.from_chart(LinearChart([[4.0, 0.0], [0.0, 0.5]]))
        assert domain.chart_condition(np.array([[-1.0, 0.3]])) == pytest.approx([8.0])

    def test_without_a_chart(self):
        bare = LevelSetDomain(
            function=lambda x: x[..., 0],
            gradient=lambda x: np.ones_like(x),
            hessian=lambda x: np.zeros(x.shape + (1,)),
        )
        assert bare.chart_condition(np.array([[-0.5]])) is None


def test_ambiguous_boundary_sign():
    degenerate = LevelSetDomain(
        function=lambda x: x[..., 0] ** 2,
        gradient=lambda x: 2 * x,
        hessian=lambda x: 2 * np.ones(x.shape + (1,)),
    )
    with pytest.raises(GeometryError, match="ambiguous boundary sign"):
        degenerate.normal(np.array([[0.0]]))


def test_full_space_has_no_boundary():
    domain = FullSpace(2)
    assert np.all(domain.contains(np.zeros((3, 2))))
    with pytest.raises(GeometryError, match="no incoming boundary"):
        domain.normal(np.zeros((1, 2)))


@pytest.mark.parametrize(
    "z, domain, expected",
    [
        (point(0, 0, -1), HALF_LINE, BoundaryClass.INCOMING),
        (point(0, 0, 1), HALF_LINE, BoundaryClass.OUTGOING),
        (point(0, 0, 0), HALF_LINE, BoundaryClass.GRAZING),
        (point(0, 0, 0, 0, 1), HalfSpace(np.array([1.0, 0.0]), 0.0), BoundaryClass.GRAZING),
        (point(0, -1, 5), HALF_LINE, BoundaryClass.INTERIOR),
        (point(0, 1, -5), HALF_LINE, BoundaryClass.EXTERIOR),
        (point(0, 3, 1), FullSpace(1), BoundaryClass.INTERIOR),
    ],
)
def test_classify(z, domain, expected):
    assert classify(z, domain) is expected


def test_classify_dimension_mismatch():
    with pytest.raises(UsageError, match="Dimension mismatch"):
        classify(point(0, 0, 0, 0, 0), HALF_LINE)


@pytest.mark.parametrize("r", [0.25, 1.0])
def test_cylinder_membership(r):
    z0 = point(0.5, -0.3, 0.7)
    cylinder = KineticCylinder(z0, r)
    assert cylinder.contains(z0)
    assert not cylinder.contains(compose(z0, point(-(r**2), 0, 0)))
    assert cylinder.contains(compose(z0, point(-(r**2) / 2, 0, r / 2)))
    assert not cylinder.contains(compose(z0, point(0.01 * r**2, 0, 0)))
    assert not cylinder.contains(compose(z0, point(-(r**2) / 2, 0, 1.01 * r)))


def test_cylinder_samples_stay_inside():
    cylinder = KineticCylinder(point(1.0, 0.2, -0.4, 0.1, 0.3), 0.5)
    t, x, v = cylinder.sample(500, seed=3, stratified=True)
    assert np.all(cylinder.contains_arrays(t, x, v))
    assert cylinder.volume == pytest.approx(0.5 ** (2 + 8) * math.pi**2)


@pytest.mark.parametrize(
    "center, r, expected",
    [((0.5, -0.3, 0.7), 0.25, 0.95), ((1.0, 0.2, -0.4, 0.3, -0.4), 0.5, 1.0)],
)
def test_cylinder_velocity_extent(center, r, expected):
    assert KineticCylinder(point(*center), r).velocity_extent == pytest.approx(expected)


@pytest.mark.parametrize("r", [0.0, -0.5])
def test_cylinder_rejects_invalid_radius(r):
    with pytest.raises(UsageError):
        KineticCylinder(point(0, 0, 0), r)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)


def test_interior_fraction_is_one():
    z0 = point(0.0, -1.0, 0.0)
    estimate = inside_fraction(KineticCylinder(z0, 0.5), HALF_LINE, samples=2000)
    assert estimate.fraction == 1.0


@pytest.mark.parametrize("r", [0.25, 0.5, 1.0])
def test_grazing_fraction_is_one_half(r):
    estimate = inside_fraction(
        KineticCylinder(point(0, 0, 0), r), HALF_LINE, samples=20_000, seed=1
    )
    assert abs(estimate.fraction - 0.5) <= 3 * estimate.std_error
    exact = inside_fraction(KineticCylinder(point(0, 0, 0), r), HALF_LINE, "exact-1d")
    assert exact.fraction == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("k", range(1, 7))
def test_incoming_fraction_is_r_over_four(k):
    r = 2.0**-k
    exact = inside_fraction(KineticCylinder(point(0, 0, -1), r), HALF_LINE, "exact-1d")
    assert exact.fraction == pytest.approx(r / 4, abs=1e-12)


def test_incoming_fraction_monte_carlo():
    estimate = inside_fraction(
        KineticCylinder(point(0, 0, -1), 0.5), HALF_LINE, samples=50_000, seed=2
    )
    assert abs(estimate.fraction - 0.125) <= 3 * estimate.std_error


def test_inside_fraction_validates_arguments():
    cylinder = KineticCylinder(point(0, 0, 0, 0, 0), 0.5)
    plane = HalfSpace(np.array([1.0, 0.0]), 0.0)
    with pytest.raises(UsageError):
        inside_fraction(cylinder, plane, samples=0)
    with pytest.raises(UsageError, match="exact-1d"):
        inside_fraction(cylinder, plane, "exact-1d")


def test_qminus_constants():
    assert qminus_lower_bound(1) == pytest.approx(1 / 128)
    assert qminus_volume(1) == pytest.approx(1 / 16)
    assert 0 < qminus_lower_bound(2) < qminus_volume(2)


def test_qminus_exact_anchor(quiet_settings):
    report = qminus_exterior_measure(
        point(0, 0, 0), HALF_LINE, method="exact-1d", settings=quiet_settings
    )
    assert report.measure == pytest.approx(1 / 32, abs=1e-15)
    assert report.hypothesis
    assert report.satisfied
    assert report.measure >= report.mu_star


def test_qminus_monte_carlo_matches_exact(quiet_settings):
    z0 = point(0.0, 0.01, -0.5)
    exact = qminus_exterior_measure(z0, HALF_LINE, method="exact-1d", settings=quiet_settings)
    sampled = qminus_exterior_measure(z0, HALF_LINE, samples=50_000, settings=quiet_settings)
    assert abs(sampled.measure - exact.measure) <= 3 * sampled.std_error + 1e-12


def test_qminus_hypothesis_gate(quiet_settings):
    report = qminus_exterior_measure(point(0, -5, 0), HALF_LINE, settings=quiet_settings)
    assert not report.hypothesis
    assert report.satisfied is None


def test_qminus_needs_convexity(quiet_settings):
    curved = LevelSetDomain.from_chart(QuadraticChart(curvature=1.0), convex=False)
    with pytest.raises(GeometryError, match="convexity required by Lemma"):
        qminus_exterior_measure(point(0, 0, 0), curved, settings=quiet_settings)


def test_touches_incoming():
    assert touches_incoming(KineticCylinder(point(0, 0, -1), 0.125), HALF_LINE)
    assert not touches_incoming(KineticCylinder(point(0, -1, 0), 0.125), HALF_LINE)
    assert not touches_incoming(KineticCylinder(point(0, 0, 2), 0.125), HALF_LINE)
    assert not touches_incoming(KineticCylinder(point(0, 0, 0), 0.125), FullSpace(1))


@pytest.mark.parametrize(
    "velocity, expected",
    [(-2.0, 2.0), (0.5, 0.25), (0.0, 0.0)],
)
def test_trace_weight(velocity, expected):
    assert trace_weight(point(0, 0, velocity), HALF_LINE) == pytest.approx(expected)


def test_trace_weight_off_the_boundary():
    with pytest.raises(UsageError, match="not on the boundary"):
        trace_weight(point(0, -0.5, 1), HALF_LINE)
