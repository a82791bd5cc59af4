from unittest.mock import patch

import pytest

import kinlab
from kinlab.charts import LinearChart
from kinlab.geometry import BallDomain, HalfSpace


@pytest.fixture
def fresh_registry(monkeypatch):
    """Temporarily clear the chart and domain registries for this test. Also
    restores back to the initial state once the test is executed."""
    monkeypatch.setattr("kinlab.registry._CHART_REGISTRY", {})
    monkeypatch.setattr("kinlab.registry._DOMAIN_REGISTRY", {})


def test_unknown_kinds(fresh_registry):
    with pytest.raises(ValueError):
        kinlab.prepare_domain("$unknown_domain")
    with pytest.raises(ValueError):
        kinlab.prepare_chart("$unknown_chart")


def test_builtin_kinds(fresh_registry):
    from importlib_metadata import EntryPoints

    from kinlab.registry import _reload_registry, registered_kinds

    with patch("importlib_metadata.entry_points", return_value=EntryPoints([])):
        _reload_registry()

    assert registered_kinds() == {
        "charts": ["identity", "linear", "quadratic-1d"],
        "domains": ["ball", "full", "half-space", "level-set", "polytope"],
    }
    assert isinstance(kinlab.prepare_domain("half-space", normal=[1.0]), HalfSpace)


def test_chart_discovery(fresh_registry):
    from importlib_metadata import EntryPoint, EntryPoints

    from kinlab.registry import _CHART_ENTRY_POINT, _reload_registry

    entry_point = EntryPoint("stretch", "kinlab.charts.linear:LinearChart", _CHART_ENTRY_POINT)
    with patch("importlib_metadata.entry_points", return_value=EntryPoints([entry_point])):
        _reload_registry()

    chart = kinlab.prepare_chart("stretch", matrix=[[2.0]])
    assert isinstance(chart, LinearChart)
    with pytest.raises(ValueError):
        kinlab.prepare_domain("stretch")


def test_installed_kinds_take_precedence(fresh_registry):
    from importlib_metadata import EntryPoint, EntryPoints

    from kinlab.registry import _DOMAIN_ENTRY_POINT, _reload_registry

    entry_point = EntryPoint("half-space", "kinlab.geometry:BallDomain", _DOMAIN_ENTRY_POINT)
    with patch("importlib_metadata.entry_points", return_value=EntryPoints([entry_point])):
        _reload_registry()

    domain = kinlab.prepare_domain("half-space", center=[0.0], radius=1.0)
    assert isinstance(domain, BallDomain)
