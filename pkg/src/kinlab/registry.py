from __future__ import annotations

from typing import TYPE_CHECKING, Any, Dict, Type, Union

import importlib_metadata

if TYPE_CHECKING:
    from kinlab.charts import BaseChart
    from kinlab.geometry import Domain

# New chart or domain kinds can register themselves during package installation
# time by adding an entry point to one of these groups.
_CHART_ENTRY_POINT = "kinlab.charts"
_DOMAIN_ENTRY_POINT = "kinlab.domains"


_CHART_REGISTRY: Dict[str, Union[importlib_metadata.EntryPoint, Type["BaseChart"]]] = {}
_DOMAIN_REGISTRY: Dict[str, Union[importlib_metadata.EntryPoint, Type["Domain"]]] = {}


# Kinds shipped with the package. Installed entry points with the same name
# take precedence, and the table keeps source checkouts usable.
_BUILTIN_CHARTS = {
    "identity": "kinlab.charts.linear:IdentityChart",
    "linear": "kinlab.charts.linear:LinearChart",
    "quadratic-1d": "kinlab.charts.quadratic:QuadraticChart",
}
_BUILTIN_DOMAINS = {
    "full": "kinlab.geometry:FullSpace",
    "half-space": "kinlab.geometry:HalfSpace",
    "polytope": "kinlab.geometry:ConvexPolytope",
    "ball": "kinlab.geometry:BallDomain",
    "level-set": "kinlab.geometry:LevelSetDomain",
}


def _reload_registry() -> None:
    for name, value in _BUILTIN_CHARTS.items():
        _CHART_REGISTRY.setdefault(
            name, importlib_metadata.EntryPoint(name, value, _CHART_ENTRY_POINT)
        )
    for name, value in _BUILTIN_DOMAINS.items():
        _DOMAIN_REGISTRY.setdefault(
            name, importlib_metadata.EntryPoint(name, value, _DOMAIN_ENTRY_POINT)
        )

    entry_points = importlib_metadata.entry_points()
    # Classes are loaded on first use, not here.
    _CHART_REGISTRY.update(
        {
            entry_point.name: entry_point
            for entry_point in entry_points.select(group=_CHART_ENTRY_POINT)
        }
    )
    _DOMAIN_REGISTRY.update(
        {
            entry_point.name: entry_point
            for entry_point in entry_points.select(group=_DOMAIN_ENTRY_POINT)
        }
    )


_reload_registry()


def _resolve(registry: Dict[str, Any], kind: str, label: str) -> Any:
    registered_cls = registry.get(kind)
    if not registered_cls:
        raise ValueError(f"Unknown {label}: '{kind}'")

    if isinstance(registered_cls, importlib_metadata.EntryPoint):
        registry[kind] = registered_cls = registered_cls.load()
    return registered_cls


def prepare_chart(kind: str, **kwargs: Any) -> BaseChart:
    """Get the chart for the given `kind` with the given configuration."""
    chart_cls = _resolve(_CHART_REGISTRY, kind, "chart")
    return chart_cls.from_config(config=kwargs)


def prepare_domain(kind: str, **kwargs: Any) -> Domain:
    """Get the spatial domain for the given `kind` with the given configuration."""
    domain_cls = _resolve(_DOMAIN_REGISTRY, kind, "domain")
    return domain_cls.from_config(config=kwargs)


def registered_kinds() -> Dict[str, list]:
    return {
        "charts": sorted(_CHART_REGISTRY),
        "domains": sorted(_DOMAIN_REGISTRY),
    }
