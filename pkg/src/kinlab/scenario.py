"""Scenario files: flat `[section]` / `key = value` text driving the cli.

Every value is kept as written, so a scenario serializes back to the text it
was read from (modulo comments and blank lines); typed values are produced by
the per-section schema below.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from kinlab.common import ScenarioError, _step, sha256_digest_of
from kinlab.galilean import PhasePoint
from kinlab.geometry import Domain
from kinlab.registry import prepare_domain
from kinlab.solver import (
    BoundaryMode,
    GridSpec,
    ProblemSpec,
    lambdify_field,
    manufactured_source,
    sample_rough_coefficients,
)
from kinlab.transform import CoefficientField

__all__ = [
    "Scenario",
    "ScenarioMode",
    "SCHEMA",
    "load_scenario",
]


class ScenarioMode(str, Enum):
    DISTANCE = "distance"
    VOLUME = "volume"
    MU_CHECK = "mu-check"
    SOLVE = "solve"
    DECAY = "decay"
    HOLDER = "holder"
    VERIFY_ALL = "verify-all"


def _floats(text: str) -> Tuple[float, ...]:
    values = tuple(float(part) for part in text.replace(",", " ").split())
    if not values:
        raise ValueError("expected at least one number")
    if not all(math.isfinite(value) for value in values):
        raise ValueError("all components must be finite")
    return values


def _point(text: str) -> PhasePoint:
    return PhasePoint.from_array(_floats(text))


def _points(text: str) -> Tuple[PhasePoint, ...]:
    return tuple(_point(part) for part in text.split(";") if part.strip())


def _matrix(text: str) -> Tuple[Tuple[float, ...], ...]:
    rows = tuple(_floats(part) for part in text.split(";") if part.strip())
    if len({len(row) for row in rows}) != 1 or len(rows) != len(rows[0]):
        raise ValueError("expected a square matrix with rows separated by ';'")
    return rows


def _faces(text: str) -> Tuple[Tuple[Tuple[float, ...], float], ...]:
    """'n1 n2 : offset; ...' into (normal, offset) pairs."""
    faces = []
    for part in text.split(";"):
        if not part.strip():
            continue
        normal, _, offset = part.partition(":")
        if not offset.strip():
            raise ValueError(f"face '{part.strip()}' needs 'normal : offset'")
        faces.append((_floats(normal), float(offset)))
    if not faces:
        raise ValueError("expected at least one face")
    return tuple(faces)


def _boolean(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in configparser.ConfigParser.BOOLEAN_STATES:
        return configparser.ConfigParser.BOOLEAN_STATES[lowered]
    raise ValueError(f"not a boolean: '{text}'")


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise ValueError("must be positive")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise ValueError("seeds are unsigned 64 bit integers")
    return value


def _names(text: str) -> Tuple[str, ...]:
    return tuple(part for part in text.replace(",", " ").split())


def _text(text: str) -> str:
    return text.strip()


def _choice(*options: str) -> Callable[[str], str]:
    def convert(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value

    return convert


Converter = Callable[[str], Any]

SCHEMA: Dict[str, Dict[str, Converter]] = {
    "scenario": {
        "name": _text,
        "mode": ScenarioMode,
        "seed": _seed,
        "samples": _positive_int,
        "output": _text,
        "checks": _names,
    },
    "domain": {
        "kind": _text,
        "normal": _floats,
        "offset": float,
        "faces": _faces,
        "center": _floats,
        "radius": float,
        "chart": _text,
        "curvature": float,
        "matrix": _matrix,
        "shift": _floats,
        "dimension": _positive_int,
        "convex": _boolean,
    },
    "points": {
        "z1": _point,
        "z2": _point,
    },
    "coefficients": {
        "kind": _choice("constant", "rough"),
        "diffusion": float,
        "drift": float,
        "source": float,
        "lower": float,
        "upper": float,
        "cells": _floats,
        "seed": _seed,
        "manufactured": _text,
    },
    "boundary": {
        "mode": BoundaryMode,
        "influx": _text,
        "initial": _text,
    },
    "grid": {
        "nx": _positive_int,
        "nv": _positive_int,
        "dt": float,
        "x_left": float,
        "x_right": float,
        "velocity_bound": float,
        "t_start": float,
        "t_end": float,
        "implicit": _boolean,
    },
    "diagnostics": {
        "centers": _points,
        "radii": _floats,
        "r0": float,
        "count": _positive_int,
        "alpha": float,
        "method": _choice("monte-carlo", "exact-1d"),
        "margin": float,
        "level": float,
        "observable": _choice("osc", "sup"),
    },
}

# Sections (and keys) every mode needs.
_REQUIRED: Dict[ScenarioMode, Dict[str, Tuple[str, ...]]] = {
    ScenarioMode.DISTANCE: {"points": ("z1", "z2")},
    ScenarioMode.VOLUME: {"domain": ("kind",), "diagnostics": ("centers",)},
    ScenarioMode.MU_CHECK: {"domain": ("kind",), "diagnostics": ("centers",)},
    ScenarioMode.SOLVE: {"grid": ("nx", "nv", "dt"), "boundary": ()},
    ScenarioMode.DECAY: {"grid": ("nx", "nv", "dt"), "boundary": (), "diagnostics": ("centers",)},
    ScenarioMode.HOLDER: {
        "grid": ("nx", "nv", "dt"),
        "boundary": (),
        "diagnostics": ("centers", "alpha"),
    },
    ScenarioMode.VERIFY_ALL: {},
}

_SECTION_HEADER = re.compile(r"^\s*\[(?P<name>[^\]]+)\]")
_OPTION = re.compile(r"^(?P<indent>\s*)(?P<key>[^=:\s\[#;][^=:]*?)\s*[=:]")


def _locate(text: str) -> Tuple[Dict[str, int], Dict[Tuple[str, str], Tuple[int, int]]]:
    """Line numbers of section headers and (line, column) of every key."""
    sections: Dict[str, int] = {}
    options: Dict[Tuple[str, str], Tuple[int, int]] = {}
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_HEADER.match(line)
        if header:
            current = header.group("name").strip()
            sections.setdefault(current, number)
            continue
        option = _OPTION.match(line)
        if option and current is not None:
            key = option.group("key").strip().lower()
            options.setdefault((current, key), (number, len(option.group("indent")) + 1))
    return sections, options


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: ScenarioMode
    sections: Dict[str, Dict[str, str]] = field(default_factory=dict)
    source: str = "<scenario>"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.name, self.mode, self.sections) == (other.name, other.mode, other.sections)

    @classmethod
    def loads(cls, text: str, source: str = "<scenario>") -> Scenario:
        parser = configparser.ConfigParser(
            interpolation=None,
            inline_comment_prefixes=("#", ";;"),
            default_section="__defaults__",
        )
        try:
            parser.read_string(text, source=source)
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ScenarioError(f"{source}:{lineno}:1: cannot parse {line.strip()!r}") from exc
        except configparser.MissingSectionHeaderError as exc:
            raise ScenarioError(
                f"{source}:{exc.lineno}:1: expected a [section] header before {exc.line.strip()!r}"
            ) from exc
        except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
            raise ScenarioError(f"{source}:{exc.lineno}:1: {exc.message}") from exc
        except configparser.Error as exc:
            raise ScenarioError(f"{source}: {exc.message}") from exc

        section_lines, option_lines = _locate(text)
        sections: Dict[str, Dict[str, str]] = {}
        for section in parser.sections():
            schema = SCHEMA.get(section)
            if schema is None:
                raise ScenarioError(
                    f"{source}:{section_lines.get(section, 0)}:1: unknown section [{section}]"
                )
            values = {}
            for key, raw in parser.items(section):
                line, column = option_lines.get((section, key), (section_lines[section], 1))
                converter = schema.get(key)
                if converter is None:
                    raise ScenarioError(
                        f"{source}:{line}:{column}: unknown key '{key}' in [{section}]"
                    )
                try:
                    converter(raw)
                except (TypeError, ValueError) as exc:
                    raise ScenarioError(
                        f"{source}:{line}:{column}: invalid value for '{key}': {exc}"
                    ) from exc
                values[key] = raw.strip()
            sections[section] = values

        header = sections.get("scenario", {})
        if "mode" not in header:
            raise ScenarioError(f"{source}: [scenario] needs a 'mode'")
        mode = ScenarioMode(header["mode"])
        name = header.get("name") or Path(source).stem or "scenario"
        scenario = cls(name, mode, sections, source)
        scenario.require(mode)
        return scenario

    def require(self, mode: Union[str, ScenarioMode]) -> None:
        """Check that the sections and keys the given mode reads are present."""
        mode = ScenarioMode(mode)
        for section, keys in _REQUIRED[mode].items():
            if section not in self.sections:
                raise ScenarioError(
                    f"{self.source}: mode '{mode.value}' needs a [{section}] section"
                )
            missing = [key for key in keys if key not in self.sections[section]]
            if missing:
                raise ScenarioError(
                    f"{self.source}: mode '{mode.value}' needs "
                    f"{', '.join(repr(key) for key in missing)} in [{section}]"
                )

    def dumps(self) -> str:
        """The scenario text, sections and keys in schema order."""
        blocks = []
        for section, schema in SCHEMA.items():
            values = self.sections.get(section)
            if values is None:
                continue
            lines = [f"[{section}]"]
            lines.extend(f"{key} = {values[key]}" for key in schema if key in values)
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def get(self, section: str, key: str, default: Any = None) -> Any:
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return default
        return SCHEMA[section][key](raw)

    def with_overrides(
        self, *, seed: Optional[int] = None, samples: Optional[int] = None
    ) -> Scenario:
        """The scenario with command line overrides folded into [scenario]."""
        sections = {name: dict(values) for name, values in self.sections.items()}
        header = sections.setdefault("scenario", {"mode": self.mode.value})
        with _step("applying command line overrides", ScenarioError):
            if seed is not None:
                header["seed"] = str(_seed(str(seed)))
            if samples is not None:
                header["samples"] = str(_positive_int(str(samples)))
        return Scenario(self.name, self.mode, sections, self.source)

    @property
    def seed(self) -> int:
        return self.get("scenario", "seed", 0)

    @property
    def samples(self) -> Optional[int]:
        return self.get("scenario", "samples")

    @property
    def run_id(self) -> str:
        return sha256_digest_of(self.dumps(), str(self.seed))

    def output_dir(self, default: Path) -> Path:
        output = self.get("scenario", "output")
        if output is None:
            return default
        path = Path(output)
        if not path.is_absolute() and self.source not in ("<scenario>", "<string>"):
            path = Path(self.source).parent / path
        return path

    def build_domain(self) -> Domain:
        values = self.sections.get("domain")
        if values is None:
            return self.build_problem().domain
        config = {key: self.get("domain", key) for key in values if key != "kind"}
        kind = self.get("domain", "kind")
        if "matrix" in config:
            config["matrix"] = np.asarray(config["matrix"], dtype=float)
        with _step(f"building the '{kind}' domain of {self.source}", ScenarioError):
            return prepare_domain(kind, **config)

    def build_coefficients(self) -> CoefficientField:
        kind = self.get("coefficients", "kind", "constant")
        drift = self.get("coefficients", "drift", 0.0)
        source = self.get("coefficients", "source", 0.0)
        if kind == "rough":
            lower = self.get("coefficients", "lower", 0.5)
            upper = self.get("coefficients", "upper", 2.0)
            cells = self.get("coefficients", "cells", (0.25, 0.25, 0.5))
            bound = self.get("grid", "velocity_bound", 4.0)
            box = (
                (self.get("grid", "t_start", 0.0), self.get("grid", "t_end", 0.1)),
                (self.get("grid", "x_left", -1.0), self.get("grid", "x_right", 0.0)),
                (-bound, bound),
            )
            with _step(f"sampling rough coefficients for {self.source}", ScenarioError):
                coefficients = sample_rough_coefficients(
                    self.get("coefficients", "seed", self.seed),
                    lower,
                    upper,
                    cells,
                    box=box,
                    drift=drift,
                    source=source,
                )
        else:
            with _step(f"building constant coefficients for {self.source}", ScenarioError):
                coefficients = CoefficientField.constant(
                    self.get("coefficients", "diffusion", 1.0), drift, source
                )

        exact = self.get("coefficients", "manufactured")
        if exact is not None:
            with _step(f"manufacturing the source for '{exact}'", ScenarioError):
                coefficients = coefficients.with_source(manufactured_source(exact, coefficients))
        return coefficients

    def build_problem(self) -> ProblemSpec:
        exact = self.get("coefficients", "manufactured")
        influx_text = self.get("boundary", "influx", exact or "0")
        initial_text = self.get("boundary", "initial", exact or "0")
        t_start = self.get("grid", "t_start", 0.0)

        with _step(f"reading the boundary data of {self.source}", ScenarioError):
            influx = lambdify_field(influx_text)
            initial_field = lambdify_field(initial_text)

        def initial(x: np.ndarray, v: np.ndarray) -> np.ndarray:
            return initial_field(t_start, x, v)

        grid = self.get("grid", "nx"), self.get("grid", "nv"), self.get("grid", "dt")
        with _step(f"building the problem of {self.source}", ScenarioError):
            return ProblemSpec(
                coefficients=self.build_coefficients(),
                initial=initial,
                grid=GridSpec(*grid),
                x_left=self.get("grid", "x_left", -1.0),
                x_right=self.get("grid", "x_right", 0.0),
                velocity_bound=self.get("grid", "velocity_bound", 4.0),
                t_start=t_start,
                t_end=self.get("grid", "t_end", 0.1),
                influx=influx,
                mode=self.get("boundary", "mode", BoundaryMode.INFLUX),
                implicit=self.get("grid", "implicit", True),
                seed=self.seed,
                name=self.name,
            )

    def centers(self) -> Tuple[PhasePoint, ...]:
        return self.get("diagnostics", "centers", ())

    def points(self) -> Tuple[PhasePoint, PhasePoint]:
        return self.get("points", "z1"), self.get("points", "z2")

    def radii(self) -> List[float]:
        """Explicit radii, or r0 / 2^k for k < count."""
        explicit = self.get("diagnostics", "radii")
        if explicit is not None:
            return list(explicit)
        r0 = self.get("diagnostics", "r0", 0.5)
        count = self.get("diagnostics", "count", 5)
        return [r0 / 2**k for k in range(count)]


def load_scenario(path: Union[str, os.PathLike]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"{path}: scenario files must be UTF-8 ({exc.reason})") from exc
    return Scenario.loads(text, source=str(path))
