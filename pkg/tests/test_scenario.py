import textwrap
from pathlib import Path

import numpy as np
import pytest

from kinlab.cli import BUNDLED_SCENARIO
from kinlab.common import ScenarioError
from kinlab.geometry import HalfSpace
from kinlab.scenario import Scenario, ScenarioMode, load_scenario
from kinlab.solver import BoundaryMode


def scenario_text(body):
    return textwrap.dedent(body).lstrip()


DISTANCE = scenario_text(
    """
    [scenario]
    name = pair
    mode = distance

    [points]
    z1 = 0.25, -0.25, -1
    z2 = 0, 0, -1
    """
)


def test_bundled_scenario_round_trip():
    scenario = load_scenario(BUNDLED_SCENARIO)
    assert scenario.name == "half-line"
    assert scenario.mode is ScenarioMode.VERIFY_ALL

    again = Scenario.loads(scenario.dumps())
    assert again == scenario
    assert again.dumps() == scenario.dumps()


def test_typed_values():
    scenario = Scenario.loads(DISTANCE)
    z1, z2 = scenario.points()
    assert z1.as_array() == pytest.approx([0.25, -0.25, -1.0])
    assert z2.as_array() == pytest.approx([0.0, 0.0, -1.0])
    assert scenario.seed == 0
    assert scenario.samples is None
    assert scenario.get("diagnostics", "alpha", 0.5) == 0.5


def test_comments_are_ignored():
    text = DISTANCE.replace("z2 = 0, 0, -1", "z2 = 0, 0, -1  # boundary state")
    assert Scenario.loads(text) == Scenario.loads(DISTANCE)


def test_unknown_key_position():
    text = DISTANCE + "z9 = 1\n"
    with pytest.raises(ScenarioError, match=r"^pair.ini:8:1: unknown key 'z9' in \[points\]$"):
        Scenario.loads(text, source="pair.ini")


def test_unknown_section():
    text = DISTANCE + "\n[extras]\nanswer = 42\n"
    with pytest.raises(ScenarioError, match=r"pair.ini:9:1: unknown section \[extras\]"):
        Scenario.loads(text, source="pair.ini")


def test_invalid_value_position():
    text = DISTANCE.replace("mode = distance", "mode = distance\nsamples = -3")
    with pytest.raises(ScenarioError, match=r"pair.ini:4:1: invalid value for 'samples'"):
        Scenario.loads(text, source="pair.ini")


@pytest.mark.parametrize(
    "text, line",
    [
        ("[scenario]\nmode = distance\nnot an option\n", 3),
        ("mode = distance\n", 1),
        ("[scenario]\nmode = distance\nmode = solve\n", 3),
    ],
)
def test_parse_errors_carry_the_line(text, line):
    with pytest.raises(ScenarioError, match=rf"^broken.ini:{line}:1: "):
        Scenario.loads(text, source="broken.ini")


def test_missing_mode():
    with pytest.raises(ScenarioError, match="needs a 'mode'"):
        Scenario.loads("[scenario]\nname = nothing\n")


def test_missing_sections():
    with pytest.raises(ScenarioError, match=r"mode 'decay' needs a \[grid\] section"):
        Scenario.loads("[scenario]\nmode = decay\n")
    with pytest.raises(ScenarioError, match=r"needs 'z2' in \[points\]"):
        Scenario.loads("[scenario]\nmode = distance\n\n[points]\nz1 = 0, 0, 0\n")


def test_require_checks_other_modes():
    scenario = Scenario.loads(DISTANCE)
    scenario.require("distance")
    with pytest.raises(ScenarioError, match="mode 'volume'"):
        scenario.require(ScenarioMode.VOLUME)


def test_overrides():
    scenario = Scenario.loads(DISTANCE)
    changed = scenario.with_overrides(seed=7, samples=1000)
    assert (changed.seed, changed.samples) == (7, 1000)
    assert changed.run_id != scenario.run_id
    assert scenario.seed == 0

    with pytest.raises(ScenarioError, match="overrides"):
        scenario.with_overrides(samples=0)


def test_builders_of_the_bundled_scenario():
    scenario = load_scenario(BUNDLED_SCENARIO)
    domain = scenario.build_domain()
    assert isinstance(domain, HalfSpace)
    assert domain.normal_vector == pytest.approx([1.0])

    problem = scenario.build_problem()
    assert (problem.grid.nx, problem.grid.nv) == (33, 49)
    assert problem.mode is BoundaryMode.INFLUX
    assert problem.coefficients.upper == 2.0
    assert problem.t_end == 1.0
    assert problem.initial(np.array([-0.5]), np.array([0.0])) == pytest.approx([1.0])

    assert len(scenario.centers()) == 3
    assert scenario.radii() == pytest.approx([0.5, 0.25, 0.125, 0.0625])


def test_manufactured_solution_drives_the_data():
    text = scenario_text(
        """
        [scenario]
        mode = solve

        [coefficients]
        manufactured = v**2 + t

        [boundary]
        mode = influx

        [grid]
        nx = 9
        nv = 9
        dt = 0.0625
        velocity_bound = 2
        """
    )
    problem = Scenario.loads(text, source="mms.ini").build_problem()
    assert problem.name == "mms"
    assert problem.influx(0.5, 0.0, -1.0) == pytest.approx(1.5)
    source = problem.coefficients.source(np.array([0.3]), np.array([[-0.5]]), np.array([[1.0]]))
    assert source == pytest.approx([1.0 - 2.0])


def test_problem_domain_without_domain_section():
    text = scenario_text(
        """
        [scenario]
        mode = solve

        [boundary]
        mode = periodic

        [grid]
        nx = 9
        nv = 9
        dt = 0.01
        """
    )
    assert Scenario.loads(text).build_domain().dim == 1


def test_invalid_domain_configuration():
    text = scenario_text(
        """
        [scenario]
        mode = volume

        [domain]
        kind = ball
        center = 0

        [diagnostics]
        centers = 0, 0, 0
        """
    )
    with pytest.raises(ScenarioError, match="building the 'ball' domain"):
        Scenario.loads(text, source="ball.ini").build_domain()


def test_explicit_radii():
    text = DISTANCE + "\n[diagnostics]\nradii = 0.4 0.2 0.1\n"
    assert Scenario.loads(text).radii() == pytest.approx([0.4, 0.2, 0.1])


def test_output_directory_is_relative_to_the_file(tmp_path):
    path = tmp_path / "pair.ini"
    path.write_text(DISTANCE.replace("mode = distance", "mode = distance\noutput = reports"))
    scenario = load_scenario(path)
    assert scenario.output_dir(Path("/unused")) == tmp_path / "reports"
    assert Scenario.loads(DISTANCE).output_dir(Path("/default")) == Path("/default")


def test_unreadable_files(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.ini")

    path = tmp_path / "latin.ini"
    path.write_bytes("[scenario]\nname = caf\xe9\n".encode("latin-1"))
    with pytest.raises(ScenarioError, match="UTF-8"):
        load_scenario(path)
