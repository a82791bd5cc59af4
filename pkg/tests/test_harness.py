from dataclasses import replace

import pytest

from kinlab import harness
from kinlab.common import UsageError
from kinlab.logs import LogLevel, LogSource
from kinlab.settings import DEFAULT_SETTINGS


@pytest.fixture
def records():
    return []


@pytest.fixture
def settings(records):
    return replace(DEFAULT_SETTINGS, log_hook=records.append)


def test_check_names():
    assert list(harness.CHECK_NAMES) == [
        "group-distance",
        "distance-anchor",
        "volume-anchors",
        "mu-bound",
        "solver",
        "linfty-ensemble",
        "holder-decay",
        "vanishing-order",
        "weak-residual",
        "mirror-extension",
    ]
    assert list(harness.CHECK_NAMES.values()) == list(range(1, 11))


def test_cheap_checks_pass(settings):
    results = harness.verify_all(
        settings, samples=20_000, only=["volume-anchors", "distance-anchor"]
    )
    assert [result.id for result in results] == [2, 3]
    for result in results:
        assert result.passed, result.detail

    anchor = results[0].metrics
    assert anchor["distance_r0.25"] == pytest.approx(0.25)
    assert anchor["distance_r0.5"] == pytest.approx(0.5)
    assert results[1].metrics["exact_gap"] <= 1e-12


def test_group_and_distance_check_runs_at_full_size(settings):
    [result] = harness.verify_all(settings, samples=20_000, only=["group-distance"])
    assert result.passed, result.detail
    assert result.metrics["samples"] == harness.INVARIANCE_SAMPLES == 10_000
    assert result.metrics["oracle_pairs"] == harness.ORACLE_PAIRS == 1000
    assert result.metrics["left_invariance"] <= 1e-6


def test_unknown_checks(settings):
    with pytest.raises(UsageError, match="Unknown checks: solvr"):
        harness.verify_all(settings, only=["solver", "solvr"])


def test_raising_checks_are_reported_as_failures(settings, records, monkeypatch):
    def broken(context):
        raise RuntimeError("out of memory")

    monkeypatch.setattr(harness, "_CHECKS", [(5, "solver", broken)])
    [result] = harness.verify_all(settings)
    assert not result.passed
    assert result.detail == "RuntimeError: out of memory"

    assert all(record.source is LogSource.HARNESS for record in records)
    assert records[-1].level is LogLevel.ERROR
    assert "FAILED" in records[-1].message


def test_results_are_sorted_by_id(settings, monkeypatch):
    def passing(number, name):
        return lambda context: harness.CheckResult(number, name, True, "")

    monkeypatch.setattr(
        harness,
        "_CHECKS",
        [
            (3, "volume-anchors", passing(3, "volume-anchors")),
            (1, "group-distance", passing(1, "group-distance")),
        ],
    )
    assert [result.id for result in harness.verify_all(settings)] == [1, 3]


@pytest.mark.parametrize("level", [0, 1, 2])
def test_manufactured_problems_are_stable(level):
    problem = harness.mms_problem(level)
    problem.check_stability()
    assert problem.grid.nx == 16 * 2**level + 1
    assert problem.name == f"mms-{level}"


def test_rough_problems_depend_on_the_seed():
    first, second = harness.rough_problem(0), harness.rough_problem(1)
    first.check_stability()
    assert first.run_id != second.run_id
    assert first.run_id == harness.rough_problem(0).run_id
