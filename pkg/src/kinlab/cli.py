from __future__ import annotations

import csv
import json
import sys
from argparse import ArgumentParser, Namespace
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from kinlab.analysis import (
    DecayReport,
    _json_safe,
    decay_consistency,
    decay_report,
    holder_norm,
    holder_seminorm,
    linfty_ratio,
)
from kinlab.common import (
    DegenerateReportError,
    GeometryError,
    RegionError,
    SolverError,
    UsageError,
    VerificationError,
)
from kinlab.galilean import distance_to_incoming, kinetic_distance_with_witness
from kinlab.geometry import (
    Domain,
    KineticCylinder,
    LevelSetDomain,
    classify,
    inside_fraction,
    qminus_exterior_measure,
)
from kinlab.harness import verify_all
from kinlab.logs import Log, LogLevel, LogSource
from kinlab.scenario import Scenario, ScenarioMode, load_scenario
from kinlab.settings import DEFAULT_SETTINGS, LabSettings
from kinlab.solver import ProblemSpec, SnapshotFormat, solve

# The half-line benchmark run by `kinlab verify-all` without --config.
BUNDLED_SCENARIO = Path(__file__).parent / "scenarios" / "half_line.ini"

EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION = 0, 1, 2

_USAGE_ERRORS = (
    UsageError,
    GeometryError,
    RegionError,
    SolverError,
    DegenerateReportError,
)


def _stderr_hook(verbose: bool) -> Callable[[Log], None]:
    threshold = LogLevel.DEBUG if verbose else LogLevel.INFO

    def hook(log: Log) -> None:
        if log.level.rank >= threshold.rank:
            print(log, file=sys.stderr)

    return hook


def _write_json(path: Path, payload: Any) -> Path:
    path.write_text(
        json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def _write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    def render(value: Any) -> str:
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (list, tuple)):
            return " ".join(render(item) for item in value)
        return str(value)

    # csv terminates records with CRLF and quotes as needed (RFC 4180).
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.DictWriter(stream, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow({key: render(value) for key, value in row.items()})
    return path


class _Reports:
    """Writes the JSON report and CSV tables of one run into its directory."""

    def __init__(self, directory: Path, fmt: Optional[str], settings: LabSettings) -> None:
        self.directory = directory
        self.fmt = fmt
        self.settings = settings
        self.written: List[Path] = []

    def json(self, name: str, payload: Any) -> None:
        if self.fmt in (None, "json"):
            self.record(_write_json(self.directory / f"{name}.json", payload))

    def csv(self, name: str, fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
        if self.fmt in (None, "csv"):
            self.record(_write_csv(self.directory / f"{name}.csv", fieldnames, rows))

    def decay(self, name: str, report: DecayReport, extra: Dict[str, Any]) -> None:
        if self.fmt in (None, "json"):
            payload = asdict(report)
            payload.update(extra)
            self.record(_write_json(self.directory / f"{name}.json", payload))
        if self.fmt in (None, "csv"):
            self.record(report.write_csv(self.directory / f"{name}.csv"))

    def record(self, path: Path) -> None:
        self.written.append(path)
        self.settings.emit(f"Wrote {path}", source=LogSource.CLI)


def _point_row(point: Any) -> List[float]:
    return point.as_array().tolist()


def _chart_conditions(
    dom: Domain, scenario: Scenario, payload: Dict[str, Any], settings: LabSettings
) -> None:
    if not isinstance(dom, LevelSetDomain) or dom.chart is None:
        return
    conditions = [
        float(dom.chart_condition(center.x[None])[0]) for center in scenario.centers()
    ]
    settings.emit(
        f"Chart condition numbers at the centers: {conditions}",
        source=LogSource.CLI,
        level=LogLevel.DEBUG,
    )
    payload["chart_condition"] = conditions


def _run_distance(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    z1, z2 = scenario.points()
    result = kinetic_distance_with_witness(z1, z2)
    print(f"d = {result.distance!r}")
    print(f"w = {result.w.tolist()!r}")

    payload: Dict[str, Any] = {
        "z1": _point_row(z1),
        "z2": _point_row(z2),
        "distance": result.distance,
        "w": result.w.tolist(),
    }
    if "domain" in scenario.sections:
        dom = scenario.build_domain()
        margin = scenario.get("diagnostics", "margin", 0.0)
        incoming = {}
        for label, point in (("z1", z1), ("z2", z2)):
            found = distance_to_incoming(point, dom, margin=margin)
            incoming[label] = {
                "distance": found.distance,
                "witness": _point_row(found.witness),
                "w": found.w.tolist(),
            }
            print(f"d({label}, incoming) = {found.distance!r}")
        payload["incoming"] = incoming

    reports.json("distance", payload)
    reports.csv(
        "distance",
        ["z1", "z2", "distance", "w"],
        [{key: payload[key] for key in ("z1", "z2", "distance", "w")}],
    )
    return EXIT_OK


def _run_volume(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    dom = scenario.build_domain()
    method = scenario.get("diagnostics", "method", "monte-carlo")
    samples = scenario.samples or settings.samples
    rows = []
    for index, center in enumerate(scenario.centers()):
        kind = classify(center, dom).value
        for r in scenario.radii():
            estimate = inside_fraction(
                KineticCylinder(center, r), dom, method, samples=samples, seed=scenario.seed
            )
            rows.append(
                {
                    "center": index,
                    "class": kind,
                    "r": r,
                    "fraction": estimate.fraction,
                    "std_error": estimate.std_error,
                    "samples": estimate.samples,
                    "method": estimate.method.value,
                }
            )

    centers = [_point_row(c) for c in scenario.centers()]
    payload: Dict[str, Any] = {"centers": centers, "rows": rows}
    _chart_conditions(dom, scenario, payload, settings)
    reports.json("volume", payload)
    reports.csv(
        "volume", ["center", "class", "r", "fraction", "std_error", "samples", "method"], rows
    )
    return EXIT_OK


def _run_mu_check(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    dom = scenario.build_domain()
    method = scenario.get("diagnostics", "method", "monte-carlo")
    samples = scenario.samples or settings.samples
    rows = []
    for index, center in enumerate(scenario.centers()):
        report = qminus_exterior_measure(
            center, dom, samples=samples, seed=scenario.seed, method=method, settings=settings
        )
        rows.append({"center": index, **asdict(report)})

    centers = [_point_row(c) for c in scenario.centers()]
    payload: Dict[str, Any] = {"centers": centers, "rows": rows}
    _chart_conditions(dom, scenario, payload, settings)
    reports.json("mu-check", payload)
    reports.csv(
        "mu-check",
        ["center", "measure", "std_error", "mu_star", "hypothesis", "satisfied", "volume"],
        rows,
    )
    violated = [row["center"] for row in rows if row["satisfied"] is False]
    if violated:
        raise VerificationError(
            f"Q- exterior measure below mu* at center(s) {', '.join(map(str, violated))}"
        )
    return EXIT_OK


def _run_solve(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    problem = scenario.build_problem()
    solution = solve(problem, settings)
    fmt = SnapshotFormat(reports.fmt if reports.fmt in ("bin", "csv") else "bin")
    path = solution.dump(reports.directory / f"snapshot.{fmt.value}", fmt)
    reports.written.append(path)
    settings.emit(f"Wrote {path}", source=LogSource.CLI, run_id=problem.run_id)

    summary = {
        "name": problem.name,
        "run_id": problem.run_id,
        "mode": problem.mode.value,
        "steps": problem.steps,
        "time_step": problem.time_step,
        "grid": asdict(problem.grid),
        "final_time": float(solution.times[-1]),
        "min": float(solution.values[-1].min()),
        "max": float(solution.values[-1].max()),
    }
    if reports.fmt in (None, "json"):
        reports.record(_write_json(reports.directory / "solve.json", summary))
    return EXIT_OK


def _check_margins(problem: ProblemSpec, scenario: Scenario, radius: float) -> None:
    for center in scenario.centers():
        problem.check_velocity_margin(KineticCylinder(center, radius).velocity_extent)


def _run_decay(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    problem = scenario.build_problem()
    observable = scenario.get("diagnostics", "observable", "osc")
    # The local L-infinity ratio is reported only when a truncation level is set.
    level = scenario.get("diagnostics", "level")
    reach = scenario.radii() + ([1.0] if level is not None else [])
    _check_margins(problem, scenario, max(reach))
    solution = solve(problem, settings)
    dom = problem.domain
    samples = scenario.samples or settings.samples
    for index, center in enumerate(scenario.centers()):
        report = decay_report(
            solution,
            center,
            scenario.radii(),
            dom,
            observable=observable,
            samples=samples,
            seed=scenario.seed,
            settings=settings,
        )
        extra: Dict[str, Any] = {"class": classify(center, dom).value}
        if observable == "osc" and not report.infinite_order:
            try:
                extra["consistency"] = asdict(decay_consistency(report))
            except DegenerateReportError as exc:
                extra["consistency"] = str(exc)
        if level is not None:
            extra["level"] = level
            extra["linfty_ratio"] = linfty_ratio(
                solution, problem, center, level=level, samples=samples, seed=scenario.seed
            )
        reports.decay(f"decay-{index}", report, extra)
    return EXIT_OK


def _run_holder(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    problem = scenario.build_problem()
    _check_margins(problem, scenario, max(scenario.radii()))
    solution = solve(problem, settings)
    dom = problem.domain
    alpha = scenario.get("diagnostics", "alpha")
    samples = min(scenario.samples or settings.samples, 2000)
    rows = []
    for index, center in enumerate(scenario.centers()):
        for r in scenario.radii():
            cylinder = KineticCylinder(center, r)
            rows.append(
                {
                    "center": index,
                    "r": r,
                    "alpha": alpha,
                    "seminorm": holder_seminorm(
                        solution, cylinder, dom, alpha, samples=samples, seed=scenario.seed
                    ),
                    "norm": holder_norm(
                        solution, cylinder, dom, alpha, samples=samples, seed=scenario.seed
                    ),
                }
            )
    reports.json("holder", {"centers": [_point_row(c) for c in scenario.centers()], "rows": rows})
    reports.csv("holder", ["center", "r", "alpha", "seminorm", "norm"], rows)
    return EXIT_OK


def _run_verify_all(scenario: Scenario, reports: _Reports, settings: LabSettings) -> int:
    results = verify_all(
        settings,
        samples=scenario.samples,
        seed=scenario.seed,
        only=scenario.get("scenario", "checks"),
    )
    for result in results:
        print(f"{result.id:>2} {result.name:<18} {'PASS' if result.passed else 'FAIL'}")

    rows = [asdict(result) for result in results]
    reports.json(
        "verify-all",
        {"scenario": scenario.name, "passed": all(r.passed for r in results), "checks": rows},
    )
    reports.csv(
        "verify-all",
        ["id", "name", "passed", "detail"],
        [{key: row[key] for key in ("id", "name", "passed", "detail")} for row in rows],
    )
    return EXIT_OK if all(result.passed for result in results) else EXIT_VERIFICATION


_COMMANDS: Dict[ScenarioMode, Callable[[Scenario, _Reports, LabSettings], int]] = {
    ScenarioMode.DISTANCE: _run_distance,
    ScenarioMode.VOLUME: _run_volume,
    ScenarioMode.MU_CHECK: _run_mu_check,
    ScenarioMode.SOLVE: _run_solve,
    ScenarioMode.DECAY: _run_decay,
    ScenarioMode.HOLDER: _run_holder,
    ScenarioMode.VERIFY_ALL: _run_verify_all,
}


def _build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file")
    common.add_argument("--out", type=Path, help="directory for reports")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--samples", type=int, help="override the Monte-Carlo sample count")
    common.add_argument(
        "--format",
        choices=["csv", "json", "bin"],
        help="write only this format (snapshots: bin or csv)",
    )
    common.add_argument("--verbose", action="store_true", help="also log debug records")

    parser = ArgumentParser(prog="kinlab", description="Kinetic Fokker-Planck verification lab.")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    for mode in ScenarioMode:
        commands.add_parser(mode.value, parents=[common], help=f"run a {mode.value} scenario")
    return parser


def run(options: Namespace, settings: LabSettings) -> int:
    """Load the scenario, dispatch the subcommand and write its reports."""
    mode = ScenarioMode(options.command)
    config = options.config
    if config is None:
        if mode is not ScenarioMode.VERIFY_ALL:
            raise UsageError(f"'{mode.value}' needs --config <path>")
        config = BUNDLED_SCENARIO

    scenario = load_scenario(config).with_overrides(seed=options.seed, samples=options.samples)
    if scenario.mode is not mode:
        settings.emit(
            f"Scenario mode '{scenario.mode.value}' differs from the '{mode.value}' subcommand",
            source=LogSource.CLI,
            level=LogLevel.WARNING,
        )
        scenario.require(mode)
    if options.format == "bin" and mode is not ScenarioMode.SOLVE:
        raise UsageError("--format bin only applies to solver snapshots")

    output_dir = options.out or scenario.output_dir(settings.output_dir)
    settings = replace(
        settings,
        output_dir=output_dir,
        seed=scenario.seed,
        samples=scenario.samples or settings.samples,
    )
    reports = _Reports(settings.report_dir_for(scenario.name), options.format, settings)
    settings.emit(
        f"Running '{scenario.name}' ({mode.value}) into {reports.directory}",
        source=LogSource.CLI,
        level=LogLevel.INFO,
        run_id=scenario.run_id,
    )
    return _COMMANDS[mode](scenario, reports, settings)


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    options = parser.parse_args(argv)
    settings = replace(DEFAULT_SETTINGS, log_hook=_stderr_hook(options.verbose))
    try:
        return run(options, settings)
    except VerificationError as exc:
        settings.emit(str(exc), source=LogSource.CLI, level=LogLevel.ERROR)
        return EXIT_VERIFICATION
    except _USAGE_ERRORS as exc:
        settings.emit(str(exc), source=LogSource.CLI, level=LogLevel.ERROR)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
