"""Scenario experiments: sample-size sweep, bolus overestimation, suboptimal
demonstrators, irregular meal schedules.

Each scenario sweeps one stressor over a documented grid, trains/evaluates
the requested algorithms per grid point and writes a per-point comparison
table (one figure-data CSV per scenario) alongside the PID reference rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .fileio import atomic_write_text, fmt_float
from .metrics import GlycemicReport
from .pipeline import DatasetSpec, Workspace

SCENARIO_KINDS = ("standard", "sample_size", "bolus_overestimate",
                  "suboptimal_pid", "irregular_meals")

SCENARIO_GRIDS = {
    "sample_size": (10_000, 50_000, 100_000, 500_000),
    "bolus_overestimate": (0.0, 0.1, 0.2, 0.3, 0.4),
    "suboptimal_pid": (1, 10, 20),
    "irregular_meals": (0.0, 30.0, 60.0),
}

FIGURE_FILES = {
    "sample_size": "fig1a.csv",
    "bolus_overestimate": "fig1b.csv",
    "suboptimal_pid": "fig2a.csv",
    "irregular_meals": "fig2b.csv",
    "standard": "standard.csv",
}


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    parameters: tuple[float, ...] = ()   # grid points; empty = documented default

    def validate(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "standard":
            return
        allowed = SCENARIO_GRIDS[self.kind]
        for p in self.parameters:
            if self.kind == "suboptimal_pid" and int(p) != p:
                raise ValueError("demonstrator ranks must be integers")
            if self.kind == "bolus_overestimate" and not 0 <= p <= 1:
                raise ValueError("overestimation fraction must be in [0, 1]")
            if self.kind == "sample_size" and p <= 0:
                raise ValueError("sample sizes must be positive")
            if self.kind == "irregular_meals" and p < 0:
                raise ValueError("meal-time sd must be >= 0")
        _ = allowed

    def grid(self) -> tuple[float, ...]:
        if self.kind == "standard":
            return (0.0,)
        return self.parameters or SCENARIO_GRIDS[self.kind]


@dataclass
class ScenarioRow:
    parameter: float
    algorithm: str
    report: GlycemicReport


@dataclass
class ScenarioResult:
    kind: str
    rows: list[ScenarioRow] = field(default_factory=list)


def _train_and_eval_point(ws: Workspace, algorithms: list[str],
                          learner_configs: dict, specs: list[DatasetSpec],
                          test_seeds: list[int],
                          eval_kwargs: dict) -> dict[str, GlycemicReport]:
    reports = {}
    for spec in specs:
        ws.ensure_dataset(spec)
    for algorithm in algorithms:
        for spec in specs:
            if not ws.policy_path(algorithm, spec).exists():
                ws.train(algorithm, spec, learner_configs[algorithm])
        reports[algorithm], _ = ws.evaluate_algorithm(
            algorithm, specs, test_seeds, **eval_kwargs)
    return reports


def run_scenario(ws: Workspace, scenario: ScenarioConfig, algorithms: list[str],
                 patient_ids: list[str], train_seeds: list[int],
                 test_seeds: list[int], learner_configs: dict,
                 base_spec: DatasetSpec) -> ScenarioResult:
    """Sweep one scenario grid; returns per-point reports for each algorithm.

    base_spec carries the standard-pipeline dataset knobs (sample count,
    demonstrator rank, exploration/announcement noise); each scenario
    overrides exactly the knob it stresses.  The PID reference is evaluated
    under the same conditions at every grid point.
    """
    scenario.validate()
    result = ScenarioResult(kind=scenario.kind)
    from dataclasses import replace

    def make_specs(**overrides) -> list[DatasetSpec]:
        return [replace(base_spec, patient_id=pid, seed=seed, **overrides)
                for pid in patient_ids for seed in train_seeds]

    for parameter in scenario.grid():
        eval_kwargs: dict = {}
        pid_rank = 1
        if scenario.kind == "standard":
            specs = make_specs()
        elif scenario.kind == "sample_size":
            specs = make_specs(n_samples=int(parameter))
        elif scenario.kind == "bolus_overestimate":
            specs = make_specs()
            eval_kwargs["carb_overestimate"] = float(parameter)
        elif scenario.kind == "suboptimal_pid":
            pid_rank = int(parameter)
            specs = make_specs(demonstrator_rank=pid_rank)
        else:  # irregular_meals: regenerate data and evaluate at the given sd;
               # sd == 0 also removes snack events
            sd = float(parameter)
            snacks = sd > 0
            specs = make_specs(meal_time_sd=sd, include_snacks=snacks)
            eval_kwargs["meal_time_sd"] = sd
            eval_kwargs["include_snacks"] = snacks

        reports = _train_and_eval_point(ws, algorithms, learner_configs, specs,
                                        test_seeds, eval_kwargs)
        for algorithm, report in reports.items():
            result.rows.append(ScenarioRow(parameter, algorithm, report))
        pid_report, _ = ws.evaluate_pid_baseline(
            patient_ids, pid_rank, test_seeds, **eval_kwargs)
        result.rows.append(ScenarioRow(parameter, "pid", pid_report))
    return result


def write_scenario_csv(result: ScenarioResult, path) -> None:
    """Figure-data table: one row per (grid point, algorithm)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["parameter", "algorithm",
                     "reward_mean", "reward_se", "tir_mean", "tir_se",
                     "tbr_mean", "tbr_se", "cv_mean", "cv_se",
                     "failure_mean", "failure_se", "n_rollouts"])
    for row in result.rows:
        r = row.report
        writer.writerow([fmt_float(row.parameter), row.algorithm,
                         fmt_float(r.reward_sum.mean), fmt_float(r.reward_sum.se),
                         fmt_float(r.tir_pct.mean), fmt_float(r.tir_pct.se),
                         fmt_float(r.tbr_pct.mean), fmt_float(r.tbr_pct.se),
                         fmt_float(r.cv_pct.mean), fmt_float(r.cv_pct.se),
                         fmt_float(r.failure_pct.mean), fmt_float(r.failure_pct.se),
                         r.n_rollouts])
    atomic_write_text(path, buf.getvalue())
