"""Command-line pipeline: tune-pid, generate, train, evaluate, scenario, verify.

Every command is driven by a declarative config file, is idempotent for a
fixed (config, seeds) pair, and records a manifest of config/input/output
hashes under the output directory.  Exit codes: 0 success, 2 config error,
3 missing upstream artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_run_config
from .data import ChecksumError
from .fileio import atomic_write_text, fmt_float, sha256_file
from .meals import default_profile_path, load_meal_profile
from .metrics import format_report
from .patient import default_cohort_path, load_cohort
from .pipeline import (MissingArtifactError, Workspace, run_parallel,
                       verify_manifests, write_manifest)
from .scenarios import (FIGURE_FILES, ScenarioConfig, ScenarioRow,
                        ScenarioResult, run_scenario, write_scenario_csv)
from .simulator import SimulationDivergedError
from .td3bc import TrainingDivergedError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


def _workspace(config: RunConfig) -> Workspace:
    cohort_path = config.cohort_file or default_cohort_path()
    profile_path = config.meal_profile_file or default_profile_path()
    cohort = load_cohort(cohort_path)
    for patient_id in config.patients:
        if patient_id not in cohort:
            raise ConfigError(f"patient {patient_id!r} not in cohort {cohort_path}")
    profile = load_meal_profile(profile_path)
    return Workspace(config.out_dir, cohort, profile, config.episode,
                     jobs=config.jobs)


def _input_files(config: RunConfig) -> list[Path]:
    files = [config.path,
             config.cohort_file or default_cohort_path(),
             config.meal_profile_file or default_profile_path()]
    return [Path(f) for f in files]


def cmd_tune_pid(config: RunConfig) -> int:
    ws = _workspace(config)
    tasks = [(ws.tune, (pid, config.grid, config.grid_ranks))
             for pid in config.patients]
    outputs = [Path(p) for p in run_parallel(tasks, config.jobs)]
    write_manifest(ws.root, "tune-pid", sha256_file(config.path),
                   _input_files(config), outputs)
    for path in outputs:
        print(f"tuned: {path}")
    return EXIT_OK


def cmd_generate(config: RunConfig) -> int:
    ws = _workspace(config)
    specs = [config.dataset_spec(pid, seed)
             for pid in config.patients for seed in config.train_seeds]
    inputs = _input_files(config) + [ws.pid_path(s.patient_id) for s in specs]
    for s in specs:  # fail fast before spawning workers
        ws.demonstrator(s.patient_id, s.demonstrator_rank)
    tasks = [(ws.generate, (spec,)) for spec in specs]
    outputs = [Path(p) for p in run_parallel(tasks, config.jobs)]
    write_manifest(ws.root, "generate", sha256_file(config.path), inputs, outputs)
    for path in outputs:
        print(f"dataset: {path}")
    return EXIT_OK


def cmd_train(config: RunConfig) -> int:
    ws = _workspace(config)
    specs = [config.dataset_spec(pid, seed)
             for pid in config.patients for seed in config.train_seeds]
    for spec in specs:
        if not ws.dataset_path(spec).exists():
            raise MissingArtifactError(
                f"dataset {ws.dataset_path(spec)} not found (run generate)")
    tasks = []
    for algorithm in config.train_algorithms:
        for spec in specs:
            tasks.append((ws.train, (algorithm, spec,
                                     config.learner_configs[algorithm])))
    outputs = [Path(p) for p in run_parallel(tasks, config.jobs)]
    inputs = _input_files(config) + [ws.dataset_path(s) for s in specs]
    write_manifest(ws.root, "train", sha256_file(config.path), inputs, outputs)
    for path in outputs:
        print(f"policy: {path}")
    return EXIT_OK


def _evaluation_rows(config: RunConfig, ws: Workspace) -> ScenarioResult:
    specs = [config.dataset_spec(pid, seed)
             for pid in config.patients for seed in config.train_seeds]
    result = ScenarioResult(kind="standard")
    for algorithm in config.eval_algorithms:
        report, _ = ws.evaluate_algorithm(
            algorithm, specs, list(config.test_seeds),
            eval_days=config.eval_days,
            carb_overestimate=config.eval_overestimate)
        result.rows.append(ScenarioRow(0.0, algorithm, report))
    pid_report, _ = ws.evaluate_pid_baseline(
        list(config.patients), 1, list(config.test_seeds),
        eval_days=config.eval_days, carb_overestimate=config.eval_overestimate)
    result.rows.append(ScenarioRow(0.0, "pid", pid_report))
    return result


def cmd_evaluate(config: RunConfig) -> int:
    ws = _workspace(config)
    result = _evaluation_rows(config, ws)
    report_dir = ws.report_dir()
    csv_path = report_dir / "evaluation.csv"
    write_scenario_csv(result, csv_path)
    text = "\n\n".join(format_report(row.report, label=row.algorithm)
                       for row in result.rows)
    txt_path = report_dir / "evaluation.txt"
    atomic_write_text(txt_path, text + "\n")
    group_path = report_dir / "evaluation_by_group.csv"
    _write_group_breakdown(result, group_path)
    outputs = [csv_path, txt_path, group_path]
    inputs = _input_files(config)
    write_manifest(ws.root, "evaluate", sha256_file(config.path), inputs, outputs)
    print(text)
    return EXIT_OK


def _write_group_breakdown(result: ScenarioResult, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["algorithm", "age_group", "reward_mean", "tir_mean",
                     "tbr_mean", "cv_mean", "failure_mean", "n_rollouts"])
    for row in result.rows:
        groups = row.report.by_age_group or {"all": row.report}
        for group, sub in groups.items():
            writer.writerow([row.algorithm, group,
                             fmt_float(sub.reward_sum.mean), fmt_float(sub.tir_pct.mean),
                             fmt_float(sub.tbr_pct.mean), fmt_float(sub.cv_pct.mean),
                             fmt_float(sub.failure_pct.mean), sub.n_rollouts])
    atomic_write_text(path, buf.getvalue())


def cmd_scenario(config: RunConfig) -> int:
    if config.scenario_kind is None:
        raise ConfigError("[scenario] must define kind")
    ws = _workspace(config)
    scenario = ScenarioConfig(config.scenario_kind, config.scenario_parameters)
    base_spec = config.dataset_spec(config.patients[0], 0)
    result = run_scenario(ws, scenario, list(config.scenario_algorithms),
                          list(config.patients), list(config.train_seeds),
                          list(config.test_seeds), config.learner_configs,
                          base_spec)
    fig_path = ws.report_dir() / FIGURE_FILES[scenario.kind]
    write_scenario_csv(result, fig_path)
    write_manifest(ws.root, f"scenario-{scenario.kind}", sha256_file(config.path),
                   _input_files(config), [fig_path])
    print(f"scenario table: {fig_path}")
    return EXIT_OK


def cmd_verify(out_dir: str) -> int:
    problems = verify_manifests(Path(out_dir))
    if problems:
        for p in problems:
            print(f"verify: {p}", file=sys.stderr)
        return EXIT_MISSING
    print(f"verify: all manifests under {out_dir} check out")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glucorl",
        description="Offline RL insulin-dosing laboratory pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("tune-pid", "generate", "train", "evaluate", "scenario"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--jobs", type=int, default=None, help="parallel jobs")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace configured seeds with this base seed")
        p.add_argument("--out", default=None, help="override output directory")
    v = sub.add_parser("verify")
    v.add_argument("--out", required=True, help="output directory to re-hash")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.out)
        config = load_run_config(args.config, jobs_override=args.jobs,
                                 out_override=args.out,
                                 seed_override=args.seed_override)
        handler = {
            "tune-pid": cmd_tune_pid,
            "generate": cmd_generate,
            "train": cmd_train,
            "evaluate": cmd_evaluate,
            "scenario": cmd_scenario,
        }[args.command]
        return handler(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, FileNotFoundError, ChecksumError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (SimulationDivergedError, TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
