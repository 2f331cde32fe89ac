"""Workspace orchestration: artifact layout, caching, manifests, parallel jobs.

Every produced file lives under one output directory with deterministic
names derived from the knobs that shape its content (patient, demonstrator
rank, sample count, meal-time sd, seed).  Commands record a manifest of
config/input/output hashes so a run can be re-verified after the fact.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controllers import OuParams, PidParams
from .data import generate_dataset, load_dataset, load_log, save_log
from .discrete_q import BcqConfig, CqlConfig, train_bcq_discrete, train_cql_discrete
from .env import EpisodeConfig
from .evaluate import evaluate_pid, evaluate_policy
from .fileio import read_params, sha256_file, write_params
from .meals import MealProfile
from .metrics import EvalTrace, GlycemicReport, compute_metrics
from .patient import PatientParams
from .policy import load_policy, save_policy
from .td3bc import Td3BcConfig, train_td3bc
from .tuning import GridSpec, load_pid_params, rank_pid_grid, save_pid_ranks

MANIFEST_FORMAT_VERSION = 1

ALGORITHMS = ("td3bc", "bcq", "cql")


class MissingArtifactError(FileNotFoundError):
    """An upstream artifact required by a command does not exist."""


@dataclass(frozen=True)
class DatasetSpec:
    """Knobs that shape a training dataset's content."""

    patient_id: str
    demonstrator_rank: int
    n_samples: int
    seed: int
    meal_time_sd: float | None = None   # None = profile default
    include_snacks: bool = True
    ou: OuParams = OuParams()
    carb_noise_sd: float = 0.1

    def tag(self) -> str:
        sd = "default" if self.meal_time_sd is None else f"{self.meal_time_sd:g}"
        snacks = "" if self.include_snacks else "_nosnacks"
        return (f"{self.patient_id}_rank{self.demonstrator_rank}"
                f"_n{self.n_samples}_msd{sd}{snacks}_seed{self.seed}")


class Workspace:
    """Paths and cached build steps under one output directory."""

    def __init__(self, root: str | Path, cohort: dict[str, PatientParams],
                 profile: MealProfile, episode: EpisodeConfig = EpisodeConfig(),
                 jobs: int = 1):
        self.root = Path(root)
        self.cohort = cohort
        self.profile = profile
        self.episode = episode
        self.jobs = max(1, jobs)

    # -- paths ---------------------------------------------------------------

    def pid_path(self, patient_id: str) -> Path:
        return self.root / "pid" / f"{patient_id}.params"

    def dataset_path(self, spec: DatasetSpec) -> Path:
        return self.root / "datasets" / f"{spec.tag()}.csv"

    def policy_path(self, algorithm: str, spec: DatasetSpec) -> Path:
        return self.root / "policies" / f"{algorithm}_{spec.tag()}.npz"

    def report_dir(self) -> Path:
        return self.root / "reports"

    def patient(self, patient_id: str) -> PatientParams:
        if patient_id not in self.cohort:
            raise MissingArtifactError(f"unknown patient id {patient_id!r}")
        return self.cohort[patient_id]

    # -- build steps -----------------------------------------------------------

    def tune(self, patient_id: str, grid: GridSpec,
             ranks: tuple[int, ...] = (1, 10, 20)) -> Path:
        """Grid-search the PID and persist the requested ranks."""
        patient = self.patient(patient_id)
        ranking = rank_pid_grid(grid, patient, self.profile)
        selected = {}
        for rank in ranks:
            if rank > len(ranking):
                raise ValueError(f"rank {rank} exceeds grid cardinality {len(ranking)}")
            reward, params = ranking[rank - 1]
            selected[rank] = (reward, params)
        path = self.pid_path(patient_id)
        save_pid_ranks(path, selected)
        return path

    def demonstrator(self, patient_id: str, rank: int) -> PidParams:
        path = self.pid_path(patient_id)
        if not path.exists():
            raise MissingArtifactError(
                f"no tuned PID for {patient_id}: expected {path} (run tune-pid first)")
        return load_pid_params(path, rank)

    def generate(self, spec: DatasetSpec) -> Path:
        """Create the dataset log for a spec (always recomputes)."""
        patient = self.patient(spec.patient_id)
        demonstrator = self.demonstrator(spec.patient_id, spec.demonstrator_rank)
        log = generate_dataset(
            patient, demonstrator, spec.n_samples, spec.ou, spec.carb_noise_sd,
            spec.seed, self.profile, self.episode,
            meal_time_sd=spec.meal_time_sd, include_snacks=spec.include_snacks)
        log.provenance["demonstrator_rank"] = str(spec.demonstrator_rank)
        path = self.dataset_path(spec)
        save_log(log, path)
        return path

    def ensure_dataset(self, spec: DatasetSpec) -> Path:
        path = self.dataset_path(spec)
        if not path.exists():
            return self.generate(spec)
        return path

    def train(self, algorithm: str, spec: DatasetSpec, learner_config) -> Path:
        """Train one policy from a dataset (always recomputes).

        The dataset's seed also seeds the learner, so one "training seed"
        covers the whole collect-and-train pipeline.
        """
        path = self.dataset_path(spec)
        if not path.exists():
            raise MissingArtifactError(
                f"dataset {path} not found (run generate first)")
        patient = self.patient(spec.patient_id)
        dataset = load_dataset(path, patient)
        if algorithm == "td3bc":
            policy, _ = train_td3bc(dataset, learner_config, spec.seed)
        elif algorithm == "bcq":
            policy, _ = train_bcq_discrete(dataset, learner_config, seed=spec.seed)
        elif algorithm == "cql":
            policy, _ = train_cql_discrete(dataset, learner_config, seed=spec.seed)
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        out = self.policy_path(algorithm, spec)
        save_policy(policy, out)
        return out

    # -- evaluation -------------------------------------------------------------

    def _episode_for(self, eval_days: float | None) -> EpisodeConfig:
        if eval_days is None:
            return self.episode
        return EpisodeConfig(length_days=eval_days,
                             control_period=self.episode.control_period,
                             glucose_bounds=self.episode.glucose_bounds,
                             termination_penalty=self.episode.termination_penalty)

    def evaluate_algorithm(self, algorithm: str, specs: list[DatasetSpec],
                           test_seeds: list[int],
                           eval_days: float | None = None,
                           carb_overestimate: float = 0.0,
                           meal_time_sd: float | None = None,
                           include_snacks: bool = True,
                           ) -> tuple[GlycemicReport, list[EvalTrace]]:
        """Pool rollouts over (spec, test seed); specs enumerate patient x seed."""
        episode = self._episode_for(eval_days)
        traces: list[EvalTrace] = []
        for spec in specs:
            patient = self.patient(spec.patient_id)
            path = self.policy_path(algorithm, spec)
            if not path.exists():
                raise MissingArtifactError(
                    f"policy {path} not found (run train first)")
            policy = load_policy(path)
            _, tr = evaluate_policy(
                policy, patient, self.profile, test_seeds, spec.seed,
                episode, carb_overestimate=carb_overestimate,
                meal_time_sd=meal_time_sd, include_snacks=include_snacks)
            traces.extend(tr)
        return compute_metrics(traces), traces

    def evaluate_pid_baseline(self, patient_ids: list[str], rank: int,
                              test_seeds: list[int],
                              eval_days: float | None = None,
                              carb_overestimate: float = 0.0,
                              meal_time_sd: float | None = None,
                              include_snacks: bool = True,
                              ) -> tuple[GlycemicReport, list[EvalTrace]]:
        episode = self._episode_for(eval_days)
        traces: list[EvalTrace] = []
        for patient_id in patient_ids:
            params = self.demonstrator(patient_id, rank)
            _, tr = evaluate_pid(
                params, self.patient(patient_id), self.profile, test_seeds,
                episode, carb_overestimate=carb_overestimate,
                meal_time_sd=meal_time_sd, include_snacks=include_snacks)
            traces.extend(tr)
        return compute_metrics(traces), traces


# -- parallel helpers ----------------------------------------------------------


def _run_task(task) -> str:
    func, args = task
    return str(func(*args))


def run_parallel(tasks: list, jobs: int) -> list[str]:
    """Run (callable, args) pairs, optionally across processes."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


# -- manifests --------------------------------------------------------------


def write_manifest(root: Path, command: str, config_hash: str,
                   inputs: list[Path], outputs: list[Path]) -> Path:
    """Record content hashes of a command's inputs and outputs."""
    root = Path(root)
    sections = {
        "manifest": {"command": command, "config_sha256": config_hash},
        "inputs": {str(p.relative_to(root)) if p.is_relative_to(root) else str(p):
                   sha256_file(p) for p in sorted(set(inputs))},
        "outputs": {str(p.relative_to(root)) if p.is_relative_to(root) else str(p):
                    sha256_file(p) for p in sorted(set(outputs))},
    }
    path = root / "manifests" / f"{command}.manifest"
    write_params(path, sections, MANIFEST_FORMAT_VERSION)
    return path


def verify_manifests(root: Path) -> list[str]:
    """Re-hash all manifest entries; returns a list of problems (empty = ok)."""
    root = Path(root)
    manifest_dir = root / "manifests"
    problems = []
    manifests = sorted(manifest_dir.glob("*.manifest")) if manifest_dir.exists() else []
    if not manifests:
        return [f"no manifests under {manifest_dir}"]
    for manifest in manifests:
        sections = read_params(manifest, MANIFEST_FORMAT_VERSION)
        for kind in ("inputs", "outputs"):
            for rel, expected in sections.get(kind, {}).items():
                path = root / rel if not os.path.isabs(rel) else Path(rel)
                if not path.exists():
                    problems.append(f"{manifest.name}: missing {kind[:-1]} {rel}")
                elif sha256_file(path) != expected:
                    problems.append(f"{manifest.name}: hash mismatch for {rel}")
    return problems
