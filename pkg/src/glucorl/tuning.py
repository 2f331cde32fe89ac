"""Exhaustive PID grid search against seeded simulator rollouts.

Every grid point is scored on an identical seeded multi-day rollout (same
meal draws, same CGM noise), so the ranking is a paired comparison and is
invariant to enumeration order.  Rank 1 is the tuned controller; deeper
ranks (10, 20) serve as deliberately suboptimal demonstrators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import PidParams, pid_init, pid_step
from .env import EpisodeConfig, GlucoseEnv, normalize_action
from .fileio import fmt_float, read_params, write_params
from .meals import MealProfile
from .patient import PatientParams

PID_FILE_FORMAT_VERSION = 1


def _signed_log_grid(low_exp: float, high_exp: float, n: int,
                     include_zero: bool) -> list[float]:
    mags = np.logspace(low_exp, high_exp, n)
    values = [-m for m in mags[::-1]] + ([0.0] if include_zero else []) + list(mags)
    return [float(v) for v in values]


def default_grid_values() -> tuple[list[float], list[float], list[float]]:
    """Sign-free default search grids for (kp, ki, kd)."""
    kp = _signed_log_grid(-4, -1, 8, include_zero=False)
    ki = _signed_log_grid(-7, -4, 4, include_zero=True)
    kd = _signed_log_grid(-3, 0, 4, include_zero=True)
    return kp, ki, kd


@dataclass(frozen=True)
class GridSpec:
    kp_values: tuple[float, ...]
    ki_values: tuple[float, ...]
    kd_values: tuple[float, ...]
    episode_days: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if not (self.kp_values and self.ki_values and self.kd_values):
            raise ValueError("grid value lists must be non-empty")
        if self.episode_days <= 0:
            raise ValueError("episode_days must be > 0")

    @property
    def cardinality(self) -> int:
        return len(self.kp_values) * len(self.ki_values) * len(self.kd_values)

    @staticmethod
    def default(episode_days: float = 10.0, seed: int = 0) -> "GridSpec":
        kp, ki, kd = default_grid_values()
        return GridSpec(tuple(kp), tuple(ki), tuple(kd),
                        episode_days=episode_days, seed=seed)


def rollout_pid_reward(params: PidParams, patient: PatientParams,
                       profile: MealProfile, episode_days: float,
                       seed: int) -> float:
    """Total reward of one clean PID rollout (no exploration/announcement noise)."""
    env = GlucoseEnv(patient, profile, EpisodeConfig(length_days=episode_days))
    env.reset(seed)
    state = pid_init(env.current_cgm())
    total = 0.0
    while not env.done:
        raw, state = pid_step(params, state, env.current_cgm())
        _, reward, _ = env.step(normalize_action(raw, patient.max_basal),
                                compute_features=False)
        total += reward
    return total


def rank_pid_grid(grid: GridSpec, patient: PatientParams,
                  profile: MealProfile) -> list[tuple[float, PidParams]]:
    """Score every grid point on the shared seeded rollout; best first.

    Ties break on lexicographic (kp, ki, kd) order, so the result does not
    depend on enumeration order.
    """
    grid.validate()
    scored = []
    for kp in grid.kp_values:
        for ki in grid.ki_values:
            for kd in grid.kd_values:
                params = PidParams(kp=kp, ki=ki, kd=kd)
                reward = rollout_pid_reward(params, patient, profile,
                                            grid.episode_days, grid.seed)
                scored.append((reward, params))
    scored.sort(key=lambda item: (-item[0], item[1].kp, item[1].ki, item[1].kd))
    return scored


def tune_pid(grid: GridSpec, patient: PatientParams, profile: MealProfile,
             rank: int = 1) -> PidParams:
    """Return the rank-th best PID parameters (rank 1 = tuned)."""
    if rank < 1 or rank > grid.cardinality:
        raise ValueError(f"rank {rank} outside grid of {grid.cardinality} points")
    return rank_pid_grid(grid, patient, profile)[rank - 1][1]


def save_pid_ranks(path: str | Path,
                   ranked: dict[int, tuple[float, PidParams]]) -> None:
    """Persist selected ranks of a grid search to a key-value file."""
    sections = {}
    for rank in sorted(ranked):
        reward, p = ranked[rank]
        sections[f"rank-{rank}"] = {
            "kp_u_per_h_per_mgdl": fmt_float(p.kp),
            "ki_u_per_h_per_mgdl_step": fmt_float(p.ki),
            "kd_u_per_h_per_mgdl_per_step": fmt_float(p.kd),
            "g_target_mgdl": fmt_float(p.g_target),
            "tuning_total_reward": fmt_float(reward),
        }
    write_params(path, sections, PID_FILE_FORMAT_VERSION)


def load_pid_params(path: str | Path, rank: int = 1) -> PidParams:
    sections = read_params(path, PID_FILE_FORMAT_VERSION)
    key = f"rank-{rank}"
    if key not in sections:
        raise KeyError(f"{path}: no section {key}")
    kv = sections[key]
    return PidParams(kp=float(kv["kp_u_per_h_per_mgdl"]),
                     ki=float(kv["ki_u_per_h_per_mgdl_step"]),
                     kd=float(kv["kd_u_per_h_per_mgdl_per_step"]),
                     g_target=float(kv["g_target_mgdl"]))
