"""Seed-aggregated policy evaluation rollouts."""

from __future__ import annotations

import numpy as np

from .controllers import PidParams, pid_init, pid_step
from .env import EpisodeConfig, GlucoseEnv, normalize_action
from .meals import MealProfile
from .metrics import EvalTrace, GlycemicReport, compute_metrics
from .patient import PatientParams
from .policy import Policy
from .simulator import PumpConfig, SensorConfig


def rollout_policy(policy: Policy, patient: PatientParams, profile: MealProfile,
                   test_seed: int, train_seed: int = 0,
                   episode: EpisodeConfig = EpisodeConfig(),
                   sensor: SensorConfig = SensorConfig(),
                   pump: PumpConfig = PumpConfig(),
                   meal_time_sd: float | None = None,
                   include_snacks: bool = True,
                   carb_overestimate: float = 0.0) -> EvalTrace:
    """One evaluation episode under a learned policy (features each step)."""
    env = GlucoseEnv(patient, profile, episode, sensor, pump,
                     meal_time_sd=meal_time_sd, include_snacks=include_snacks,
                     carb_overestimate=carb_overestimate)
    obs = env.reset(test_seed)
    while not env.done:
        obs, _, _ = env.step(policy.act(obs))
    n = env.steps_taken()
    return EvalTrace(patient_id=patient.id, age_group=patient.age_group,
                     train_seed=train_seed, test_seed=test_seed,
                     cgm=env.cgm[:n + 1].copy(), rewards=env.rewards[:n].copy(),
                     terminated=env.terminated)


def rollout_pid(params: PidParams, patient: PatientParams, profile: MealProfile,
                test_seed: int,
                episode: EpisodeConfig = EpisodeConfig(),
                sensor: SensorConfig = SensorConfig(),
                pump: PumpConfig = PumpConfig(),
                meal_time_sd: float | None = None,
                include_snacks: bool = True,
                carb_overestimate: float = 0.0) -> EvalTrace:
    """One evaluation episode under the PID baseline (no exploration noise)."""
    env = GlucoseEnv(patient, profile, episode, sensor, pump,
                     meal_time_sd=meal_time_sd, include_snacks=include_snacks,
                     carb_overestimate=carb_overestimate)
    env.reset(test_seed)
    state = pid_init(env.current_cgm())
    while not env.done:
        raw, state = pid_step(params, state, env.current_cgm())
        env.step(normalize_action(raw, patient.max_basal), compute_features=False)
    n = env.steps_taken()
    return EvalTrace(patient_id=patient.id, age_group=patient.age_group,
                     train_seed=0, test_seed=test_seed,
                     cgm=env.cgm[:n + 1].copy(), rewards=env.rewards[:n].copy(),
                     terminated=env.terminated)


def evaluate_policy(policy: Policy, patient: PatientParams, profile: MealProfile,
                    test_seeds: list[int], train_seed: int = 0,
                    episode: EpisodeConfig = EpisodeConfig(),
                    **rollout_kwargs) -> tuple[GlycemicReport, list[EvalTrace]]:
    """Fixed-length rollouts per test seed, aggregated with standard errors."""
    traces = [rollout_policy(policy, patient, profile, seed, train_seed,
                             episode, **rollout_kwargs)
              for seed in test_seeds]
    return compute_metrics(traces), traces


def evaluate_pid(params: PidParams, patient: PatientParams, profile: MealProfile,
                 test_seeds: list[int],
                 episode: EpisodeConfig = EpisodeConfig(),
                 **rollout_kwargs) -> tuple[GlycemicReport, list[EvalTrace]]:
    traces = [rollout_pid(params, patient, profile, seed, episode, **rollout_kwargs)
              for seed in test_seeds]
    return compute_metrics(traces), traces
