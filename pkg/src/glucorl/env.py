"""Episodic POMDP wrapper: featurization, clinical-risk reward, termination.

State features (12 dimensions): ten CGM readings at 30-minute spacing (most
recent first), plus linearly decaying 4-hour activity sums of delivered
insulin (U) and announced carbohydrates (g).  Actions are basal rates
normalized to [-1, 1] over [0, max_basal].  The per-step reward is the
negative clinical risk of the true plasma glucose, and excursions outside
the survivable glucose range terminate the episode with a large additive
penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import bolus_dose
from .meals import MealProfile, generate_meal_schedule, REFERENCE_BODY_MASS_KG
from .patient import PatientParams
from .simulator import (CgmSensor, PumpConfig, SensorConfig, equilibrium_state,
                        quantize_basal, step_physiology)

FEATURE_DIM = 12
CGM_HISTORY_POINTS = 10
CGM_HISTORY_SPACING = 10          # control steps between history points (30 min)
ACTIVITY_WINDOW = 80              # control steps (4 h) in the activity sums

# Decay weights by age in steps: weight(age j) = 1 - j/80.
_ACTIVITY_WEIGHTS = 1.0 - np.arange(ACTIVITY_WINDOW, dtype=np.float64) / ACTIVITY_WINDOW


def magni_risk(g: float) -> float:
    """Asymmetric clinical risk of a blood glucose value (natural log form).

    Zero near 139 mg/dl; low glucose is punished far more steeply than high.
    """
    if g <= 0:
        raise ValueError("glucose must be positive")
    f = 3.5506 * (math.log(g) ** 0.8353 - 3.7932)
    return 10.0 * f * f


def normalize_action(basal_rate: float, max_basal: float) -> float:
    """Map a basal rate in [0, max_basal] to the [-1, 1] action range."""
    return 2.0 * basal_rate / max_basal - 1.0


def denormalize_action(action: float, max_basal: float) -> float:
    """Map an action in [-1, 1] back to a basal rate in [0, max_basal]."""
    a = min(max(action, -1.0), 1.0)
    return (a + 1.0) * 0.5 * max_basal


def featurize(cgm: np.ndarray, dose_steps: np.ndarray, carb_steps: np.ndarray,
              t: int, pad_glucose: float, pad_dose: float) -> np.ndarray:
    """Build the 12-dimensional state for decision step t.

    cgm[k] is the reading observed at decision time k (k <= t must be
    populated); dose_steps[k] / carb_steps[k] are insulin units delivered and
    carbohydrate grams announced during step k (k <= t-1 populated), so the
    activity sums cover the 80 most recently completed steps and never leak
    the step-t action.  Before the episode provides enough history, values
    pad with the patient's equilibrium glucose and basal delivery.
    """
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    for m in range(CGM_HISTORY_POINTS):
        k = t - m * CGM_HISTORY_SPACING
        out[m] = cgm[k] if k >= 0 else pad_glucose
    lo = t - ACTIVITY_WINDOW
    if lo >= 0:
        dose_win = dose_steps[lo:t][::-1]
        carb_win = carb_steps[lo:t][::-1]
    else:
        n_have = max(t, 0)
        pad = np.full(-lo, pad_dose, dtype=np.float64)
        dose_win = np.concatenate([dose_steps[:n_have][::-1], pad])
        carb_win = np.concatenate([carb_steps[:n_have][::-1],
                                   np.zeros(-lo, dtype=np.float64)])
    out[10] = float(np.dot(_ACTIVITY_WEIGHTS, dose_win))
    out[11] = float(np.dot(_ACTIVITY_WEIGHTS, carb_win))
    return out


@dataclass(frozen=True)
class EpisodeConfig:
    length_days: float = 10.0
    control_period: float = 3.0                      # minutes per action
    glucose_bounds: tuple[float, float] = (10.0, 1000.0)
    termination_penalty: float = -1e5

    def validate(self) -> None:
        if self.length_days <= 0 or self.control_period <= 0:
            raise ValueError("length_days and control_period must be > 0")
        if self.glucose_bounds[0] >= self.glucose_bounds[1]:
            raise ValueError("glucose_bounds must be ordered")

    @property
    def n_steps(self) -> int:
        return int(round(self.length_days * 1440.0 / self.control_period))


class EpisodeFinishedError(RuntimeError):
    """step() called after the episode terminated."""


class GlucoseEnv:
    """One patient-days rollout: simulator + sensor + pump + meals + reward.

    Meal announcements pass through an error model before reaching the bolus
    calculator: announced = true * (1 + carb_overestimate) * N(1, carb_noise_sd^2),
    clamped at zero.  The physiology always receives the true carbs.
    """

    def __init__(self, patient: PatientParams, profile: MealProfile,
                 episode: EpisodeConfig = EpisodeConfig(),
                 sensor: SensorConfig = SensorConfig(),
                 pump: PumpConfig = PumpConfig(),
                 meal_time_sd: float | None = None,
                 include_snacks: bool = True,
                 carb_noise_sd: float = 0.0,
                 carb_overestimate: float = 0.0):
        episode.validate()
        pump.validate()
        patient.validate()
        self.patient = patient
        self.profile = profile.scaled(patient.body_mass / REFERENCE_BODY_MASS_KG)
        self.episode = episode
        self.sensor = CgmSensor(sensor)
        self.pump = pump
        self.meal_time_sd = profile.time_sd if meal_time_sd is None else meal_time_sd
        self.include_snacks = include_snacks
        self.carb_noise_sd = carb_noise_sd
        self.carb_overestimate = carb_overestimate

        eq = equilibrium_state(patient)
        self.equilibrium_glucose = eq.plasma_glucose
        self._period_hours = episode.control_period / 60.0
        self.pad_dose = patient.basal_equilibrium * self._period_hours
        self._steps_per_day = int(round(1440.0 / episode.control_period))
        self._rng: np.random.Generator | None = None
        self._t = 0
        self.done = True

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        n = self.episode.n_steps
        self._rng = np.random.default_rng(seed)
        self.state = equilibrium_state(self.patient)
        self.sensor.reset()
        self._t = 0
        self.done = False
        self.terminated = False

        self.cgm = np.zeros(n + 1, dtype=np.float64)
        self.true_glucose = np.zeros(n + 1, dtype=np.float64)
        self.basal = np.zeros(n, dtype=np.float64)
        self.bolus = np.zeros(n, dtype=np.float64)
        self.true_carbs = np.zeros(n, dtype=np.float64)
        self.announced_carbs = np.zeros(n, dtype=np.float64)
        self.dose_steps = np.zeros(n, dtype=np.float64)
        self.rewards = np.zeros(n, dtype=np.float64)

        self.true_glucose[0] = self.state.plasma_glucose
        self.cgm[0] = self.sensor.read(self.state.plasma_glucose, self._rng)
        self._day_events: dict[int, tuple[float, float]] = {}
        self._schedule_day(0)
        return self.features()

    def _schedule_day(self, day: int) -> None:
        """Draw one day's meals and bucket them by control step index."""
        events = generate_meal_schedule(self.profile, self.meal_time_sd,
                                        self.include_snacks, self._rng)
        self._day_events = {}
        for ev in events:
            step = day * self._steps_per_day + int(ev.time // self.episode.control_period)
            factor = 1.0 + self.carb_overestimate
            if self.carb_noise_sd > 0:
                factor *= self._rng.normal(1.0, self.carb_noise_sd)
            announced = max(0.0, ev.carbs * factor)
            carbs, ann = self._day_events.get(step, (0.0, 0.0))
            self._day_events[step] = (carbs + ev.carbs, ann + announced)

    def features(self) -> np.ndarray:
        return featurize(self.cgm, self.dose_steps, self.announced_carbs,
                         self._t, self.equilibrium_glucose, self.pad_dose)

    @property
    def t(self) -> int:
        return self._t

    def current_cgm(self) -> float:
        return float(self.cgm[self._t])

    # -- stepping ------------------------------------------------------------

    def step(self, action: float,
             compute_features: bool = True) -> tuple[np.ndarray | None, float, bool]:
        """Apply a normalized basal action for one control period."""
        if self.done:
            raise EpisodeFinishedError("episode already finished")
        t = self._t
        if t % self._steps_per_day == 0 and t > 0:
            self._schedule_day(t // self._steps_per_day)

        basal = quantize_basal(self.pump, denormalize_action(action, self.patient.max_basal),
                               self.patient.max_basal)
        carbs, announced = self._day_events.get(t, (0.0, 0.0))
        bolus = 0.0
        if announced > 0:
            recent = float(np.sum(self.announced_carbs[max(0, t - 60):t]))
            bolus = bolus_dose(self.patient, announced, float(self.cgm[t]),
                               recent, self.pump)

        self.state = step_physiology(self.state, self.patient, basal, bolus,
                                     carbs, self.episode.control_period)
        g = self.state.plasma_glucose

        self.basal[t] = basal
        self.bolus[t] = bolus
        self.true_carbs[t] = carbs
        self.announced_carbs[t] = announced
        self.dose_steps[t] = basal * self._period_hours + bolus
        self.true_glucose[t + 1] = g
        self.cgm[t + 1] = self.sensor.read(g, self._rng)

        reward = -magni_risk(g)
        lo, hi = self.episode.glucose_bounds
        if g < lo or g > hi:
            reward += self.episode.termination_penalty
            self.done = True
            self.terminated = True
        self.rewards[t] = reward
        self._t = t + 1
        if self._t >= self.episode.n_steps:
            self.done = True
        features = self.features() if compute_features else None
        return features, reward, self.done

    def steps_taken(self) -> int:
        return self._t
