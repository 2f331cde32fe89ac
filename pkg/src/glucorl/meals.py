"""Stochastic daily meal/snack scheduling and meal profile file I/O."""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .fileio import ParamFileError, fmt_float, read_params, write_params

PROFILE_FORMAT_VERSION = 1

# Carb amounts in the shipped profile are for this body mass; other patients
# scale linearly with mass.
REFERENCE_BODY_MASS_KG = 70.0


@dataclass(frozen=True)
class MealEvent:
    """One carbohydrate ingestion event within a simulated day."""

    time: float              # minutes of day, [0, 1440)
    carbs: float             # g actually ingested
    is_snack: bool
    announced_carbs: float   # g reported to the bolus calculator

    def validate(self) -> None:
        if self.carbs < 0 or self.announced_carbs < 0:
            raise ValueError("carb amounts must be >= 0")
        if not 0 <= self.time < 1440:
            raise ValueError("event time must lie within the day")


@dataclass(frozen=True)
class MealProfile:
    """Mean times (minutes of day) and amounts (g) for daily meals and snacks."""

    meal_times: tuple[float, ...] = (420.0, 750.0, 1110.0)
    meal_carbs: tuple[float, ...] = (50.0, 50.0, 50.0)
    meal_carb_sd: tuple[float, ...] = (10.0, 10.0, 10.0)
    snack_times: tuple[float, ...] = (600.0, 930.0, 1290.0)
    snack_carbs: tuple[float, ...] = (15.0, 15.0, 15.0)
    snack_carb_sd: tuple[float, ...] = (5.0, 5.0, 5.0)
    time_sd: float = 30.0    # minutes, default event-time jitter

    def scaled(self, factor: float) -> "MealProfile":
        """Scale carb amounts (used to adapt the 70-kg profile by body mass)."""
        return replace(
            self,
            meal_carbs=tuple(c * factor for c in self.meal_carbs),
            meal_carb_sd=tuple(c * factor for c in self.meal_carb_sd),
            snack_carbs=tuple(c * factor for c in self.snack_carbs),
            snack_carb_sd=tuple(c * factor for c in self.snack_carb_sd),
        )


def generate_meal_schedule(profile: MealProfile, time_sd: float,
                           include_snacks: bool,
                           rng: np.random.Generator) -> list[MealEvent]:
    """Draw one day of meal events, sorted by time.

    Event times are normal around the profile means (sd = time_sd, clipped to
    the day); amounts are normal with the profile's per-event sd, clipped at
    zero.  announced_carbs starts equal to carbs; announcement noise is
    applied downstream by the environment.
    """
    if time_sd < 0:
        raise ValueError("time_sd must be >= 0")
    events = []
    specs = [(t, c, sd, False) for t, c, sd in
             zip(profile.meal_times, profile.meal_carbs, profile.meal_carb_sd)]
    if include_snacks:
        specs += [(t, c, sd, True) for t, c, sd in
                  zip(profile.snack_times, profile.snack_carbs, profile.snack_carb_sd)]
    for mean_time, mean_carbs, carb_sd, is_snack in specs:
        time = float(np.clip(rng.normal(mean_time, time_sd), 0.0, 1440.0 - 1e-9))
        carbs = max(0.0, float(rng.normal(mean_carbs, carb_sd)))
        events.append(MealEvent(time=time, carbs=carbs, is_snack=is_snack,
                                announced_carbs=carbs))
    events.sort(key=lambda e: e.time)
    return events


def default_profile_path() -> Path:
    return Path(str(resources.files("glucorl").joinpath("assets/meal_profiles.params")))


def load_meal_profile(path: str | Path | None = None,
                      name: str = "default") -> MealProfile:
    sections = read_params(path or default_profile_path(), PROFILE_FORMAT_VERSION)
    if name not in sections:
        raise ParamFileError(f"meal profile {name!r} not found")
    kv = sections[name]

    def floats(key):
        return tuple(float(x) for x in kv[key].split(","))

    return MealProfile(
        meal_times=floats("meal_times_minutes"),
        meal_carbs=floats("meal_carbs_g"),
        meal_carb_sd=floats("meal_carb_sd_g"),
        snack_times=floats("snack_times_minutes"),
        snack_carbs=floats("snack_carbs_g"),
        snack_carb_sd=floats("snack_carb_sd_g"),
        time_sd=float(kv["meal_time_sd_minutes"]),
    )


def save_meal_profile(profile: MealProfile, path: str | Path,
                      name: str = "default") -> None:
    fmt = lambda xs: ", ".join(fmt_float(x) for x in xs)
    write_params(path, {name: {
        "meal_times_minutes": fmt(profile.meal_times),
        "meal_carbs_g": fmt(profile.meal_carbs),
        "meal_carb_sd_g": fmt(profile.meal_carb_sd),
        "snack_times_minutes": fmt(profile.snack_times),
        "snack_carbs_g": fmt(profile.snack_carbs),
        "snack_carb_sd_g": fmt(profile.snack_carb_sd),
        "meal_time_sd_minutes": fmt_float(profile.time_sd),
    }}, PROFILE_FORMAT_VERSION)
