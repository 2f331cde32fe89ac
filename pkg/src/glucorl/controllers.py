"""Classical control pieces: PID basal controller, mealtime bolus calculator,
Ornstein-Uhlenbeck exploration noise.

The PID law is implemented literally as

    raw = kp*(target - g) + ki*sum(g' - target) + kd*(g - g_prev)

note the proportional and integral terms carry opposite sign conventions;
grids searched downstream span both signs of every gain, so tuning settles
the physically sensible direction on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .patient import PatientParams
from .simulator import PumpConfig, quantize_bolus

# Fixed bolus-calculator glucose target (mg/dl); close to the risk minimum.
BOLUS_GLUCOSE_TARGET = 144.0

DEFAULT_INTEGRAL_LIMIT = 1e5  # mg/dl*steps anti-windup clamp


@dataclass(frozen=True)
class PidParams:
    """PID gains; units per CGM step: kp (U/h)/(mg/dl), ki (U/h)/(mg/dl*step),
    kd (U/h)/(mg/dl/step)."""

    kp: float
    ki: float
    kd: float
    g_target: float = 144.0

    def validate(self) -> None:
        if not self.g_target > 0:
            raise ValueError("g_target must be > 0")
        for name in ("kp", "ki", "kd"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class PidState:
    """Running error sum and the previous glucose reading."""

    integral_error: float
    previous_glucose: float


def pid_init(g0: float) -> PidState:
    """Fresh controller state; derivative term is zero on the first step."""
    return PidState(integral_error=0.0, previous_glucose=g0)


def pid_step(params: PidParams, state: PidState, g: float,
             integral_limit: float = DEFAULT_INTEGRAL_LIMIT) -> tuple[float, PidState]:
    """One PID update on a glucose reading; returns (raw basal U/h, new state).

    The raw output is unclamped; pump clamping/quantization happens at the
    point of delivery.  The error sum includes the current step and is
    clamped to +-integral_limit against wind-up.
    """
    if not g > 0:
        raise ValueError("glucose reading must be > 0")
    integral = state.integral_error + (g - params.g_target)
    integral = min(max(integral, -integral_limit), integral_limit)
    raw = (params.kp * (params.g_target - g)
           + params.ki * integral
           + params.kd * (g - state.previous_glucose))
    return raw, PidState(integral_error=integral, previous_glucose=g)


def bolus_dose(params: PatientParams, announced_carbs: float, g: float,
               recent_carbs: float,
               pump: PumpConfig = PumpConfig()) -> float:
    """Mealtime bolus: carbs/carb_ratio plus a correction term.

    The correction (g - target)/correction_factor applies only when no carbs
    were announced over the preceding 60 control steps (the current step's
    announcement excluded), so back-to-back meals are not double-corrected.
    Negative totals clamp to zero; output is quantized to the pump's bolus
    resolution.
    """
    if announced_carbs <= 0:
        raise ValueError("bolus_dose is only called at steps announcing carbs")
    dose = announced_carbs / params.carb_ratio
    if recent_carbs == 0:
        dose += (g - BOLUS_GLUCOSE_TARGET) / params.correction_factor
    return quantize_bolus(pump, dose)


@dataclass(frozen=True)
class OuParams:
    """Ornstein-Uhlenbeck exploration noise on the basal rate (U/h)."""

    theta: float = 0.05   # 1/step mean reversion
    sigma: float = 0.2    # U/h per sqrt(step)
    mu: float = 0.0       # U/h

    def validate(self) -> None:
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def ou_step(params: OuParams, x: float, dt: float, rng: np.random.Generator) -> float:
    """Euler-Maruyama OU update: x + theta*(mu-x)*dt + sigma*sqrt(dt)*N(0,1)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return (x + params.theta * (params.mu - x) * dt
            + params.sigma * np.sqrt(dt) * rng.standard_normal())
