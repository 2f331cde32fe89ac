"""Deterministic virtual-patient glucose dynamics, CGM sensing, pump quantization.

The physiology is an extended minimal compartmental model:

* two subcutaneous insulin depots (sc_insulin_1 -> sc_insulin_2, U) feeding
  plasma insulin (mU/l), which drives a first-order remote insulin action
  (1/min);
* two gut compartments (gut_1 -> gut_2, g) producing glucose appearance;
* a single glucose pool (mg/dl) with constant endogenous production,
  insulin-independent clearance proportional to glucose and bilinear
  insulin-dependent clearance (remote_action * glucose).

Distribution volumes scale with body mass; `insulin_sensitivity` is defined
so that at the reference glucose one unit of insulin circulating in plasma
removes `insulin_sensitivity` mg/dl per minute.  `basal_equilibrium` then
fixes an exact steady state, computed by `equilibrium_state`.

Integration is fixed-step RK4 with a 1-minute internal substep.  Everything
is deterministic given inputs; CGM noise flows through an explicit
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .patient import PatientParams, PatientState

# Model constants shared by the whole cohort.  Per-patient variation flows
# through PatientParams; these fix unit conversions and the action lag.
INSULIN_VOLUME_L_PER_KG = 0.12     # plasma insulin distribution volume
GLUCOSE_VOLUME_DL_PER_KG = 1.6     # glucose distribution volume
REMOTE_ACTION_RATE = 0.025         # 1/min, lag of insulin action behind plasma level
REFERENCE_GLUCOSE = 140.0          # mg/dl, where insulin_sensitivity is defined
GLUCOSE_FLOOR = 1.0                # mg/dl, numerical floor
DEFAULT_SUBSTEP_MINUTES = 1.0


class SimulationDivergedError(RuntimeError):
    """Integrator produced a non-finite state (distinct from clinical failure)."""


def insulin_volume_l(params: PatientParams) -> float:
    return INSULIN_VOLUME_L_PER_KG * params.body_mass


def glucose_volume_dl(params: PatientParams) -> float:
    return GLUCOSE_VOLUME_DL_PER_KG * params.body_mass


def action_gain(params: PatientParams) -> float:
    """Remote-action per plasma-insulin gain, (1/min) per (mU/l).

    Chosen so that remote_action * REFERENCE_GLUCOSE equals
    insulin_sensitivity * (plasma insulin mass in U).
    """
    return params.insulin_sensitivity * insulin_volume_l(params) / (1000.0 * REFERENCE_GLUCOSE)


def equilibrium_state(params: PatientParams) -> PatientState:
    """Exact fixed point of the dynamics under basal_equilibrium, no meals."""
    u = params.basal_equilibrium / 60.0  # U/min
    depot = u / params.insulin_absorption_rate
    plasma = 1000.0 * u / (insulin_volume_l(params) * params.insulin_clearance_rate)
    action = action_gain(params) * plasma
    glucose = params.endogenous_glucose_production / (params.glucose_effectiveness + action)
    return PatientState(
        plasma_glucose=glucose,
        remote_insulin_action=action,
        plasma_insulin=plasma,
        sc_insulin_1=depot,
        sc_insulin_2=depot,
        gut_1=0.0,
        gut_2=0.0,
        clock=0.0,
    )


def step_physiology(state: PatientState, params: PatientParams, basal_rate: float,
                    bolus: float, carbs: float, dt: float,
                    substep: float = DEFAULT_SUBSTEP_MINUTES) -> PatientState:
    """Advance the compartmental model by dt minutes.

    basal_rate is a continuous infusion in U/h; bolus (U) and carbs (g) are
    impulses applied at the start of the interval.  Raises
    SimulationDivergedError on non-finite output.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if basal_rate < 0 or bolus < 0 or carbs < 0:
        raise ValueError("inputs must be non-negative")

    ka = params.insulin_absorption_rate
    ke = params.insulin_clearance_rate
    kg = params.gut_absorption_rate
    egp = params.endogenous_glucose_production
    sg = params.glucose_effectiveness
    k_act = REMOTE_ACTION_RATE
    w = action_gain(params)
    vi = insulin_volume_l(params)
    vg = glucose_volume_dl(params)
    u = basal_rate / 60.0  # U/min

    g = state.plasma_glucose
    x = state.remote_insulin_action
    i = state.plasma_insulin
    s1 = state.sc_insulin_1 + bolus
    s2 = state.sc_insulin_2
    d1 = state.gut_1 + params.carb_bioavailability * carbs
    d2 = state.gut_2

    n_sub = max(1, round(dt / substep))
    h = dt / n_sub

    def deriv(g, x, i, s1, s2, d1, d2):
        ds1 = u - ka * s1
        ds2 = ka * (s1 - s2)
        di = 1000.0 * ka * s2 / vi - ke * i
        dx = k_act * (w * i - x)
        dd1 = -kg * d1
        dd2 = kg * (d1 - d2)
        dg = egp - sg * g - x * g + 1000.0 * kg * d2 / vg
        return dg, dx, di, ds1, ds2, dd1, dd2

    for _ in range(n_sub):
        a1 = deriv(g, x, i, s1, s2, d1, d2)
        a2 = deriv(g + 0.5 * h * a1[0], x + 0.5 * h * a1[1], i + 0.5 * h * a1[2],
                   s1 + 0.5 * h * a1[3], s2 + 0.5 * h * a1[4],
                   d1 + 0.5 * h * a1[5], d2 + 0.5 * h * a1[6])
        a3 = deriv(g + 0.5 * h * a2[0], x + 0.5 * h * a2[1], i + 0.5 * h * a2[2],
                   s1 + 0.5 * h * a2[3], s2 + 0.5 * h * a2[4],
                   d1 + 0.5 * h * a2[5], d2 + 0.5 * h * a2[6])
        a4 = deriv(g + h * a3[0], x + h * a3[1], i + h * a3[2],
                   s1 + h * a3[3], s2 + h * a3[4], d1 + h * a3[5], d2 + h * a3[6])
        c = h / 6.0
        g += c * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        x += c * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        i += c * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        s1 += c * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
        s2 += c * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
        d1 += c * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])
        d2 += c * (a1[6] + 2.0 * a2[6] + 2.0 * a3[6] + a4[6])
        # mass non-negativity: decay terms cannot drive compartments below
        # zero at these rate constants, but guard against float dust
        if g < GLUCOSE_FLOOR:
            g = GLUCOSE_FLOOR
        if x < 0.0:
            x = 0.0
        if i < 0.0:
            i = 0.0
        if s1 < 0.0:
            s1 = 0.0
        if s2 < 0.0:
            s2 = 0.0
        if d1 < 0.0:
            d1 = 0.0
        if d2 < 0.0:
            d2 = 0.0

    total = g + x + i + s1 + s2 + d1 + d2
    if not math.isfinite(total):
        raise SimulationDivergedError(
            f"non-finite state after step (patient {params.id}, "
            f"basal={basal_rate}, bolus={bolus}, carbs={carbs})")

    return PatientState(
        plasma_glucose=g, remote_insulin_action=x, plasma_insulin=i,
        sc_insulin_1=s1, sc_insulin_2=s2, gut_1=d1, gut_2=d2,
        clock=state.clock + dt,
    )


@dataclass(frozen=True)
class SensorConfig:
    """CGM noise model: AR(1) Gaussian, output clamped to the reporting range."""

    sample_period: float = 3.0     # minutes
    noise_sd: float = 5.0          # mg/dl, stationary standard deviation
    noise_autocorrelation: float = 0.7
    output_range: tuple[float, float] = (39.0, 600.0)

    def validate(self) -> None:
        if self.sample_period <= 0:
            raise ValueError("sample_period must be > 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0 <= self.noise_autocorrelation < 1:
            raise ValueError("noise_autocorrelation must be in [0, 1)")
        if self.output_range[0] >= self.output_range[1]:
            raise ValueError("output_range must be ordered")


class CgmSensor:
    """Stateful CGM reader carrying the AR(1) noise term between samples."""

    def __init__(self, config: SensorConfig = SensorConfig()):
        config.validate()
        self.config = config
        self._noise = 0.0

    def reset(self) -> None:
        self._noise = 0.0

    def read(self, plasma_glucose: float, rng: np.random.Generator) -> float:
        """One noisy reading: e_t = rho*e_{t-1} + sqrt(1-rho^2)*sd*N(0,1)."""
        cfg = self.config
        rho = cfg.noise_autocorrelation
        innovation = math.sqrt(1.0 - rho * rho) * cfg.noise_sd * rng.standard_normal()
        self._noise = rho * self._noise + innovation
        lo, hi = cfg.output_range
        return min(max(plasma_glucose + self._noise, lo), hi)


def read_cgm(state: PatientState, sensor: CgmSensor, rng: np.random.Generator) -> float:
    return sensor.read(state.plasma_glucose, rng)


@dataclass(frozen=True)
class PumpConfig:
    """Insulin pump delivery resolution (U/h for basal, U for bolus)."""

    basal_resolution: float = 0.05
    min_basal: float = 0.0
    bolus_resolution: float = 0.05

    def validate(self) -> None:
        if self.basal_resolution <= 0 or self.bolus_resolution <= 0:
            raise ValueError("resolutions must be > 0")


_GRID_EPS = 1e-9


def quantize_basal(pump: PumpConfig, basal_rate: float, max_basal: float) -> float:
    """Clamp to [min_basal, max_basal], then floor to the basal grid.

    The final clamp guards against float dust pushing a grid multiple just
    past max_basal (e.g. 76*0.05 > 3.8).
    """
    rate = min(max(basal_rate, pump.min_basal), max_basal)
    steps = math.floor(rate / pump.basal_resolution + _GRID_EPS)
    return min(steps * pump.basal_resolution, max_basal)


def quantize_bolus(pump: PumpConfig, bolus: float) -> float:
    """Clamp at zero, then floor to the bolus grid."""
    dose = max(bolus, 0.0)
    steps = math.floor(dose / pump.bolus_resolution + _GRID_EPS)
    return steps * pump.bolus_resolution
