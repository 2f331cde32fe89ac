"""Virtual patient parameter and state containers, plus cohort file I/O.

The shipped cohort has nine patients: three adults, three adolescents and
three children.  Children carry lower body mass, markedly higher insulin
sensitivity per unit insulin and faster subcutaneous/gut absorption, which
makes them the most glycemically volatile group under identical control.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .fileio import ParamFileError, fmt_float, read_params, write_params

AGE_GROUPS = ("adult", "adolescent", "child")

COHORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PatientParams:
    """Physiological and therapy parameters of one virtual patient.

    Units: body_mass kg; insulin_sensitivity (mg/dl)/(U*min) of plasma
    insulin; rate constants 1/min; endogenous_glucose_production mg/dl/min;
    basal_equilibrium and max_basal U/h; carb_ratio g/U;
    correction_factor (mg/dl)/U.
    """

    id: str
    age_group: str
    body_mass: float
    insulin_sensitivity: float
    carb_bioavailability: float
    gut_absorption_rate: float
    insulin_absorption_rate: float
    insulin_clearance_rate: float
    endogenous_glucose_production: float
    glucose_effectiveness: float
    basal_equilibrium: float
    max_basal: float
    carb_ratio: float
    correction_factor: float

    def validate(self) -> None:
        if self.age_group not in AGE_GROUPS:
            raise ValueError(f"{self.id}: unknown age_group {self.age_group!r}")
        rates = {
            "body_mass": self.body_mass,
            "insulin_sensitivity": self.insulin_sensitivity,
            "gut_absorption_rate": self.gut_absorption_rate,
            "insulin_absorption_rate": self.insulin_absorption_rate,
            "insulin_clearance_rate": self.insulin_clearance_rate,
            "endogenous_glucose_production": self.endogenous_glucose_production,
            "glucose_effectiveness": self.glucose_effectiveness,
            "carb_ratio": self.carb_ratio,
            "correction_factor": self.correction_factor,
        }
        for name, value in rates.items():
            if not value > 0:
                raise ValueError(f"{self.id}: {name} must be > 0, got {value}")
        if not 0 < self.carb_bioavailability <= 1:
            raise ValueError(f"{self.id}: carb_bioavailability must be in (0, 1]")
        if not self.max_basal > self.basal_equilibrium > 0:
            raise ValueError(
                f"{self.id}: need max_basal > basal_equilibrium > 0, "
                f"got {self.max_basal} / {self.basal_equilibrium}")


@dataclass
class PatientState:
    """Compartment values of the simulated patient at one instant.

    plasma_glucose mg/dl; remote_insulin_action 1/min; plasma_insulin mU/l;
    sc_insulin_1/2 U in the two subcutaneous depots; gut_1/2 g in the two
    meal-absorption compartments; clock minutes since episode start.
    """

    plasma_glucose: float
    remote_insulin_action: float
    plasma_insulin: float
    sc_insulin_1: float
    sc_insulin_2: float
    gut_1: float
    gut_2: float
    clock: float = 0.0

    def copy(self) -> "PatientState":
        return replace(self)


_FIELD_KEYS = [
    ("age_group", "age_group", str),
    ("body_mass", "body_mass_kg", float),
    ("insulin_sensitivity", "insulin_sensitivity_mgdl_per_u_min", float),
    ("carb_bioavailability", "carb_bioavailability_fraction", float),
    ("gut_absorption_rate", "gut_absorption_rate_per_min", float),
    ("insulin_absorption_rate", "insulin_absorption_rate_per_min", float),
    ("insulin_clearance_rate", "insulin_clearance_rate_per_min", float),
    ("endogenous_glucose_production", "endogenous_glucose_production_mgdl_per_min", float),
    ("glucose_effectiveness", "glucose_effectiveness_per_min", float),
    ("basal_equilibrium", "basal_equilibrium_u_per_h", float),
    ("max_basal", "max_basal_u_per_h", float),
    ("carb_ratio", "carb_ratio_g_per_u", float),
    ("correction_factor", "correction_factor_mgdl_per_u", float),
]


def default_cohort_path() -> Path:
    return Path(str(resources.files("glucorl").joinpath("assets/cohort.params")))


def load_cohort(path: str | Path | None = None) -> dict[str, PatientParams]:
    """Load and validate a cohort parameter file; returns patients by id."""
    sections = read_params(path or default_cohort_path(), COHORT_FORMAT_VERSION)
    cohort: dict[str, PatientParams] = {}
    for pid, kv in sections.items():
        kwargs = {"id": pid}
        for field, key, conv in _FIELD_KEYS:
            if key not in kv:
                raise ParamFileError(f"patient {pid}: missing key {key}")
            kwargs[field] = conv(kv[key])
        patient = PatientParams(**kwargs)
        patient.validate()
        cohort[pid] = patient
    if not cohort:
        raise ParamFileError("cohort file contains no patients")
    return cohort


def save_cohort(cohort: dict[str, PatientParams], path: str | Path) -> None:
    sections = {}
    for pid, p in cohort.items():
        kv = {}
        for field, key, conv in _FIELD_KEYS:
            value = getattr(p, field)
            kv[key] = value if conv is str else fmt_float(value)
        sections[pid] = kv
    write_params(path, sections, COHORT_FORMAT_VERSION)
