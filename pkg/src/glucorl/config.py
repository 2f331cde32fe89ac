"""Declarative run configuration for the command-line pipeline.

Configs are the shared key-value text format with one section per concern.
Seeds must always be explicit; there are no wall-clock defaults anywhere.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .controllers import OuParams
from .discrete_q import BcqConfig, CqlConfig
from .env import EpisodeConfig
from .pipeline import ALGORITHMS, DatasetSpec
from .scenarios import SCENARIO_KINDS
from .td3bc import Td3BcConfig
from .tuning import GridSpec


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_list(text: str, conv) -> tuple:
    items = [x.strip() for x in text.split(",") if x.strip()]
    return tuple(conv(x) for x in items)


@dataclass
class RunConfig:
    path: Path
    out_dir: Path
    patients: tuple[str, ...]
    train_seeds: tuple[int, ...]
    test_seeds: tuple[int, ...]
    jobs: int
    cohort_file: Path | None
    meal_profile_file: Path | None
    episode: EpisodeConfig
    grid: GridSpec
    grid_ranks: tuple[int, ...]
    dataset_n_samples: int
    dataset_rank: int
    dataset_ou: OuParams
    dataset_carb_noise_sd: float
    dataset_meal_time_sd: float | None
    dataset_include_snacks: bool
    train_algorithms: tuple[str, ...]
    eval_algorithms: tuple[str, ...]
    eval_days: float | None
    eval_overestimate: float
    scenario_kind: str | None
    scenario_parameters: tuple[float, ...]
    scenario_algorithms: tuple[str, ...]
    learner_configs: dict = field(default_factory=dict)

    def dataset_spec(self, patient_id: str, seed: int, **overrides) -> DatasetSpec:
        kwargs = dict(
            patient_id=patient_id,
            demonstrator_rank=self.dataset_rank,
            n_samples=self.dataset_n_samples,
            seed=seed,
            meal_time_sd=self.dataset_meal_time_sd,
            include_snacks=self.dataset_include_snacks,
            ou=self.dataset_ou,
            carb_noise_sd=self.dataset_carb_noise_sd,
        )
        kwargs.update(overrides)
        return DatasetSpec(**kwargs)


def _section_to_dataclass(cls, section: dict[str, str]):
    """Fill a config dataclass from a text section, keeping typed defaults."""
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        f = fields[key]
        if f.type in ("int",):
            kwargs[key] = int(raw)
        elif f.type in ("float",):
            kwargs[key] = float(raw)
        elif f.type in ("tuple[int, ...]",):
            kwargs[key] = _parse_list(raw, int)
        else:
            kwargs[key] = float(raw)
    return cls(**kwargs)


def load_run_config(path: str | Path, jobs_override: int | None = None,
                    out_override: str | None = None,
                    seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def sec(name: str) -> dict[str, str]:
        return dict(parser[name]) if name in parser else {}

    run = sec("run")
    for key in ("out_dir", "patients", "train_seeds", "test_seeds"):
        if key not in run:
            raise ConfigError(f"[run] must define {key!r} (seeds are never implicit)")
    train_seeds = _parse_list(run["train_seeds"], int)
    test_seeds = _parse_list(run["test_seeds"], int)
    if not train_seeds or not test_seeds:
        raise ConfigError("train_seeds and test_seeds must be non-empty")
    if seed_override is not None:
        train_seeds = tuple(seed_override + i for i in range(len(train_seeds)))
        test_seeds = tuple(seed_override + 1000 + i for i in range(len(test_seeds)))

    episode_sec = sec("episode")
    episode = EpisodeConfig(
        length_days=float(episode_sec.get("length_days", 10.0)),
        control_period=float(episode_sec.get("control_period_minutes", 3.0)),
    )

    grid_sec = sec("grid")
    # tuning seed: deterministic constant default, overridable per config/flag
    grid_seed = int(grid_sec.get("seed", 0))
    if seed_override is not None:
        grid_seed = seed_override
    default_grid = GridSpec.default(
        episode_days=float(grid_sec.get("episode_days", 10.0)), seed=grid_seed)
    grid = GridSpec(
        kp_values=_parse_list(grid_sec["kp_values"], float)
        if "kp_values" in grid_sec else default_grid.kp_values,
        ki_values=_parse_list(grid_sec["ki_values"], float)
        if "ki_values" in grid_sec else default_grid.ki_values,
        kd_values=_parse_list(grid_sec["kd_values"], float)
        if "kd_values" in grid_sec else default_grid.kd_values,
        episode_days=default_grid.episode_days,
        seed=grid_seed,
    )
    grid_ranks = _parse_list(grid_sec.get("ranks", "1, 10, 20"), int)
    for rank in grid_ranks:
        if rank < 1 or rank > grid.cardinality:
            raise ConfigError(f"grid rank {rank} outside cardinality {grid.cardinality}")

    ds = sec("dataset")
    ou = OuParams(theta=float(ds.get("ou_theta_per_step", 0.05)),
                  sigma=float(ds.get("ou_sigma_u_per_h", 0.2)),
                  mu=float(ds.get("ou_mu_u_per_h", 0.0)))
    meal_sd = float(ds["meal_time_sd_minutes"]) if "meal_time_sd_minutes" in ds else None

    learner_configs = {
        "td3bc": _section_to_dataclass(Td3BcConfig, sec("td3bc")),
        "bcq": _section_to_dataclass(BcqConfig, sec("bcq")),
        "cql": _section_to_dataclass(CqlConfig, sec("cql")),
    }

    def algorithms(text: str) -> tuple[str, ...]:
        names = _parse_list(text, str)
        for name in names:
            if name not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {name!r}")
        return names

    train_sec = sec("train")
    eval_sec = sec("evaluate")
    scen = sec("scenario")
    scenario_kind = scen.get("kind")
    if scenario_kind is not None and scenario_kind not in SCENARIO_KINDS:
        raise ConfigError(f"unknown scenario kind {scenario_kind!r}")

    config = RunConfig(
        path=path,
        out_dir=Path(out_override) if out_override else Path(run["out_dir"]),
        patients=_parse_list(run["patients"], str),
        train_seeds=train_seeds,
        test_seeds=test_seeds,
        jobs=jobs_override if jobs_override is not None else int(run.get("jobs", 1)),
        cohort_file=Path(run["cohort_file"]) if "cohort_file" in run else None,
        meal_profile_file=Path(run["meal_profile_file"]) if "meal_profile_file" in run else None,
        episode=episode,
        grid=grid,
        grid_ranks=grid_ranks,
        dataset_n_samples=int(ds.get("n_samples", 100_000)),
        dataset_rank=int(ds.get("demonstrator_rank", 1)),
        dataset_ou=ou,
        dataset_carb_noise_sd=float(ds.get("carb_noise_sd_fraction", 0.1)),
        dataset_meal_time_sd=meal_sd,
        dataset_include_snacks=_parse_bool(ds.get("include_snacks", "true")),
        train_algorithms=algorithms(train_sec.get("algorithms", "td3bc, bcq, cql")),
        eval_algorithms=algorithms(eval_sec.get("algorithms", "td3bc, bcq, cql")),
        eval_days=float(eval_sec["episode_days"]) if "episode_days" in eval_sec else None,
        eval_overestimate=float(eval_sec.get("carb_overestimate_fraction", 0.0)),
        scenario_kind=scenario_kind,
        scenario_parameters=_parse_list(scen.get("parameters", ""), float),
        scenario_algorithms=algorithms(scen.get("algorithms", "td3bc")),
        learner_configs=learner_configs,
    )
    if config.dataset_n_samples <= 0:
        raise ConfigError("n_samples must be positive")
    return config
