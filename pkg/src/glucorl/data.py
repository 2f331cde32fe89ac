"""Offline data: demonstrator rollout logging, transition assembly, disk formats.

Raw per-step logs are the canonical interchange artifact; learner-facing
transitions (with recomputed features and normalization statistics) are
always derived from logs at load time so featurization can never drift
between generation and training.

On disk a log is a comma-separated UTF-8 table plus a ``.meta`` sidecar in
the shared key-value format carrying the format version, provenance and a
SHA-256 content checksum.  Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import OuParams, PidParams, ou_step, pid_init, pid_step
from .env import EpisodeConfig, GlucoseEnv, featurize, normalize_action
from .fileio import atomic_write_text, fmt_float, read_params, sha256_file, write_params
from .meals import MealProfile
from .patient import PatientParams
from .simulator import PumpConfig, SensorConfig, equilibrium_state

LOG_FORMAT_VERSION = 1

LOG_COLUMNS = ("step_index", "episode_id", "patient_id", "seed", "true_glucose",
               "cgm", "basal", "bolus", "true_carbs", "announced_carbs",
               "reward", "done")


class MalformedLogError(ValueError):
    """Log violates the schema (non-contiguous steps, bad columns, ...)."""


class ChecksumError(IOError):
    """Stored checksum does not match file contents."""


@dataclass
class TrajectoryLog:
    """Column-oriented per-step record of demonstrator rollouts."""

    patient_id: str
    seed: int
    control_period: float
    step_index: np.ndarray       # int, contiguous within each episode
    episode_id: np.ndarray       # int
    true_glucose: np.ndarray     # mg/dl at decision time
    cgm: np.ndarray              # mg/dl reading the controller saw
    basal: np.ndarray            # U/h delivered during the step
    bolus: np.ndarray            # U delivered during the step
    true_carbs: np.ndarray       # g ingested during the step
    announced_carbs: np.ndarray  # g reported to the bolus calculator
    reward: np.ndarray
    done: np.ndarray             # bool, true only on an episode's final row
    provenance: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.step_index)

    def validate(self) -> None:
        n = len(self)
        if n == 0:
            raise MalformedLogError("empty log")
        for eid in np.unique(self.episode_id):
            steps = self.step_index[self.episode_id == eid]
            if not np.array_equal(steps, np.arange(len(steps))):
                raise MalformedLogError(f"episode {eid}: non-contiguous step_index")
            done_rows = np.flatnonzero(self.done[self.episode_id == eid])
            if done_rows.size > 1 or (done_rows.size == 1 and done_rows[0] != len(steps) - 1):
                raise MalformedLogError(f"episode {eid}: done not confined to final row")


@dataclass
class Transition:
    """One POMDP step as seen by the learners."""

    state: np.ndarray
    action: float         # normalized to [-1, 1]
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class OfflineDataset:
    """Learner-ready transitions with per-dimension normalization statistics."""

    states: np.ndarray        # (n, 12)
    actions: np.ndarray       # (n, 1) in [-1, 1]
    rewards: np.ndarray       # (n,)
    next_states: np.ndarray   # (n, 12)
    dones: np.ndarray         # (n,) bool
    norm_mean: np.ndarray     # (12,)
    norm_sd: np.ndarray       # (12,)
    provenance: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)

    def transitions(self) -> list[Transition]:
        return [Transition(self.states[i], float(self.actions[i, 0]),
                           float(self.rewards[i]), self.next_states[i],
                           bool(self.dones[i])) for i in range(len(self))]


def generate_dataset(patient: PatientParams, demonstrator: PidParams,
                     n_samples: int, ou: OuParams, carb_noise_sd: float,
                     seed: int, profile: MealProfile,
                     episode: EpisodeConfig = EpisodeConfig(),
                     sensor: SensorConfig = SensorConfig(),
                     pump: PumpConfig = PumpConfig(),
                     meal_time_sd: float | None = None,
                     include_snacks: bool = True) -> TrajectoryLog:
    """Log n_samples control steps of noisy-PID demonstration.

    Consecutive fixed-length episodes run until the sample budget is filled;
    the final episode is truncated mid-run if needed.  Exploration noise is
    an OU process added to the raw PID output before pump clamping; meal
    announcements carry multiplicative estimation error of sd carb_noise_sd.
    Fully deterministic given the seed.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be > 0")
    ou.validate()
    root = np.random.SeedSequence(seed)
    columns = {name: [] for name in
               ("step_index", "episode_id", "true_glucose", "cgm", "basal", "bolus",
                "true_carbs", "announced_carbs", "reward", "done")}
    rows = 0
    episode_idx = 0
    while rows < n_samples:
        env_ss, ou_ss = root.spawn(2)
        ou_rng = np.random.default_rng(ou_ss)
        env = GlucoseEnv(patient, profile, episode, sensor, pump,
                         meal_time_sd=meal_time_sd, include_snacks=include_snacks,
                         carb_noise_sd=carb_noise_sd)
        env.reset(env_ss)
        pid_state = pid_init(env.current_cgm())
        noise = ou.mu
        budget = n_samples - rows
        while not env.done and env.steps_taken() < budget:
            raw, pid_state = pid_step(demonstrator, pid_state, env.current_cgm())
            noise = ou_step(ou, noise, 1.0, ou_rng)
            action = normalize_action(raw + noise, patient.max_basal)
            env.step(action, compute_features=False)
        n = env.steps_taken()
        columns["step_index"].append(np.arange(n))
        columns["episode_id"].append(np.full(n, episode_idx))
        columns["true_glucose"].append(env.true_glucose[:n])
        columns["cgm"].append(env.cgm[:n])
        columns["basal"].append(env.basal[:n])
        columns["bolus"].append(env.bolus[:n])
        columns["true_carbs"].append(env.true_carbs[:n])
        columns["announced_carbs"].append(env.announced_carbs[:n])
        columns["reward"].append(env.rewards[:n])
        # a budget-truncated episode (env still live) is not an episode end
        done_col = np.zeros(n, dtype=bool)
        if env.done:
            done_col[-1] = True
        columns["done"].append(done_col)
        rows += n
        episode_idx += 1

    log = TrajectoryLog(
        patient_id=patient.id, seed=seed, control_period=episode.control_period,
        step_index=np.concatenate(columns["step_index"]).astype(np.int64),
        episode_id=np.concatenate(columns["episode_id"]).astype(np.int64),
        true_glucose=np.concatenate(columns["true_glucose"]),
        cgm=np.concatenate(columns["cgm"]),
        basal=np.concatenate(columns["basal"]),
        bolus=np.concatenate(columns["bolus"]),
        true_carbs=np.concatenate(columns["true_carbs"]),
        announced_carbs=np.concatenate(columns["announced_carbs"]),
        reward=np.concatenate(columns["reward"]),
        done=np.concatenate(columns["done"]),
        provenance={
            "demonstrator": f"pid kp={demonstrator.kp} ki={demonstrator.ki} "
                            f"kd={demonstrator.kd} g_target={demonstrator.g_target}",
            "ou_theta_per_step": fmt_float(ou.theta),
            "ou_sigma_u_per_h": fmt_float(ou.sigma),
            "ou_mu_u_per_h": fmt_float(ou.mu),
            "carb_noise_sd_fraction": fmt_float(carb_noise_sd),
            "seed": str(seed),
            "n_samples": str(n_samples),
            "patient_id": patient.id,
        },
    )
    log.validate()
    return log


def build_transitions(log: TrajectoryLog, patient: PatientParams) -> OfflineDataset:
    """Assemble learner transitions from a raw log.

    Features are recomputed with the canonical featurizer (insulin from the
    delivered basal/bolus columns, carbohydrates from announcements), actions
    renormalized from the delivered basal rate, and episode boundaries
    respected.  A trailing budget-truncated row has no successor observation
    and is dropped; terminal rows keep a copied next_state that learners mask
    via done.
    """
    log.validate()
    eq = equilibrium_state(patient)
    pad_glucose = eq.plasma_glucose
    period_hours = log.control_period / 60.0
    pad_dose = patient.basal_equilibrium * period_hours

    states, actions, rewards, next_states, dones = [], [], [], [], []
    for eid in np.unique(log.episode_id):
        mask = log.episode_id == eid
        cgm = log.cgm[mask]
        dose = log.basal[mask] * period_hours + log.bolus[mask]
        carbs = log.announced_carbs[mask]
        rew = log.reward[mask]
        done = log.done[mask]
        basal = log.basal[mask]
        n = len(cgm)
        feats = [featurize(cgm, dose, carbs, t, pad_glucose, pad_dose)
                 for t in range(n)]
        for t in range(n):
            if t == n - 1:
                if not done[t]:
                    break  # truncated episode: final transition has no successor
                nxt = feats[t].copy()
            else:
                nxt = feats[t + 1]
            states.append(feats[t])
            actions.append(normalize_action(float(basal[t]), patient.max_basal))
            rewards.append(float(rew[t]))
            next_states.append(nxt)
            dones.append(bool(done[t]))

    states_arr = np.asarray(states)
    sd = np.std(states_arr, axis=0)
    return OfflineDataset(
        states=states_arr,
        actions=np.asarray(actions)[:, None],
        rewards=np.asarray(rewards),
        next_states=np.asarray(next_states),
        dones=np.asarray(dones, dtype=bool),
        norm_mean=np.mean(states_arr, axis=0),
        norm_sd=np.maximum(sd, 1e-8),
        provenance=dict(log.provenance, transition_count=str(len(states))),
    )


# -- disk format -----------------------------------------------------------


def save_log(log: TrajectoryLog, path: str | Path) -> None:
    """Write the CSV table and its checksummed metadata sidecar."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    n = len(log)
    for i in range(n):
        writer.writerow((
            int(log.step_index[i]), int(log.episode_id[i]), log.patient_id,
            log.seed, fmt_float(log.true_glucose[i]), fmt_float(log.cgm[i]),
            fmt_float(log.basal[i]), fmt_float(log.bolus[i]),
            fmt_float(log.true_carbs[i]), fmt_float(log.announced_carbs[i]),
            fmt_float(log.reward[i]), int(log.done[i]),
        ))
    atomic_write_text(path, buf.getvalue())
    sidecar = {
        "log": {
            "rows": str(n),
            "patient_id": log.patient_id,
            "seed": str(log.seed),
            "control_period_minutes": fmt_float(log.control_period),
            "checksum_sha256": sha256_file(path),
        },
        "provenance": dict(log.provenance),
    }
    write_params(sidecar_path(path), sidecar, LOG_FORMAT_VERSION)


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta")


def load_log(path: str | Path, verify: bool = True) -> TrajectoryLog:
    """Read a log; checksum failure or truncation refuses to load."""
    path = Path(path)
    meta = read_params(sidecar_path(path), LOG_FORMAT_VERSION)
    info = meta["log"]
    if verify and sha256_file(path) != info["checksum_sha256"]:
        raise ChecksumError(f"{path}: checksum mismatch")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != LOG_COLUMNS:
            raise MalformedLogError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if len(rows) != int(info["rows"]):
        raise ChecksumError(f"{path}: row count mismatch")
    cols = list(zip(*rows))
    log = TrajectoryLog(
        patient_id=info["patient_id"],
        seed=int(info["seed"]),
        control_period=float(info["control_period_minutes"]),
        step_index=np.array(cols[0], dtype=np.int64),
        episode_id=np.array(cols[1], dtype=np.int64),
        true_glucose=np.array(cols[4], dtype=np.float64),
        cgm=np.array(cols[5], dtype=np.float64),
        basal=np.array(cols[6], dtype=np.float64),
        bolus=np.array(cols[7], dtype=np.float64),
        true_carbs=np.array(cols[8], dtype=np.float64),
        announced_carbs=np.array(cols[9], dtype=np.float64),
        reward=np.array(cols[10], dtype=np.float64),
        done=np.array(cols[11], dtype=np.int64).astype(bool),
        provenance=meta.get("provenance", {}),
    )
    log.validate()
    return log


def load_dataset(path: str | Path, patient: PatientParams) -> OfflineDataset:
    """Load a log from disk and derive its transitions."""
    return build_transitions(load_log(path), patient)
