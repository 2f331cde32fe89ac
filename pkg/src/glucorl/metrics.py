"""Clinical glycemic metrics aggregated across evaluation rollouts.

Per rollout: time-in-range / time-below-range are percentages of CGM
readings inside 70-180 mg/dl (boundaries inclusive) and below 70; the
coefficient of variation uses the population standard deviation of the
readings; failure means the episode terminated on a true-glucose excursion
outside the survivable range.  Rollouts are grouped by test seed, and
reported values are the mean with standard error across the per-seed means.

All accumulation uses correctly rounded summation (math.fsum), so an
independently written brute-force recount reproduces every value bit for
bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TARGET_RANGE = (70.0, 180.0)

CLINICAL_TARGETS = {
    "tir_pct": ("min", 70.0),
    "tbr_pct": ("max", 4.0),
    "cv_pct": ("max", 36.0),
    "failure_pct": ("max", 0.0),
}


@dataclass(frozen=True)
class EvalTrace:
    """One evaluation rollout's observable record."""

    patient_id: str
    age_group: str
    train_seed: int
    test_seed: int
    cgm: np.ndarray          # all readings seen during the rollout
    rewards: np.ndarray
    terminated: bool         # true glucose left the survivable range

    def validate(self) -> None:
        if len(self.cgm) == 0:
            raise ValueError("empty CGM trace")


@dataclass(frozen=True)
class MetricStat:
    mean: float
    se: float


@dataclass
class GlycemicReport:
    reward_sum: MetricStat
    tir_pct: MetricStat
    tbr_pct: MetricStat
    cv_pct: MetricStat
    failure_pct: MetricStat
    n_rollouts: int
    by_age_group: dict[str, "GlycemicReport"] = field(default_factory=dict)

    def meets_clinical_targets(self) -> dict[str, bool]:
        """Annotate against consensus targets; never mutates the metrics."""
        flags = {}
        for name, (kind, threshold) in CLINICAL_TARGETS.items():
            value = getattr(self, name).mean
            flags[name] = value > threshold if kind == "min" else value <= threshold
        return flags


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _se(values: list[float]) -> float:
    """Standard error of the mean across values; 0 for a single value."""
    n = len(values)
    if n < 2:
        return 0.0
    m = _mean(values)
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return math.sqrt(var / n)


def trace_tir(cgm: np.ndarray) -> float:
    lo, hi = TARGET_RANGE
    count = sum(1 for g in cgm if lo <= g <= hi)
    return 100.0 * count / len(cgm)


def trace_tbr(cgm: np.ndarray) -> float:
    count = sum(1 for g in cgm if g < TARGET_RANGE[0])
    return 100.0 * count / len(cgm)


def trace_cv(cgm: np.ndarray) -> float:
    """100 * population sd / mean of the readings."""
    m = math.fsum(cgm) / len(cgm)
    var = math.fsum((g - m) ** 2 for g in cgm) / len(cgm)
    return 100.0 * math.sqrt(var) / m


def compute_metrics(traces: list[EvalTrace]) -> GlycemicReport:
    """Aggregate rollout traces into a seed-grouped report."""
    if not traces:
        raise ValueError("no traces to aggregate")
    for trace in traces:
        trace.validate()

    def aggregate(group: list[EvalTrace]) -> GlycemicReport:
        per_seed: dict[int, list[EvalTrace]] = {}
        for tr in group:
            per_seed.setdefault(tr.test_seed, []).append(tr)
        seed_means = {name: [] for name in
                      ("reward_sum", "tir_pct", "tbr_pct", "cv_pct", "failure_pct")}
        for seed in sorted(per_seed):
            rollouts = per_seed[seed]
            seed_means["reward_sum"].append(
                _mean([math.fsum(tr.rewards) for tr in rollouts]))
            seed_means["tir_pct"].append(_mean([trace_tir(tr.cgm) for tr in rollouts]))
            seed_means["tbr_pct"].append(_mean([trace_tbr(tr.cgm) for tr in rollouts]))
            seed_means["cv_pct"].append(_mean([trace_cv(tr.cgm) for tr in rollouts]))
            seed_means["failure_pct"].append(
                _mean([100.0 if tr.terminated else 0.0 for tr in rollouts]))
        stats = {name: MetricStat(_mean(vals), _se(vals))
                 for name, vals in seed_means.items()}
        return GlycemicReport(n_rollouts=len(group), **stats)

    report = aggregate(traces)
    groups = sorted({tr.age_group for tr in traces})
    if len(groups) > 1:
        for name in groups:
            report.by_age_group[name] = aggregate(
                [tr for tr in traces if tr.age_group == name])
    return report


def format_report(report: GlycemicReport, label: str = "") -> str:
    """Human-readable one-block summary."""
    def line(name: str, stat: MetricStat, unit: str = "%") -> str:
        return f"  {name:<12} {stat.mean:10.2f} +- {stat.se:.2f} {unit}"

    parts = [f"{label} ({report.n_rollouts} rollouts)" if label
             else f"({report.n_rollouts} rollouts)"]
    parts.append(line("reward_sum", report.reward_sum, ""))
    parts.append(line("TIR", report.tir_pct))
    parts.append(line("TBR", report.tbr_pct))
    parts.append(line("CV", report.cv_pct))
    parts.append(line("failure", report.failure_pct))
    for group, sub in report.by_age_group.items():
        parts.append(f"  [{group}] TIR {sub.tir_pct.mean:.2f} "
                     f"TBR {sub.tbr_pct.mean:.2f} CV {sub.cv_pct.mean:.2f} "
                     f"failure {sub.failure_pct.mean:.2f}")
    return "\n".join(parts)
