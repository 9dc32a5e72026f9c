"""Batch experiments: EOS trajectories by value cohort, and reward ablations.

Trajectories average the EOS probability over *active* prefixes only, i.e.
rollouts that have not yet emitted EOS at that step. In exact mode a prefix
is weighted by its reach probability, and ``active_count`` is the expected
number of active rollouts when each cohort prompt is sampled once. In
sampled mode it is the literal count of active sampled rollouts.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .estimators import TrainConfig, evaluate_with, train
from .exact_oracle import DEFAULT_BUDGET, count_sequences
from .exam_env import EOS, ValuedPrompt, dataset_hash
from .metrics import MetricsReport, average_reports, compute_metrics
from .policy import Policy, sample_rollout
from .value_model import RewardForm, RewardSpec

__all__ = [
    "TrajectoryTable",
    "AblationGrid",
    "select_cohorts",
    "eos_trajectories",
    "run_ablation",
    "alpha_sweep",
    "write_trajectories_csv",
]


@dataclass
class TrajectoryTable:
    cohort: str
    checkpoint_label: str
    rows: list[tuple[int, float, float]]
    mode: str = "exact"

    def eos_at(self, step: int) -> float:
        for t, p, _ in self.rows:
            if t == step:
                return p
        raise KeyError(f"no active prefixes at step {step}")


@dataclass
class AblationGrid:
    rows: list[tuple[str, MetricsReport]]
    seeds: list[int]
    dataset_hash: str = ""
    per_seed: dict[str, list[MetricsReport]] = field(default_factory=dict)

    def report(self, form: str) -> MetricsReport:
        for name, rep in self.rows:
            if name == form:
                return rep
        raise KeyError(form)


def select_cohorts(dataset: Sequence[ValuedPrompt], cohort_size: int):
    """Top and bottom ``cohort_size`` prompts by value (ties by id)."""
    if cohort_size < 1 or 2 * cohort_size > len(dataset):
        raise ValueError(
            f"cohort_size={cohort_size} needs at least {2 * cohort_size} prompts "
            f"for disjoint cohorts, got {len(dataset)}"
        )
    order = sorted(dataset, key=lambda p: (p.value, p.id))
    return order[len(order) - cohort_size:][::-1], order[:cohort_size]


def _exact_accumulate(policy: Policy, prompt: ValuedPrompt, mass: np.ndarray, eos: np.ndarray) -> None:
    def walk(prefix: tuple[int, ...], reach: float) -> None:
        t = len(prefix)
        pi = policy.probs(policy.context(prompt.id, prefix))
        mass[t] += reach
        eos[t] += reach * pi[EOS]
        if t + 1 < policy.max_len:
            for v in range(1, policy.vocab_size):
                walk(prefix + (v,), reach * pi[v])

    walk((), 1.0)


def _sampled_accumulate(policy, prompt, n, rng, mass, eos) -> None:
    for _ in range(n):
        ro = sample_rollout(policy, prompt, rng)
        for t, dist in enumerate(ro.step_distributions):
            mass[t] += 1
            eos[t] += dist[EOS]


def _cohort_table(policy, prompts, label, cohort, mode, n_samples, rng) -> TrajectoryTable:
    T = policy.max_len
    mass, eos = np.zeros(T), np.zeros(T)
    for p in prompts:
        if mode == "exact":
            _exact_accumulate(policy, p, mass, eos)
        else:
            _sampled_accumulate(policy, p, n_samples, rng, mass, eos)
    rows = []
    for t in range(T):
        if mass[t] > 0:
            count = float(mass[t]) if mode == "exact" else int(mass[t])
            rows.append((t, float(eos[t] / mass[t]), count))
    return TrajectoryTable(cohort, label, rows, mode)


def eos_trajectories(
    policy: Policy,
    dataset: Sequence[ValuedPrompt],
    cohort_size: int,
    checkpoint_label: str = "",
    mode: str = "auto",
    n_samples: int = 1000,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
) -> tuple[TrajectoryTable, TrajectoryTable]:
    """Mean EOS probability per step for the top- and bottom-valued cohorts.

    ``mode="auto"`` enumerates exactly when the instance fits ``budget`` and
    falls back to ``n_samples`` rollouts per prompt otherwise.
    """
    if mode == "auto":
        fits = count_sequences(policy.vocab_size, policy.max_len) <= budget
        mode = "exact" if fits else "sampled"
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown trajectory mode {mode!r}")
    top, bottom = select_cohorts(dataset, cohort_size)
    rng = np.random.default_rng(seed)
    return (
        _cohort_table(policy, top, checkpoint_label, "top_valued", mode, n_samples, rng),
        _cohort_table(policy, bottom, checkpoint_label, "bottom_valued", mode, n_samples, rng),
    )


def write_trajectories_csv(tables: Sequence[TrajectoryTable], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cohort", "checkpoint", "mode", "step", "mean_eos_prob", "active_count"])
        for tab in tables:
            for t, p, c in tab.rows:
                w.writerow([tab.cohort, tab.checkpoint_label, tab.mode, t, repr(p), repr(c)])


def _run_cell(config: TrainConfig, dataset, bin_fraction: float) -> MetricsReport:
    result = train(config, dataset)
    return compute_metrics(evaluate_with(config, result.policy, dataset), bin_fraction)


def run_ablation(
    base_config: TrainConfig,
    dataset: Sequence[ValuedPrompt],
    forms: Sequence[RewardForm | str],
    seeds: Sequence[int],
    bin_fraction: float = 0.2,
) -> AblationGrid:
    """Train one policy per (form, seed); only the reward form varies."""
    if not seeds:
        raise ConfigError("run_ablation needs at least one seed")
    rows, per_seed = [], {}
    for form in forms:
        form = RewardForm(form)
        spec = replace(base_config.reward_spec, form=form)
        reps = [
            _run_cell(replace(base_config, reward_spec=spec, seed=s), dataset, bin_fraction)
            for s in seeds
        ]
        per_seed[form.value] = reps
        rows.append((form.value, average_reports(reps)))
    return AblationGrid(rows, list(seeds), dataset_hash(dataset), per_seed)


def alpha_sweep(
    base_config: TrainConfig,
    dataset: Sequence[ValuedPrompt],
    alphas: Sequence[float],
    seeds: Sequence[int],
    bin_fraction: float = 0.2,
) -> list[tuple[float, MetricsReport]]:
    """Seed-averaged metrics for each alpha under the base config's reward form."""
    if not alphas:
        raise ConfigError("alpha_sweep needs at least one alpha")
    if not seeds:
        raise ConfigError("alpha_sweep needs at least one seed")
    out = []
    for a in alphas:
        spec = replace(base_config.reward_spec, alpha=float(a))
        reps = [
            _run_cell(replace(base_config, reward_spec=spec, seed=s), dataset, bin_fraction)
            for s in seeds
        ]
        out.append((float(a), average_reports(reps)))
    return out
