"""Monte-Carlo policy-gradient training of the tabular policy.

Three advantage estimators share one on-policy update:

* ``reinforce_baseline``: ``A_i = r_i - b`` with an exponential moving
  baseline, updated after it is used;
* ``rloo``: ``A_i = r_i - mean_{j != i} r_j`` within a prompt's group;
* ``grpo``: ``A_i = (r_i - mean r) / max(std r, floor)`` within the group.

Each rollout step with token ``y`` at context ``c`` contributes
``lr * A * (onehot(y) - pi(.|c))`` to the logits of ``c``; contributions are
summed over the batch and applied after all of them are computed.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .exam_env import ValuedPrompt, dataset_hash
from .metrics import EvalResult, compute_metrics
from .policy import Context, Policy, Rollout, greedy_rollout, sample_rollout
from .value_model import RewardSpec, resolve_values

__all__ = [
    "Estimator",
    "EstimatorKind",
    "MovingBaseline",
    "TrainConfig",
    "RunLogRecord",
    "TrainResult",
    "advantages",
    "score_function",
    "apply_update",
    "evaluate",
    "evaluate_with",
    "train",
    "write_run_log",
]


class Estimator(str, enum.Enum):
    REINFORCE_BASELINE = "reinforce_baseline"
    RLOO = "rloo"
    GRPO = "grpo"


@dataclass(frozen=True)
class EstimatorKind:
    kind: Estimator = Estimator.RLOO
    group_size: int = 8
    baseline_decay: float = 0.9
    grpo_std_floor: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", Estimator(self.kind))
        if self.kind is not Estimator.REINFORCE_BASELINE and self.group_size < 2:
            raise ConfigError(f"group_size must be >= 2 for {self.kind.value}")
        if not 0 <= self.baseline_decay < 1:
            raise ConfigError("baseline_decay must lie in [0, 1)")
        if not self.grpo_std_floor > 0:
            raise ConfigError("grpo_std_floor must be positive")


@dataclass
class MovingBaseline:
    value: float = 0.0


def advantages(
    kind: EstimatorKind,
    rewards: Sequence[float],
    baseline_state: MovingBaseline | None = None,
) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if kind.kind is Estimator.REINFORCE_BASELINE:
        if baseline_state is None:
            baseline_state = MovingBaseline()
        adv = r - baseline_state.value
        if r.size:
            d = kind.baseline_decay
            baseline_state.value = d * baseline_state.value + (1 - d) * float(r.mean())
        return adv
    if r.size != kind.group_size:
        raise ValueError(f"expected a group of {kind.group_size} rewards, got {r.size}")
    if kind.kind is Estimator.RLOO:
        g = r.size
        return r - (r.sum() - r) / (g - 1)
    return (r - r.mean()) / max(float(r.std()), kind.grpo_std_floor)


def score_function(policy: Policy, rollout: Rollout) -> dict[Context, np.ndarray]:
    """``sum_t onehot(y_t) - pi(.|c_t)`` grouped by context.

    Uses the rollout's recorded distributions when present, so it must be
    called before the policy that produced them is modified.
    """
    out: dict[Context, np.ndarray] = {}
    dists = rollout.step_distributions
    for t, tok in enumerate(rollout.tokens):
        ctx = policy.context(rollout.prompt_id, rollout.tokens[:t])
        g = -(dists[t] if dists is not None else policy.probs(ctx))
        g[tok] += 1.0
        if ctx in out:
            out[ctx] += g
        else:
            out[ctx] = g
    return out


def apply_update(policy: Policy, rollouts: Sequence[Rollout], advantages: Sequence[float], lr: float) -> Policy:
    """In-place on-policy step; every score term uses the pre-update policy."""
    if len(rollouts) != len(advantages):
        raise ValueError("one advantage per rollout required")
    delta: dict[Context, np.ndarray] = {}
    for ro, a in zip(rollouts, advantages):
        if a == 0.0:
            continue
        for ctx, g in score_function(policy, ro).items():
            if ctx in delta:
                delta[ctx] += a * g
            else:
                delta[ctx] = a * g
    for ctx in sorted(delta):
        policy.row(ctx)[:] += lr * delta[ctx]
    return policy


@dataclass(frozen=True)
class TrainConfig:
    estimator: EstimatorKind = field(default_factory=EstimatorKind)
    reward_spec: RewardSpec = field(default_factory=RewardSpec)
    learning_rate: float = 0.05
    rollout_batch: int = 128
    epochs: int = 1
    seed: int = 0
    eval_every: int = 0
    context_window: int = 1
    max_len: int = 4
    # None: one more than the largest token id in the dataset
    vocab_size: int | None = None
    # argmax decoding of a tabular row saturates as soon as one logit leads,
    # so the default scores the stochastic policy by sampling
    eval_mode: str = "sampled"
    eval_samples: int = 32
    eval_seed: int = 1234

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if self.rollout_batch < 1:
            raise ConfigError("rollout_batch must be >= 1")
        if self.epochs < 0 or self.eval_every < 0:
            raise ConfigError("epochs and eval_every must be nonnegative")
        if self.eval_mode not in ("greedy", "sampled"):
            raise ConfigError(f"eval_mode must be greedy or sampled, got {self.eval_mode!r}")
        if self.eval_samples < 1:
            raise ConfigError("eval_samples must be >= 1")

    @property
    def prompts_per_step(self) -> int:
        if self.estimator.kind is Estimator.REINFORCE_BASELINE:
            return self.rollout_batch
        return max(1, self.rollout_batch // self.estimator.group_size)


@dataclass
class RunLogRecord:
    step: int
    mean_reward: float
    acc: float
    h_acc: float
    mean_length: float
    policy_checkpoint_ref: str | None = None


@dataclass
class TrainResult:
    policy: Policy
    log: list[RunLogRecord]
    dataset_hash: str
    reward_spec: RewardSpec

    def __iter__(self):
        # allows ``policy, log = train(...)``
        yield self.policy
        yield self.log


def evaluate(
    policy: Policy,
    dataset: Sequence[ValuedPrompt],
    mode: str = "greedy",
    samples: int = 16,
    seed: int = 0,
) -> list[EvalResult]:
    """Score the policy on ``dataset``.

    ``greedy`` decodes once per prompt by argmax; ``sampled`` draws
    ``samples`` rollouts per prompt from a generator seeded with ``seed`` and
    returns one result per rollout.
    """
    if mode == "greedy":
        out = []
        for p in dataset:
            ro = greedy_rollout(policy, p)
            out.append(EvalResult(p.id, p.value, ro.correct, ro.length))
        return out
    if mode != "sampled":
        raise ValueError(f"unknown eval mode {mode!r}")
    rng = np.random.default_rng(seed)
    out = []
    for p in dataset:
        for _ in range(samples):
            ro = sample_rollout(policy, p, rng, record_distributions=False)
            out.append(EvalResult(p.id, p.value, ro.correct, ro.length))
    return out


def evaluate_with(config: TrainConfig, policy: Policy, dataset: Sequence[ValuedPrompt]) -> list[EvalResult]:
    return evaluate(policy, dataset, config.eval_mode, config.eval_samples, config.eval_seed)


def _log_record(config, step, policy, dataset, mean_reward) -> RunLogRecord:
    m = compute_metrics(evaluate_with(config, policy, dataset))
    return RunLogRecord(step, float(mean_reward), m.acc, m.h_acc, m.mean_length)


def train(config: TrainConfig, dataset: Sequence[ValuedPrompt], policy: Policy | None = None) -> TrainResult:
    """Run ``config.epochs`` shuffled passes over ``dataset``.

    Each step takes ``prompts_per_step`` prompts; RLOO/GRPO draw
    ``group_size`` rollouts per prompt, REINFORCE draws one. The run is a
    deterministic function of ``config.seed`` and the dataset.
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    vocab = 1 + max(max(p.prompt_tokens + p.reference_answer) for p in dataset)
    if config.vocab_size is not None:
        if config.vocab_size < vocab:
            raise ConfigError(f"vocab_size={config.vocab_size} cannot encode the dataset's tokens")
        vocab = config.vocab_size
    if policy is None:
        policy = Policy(vocab, config.context_window, config.max_len)
    elif policy.vocab_size < vocab:
        raise ConfigError("policy vocabulary too small for the dataset")

    values = resolve_values(config.reward_spec, [p.value for p in dataset])
    spec = config.reward_spec.resolved([p.value for p in dataset])
    value_of = {p.id: v for p, v in zip(dataset, values)}

    rng = np.random.default_rng(config.seed)
    est = config.estimator
    baseline = MovingBaseline()
    n_per_step = config.prompts_per_step
    group = 1 if est.kind is Estimator.REINFORCE_BASELINE else est.group_size

    log: list[RunLogRecord] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), n_per_step):
            batch = [dataset[i] for i in order[start:start + n_per_step]]
            rollouts, advs = [], []
            cache: dict = {}
            if est.kind is Estimator.REINFORCE_BASELINE:
                rollouts = [
                    sample_rollout(policy, p, rng, spec, value_of[p.id], cache=cache)
                    for p in batch
                ]
                advs = list(advantages(est, [ro.reward for ro in rollouts], baseline))
            else:
                for p in batch:
                    grp = [
                        sample_rollout(policy, p, rng, spec, value_of[p.id], cache=cache)
                        for _ in range(group)
                    ]
                    rollouts.extend(grp)
                    advs.extend(advantages(est, [ro.reward for ro in grp]))
            mean_reward = float(np.mean([ro.reward for ro in rollouts]))
            apply_update(policy, rollouts, advs, config.learning_rate)
            step += 1
            if config.eval_every and step % config.eval_every == 0:
                log.append(_log_record(config, step, policy, dataset, mean_reward))
    return TrainResult(policy, log, dataset_hash(dataset), spec)


def write_run_log(log: Sequence[RunLogRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in log:
            fh.write(json.dumps(asdict(rec)) + "\n")
