"""Exact enumeration of small rollout spaces and the logit gradients they imply.

For a prefix ``h`` reached at context ``c`` the per-token correctness
probabilities are ``p_v = P(correct | h, y_t = v)``. The single-step gradient
of the expected reward with respect to the row's logits is::

    dJ/dz_k = pi_k * s * (p_k - sum_v pi_v p_v)

with ``s`` the prompt's reward for a correct answer. In a multi-step policy a
logit row can be shared by several prefixes, and the total derivative picks up
each prefix's reach probability. Two conventions are exposed:

* reach-weighted (``reach_weighted=True``): ``sum_h P(h) * g(h)``, the true
  total derivative, which is what finite differences see;
* reach-conditioned: the same divided by ``P(c)``; this is the single-step
  form above with ``p_v`` averaged over the prefixes landing on ``c``.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceeded, DegenerateEOSWarning
from .exam_env import EOS, ValuedPrompt, verify
from .policy import Context, Policy
from .value_model import RewardSpec, reward

__all__ = [
    "DEFAULT_BUDGET",
    "EnumeratedSpace",
    "GradReport",
    "ContextStats",
    "count_sequences",
    "enumerate_space",
    "exact_objective",
    "correctness_probability",
    "context_statistics",
    "exact_logit_gradient",
    "exact_gradients",
    "eos_gradient",
    "eos_components",
    "finite_difference_gradient",
    "grad_check",
    "write_grad_reports",
    "correct_scale",
]

DEFAULT_BUDGET = 10**6


def count_sequences(vocab_size: int, max_len: int) -> int:
    """Feasible responses: EOS after 0..T-1 tokens, or exactly T tokens."""
    k = vocab_size - 1
    return sum(k**n for n in range(max_len)) + k**max_len


def _check_budget(policy: Policy, budget: int) -> None:
    n = count_sequences(policy.vocab_size, policy.max_len)
    if n > budget:
        raise BudgetExceeded(
            f"vocab_size={policy.vocab_size}, max_len={policy.max_len} gives {n} "
            f"sequences, over the enumeration budget of {budget}"
        )


def correct_scale(spec: RewardSpec, prompt: ValuedPrompt, value: float | None = None) -> float:
    """Reward of a correct answer to ``prompt``; all reward forms are this times 1[correct]."""
    return reward(spec, prompt.value if value is None else value, True)


@dataclass
class EnumeratedSpace:
    prompt_id: int
    sequences: list[tuple[tuple[int, ...], float, bool]]

    @property
    def total_probability(self) -> float:
        return float(sum(p for _, p, _ in self.sequences))


def enumerate_space(policy: Policy, prompt: ValuedPrompt, budget: int = DEFAULT_BUDGET) -> EnumeratedSpace:
    """List every feasible response with its exact probability and verdict."""
    _check_budget(policy, budget)
    answer = prompt.reference_answer
    out: list[tuple[tuple[int, ...], float, bool]] = []

    def walk(prefix: tuple[int, ...], prob: float) -> None:
        pi = policy.probs(policy.context(prompt.id, prefix))
        out.append((prefix + (EOS,), prob * pi[EOS], verify(prefix, answer).correct))
        for v in range(1, policy.vocab_size):
            nxt = prefix + (v,)
            if len(nxt) == policy.max_len:
                out.append((nxt, prob * pi[v], verify(nxt, answer).correct))
            else:
                walk(nxt, prob * pi[v])

    walk((), 1.0)
    return EnumeratedSpace(prompt.id, out)


def exact_objective(
    policy: Policy,
    prompt: ValuedPrompt,
    spec: RewardSpec,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> float:
    v = prompt.value if value is None else value
    space = enumerate_space(policy, prompt, budget)
    return float(sum(p * reward(spec, v, ok) for _, p, ok in space.sequences))


class _Evaluator:
    """Memoized success probabilities ``P(correct | prefix, not yet stopped)``."""

    def __init__(self, policy: Policy, prompt: ValuedPrompt):
        self.policy = policy
        self.prompt = prompt
        self._memo: dict[tuple[int, ...], float] = {}

    def p_next(self, prefix: tuple[int, ...]) -> np.ndarray:
        """``p_v`` for every token v appended to ``prefix``."""
        answer = self.prompt.reference_answer
        T = self.policy.max_len
        p = np.empty(self.policy.vocab_size)
        p[EOS] = float(verify(prefix, answer).correct)
        for v in range(1, self.policy.vocab_size):
            nxt = prefix + (v,)
            p[v] = float(verify(nxt, answer).correct) if len(nxt) == T else self.success(nxt)
        return p

    def success(self, prefix: tuple[int, ...]) -> float:
        val = self._memo.get(prefix)
        if val is None:
            pi = self.policy.probs(self.policy.context(self.prompt.id, prefix))
            val = self._memo[prefix] = float(pi @ self.p_next(prefix))
        return val


def _check_prefix(policy: Policy, prefix: Sequence[int]) -> tuple[int, ...]:
    prefix = tuple(int(t) for t in prefix)
    if EOS in prefix or len(prefix) >= policy.max_len:
        raise ValueError(
            f"prefix {prefix} is not a live partial response (no EOS, fewer than "
            f"max_len={policy.max_len} tokens)"
        )
    if any(not 0 < t < policy.vocab_size for t in prefix):
        raise ValueError(f"prefix {prefix} has tokens outside the vocabulary")
    return prefix


def correctness_probability(
    policy: Policy,
    prompt: ValuedPrompt,
    prefix: Sequence[int],
    v: int,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Exact ``P(final response correct | prefix, next token = v)``."""
    _check_budget(policy, budget)
    prefix = _check_prefix(policy, prefix)
    if not 0 <= v < policy.vocab_size:
        raise ValueError(f"token {v} outside the vocabulary")
    return float(_Evaluator(policy, prompt).p_next(prefix)[v])


@dataclass
class ContextStats:
    """Reach mass of a context and the reach-weighted sum of its ``p_v`` vectors."""

    reach: float
    weighted_p: np.ndarray

    @property
    def conditional_p(self) -> np.ndarray:
        return self.weighted_p / self.reach


def context_statistics(
    policy: Policy, prompt: ValuedPrompt, budget: int = DEFAULT_BUDGET
) -> dict[Context, ContextStats]:
    """Accumulate ``P(h)`` and ``P(h) p(h)`` over all live prefixes, per context."""
    _check_budget(policy, budget)
    ev = _Evaluator(policy, prompt)
    stats: dict[Context, ContextStats] = {}

    def walk(prefix: tuple[int, ...], reach: float) -> None:
        ctx = policy.context(prompt.id, prefix)
        p = ev.p_next(prefix)
        st = stats.get(ctx)
        if st is None:
            stats[ctx] = ContextStats(reach, reach * p)
        else:
            st.reach += reach
            st.weighted_p = st.weighted_p + reach * p
        if len(prefix) + 1 < policy.max_len:
            pi = policy.probs(ctx)
            for v in range(1, policy.vocab_size):
                walk(prefix + (v,), reach * pi[v])

    walk((), 1.0)
    return stats


def _gradient_from_stats(pi: np.ndarray, st: ContextStats, scale: float, reach_weighted: bool) -> np.ndarray:
    wp = st.weighted_p if reach_weighted else st.conditional_p
    return scale * pi * (wp - pi @ wp)


def _stats_for(policy, prompt, ctx, budget) -> ContextStats:
    if ctx.prompt_id != prompt.id or not policy.is_reachable(ctx):
        raise ValueError(f"context {ctx.key()} is not reachable for prompt {prompt.id}")
    st = context_statistics(policy, prompt, budget).get(ctx)
    if st is None or st.reach <= 0.0:
        raise ValueError(f"context {ctx.key()} has zero reach probability")
    return st


def exact_logit_gradient(
    policy: Policy,
    prompt: ValuedPrompt,
    ctx: Context,
    spec: RewardSpec,
    reach_weighted: bool = True,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    st = _stats_for(policy, prompt, ctx, budget)
    return _gradient_from_stats(policy.probs(ctx), st, correct_scale(spec, prompt, value), reach_weighted)


def exact_gradients(
    policy: Policy,
    prompt: ValuedPrompt,
    spec: RewardSpec,
    reach_weighted: bool = True,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> dict[Context, np.ndarray]:
    """Gradient rows for every reachable context of ``prompt`` in one pass."""
    scale = correct_scale(spec, prompt, value)
    return {
        ctx: _gradient_from_stats(policy.probs(ctx), st, scale, reach_weighted)
        for ctx, st in context_statistics(policy, prompt, budget).items()
    }


def eos_components(pi: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    """``(p_e, mean continuation correctness)``; the latter is nan when pi_e == 1."""
    pi_e = pi[EOS]
    if pi_e >= 1.0:
        return float(p[EOS]), float("nan")
    return float(p[EOS]), float((pi[1:] @ p[1:]) / (1.0 - pi_e))


def eos_gradient(
    policy: Policy,
    prompt: ValuedPrompt,
    ctx: Context,
    spec: RewardSpec,
    reach_weighted: bool = False,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """``s * pi_e (1 - pi_e) (p_e - pbar_not_e)`` at ``ctx``.

    ``p`` values are reach-conditioned on ``ctx``; ``reach_weighted=True``
    multiplies by ``P(ctx)`` to match the total derivative. Returns 0 with a
    :class:`DegenerateEOSWarning` when ``pi_e`` is exactly 1.
    """
    st = _stats_for(policy, prompt, ctx, budget)
    pi = policy.probs(ctx)
    pi_e = pi[EOS]
    if pi_e >= 1.0:
        warnings.warn(f"pi_e == 1 at {ctx.key()}; EOS gradient set to 0", DegenerateEOSWarning)
        return 0.0
    p_e, p_cont = eos_components(pi, st.conditional_p)
    g = correct_scale(spec, prompt, value) * pi_e * (1.0 - pi_e) * (p_e - p_cont)
    return float(g * st.reach) if reach_weighted else float(g)


def finite_difference_gradient(
    policy: Policy,
    prompt: ValuedPrompt,
    ctx: Context,
    spec: RewardSpec,
    eps: float = 1e-5,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """Central differences of the enumerated objective in each logit of ``ctx``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    work = policy.copy()
    base = work.get_logits(ctx).copy()
    grad = np.empty(policy.vocab_size)
    for k in range(policy.vocab_size):
        row = base.copy()
        row[k] += eps
        work.logits[ctx] = row
        up = exact_objective(work, prompt, spec, value, budget)
        row = base.copy()
        row[k] -= eps
        work.logits[ctx] = row
        down = exact_objective(work, prompt, spec, value, budget)
        grad[k] = (up - down) / (2 * eps)
    return grad


@dataclass
class GradReport:
    context: Context
    token_index: int
    analytic: float
    finite_difference: float
    eos_formula: float | None = None

    @property
    def max_abs_error(self) -> float:
        return abs(self.analytic - self.finite_difference)


def grad_check(
    policy: Policy,
    prompt: ValuedPrompt,
    spec: RewardSpec,
    eps: float = 1e-5,
    value: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> list[GradReport]:
    """Reach-weighted analytic gradient vs. finite differences for every logit.

    The EOS rows also carry the closed-form EOS gradient, reach-weighted so it
    is directly comparable with the other two columns.
    """
    scale = correct_scale(spec, prompt, value)
    reports = []
    for ctx, st in sorted(context_statistics(policy, prompt, budget).items()):
        pi = policy.probs(ctx)
        analytic = _gradient_from_stats(pi, st, scale, reach_weighted=True)
        fd = finite_difference_gradient(policy, prompt, ctx, spec, eps, value, budget)
        p_e, p_cont = eos_components(pi, st.conditional_p)
        eos_val = scale * pi[EOS] * (1 - pi[EOS]) * (p_e - p_cont) * st.reach
        for k in range(policy.vocab_size):
            reports.append(
                GradReport(
                    ctx, k, float(analytic[k]), float(fd[k]),
                    float(eos_val) if k == EOS else None,
                )
            )
    return reports


def write_grad_reports(reports: Iterable[GradReport], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["context", "token", "analytic", "finite_difference", "eos_formula", "max_abs_error"])
        for r in reports:
            w.writerow([
                r.context.key(), r.token_index, repr(r.analytic), repr(r.finite_difference),
                "" if r.eos_formula is None else repr(r.eos_formula), repr(r.max_abs_error),
            ])
