"""Tabular autoregressive softmax policy with an explicit EOS token.

A logit row is addressed by :class:`Context` = (prompt id, step position,
last ``context_window`` generated tokens). Rows that were never written read
as zeros, i.e. the uniform distribution. EOS is token 0.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .exam_env import EOS, ValuedPrompt, verify
from .value_model import RewardSpec, reward as reward_fn
from .errors import DataError

__all__ = [
    "Context",
    "Policy",
    "Rollout",
    "softmax",
    "step_distribution",
    "context_for",
    "sample_rollout",
    "greedy_rollout",
    "logprob",
    "save_policy",
    "load_policy",
]


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True, order=True)
class Context:
    prompt_id: int
    position: int
    recent_tokens: tuple[int, ...] = ()

    def key(self) -> str:
        return f"{self.prompt_id}|{self.position}|{','.join(map(str, self.recent_tokens))}"

    @classmethod
    def from_key(cls, key: str) -> "Context":
        pid, pos, toks = key.split("|")
        recent = tuple(int(t) for t in toks.split(",")) if toks else ()
        return cls(int(pid), int(pos), recent)


def context_for(prompt_id: int, prefix: Sequence[int], context_window: int) -> Context:
    """Context reached after emitting ``prefix`` (no EOS) for ``prompt_id``."""
    t = len(prefix)
    recent = tuple(prefix[t - min(t, context_window):]) if context_window else ()
    return Context(prompt_id, t, recent)


@dataclass
class Policy:
    vocab_size: int
    context_window: int = 1
    max_len: int = 4
    logits: dict[Context, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2 (EOS plus one token)")
        if self.context_window < 0 or self.max_len < 1:
            raise ValueError("context_window must be >= 0 and max_len >= 1")

    def context(self, prompt_id: int, prefix: Sequence[int]) -> Context:
        return context_for(prompt_id, prefix, self.context_window)

    def get_logits(self, ctx: Context) -> np.ndarray:
        row = self.logits.get(ctx)
        return np.zeros(self.vocab_size) if row is None else row

    def row(self, ctx: Context) -> np.ndarray:
        """Writable logit row for ``ctx``, created as zeros on first access."""
        row = self.logits.get(ctx)
        if row is None:
            row = self.logits[ctx] = np.zeros(self.vocab_size)
        return row

    def probs(self, ctx: Context) -> np.ndarray:
        row = self.logits.get(ctx)
        if row is None:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        return softmax(row)

    def copy(self) -> "Policy":
        return Policy(
            self.vocab_size,
            self.context_window,
            self.max_len,
            {c: r.copy() for c, r in self.logits.items()},
        )

    def iter_prefix_contexts(self, prompt_id: int) -> Iterator[Context]:
        """Every context a rollout of ``prompt_id`` can reach (no repeats)."""
        seen = set()
        for t in range(self.max_len):
            for recent in _tuples(self.vocab_size, min(t, self.context_window)):
                ctx = Context(prompt_id, t, recent)
                if ctx not in seen:
                    seen.add(ctx)
                    yield ctx

    def is_reachable(self, ctx: Context) -> bool:
        return (
            0 <= ctx.position < self.max_len
            and len(ctx.recent_tokens) == min(ctx.position, self.context_window)
            and all(0 < t < self.vocab_size for t in ctx.recent_tokens)
        )

    def same_as(self, other: "Policy") -> bool:
        if (self.vocab_size, self.context_window, self.max_len) != (
            other.vocab_size, other.context_window, other.max_len
        ):
            return False
        keys = set(self.logits) | set(other.logits)
        return all(np.array_equal(self.get_logits(k), other.get_logits(k)) for k in keys)


def _tuples(vocab_size: int, n: int):
    if n == 0:
        yield ()
        return
    for head in _tuples(vocab_size, n - 1):
        for t in range(1, vocab_size):
            yield head + (t,)


def step_distribution(policy: Policy, ctx: Context) -> np.ndarray:
    return policy.probs(ctx)


@dataclass
class Rollout:
    prompt_id: int
    tokens: list[int]
    truncated: bool
    correct: bool
    reward: float = 0.0
    step_distributions: list[np.ndarray] | None = None

    @property
    def length(self) -> int:
        """Emitted tokens, excluding EOS."""
        return len(self.tokens) - (0 if self.truncated else 1)

    @property
    def response(self) -> list[int]:
        return self.tokens if self.truncated else self.tokens[:-1]


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _finish(policy, prompt, tokens, dists, spec, value):
    truncated = not tokens or tokens[-1] != EOS
    response = tokens if truncated else tokens[:-1]
    correct = verify(response, prompt.reference_answer).correct
    r = 0.0
    if spec is not None:
        r = reward_fn(spec, prompt.value if value is None else value, correct)
    return Rollout(prompt.id, tokens, truncated, correct, r, dists)


def sample_rollout(
    policy: Policy,
    prompt: ValuedPrompt,
    rng_seed=None,
    spec: RewardSpec | None = None,
    value: float | None = None,
    record_distributions: bool = True,
    cache: dict | None = None,
) -> Rollout:
    """Draw one response token by token until EOS or ``max_len`` tokens.

    ``rng_seed`` may be an int or a live ``np.random.Generator`` (consumed in
    place). With ``spec`` the rollout's reward is filled in using ``value``
    (defaults to the prompt's own value). ``cache`` memoizes per-context
    distributions across calls and is only valid while the logits are frozen.
    """
    rng = _as_rng(rng_seed)
    tokens: list[int] = []
    dists = [] if record_distributions else None
    draws = rng.random(policy.max_len)
    for u in draws:
        ctx = policy.context(prompt.id, tokens)
        if cache is None:
            p = policy.probs(ctx)
            cdf = np.cumsum(p)
        else:
            hit = cache.get(ctx)
            if hit is None:
                p = policy.probs(ctx)
                hit = cache[ctx] = (p, np.cumsum(p))
            p, cdf = hit
        tok = min(int(np.searchsorted(cdf, u, side="right")), policy.vocab_size - 1)
        if dists is not None:
            dists.append(p)
        tokens.append(tok)
        if tok == EOS:
            break
    return _finish(policy, prompt, tokens, dists, spec, value)


def greedy_rollout(policy: Policy, prompt: ValuedPrompt, spec=None, value=None) -> Rollout:
    """Argmax decoding; ties go to the lowest token id."""
    tokens: list[int] = []
    for _ in range(policy.max_len):
        tok = int(np.argmax(policy.get_logits(policy.context(prompt.id, tokens))))
        tokens.append(tok)
        if tok == EOS:
            break
    return _finish(policy, prompt, tokens, None, spec, value)


def logprob(policy: Policy, prompt: ValuedPrompt, tokens: Sequence[int]) -> float:
    tokens = list(tokens)
    if EOS in tokens[:-1] or (tokens[-1:] != [EOS] and len(tokens) != policy.max_len):
        raise ValueError("tokens must end at EOS or run to exactly max_len tokens")
    if len(tokens) > policy.max_len:
        raise ValueError("response longer than max_len")
    total = 0.0
    for t, tok in enumerate(tokens):
        p = policy.probs(policy.context(prompt.id, tokens[:t]))[tok]
        if p <= 0.0:
            raise FloatingPointError(f"zero probability for token {tok} at step {t}")
        total += math.log(p)
    return total


def save_policy(policy: Policy, path: str | os.PathLike) -> None:
    """JSONL checkpoint: a header record, then one record per stored row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {
            "type": "header",
            "vocab_size": policy.vocab_size,
            "context_window": policy.context_window,
            "max_len": policy.max_len,
        }
        fh.write(json.dumps(header) + "\n")
        for ctx in sorted(policy.logits):
            row = [float(x) for x in policy.logits[ctx]]
            fh.write(json.dumps({"context": ctx.key(), "logits": row}) + "\n")


def load_policy(path: str | os.PathLike) -> Policy:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty checkpoint")
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise DataError(f"{path}: first record must be the header")
    policy = Policy(header["vocab_size"], header["context_window"], header["max_len"])
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        row = np.asarray(rec["logits"], dtype=float)
        if row.shape != (policy.vocab_size,) or not np.all(np.isfinite(row)):
            raise DataError(f"{path} line {lineno}: bad logit row")
        policy.logits[Context.from_key(rec["context"])] = row
    return policy
