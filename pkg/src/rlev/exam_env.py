"""Synthetic exam datasets with per-question point values.

Every prompt carries a unique key (``prompt_tokens``); its reference answer is
a fixed pseudorandom function of that key, so a tabular policy conditioned on
the prompt can learn it. Responses are graded by exact trailing match: the
last ``len(answer)`` emitted tokens must equal the answer.

Token 0 is reserved for EOS and never appears in prompts or answers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

EOS = 0

__all__ = [
    "EOS",
    "ValuedPrompt",
    "ExamDatasetConfig",
    "Verdict",
    "generate_dataset",
    "answer_for_key",
    "verify",
    "save_dataset",
    "load_dataset",
    "dataset_hash",
    "split_by_exam",
]

VALUE_TOL = 1e-9

# long-tailed point menu for skewed exams: mostly 1-2 point items, a few big ones
_SKEWED_POINTS = np.array([1, 2, 3, 4, 5, 8, 10, 15], dtype=float)
_SKEWED_PROBS = np.array([0.40, 0.30, 0.10, 0.07, 0.05, 0.04, 0.025, 0.015])


@dataclass(frozen=True)
class ValuedPrompt:
    id: int
    exam_id: int
    prompt_tokens: tuple[int, ...]
    reference_answer: tuple[int, ...]
    raw_score: float
    exam_total: float
    value: float

    def __post_init__(self):
        object.__setattr__(self, "prompt_tokens", tuple(int(t) for t in self.prompt_tokens))
        object.__setattr__(self, "reference_answer", tuple(int(t) for t in self.reference_answer))

    def check(self) -> None:
        """Raise :class:`DataError` naming the first violated invariant."""
        if not 1 <= len(self.reference_answer) <= 4:
            raise DataError(f"prompt {self.id}: reference_answer must have 1..4 tokens")
        if EOS in self.reference_answer:
            raise DataError(f"prompt {self.id}: reference_answer contains EOS")
        if not self.exam_total > 0:
            raise DataError(f"prompt {self.id}: exam_total must be positive")
        if not 0 <= self.raw_score <= self.exam_total:
            raise DataError(f"prompt {self.id}: raw_score outside [0, exam_total]")
        if abs(self.value - self.raw_score / self.exam_total) > VALUE_TOL:
            raise DataError(
                f"prompt {self.id}: value {self.value} != raw_score/exam_total "
                f"{self.raw_score / self.exam_total}"
            )

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["prompt_tokens"] = list(self.prompt_tokens)
        rec["reference_answer"] = list(self.reference_answer)
        return rec


@dataclass(frozen=True)
class ExamDatasetConfig:
    vocab_size: int = 6
    num_exams: int = 4
    questions_per_exam: int = 50
    answer_length: int = 2
    score_distribution: str = "skewed_scores"
    seed: int = 0
    # first exam_id to hand out; disjoint ranges keep train/test split by exam
    exam_id_offset: int = 0

    def validate(self) -> None:
        if self.vocab_size < 3:
            raise DataError(f"vocab_size must be >= 3 (EOS + answer + filler), got {self.vocab_size}")
        if self.answer_length < 1 or self.answer_length > 4:
            raise DataError(f"answer_length must be in 1..4, got {self.answer_length}")
        if self.num_exams < 1 or self.questions_per_exam < 1:
            raise DataError("num_exams and questions_per_exam must be positive")
        if self.score_distribution not in ("uniform_scores", "skewed_scores"):
            raise DataError(f"unknown score_distribution {self.score_distribution!r}")


@dataclass(frozen=True)
class Verdict:
    correct: bool
    matched_suffix_length: int


def verify(response_tokens: Sequence[int], reference_answer: Sequence[int]) -> Verdict:
    """Trailing exact match of ``reference_answer`` against the response.

    ``response_tokens`` excludes the terminal EOS. ``matched_suffix_length``
    counts how many trailing answer tokens line up, from the end backwards.
    """
    n = len(reference_answer)
    matched = 0
    for i in range(1, min(n, len(response_tokens)) + 1):
        if response_tokens[-i] != reference_answer[-i]:
            break
        matched += 1
    return Verdict(correct=matched == n, matched_suffix_length=matched)


def answer_for_key(prompt_tokens: Sequence[int], vocab_size: int, max_answer_length: int) -> tuple[int, ...]:
    """Pseudorandom answer determined only by the prompt key."""
    rng = np.random.default_rng([vocab_size, *map(int, prompt_tokens)])
    length = int(rng.integers(1, max_answer_length + 1))
    return tuple(int(t) for t in rng.integers(1, vocab_size, size=length))


def _key_tokens(code: int, base: int, width: int) -> tuple[int, ...]:
    digits = []
    for _ in range(width):
        code, d = divmod(code, base)
        digits.append(d + 1)
    return tuple(reversed(digits))


def _exam_scores(rng: np.random.Generator, n: int, kind: str) -> np.ndarray:
    if kind == "uniform_scores":
        return np.full(n, 2.0)
    return rng.choice(_SKEWED_POINTS, size=n, p=_SKEWED_PROBS)


def generate_dataset(config: ExamDatasetConfig) -> list[ValuedPrompt]:
    """Build ``num_exams * questions_per_exam`` prompts, deterministic in ``seed``.

    Values within an exam sum to 1, so the dataset mean value is exactly
    ``1 / questions_per_exam``; with ``skewed_scores`` and 20-100 questions
    per exam the mean lands in [0.01, 0.05] with a thin tail above 0.1.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_total = config.num_exams * config.questions_per_exam
    base = config.vocab_size - 1
    # room for unique keys with plenty of spare codes so keys look random
    width = max(2, math.ceil(math.log(max(n_total, 2) * 16, base)))
    codes = rng.choice(base**width, size=n_total, replace=False)

    prompts = []
    pid = 0
    for e in range(config.num_exams):
        scores = _exam_scores(rng, config.questions_per_exam, config.score_distribution)
        total = float(scores.sum())
        for s in scores:
            key = _key_tokens(int(codes[pid]), base, width)
            prompts.append(
                ValuedPrompt(
                    id=pid,
                    exam_id=config.exam_id_offset + e,
                    prompt_tokens=key,
                    reference_answer=answer_for_key(key, config.vocab_size, config.answer_length),
                    raw_score=float(s),
                    exam_total=total,
                    value=float(s) / total,
                )
            )
            pid += 1
    return prompts


def split_by_exam(prompts: Sequence[ValuedPrompt], test_fraction: float, seed: int = 0):
    """Partition prompts into (train, test) with no exam shared across the two."""
    exams = sorted({p.exam_id for p in prompts})
    rng = np.random.default_rng(seed)
    n_test = max(1, round(test_fraction * len(exams))) if len(exams) > 1 else 0
    test_exams = set(rng.permutation(exams)[:n_test].tolist())
    train = [p for p in prompts if p.exam_id not in test_exams]
    test = [p for p in prompts if p.exam_id in test_exams]
    return train, test


def save_dataset(prompts: Iterable[ValuedPrompt], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in prompts:
            fh.write(json.dumps(p.to_record()) + "\n")


_FIELDS = ("id", "exam_id", "prompt_tokens", "reference_answer", "raw_score", "exam_total", "value")


def _parse_record(obj: dict, lineno: int) -> ValuedPrompt:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: expected a JSON object")
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise DataError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    for name in ("id", "exam_id"):
        if not isinstance(obj[name], int) or isinstance(obj[name], bool):
            raise DataError(f"line {lineno}: field {name} must be an integer")
    for name in ("prompt_tokens", "reference_answer"):
        toks = obj[name]
        if not isinstance(toks, list) or not all(isinstance(t, int) and t >= 0 for t in toks):
            raise DataError(f"line {lineno}: field {name} must be an array of token ids")
    for name in ("raw_score", "exam_total", "value"):
        if not isinstance(obj[name], (int, float)) or isinstance(obj[name], bool):
            raise DataError(f"line {lineno}: field {name} must be a number")
    prompt = ValuedPrompt(**{f: obj[f] for f in _FIELDS})
    try:
        prompt.check()
    except DataError as exc:
        raise DataError(f"line {lineno}: {exc}") from None
    return prompt


def load_dataset(path: str | os.PathLike) -> list[ValuedPrompt]:
    """Read and validate a JSONL dataset. Blank lines are skipped."""
    prompts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            prompts.append(_parse_record(obj, lineno))
    if not prompts:
        logger.warning("dataset %s is empty", path)
    return prompts


def dataset_hash(prompts: Iterable[ValuedPrompt]) -> str:
    h = hashlib.sha256()
    for p in prompts:
        h.update(json.dumps(p.to_record(), sort_keys=True).encode())
    return h.hexdigest()[:16]
