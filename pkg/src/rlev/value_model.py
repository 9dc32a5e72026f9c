"""Human values, their normalization, and the value-scaled reward family.

The target objective is the utility ``v(x) * 1[correct]``. Training uses a
surrogate reward that never drops below 1 for a correct answer::

    s(x) = 1 + min(alpha * v(x), 1)        reward = s(x) * 1[correct]

Ablation controls (uniform scale, shuffled values, unclipped multiplicative
scale) share the same interface so a training run only swaps its RewardSpec.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "HumanValue",
    "RewardForm",
    "RewardSpec",
    "DifficultyCategory",
    "normalize_value",
    "scale_factor",
    "reward",
    "utility",
    "shuffle_values",
    "difficulty_to_value",
    "mean_scale_factor",
    "resolve_values",
]


def _check_unit(v: float, name: str = "v") -> None:
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def normalize_value(raw_score: float, exam_total: float) -> float:
    """Return ``raw_score / exam_total``, the question's share of its exam."""
    if not exam_total > 0:
        raise ValueError(f"exam_total must be positive, got {exam_total!r}")
    if not (0 <= raw_score <= exam_total):
        raise ValueError(
            f"raw_score must lie in [0, exam_total={exam_total}], got {raw_score!r}"
        )
    return raw_score / exam_total


@dataclass(frozen=True)
class HumanValue:
    raw_score: float
    exam_total: float

    def __post_init__(self):
        # validates both fields
        normalize_value(self.raw_score, self.exam_total)

    @property
    def normalized(self) -> float:
        return self.raw_score / self.exam_total


def scale_factor(v: float, alpha: float) -> float:
    """Clipped additive scale ``1 + min(alpha * v, 1)``; always in [1, 2]."""
    _check_unit(v)
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha!r}")
    return 1.0 + min(alpha * v, 1.0)


def utility(v: float, correct: bool) -> float:
    _check_unit(v)
    return v if correct else 0.0


class RewardForm(str, enum.Enum):
    HUMAN_ALIGNED = "human_aligned"
    MULTIPLICATIVE = "multiplicative"
    UNIFORM = "uniform"
    SHUFFLED = "shuffled"
    CORRECTNESS_ONLY = "correctness_only"


@dataclass(frozen=True)
class RewardSpec:
    """Reward form plus its parameters.

    ``uniform_scale=None`` means "use the dataset mean of the human-aligned
    scale", filled in by :meth:`resolved` once the training values are known.
    ``shuffle_seed`` drives the one-off value permutation of the shuffled form;
    an explicit ``permutation`` (indices into the dataset) overrides it.
    """

    form: RewardForm = RewardForm.HUMAN_ALIGNED
    alpha: float = 10.0
    uniform_scale: float | None = None
    shuffle_seed: int = 0
    permutation: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "form", RewardForm(self.form))
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha!r}")
        if self.uniform_scale is not None and self.uniform_scale < 1:
            raise ValueError(f"uniform_scale must be >= 1, got {self.uniform_scale!r}")

    def resolved(self, values: Sequence[float]) -> "RewardSpec":
        """Fill a missing uniform scale with the mean scale factor of ``values``."""
        if self.form is RewardForm.UNIFORM and self.uniform_scale is None:
            return replace(self, uniform_scale=mean_scale_factor(values, self.alpha))
        return self


def reward(spec: RewardSpec, v: float, correct: bool) -> float:
    """Reward for one response.

    ``v`` must already be resolved for the form: the permuted value for
    ``shuffled``; it is ignored by ``uniform`` and ``correctness_only``.
    """
    _check_unit(v)
    if not correct:
        return 0.0
    form = spec.form
    if form is RewardForm.HUMAN_ALIGNED or form is RewardForm.SHUFFLED:
        return scale_factor(v, spec.alpha)
    if form is RewardForm.MULTIPLICATIVE:
        return 1.0 + spec.alpha * v
    if form is RewardForm.UNIFORM:
        if spec.uniform_scale is None:
            raise ValueError("uniform form needs a resolved uniform_scale")
        return float(spec.uniform_scale)
    return 1.0


def mean_scale_factor(values: Sequence[float], alpha: float) -> float:
    if len(values) == 0:
        raise ValueError("cannot average the scale over an empty dataset")
    return float(np.mean([scale_factor(v, alpha) for v in values]))


def shuffle_values(values: Sequence[float], seed: int) -> list[float]:
    """Deterministic permutation of ``values`` (multiset preserved exactly)."""
    if len(values) == 0:
        raise ValueError("cannot shuffle an empty value list")
    order = np.random.default_rng(seed).permutation(len(values))
    return [values[i] for i in order]


def resolve_values(spec: RewardSpec, values: Sequence[float]) -> list[float]:
    """Per-prompt values fed to :func:`reward` for a whole run.

    The shuffled form permutes once, globally across the dataset; the
    permutation is fixed for the rest of the run.
    """
    values = [float(v) for v in values]
    if spec.form is not RewardForm.SHUFFLED:
        return values
    if spec.permutation is None:
        return shuffle_values(values, spec.shuffle_seed)
    if sorted(spec.permutation) != list(range(len(values))):
        raise ValueError("permutation must rearrange exactly the dataset's indices")
    return [values[i] for i in spec.permutation]


class DifficultyCategory(str, enum.Enum):
    PRIMARY_SCHOOL = "primary_school"
    JUNIOR_HIGH = "junior_high"
    SENIOR_HIGH = "senior_high"
    UNIVERSITY = "university"
    PHD = "phd"


# weak-label points per difficulty level, normalized by 100
_DIFFICULTY_POINTS = {
    DifficultyCategory.PRIMARY_SCHOOL: 1,
    DifficultyCategory.JUNIOR_HIGH: 2,
    DifficultyCategory.SENIOR_HIGH: 4,
    DifficultyCategory.UNIVERSITY: 6,
    DifficultyCategory.PHD: 8,
}


def difficulty_to_value(level: DifficultyCategory | str) -> float:
    return _DIFFICULTY_POINTS[DifficultyCategory(level)] / 100
