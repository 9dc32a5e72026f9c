"""Value-scaled correctness rewards for policy-gradient training, at desk scale."""

from .analysis import AblationGrid, TrajectoryTable, alpha_sweep, eos_trajectories, run_ablation
from .errors import BudgetExceeded, ConfigError, DataError, DegenerateEOSWarning
from .estimators import (
    Estimator,
    EstimatorKind,
    TrainConfig,
    advantages,
    apply_update,
    evaluate,
    score_function,
    train,
)
from .exact_oracle import (
    correctness_probability,
    enumerate_space,
    eos_gradient,
    exact_gradients,
    exact_logit_gradient,
    exact_objective,
    finite_difference_gradient,
    grad_check,
)
from .exam_env import EOS, ExamDatasetConfig, ValuedPrompt, generate_dataset, load_dataset, save_dataset, verify
from .metrics import EvalResult, MetricsReport, compute_metrics, value_density
from .policy import Context, Policy, Rollout, greedy_rollout, load_policy, logprob, sample_rollout, save_policy
from .value_model import (
    HumanValue,
    RewardForm,
    RewardSpec,
    normalize_value,
    reward,
    scale_factor,
    utility,
)

__version__ = "0.1.0"
