# %% [markdown]
# Training with REINFORCE, RLOO and GRPO.
# Each estimator trains a fresh tabular policy on the same 200 prompts; the
# policy is then scored by sampling 32 responses per prompt.

# %%
from rlev import EstimatorKind, ExamDatasetConfig, RewardSpec, TrainConfig, generate_dataset, train
from rlev.estimators import evaluate_with
from rlev.metrics import compute_metrics

ds = generate_dataset(ExamDatasetConfig())

# %%
for kind in ("reinforce_baseline", "rloo", "grpo"):
    cfg = TrainConfig(EstimatorKind(kind), RewardSpec(alpha=10), epochs=30, seed=0)
    policy, log = train(cfg, ds)
    m = compute_metrics(evaluate_with(cfg, policy, ds))
    print(f"{kind:19s} acc={m.acc:.3f} h_acc={m.h_acc:.3f} len={m.mean_length:.2f} density={m.value_density:.1f}")

# %%
# run log: one record every 25 steps
cfg = TrainConfig(epochs=10, eval_every=25, eval_samples=8)
for rec in train(cfg, ds).log:
    print(rec.step, round(rec.mean_reward, 3), round(rec.h_acc, 3))
