# %% [markdown]
# Reward-form ablation and alpha sensitivity.
# Only the reward form changes between rows; everything else is shared. Uniform scaling multiplies every correct reward by the dataset
# mean scale, which RLOO sees as a larger step size and GRPO cannot see at all.

# %%
from rlev import ExamDatasetConfig, RewardForm, TrainConfig, generate_dataset
from rlev.analysis import alpha_sweep, run_ablation

ds = generate_dataset(ExamDatasetConfig())
base = TrainConfig(epochs=40)

grid = run_ablation(base, ds, list(RewardForm), seeds=[0, 1, 2])
for form, m in grid.rows:
    print(f"{form:17s} acc={m.acc:.3f} h_acc={m.h_acc:.3f} len={m.mean_length:.2f} high={m.acc_high_bin:.3f}")

# %%
for a, m in alpha_sweep(base, ds, [0, 1, 5, 10, 15, 20], seeds=[0, 1]):
    print(f"alpha={a:4.0f} h_acc={m.h_acc:.3f} len={m.mean_length:.2f}")
