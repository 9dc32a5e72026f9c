# %% [markdown]
# Where value-scaled rewards change behaviour: stopping.
# Two policies trained on identical data and seeds, one with value-scaled
# rewards and one with plain correctness. We compare the EOS probability at
# each step for the 40 highest- and 40 lowest-valued prompts.

# %%
from dataclasses import replace

from rlev import ExamDatasetConfig, RewardSpec, TrainConfig, generate_dataset, train
from rlev.analysis import eos_trajectories, write_trajectories_csv

ds = generate_dataset(ExamDatasetConfig())
base = TrainConfig(reward_spec=RewardSpec(alpha=10), epochs=100, seed=0)

tables = []
for form in ("human_aligned", "correctness_only"):
    cfg = replace(base, reward_spec=replace(base.reward_spec, form=form))
    policy = train(cfg, ds).policy
    tables += eos_trajectories(policy, ds, cohort_size=40, checkpoint_label=form)

# %%
for tab in tables:
    steps = " ".join(f"{p:.3f}" for _, p, _ in tab.rows)
    print(f"{tab.checkpoint_label:17s} {tab.cohort:14s} {steps}")

write_trajectories_csv(tables, "trajectories.csv")  # plot-ready
