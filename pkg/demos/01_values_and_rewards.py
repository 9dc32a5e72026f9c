# %% [markdown]
# Question values and the reward family.
# A question's value is its share of the exam's points. Correct answers earn
# 1 + min(alpha * v, 1), so a correct answer never earns less than 1.

# %%
import numpy as np

from rlev import ExamDatasetConfig, RewardForm, RewardSpec, generate_dataset, normalize_value, reward, scale_factor
from rlev.value_model import difficulty_to_value, mean_scale_factor

normalize_value(10, 100)      # 0.1
scale_factor(0.02, 10)        # 1.2, the typical question
scale_factor(0.5, 10)         # clipped at 2.0
difficulty_to_value("phd")    # weak label, 0.08

# %%
# a skewed exam set: lots of 1-2 point items, a few worth 10-15
ds = generate_dataset(ExamDatasetConfig(num_exams=10, questions_per_exam=50, seed=0))
v = np.array([p.value for p in ds])
print(f"{len(ds)} prompts, mean v = {v.mean():.4f}, share above 0.1 = {(v > 0.1).mean():.3%}")
print("value histogram:", np.histogram(v, bins=[0, 0.01, 0.02, 0.05, 0.1, 1])[0])

# %%
# every form on the same question; only uniform ignores v
for form in RewardForm:
    spec = RewardSpec(form, alpha=10).resolved(v.tolist())
    print(f"{form.value:17s} correct={reward(spec, 0.05, True):.3f} wrong={reward(spec, 0.05, False):.1f}")

print("dataset mean scale:", round(mean_scale_factor(v.tolist(), 10), 4))
