# %% [markdown]
# Exact gradients on a tiny policy.
# With 3 tokens (EOS plus two) and at most 3 steps there are only 15 possible
# responses, so the expected reward and its logit gradient can be enumerated.

# %%
import numpy as np

from rlev import Policy, RewardSpec, ValuedPrompt
from rlev.exact_oracle import (
    context_statistics,
    enumerate_space,
    eos_gradient,
    exact_gradients,
    exact_objective,
    finite_difference_gradient,
)

rng = np.random.default_rng(0)
policy = Policy(vocab_size=3, context_window=1, max_len=3)
for ctx in policy.iter_prefix_contexts(0):
    policy.logits[ctx] = rng.uniform(-2, 2, 3)
prompt = ValuedPrompt(0, 0, (1, 2), (2, 1), 5.0, 100.0, 0.05)
spec = RewardSpec(alpha=10)

space = enumerate_space(policy, prompt)
print(len(space.sequences), "responses, total probability", space.total_probability)
print("J =", exact_objective(policy, prompt, spec))

# %%
# reach-weighted gradient vs central differences, row by row
for ctx, g in exact_gradients(policy, prompt, spec).items():
    fd = finite_difference_gradient(policy, prompt, ctx, spec)
    print(f"{ctx.key():8s} {np.round(g, 5)}  |err| {np.abs(g - fd).max():.1e}")

# %%
# the EOS entry in closed form: s * pi_e (1 - pi_e) (p_e - mean p of continuing)
for ctx, st in context_statistics(policy, prompt).items():
    p = st.conditional_p
    print(f"{ctx.key():8s} p_e={p[0]:.3f} eos grad={eos_gradient(policy, prompt, ctx, spec):+.5f}")
