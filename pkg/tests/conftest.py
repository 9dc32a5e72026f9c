import numpy as np
import pytest

from rlev.exam_env import ValuedPrompt
from rlev.policy import Policy
from rlev.value_model import RewardForm, RewardSpec

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def make_prompt(answer=(1,), value=0.1, pid=0, exam_id=0):
    raw = round(value * 100, 9)
    return ValuedPrompt(pid, exam_id, (1, 2), tuple(answer), raw, 100.0, raw / 100.0)


def random_instance(rng, vocab=(3, 4), max_len=(1, 2, 3), window=(0, 1, 2), alphas=(0.0, 1.0, 10.0)):
    """Random small policy, prompt and spec; logits uniform in [-2, 2]."""
    V = int(rng.choice(vocab))
    T = int(rng.choice(max_len))
    c = int(rng.choice(window))
    policy = Policy(V, c, T)
    for ctx in policy.iter_prefix_contexts(0):
        policy.logits[ctx] = rng.uniform(-2, 2, V)
    answer = tuple(int(t) for t in rng.integers(1, V, size=int(rng.integers(1, min(T, 2) + 1))))
    prompt = make_prompt(answer, float(rng.integers(0, 101)) / 100)
    spec = RewardSpec(RewardForm.HUMAN_ALIGNED, float(rng.choice(alphas)))
    return policy, prompt, spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
