import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rlev.errors import DataError
from rlev.exam_env import EOS
from rlev.policy import (
    Context,
    Policy,
    context_for,
    greedy_rollout,
    load_policy,
    logprob,
    sample_rollout,
    save_policy,
    step_distribution,
)
from rlev.value_model import RewardForm, RewardSpec, reward

from conftest import make_prompt, random_instance

logit_rows = arrays(np.float64, st.integers(2, 6), elements=st.floats(-20, 20))


def test_uniform_and_closed_form_distribution():
    p = Policy(4)
    ctx = Context(0, 0)
    np.testing.assert_allclose(step_distribution(p, ctx), [0.25] * 4, atol=1e-15)
    q = Policy(3)
    q.logits[ctx] = np.array([math.log(2), 0.0, 0.0])
    np.testing.assert_allclose(step_distribution(q, ctx), [0.5, 0.25, 0.25], atol=1e-15)


@given(logit_rows, st.floats(-50, 50))
def test_normalized_and_shift_invariant(row, shift):
    p = Policy(len(row))
    ctx = Context(0, 0)
    p.logits[ctx] = row
    base = step_distribution(p, ctx)
    assert abs(base.sum() - 1) < 1e-12
    assert np.all(base >= 0)
    p.logits[ctx] = row + shift
    np.testing.assert_allclose(step_distribution(p, ctx), base, atol=1e-12, rtol=0)


def test_context_keeps_last_tokens():
    assert context_for(3, [], 2) == Context(3, 0, ())
    assert context_for(3, [4], 2) == Context(3, 1, (4,))
    assert context_for(3, [4, 5, 1], 2) == Context(3, 3, (5, 1))
    assert context_for(3, [4, 5], 0) == Context(3, 2, ())
    ctx = Context(7, 2, (1, 3))
    assert Context.from_key(ctx.key()) == ctx
    assert Context.from_key(Context(1, 0).key()) == Context(1, 0)


def test_eos_dominant_gives_empty_response():
    p = Policy(4, max_len=3)
    row = np.zeros(4)
    row[EOS] = 50
    p.logits[Context(0, 0)] = row
    ro = sample_rollout(p, make_prompt((2,)), 0)
    assert ro.tokens == [EOS]
    assert ro.length == 0 and not ro.truncated and not ro.correct


def test_sampling_is_deterministic_per_seed():
    p, prompt, spec = random_instance(np.random.default_rng(1), max_len=(3,))
    a = sample_rollout(p, prompt, 99, spec)
    b = sample_rollout(p, prompt, 99, spec)
    assert a.tokens == b.tokens and a.reward == b.reward


def test_truncation_at_max_len():
    p = Policy(4, max_len=3)
    for ctx in p.iter_prefix_contexts(0):
        p.logits[ctx] = np.array([-50.0, 0, 0, 0])
    ro = sample_rollout(p, make_prompt((2,)), 3)
    assert ro.truncated and ro.length == 3 and EOS not in ro.tokens


def test_rollout_invariants():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p, prompt, spec = random_instance(rng)
        ro = sample_rollout(p, prompt, rng, spec)
        assert ro.length <= p.max_len
        if not ro.truncated:
            assert ro.tokens[-1] == EOS and EOS not in ro.tokens[:-1]
        else:
            assert len(ro.tokens) == p.max_len and EOS not in ro.tokens
        assert ro.reward == reward(spec, prompt.value, ro.correct)
        assert len(ro.step_distributions) == len(ro.tokens)


def test_cache_does_not_change_samples():
    p, prompt, spec = random_instance(np.random.default_rng(2), max_len=(3,))
    cache = {}
    for seed in range(20):
        assert sample_rollout(p, prompt, seed).tokens == sample_rollout(p, prompt, seed, cache=cache).tokens


def test_sample_frequencies_match_probabilities():
    p, prompt, _ = random_instance(np.random.default_rng(8), vocab=(3,), max_len=(2,), window=(1,))
    rng = np.random.default_rng(0)
    n = 40000
    counts = {}
    for _ in range(n):
        t = tuple(sample_rollout(p, prompt, rng, record_distributions=False).tokens)
        counts[t] = counts.get(t, 0) + 1
    for seq, c in counts.items():
        q = math.exp(logprob(p, prompt, seq))
        assert abs(c / n - q) < 4 * math.sqrt(q * (1 - q) / n)


def test_logprob_uniform():
    p = Policy(4, max_len=3)
    assert logprob(p, make_prompt(), [1, 2, 3]) == pytest.approx(3 * math.log(0.25))
    assert logprob(p, make_prompt(), [1, EOS]) == pytest.approx(2 * math.log(0.25))
    with pytest.raises(ValueError):
        logprob(p, make_prompt(), [1, 2])  # neither EOS-terminated nor full length
    with pytest.raises(ValueError):
        logprob(p, make_prompt(), [EOS, 1, EOS])


def _feasible(V, T):
    seqs = []
    for n in range(T):
        seqs += [s + (EOS,) for s in itertools.product(range(1, V), repeat=n)]
    return seqs + list(itertools.product(range(1, V), repeat=T))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_feasible_sequences_sum_to_one(seed):
    p, prompt, _ = random_instance(np.random.default_rng(seed))
    total = sum(math.exp(logprob(p, prompt, s)) for s in _feasible(p.vocab_size, p.max_len))
    assert abs(total - 1) < 1e-10


def test_greedy_tie_break_and_length():
    p = Policy(3, max_len=2)
    ro = greedy_rollout(p, make_prompt((1,)))
    assert ro.tokens == [EOS]
    row = np.array([0.0, 1.0, 0.0])
    for ctx in p.iter_prefix_contexts(0):
        p.logits[ctx] = row
    ro = greedy_rollout(p, make_prompt((1,)), RewardSpec(RewardForm.CORRECTNESS_ONLY))
    assert ro.tokens == [1, 1] and ro.truncated and ro.correct and ro.reward == 1.0


def test_checkpoint_roundtrip(tmp_path):
    p, _, _ = random_instance(np.random.default_rng(3), max_len=(3,), window=(2,))
    path = tmp_path / "policy.jsonl"
    save_policy(p, path)
    q = load_policy(path)
    assert q.same_as(p)
    save_policy(q, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_bad_rows(tmp_path):
    path = tmp_path / "policy.jsonl"
    path.write_text(
        '{"type": "header", "vocab_size": 3, "context_window": 1, "max_len": 2}\n'
        '{"context": "0|0|", "logits": [0, 1]}\n'
    )
    with pytest.raises(DataError, match="line 2"):
        load_policy(path)
    path.write_text('{"context": "0|0|", "logits": [0, 1, 2]}\n')
    with pytest.raises(DataError, match="header"):
        load_policy(path)


def test_policy_validation_and_reachability():
    with pytest.raises(ValueError):
        Policy(1)
    p = Policy(3, context_window=1, max_len=2)
    ctxs = list(p.iter_prefix_contexts(0))
    assert ctxs == [Context(0, 0), Context(0, 1, (1,)), Context(0, 1, (2,))]
    assert all(p.is_reachable(c) for c in ctxs)
    assert not p.is_reachable(Context(0, 2, (1,)))
    assert not p.is_reachable(Context(0, 1, (0,)))
