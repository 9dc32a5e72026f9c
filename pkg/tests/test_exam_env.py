import json
import logging
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlev.errors import DataError
from rlev.exam_env import (
    EOS,
    ExamDatasetConfig,
    answer_for_key,
    dataset_hash,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_by_exam,
    verify,
)


def test_uniform_scores_example():
    ds = generate_dataset(ExamDatasetConfig(num_exams=2, questions_per_exam=5, score_distribution="uniform_scores"))
    assert len(ds) == 10
    assert all(p.value == pytest.approx(0.2, abs=1e-15) for p in ds)


def test_generation_is_deterministic():
    cfg = ExamDatasetConfig(seed=17)
    assert generate_dataset(cfg) == generate_dataset(cfg)
    assert generate_dataset(cfg) != generate_dataset(ExamDatasetConfig(seed=18))


@pytest.mark.parametrize("seed", range(5))
def test_skewed_value_shape(seed):
    ds = generate_dataset(ExamDatasetConfig(num_exams=10, questions_per_exam=50, seed=seed))
    values = np.array([p.value for p in ds])
    assert 0.01 <= values.mean() <= 0.05
    assert (values > 0.1).mean() < 0.05
    # long tail: maximum well above the mean
    assert values.max() > 3 * values.mean()


@given(
    st.integers(3, 8),
    st.integers(1, 6),
    st.integers(1, 30),
    st.integers(1, 4),
    st.sampled_from(["uniform_scores", "skewed_scores"]),
    st.integers(0, 1000),
)
@settings(max_examples=40, deadline=None)
def test_generated_invariants(vocab, exams, questions, alen, dist, seed):
    cfg = ExamDatasetConfig(vocab, exams, questions, alen, dist, seed)
    ds = generate_dataset(cfg)
    assert len(ds) == exams * questions
    assert len({p.id for p in ds}) == len(ds)
    assert len({p.prompt_tokens for p in ds}) == len(ds)
    by_exam = defaultdict(list)
    for p in ds:
        p.check()
        assert EOS not in p.reference_answer
        assert 1 <= len(p.reference_answer) <= alen
        assert all(0 < t < vocab for t in p.prompt_tokens + p.reference_answer)
        assert p.reference_answer == answer_for_key(p.prompt_tokens, vocab, alen)
        by_exam[p.exam_id].append(p)
    for qs in by_exam.values():
        assert sum(p.raw_score for p in qs) == pytest.approx(qs[0].exam_total, abs=1e-9)
        assert sum(p.value for p in qs) == pytest.approx(1.0, abs=1e-9)


def test_config_validation():
    with pytest.raises(DataError):
        generate_dataset(ExamDatasetConfig(vocab_size=2))
    with pytest.raises(DataError):
        generate_dataset(ExamDatasetConfig(answer_length=0))
    with pytest.raises(DataError):
        generate_dataset(ExamDatasetConfig(score_distribution="normal"))


@pytest.mark.parametrize(
    "resp,ans,correct,matched",
    [
        ([7, 3, 5], [3, 5], True, 2),
        ([3, 5, 7], [3, 5], False, 0),
        ([], [4], False, 0),
        ([4, 5], [3, 5], False, 1),
        ([3, 5], [3, 5], True, 2),
    ],
)
def test_verify_examples(resp, ans, correct, matched):
    v = verify(resp, ans)
    assert v.correct is correct
    assert v.matched_suffix_length == matched


@given(st.lists(st.integers(1, 5), max_size=6), st.lists(st.integers(1, 5), min_size=1, max_size=4))
def test_verify_correct_iff_full_suffix(resp, ans):
    v = verify(resp, ans)
    assert v.correct == (v.matched_suffix_length == len(ans))
    assert v.correct == (len(resp) >= len(ans) and resp[len(resp) - len(ans):] == ans)
    assert verify(resp, ans) == v


def test_roundtrip(tmp_path):
    ds = generate_dataset(ExamDatasetConfig(num_exams=3, questions_per_exam=7, seed=4))
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    assert load_dataset(path) == ds
    assert dataset_hash(load_dataset(path)) == dataset_hash(ds)


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def _rec(**kw):
    rec = dict(id=0, exam_id=0, prompt_tokens=[1, 2], reference_answer=[3], raw_score=5, exam_total=100, value=0.05)
    rec.update(kw)
    return rec


def test_load_three_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    _write(path, [_rec(id=i) for i in range(3)])
    assert len(load_dataset(path)) == 3


def test_load_rejects_bad_value(tmp_path):
    path = tmp_path / "d.jsonl"
    _write(path, [_rec(), _rec(id=1, value=0.2)])
    with pytest.raises(DataError, match="line 2.*value"):
        load_dataset(path)


@pytest.mark.parametrize(
    "bad,field",
    [
        ({"reference_answer": [0]}, "EOS"),
        ({"reference_answer": []}, "reference_answer"),
        ({"raw_score": 200, "value": 2.0}, "raw_score"),
        ({"id": "a"}, "id"),
        ({"prompt_tokens": "12"}, "prompt_tokens"),
        ({"exam_total": 0, "value": 0}, "exam_total"),
    ],
)
def test_load_rejects_invalid_fields(tmp_path, bad, field):
    path = tmp_path / "d.jsonl"
    _write(path, [_rec(**bad)])
    with pytest.raises(DataError, match=field):
        load_dataset(path)


def test_load_reports_parse_errors_with_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(_rec()) + "\n{not json\n")
    with pytest.raises(DataError, match="line 2"):
        load_dataset(path)
    rec = _rec()
    del rec["value"]
    _write(path, [rec])
    with pytest.raises(DataError, match="missing field.*value"):
        load_dataset(path)


def test_empty_file_warns(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        assert load_dataset(path) == []
    assert "empty" in caplog.text


def test_split_by_exam_is_disjoint():
    ds = generate_dataset(ExamDatasetConfig(num_exams=5, questions_per_exam=4))
    train, test = split_by_exam(ds, 0.4, seed=1)
    assert len(train) + len(test) == len(ds)
    assert not {p.exam_id for p in train} & {p.exam_id for p in test}
    assert len({p.exam_id for p in test}) == 2


def test_exam_id_offset():
    ds = generate_dataset(ExamDatasetConfig(num_exams=2, questions_per_exam=3, exam_id_offset=10))
    assert {p.exam_id for p in ds} == {10, 11}
