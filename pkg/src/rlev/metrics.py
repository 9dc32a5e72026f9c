"""Evaluation metrics: accuracy, value-weighted accuracy, length, value density.

``value_density`` divides H-Acc *as a percentage* by the mean response
length, so an H-Acc of 0.57 over 84.8 tokens gives 57.0 / 84.8 = 0.67.
Lengths count emitted tokens and exclude EOS.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

__all__ = [
    "EvalResult",
    "MetricsReport",
    "value_density",
    "bin_membership",
    "compute_metrics",
    "average_reports",
    "write_reports_csv",
]


@dataclass(frozen=True)
class EvalResult:
    prompt_id: int
    value: float
    correct: bool
    response_length: int

    def __post_init__(self):
        if self.response_length < 0:
            raise ValueError("response_length must be nonnegative")


@dataclass
class MetricsReport:
    acc: float
    h_acc: float
    mean_length: float
    value_density: float
    acc_high_bin: float
    acc_low_bin: float
    n: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def value_density(h_acc_percent: float, mean_length: float) -> float:
    """Value per token; ``nan`` when no tokens were generated."""
    if mean_length <= 0:
        return math.nan
    return h_acc_percent / mean_length


def _bin_size(n: int, bin_fraction: float) -> int:
    if not 0 < bin_fraction <= 0.5:
        raise ValueError(f"bin_fraction must lie in (0, 0.5], got {bin_fraction}")
    return math.ceil(bin_fraction * n - 1e-12)


def _sorted_indices(results: Sequence[EvalResult]) -> list[int]:
    return sorted(range(len(results)), key=lambda i: (results[i].value, results[i].prompt_id))


def bin_membership(results: Sequence[EvalResult], bin_fraction: float = 0.2) -> tuple[list[int], list[int]]:
    """Prompt ids of the top and bottom ``ceil(bin_fraction * n)`` results by value.

    Results are ordered by ``(value, prompt_id)`` ascending; the bottom bin is
    the head of that order and the top bin its tail. The bins are disjoint
    whenever ``2 * ceil(bin_fraction * n) <= n``.
    """
    if not results:
        raise ValueError("no results to bin")
    k = _bin_size(len(results), bin_fraction)
    order = _sorted_indices(results)
    high = [results[i].prompt_id for i in order[len(order) - k:]]
    low = [results[i].prompt_id for i in order[:k]]
    return high, low


def compute_metrics(results: Sequence[EvalResult], bin_fraction: float = 0.2) -> MetricsReport:
    if not results:
        raise ValueError("no results to score")
    n = len(results)
    total_value = sum(r.value for r in results)
    if total_value <= 0:
        raise ValueError("total value is zero; H-Acc undefined")
    acc = sum(r.correct for r in results) / n
    h_acc = sum(r.value for r in results if r.correct) / total_value
    mean_length = sum(r.response_length for r in results) / n

    k = _bin_size(n, bin_fraction)
    order = _sorted_indices(results)
    high = [results[i] for i in order[n - k:]]
    low = [results[i] for i in order[:k]]
    return MetricsReport(
        acc=acc,
        h_acc=h_acc,
        mean_length=mean_length,
        value_density=value_density(100 * h_acc, mean_length),
        acc_high_bin=sum(r.correct for r in high) / k,
        acc_low_bin=sum(r.correct for r in low) / k,
        n=n,
    )


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise mean over seeds; ``n`` is kept from the first report."""
    if not reports:
        raise ValueError("nothing to average")
    mean = {
        f.name: sum(getattr(r, f.name) for r in reports) / len(reports)
        for f in fields(MetricsReport)
        if f.name != "n"
    }
    return MetricsReport(n=reports[0].n, **mean)


def write_reports_csv(rows: Iterable[tuple[dict, MetricsReport]], path: str | os.PathLike) -> None:
    """One CSV row per configuration: its label columns, then every metric."""
    rows = list(rows)
    metric_names = [f.name for f in fields(MetricsReport)]
    label_names = list(rows[0][0]) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(label_names + metric_names)
        for labels, rep in rows:
            w.writerow([labels[k] for k in label_names] + [repr(getattr(rep, m)) for m in metric_names])
