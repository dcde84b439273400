"""Matching quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

from pgwmatch.errors import ValidationError


@dataclass(frozen=True)
class MetricReport:
    recall: float
    precision: float
    f1: float


def f1_score(recall: float, precision: float) -> float:
    if recall + precision == 0:
        return 0.0
    return 2.0 * recall * precision / (recall + precision)


def score(pred, truth) -> MetricReport:
    """Recall, precision and F1 of predicted pairs against the true pairs.

    ``pred`` is a :class:`~pgwmatch.matcher.Correspondence` or an iterable of
    ``(source, target)`` pairs. Precision with no predictions is 0.
    """
    truth = {(int(s), int(t)) for s, t in truth}
    if not truth:
        raise ValidationError("ground truth must not be empty")
    pairs = pred.pair_set() if hasattr(pred, "pair_set") else {(int(s), int(t)) for s, t, *_ in pred}
    correct = len(pairs & truth)
    recall = correct / len(truth)
    precision = correct / len(pairs) if pairs else 0.0
    return MetricReport(recall, precision, f1_score(recall, precision))
