"""Intent accuracy, span-level slot F1, and joint accuracy.

Slot F1 is micro-averaged over typed spans with exact boundaries (the
conlleval convention).  Joint accuracy compares the raw predicted slot
label sequence against gold, not spans: a query counts iff the intent and
the entire slot sequence are exactly right.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import LabelSpace, LengthMismatch, Sample, bio_spans


@dataclass(frozen=True)
class MetricsSummary:
    n_queries: int
    n_intent_correct: int
    n_joint_correct: int
    n_gold_spans: int
    n_pred_spans: int
    n_correct_spans: int

    @property
    def intent_acc(self) -> float | None:
        return None if self.n_queries == 0 else self.n_intent_correct / self.n_queries

    @property
    def joint_acc(self) -> float | None:
        return None if self.n_queries == 0 else self.n_joint_correct / self.n_queries

    @property
    def slot_precision(self) -> float | None:
        if self.n_queries == 0:
            return None
        return self.n_correct_spans / self.n_pred_spans if self.n_pred_spans else 0.0

    @property
    def slot_recall(self) -> float | None:
        if self.n_queries == 0:
            return None
        return self.n_correct_spans / self.n_gold_spans if self.n_gold_spans else 0.0

    @property
    def slot_f1(self) -> float | None:
        if self.n_queries == 0:
            return None
        p, r = self.slot_precision, self.slot_recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def merged(self, other: "MetricsSummary") -> "MetricsSummary":
        return MetricsSummary(
            n_queries=self.n_queries + other.n_queries,
            n_intent_correct=self.n_intent_correct + other.n_intent_correct,
            n_joint_correct=self.n_joint_correct + other.n_joint_correct,
            n_gold_spans=self.n_gold_spans + other.n_gold_spans,
            n_pred_spans=self.n_pred_spans + other.n_pred_spans,
            n_correct_spans=self.n_correct_spans + other.n_correct_spans,
        )

    def to_dict(self) -> dict:
        return {
            "intent_acc": self.intent_acc,
            "slot_f1": self.slot_f1,
            "slot_precision": self.slot_precision,
            "slot_recall": self.slot_recall,
            "joint_acc": self.joint_acc,
            "counts": {
                "n_queries": self.n_queries,
                "n_intent_correct": self.n_intent_correct,
                "n_joint_correct": self.n_joint_correct,
                "n_gold_spans": self.n_gold_spans,
                "n_pred_spans": self.n_pred_spans,
                "n_correct_spans": self.n_correct_spans,
            },
        }


EMPTY_METRICS = MetricsSummary(0, 0, 0, 0, 0, 0)


def score(
    predictions: Sequence[tuple[int, Sequence[int]]],
    golds: Sequence[Sample],
    ls: LabelSpace,
) -> MetricsSummary:
    """Score aligned (intent id, slot id sequence) predictions against gold samples."""
    if len(predictions) != len(golds):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(golds)} gold samples"
        )
    n_intent = n_joint = n_gold = n_pred = n_correct = 0
    for (pred_intent, pred_slots), gold in zip(predictions, golds):
        pred_slots = list(pred_slots)
        if len(pred_slots) != len(gold.slots):
            raise LengthMismatch(
                f"{len(pred_slots)} predicted slots vs {len(gold.slots)} tokens"
            )
        intent_ok = pred_intent == gold.intent
        slots_ok = tuple(pred_slots) == gold.slots
        n_intent += intent_ok
        n_joint += intent_ok and slots_ok
        gold_spans = set(bio_spans(gold.slots, ls))
        pred_spans = set(bio_spans(pred_slots, ls))
        n_gold += len(gold_spans)
        n_pred += len(pred_spans)
        n_correct += len(gold_spans & pred_spans)
    return MetricsSummary(
        n_queries=len(golds),
        n_intent_correct=n_intent,
        n_joint_correct=n_joint,
        n_gold_spans=n_gold,
        n_pred_spans=n_pred,
        n_correct_spans=n_correct,
    )
