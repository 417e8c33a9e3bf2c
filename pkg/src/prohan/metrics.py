"""Slot F1 (CoNLL span convention), intent accuracy and overall accuracy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


def bio_spans(tags: Sequence[str]) -> set[tuple[str, int, int]]:
    """(type, start, end) spans, end inclusive.

    An ``I-X`` that does not continue an ``X`` chunk opens a new chunk, as conlleval does.
    """
    spans = set()
    kind, start = None, 0
    for k, tag in enumerate(list(tags) + ["O"]):
        prefix, label = (tag[:1], tag[2:]) if tag != "O" else ("O", None)
        continues = prefix == "I" and label == kind
        if kind is not None and not continues:
            spans.add((kind, start, k - 1))
            kind = None
        if prefix == "B" or (prefix == "I" and not continues):
            kind, start = label, k
    return spans


def span_counts(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> tuple[int, int, int]:
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise ValueError(f"tag sequence length mismatch: {len(g)} gold vs {len(p)} predicted")
        gs, ps = bio_spans(g), bio_spans(p)
        tp += len(gs & ps)
        fp += len(ps - gs)
        fn += len(gs - ps)
    return tp, fp, fn


def slot_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> float:
    """Micro-averaged span F1 over a split; 1.0 when neither side has any span."""
    tp, fp, fn = span_counts(gold, pred)
    if tp + fp + fn == 0:
        return 1.0
    # 2PR / (P + R) with the counts cancelled: one correctly rounded division
    return 2 * tp / (2 * tp + fp + fn)


def intent_accuracy(gold: Sequence[str], pred: Sequence[str]) -> float:
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold intents vs {len(pred)} predicted")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def overall_accuracy(gold_intents, pred_intents, gold_tags, pred_tags) -> float:
    """Fraction of samples whose intent and entire tag sequence are both right."""
    n = len(gold_intents)
    if not (len(pred_intents) == len(gold_tags) == len(pred_tags) == n):
        raise ValueError("prediction and gold lists are misaligned")
    if n == 0:
        return 0.0
    hits = sum(gi == pi and list(gt) == list(pt) for gi, pi, gt, pt in zip(gold_intents, pred_intents, gold_tags, pred_tags))
    return hits / n


def exact_match_rate(gold_tags, pred_tags) -> float:
    if not gold_tags:
        return 0.0
    return sum(list(g) == list(p) for g, p in zip(gold_tags, pred_tags)) / len(gold_tags)


@dataclass
class EvalReport:
    slot_f1: float
    intent_acc: float
    overall_acc: float
    slot_exact: float
    predictions: list[dict] = field(default_factory=list)
    intent_confusion: dict[str, dict[str, int]] = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, predictions: list[dict]) -> "EvalReport":
        """``predictions`` entries carry gold/pred intent and gold/pred slots."""
        gi = [p["gold_intent"] for p in predictions]
        pi = [p["pred_intent"] for p in predictions]
        gs = [p["gold_slots"] for p in predictions]
        ps = [p["pred_slots"] for p in predictions]
        confusion: dict[str, dict[str, int]] = {}
        for g, p in zip(gi, pi):
            row = confusion.setdefault(g, {})
            row[p] = row.get(p, 0) + 1
        confusion = {g: dict(sorted(row.items())) for g, row in sorted(confusion.items())}
        return cls(
            slot_f1=slot_f1(gs, ps),
            intent_acc=intent_accuracy(gi, pi),
            overall_acc=overall_accuracy(gi, pi, gs, ps),
            slot_exact=exact_match_rate(gs, ps),
            predictions=predictions,
            intent_confusion=confusion,
        )

    def summary(self) -> dict[str, float]:
        return {"slot_f1": self.slot_f1, "intent_acc": self.intent_acc, "overall_acc": self.overall_acc,
                "slot_exact": self.slot_exact}

    def to_dict(self) -> dict:
        return {**self.summary(), "intent_confusion": self.intent_confusion, "predictions": self.predictions}
