"""Grounding metrics: IoU accuracy, grounded multiple choice, corpus stats.

All ratios are computed as exact fractions over integer pixel areas and
only rounded at display time, so threshold comparisons and reported
averages carry no floating-point slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .composer import NestedInstance
from .errors import EmptyCorpusError, MalformedRecordError
from .scene_graph import BBox


def iou(a: BBox, b: BBox) -> Fraction:
    """Intersection over union as an exact fraction."""
    ix_min = max(a.x_min, b.x_min)
    iy_min = max(a.y_min, b.y_min)
    ix_max = min(a.x_max, b.x_max)
    iy_max = min(a.y_max, b.y_max)
    if ix_min >= ix_max or iy_min >= iy_max:
        return Fraction(0)
    inter = (ix_max - ix_min) * (iy_max - iy_min)
    union = a.area + b.area - inter
    return Fraction(inter, union)


@dataclass(frozen=True)
class EvalRecord:
    """One evaluation item.

    Grounding records carry ``predicted`` only; multiple-choice records
    carry ``candidates`` plus ``predicted`` as the model's box used to
    select among them.
    """

    item_id: str
    text: str
    level: int
    gold: BBox
    predicted: BBox | None = None
    candidates: tuple[BBox, ...] | None = None


@dataclass
class Metrics:
    """Scores and corpus statistics; unused sections stay None.

    ``accuracy`` and the per-level map are exact fractions; ``flagged``
    records item ids with the reason they needed attention (missing
    predictions, tie-breaks).
    """

    total: int = 0
    correct: int = 0
    accuracy: Fraction | None = None
    per_level: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)
    avg_objects: Fraction | None = None
    avg_level: Fraction | None = None
    level_histogram: dict = field(default_factory=dict)


def _finalize_accuracy(metrics: Metrics) -> Metrics:
    if metrics.total:
        metrics.accuracy = Fraction(metrics.correct, metrics.total)
    for level, cell in metrics.per_level.items():
        cell["accuracy"] = Fraction(cell["correct"], cell["total"]) if cell["total"] else None
    return metrics


def _bump(metrics: Metrics, level: int, correct: bool) -> None:
    metrics.total += 1
    cell = metrics.per_level.setdefault(level, {"total": 0, "correct": 0})
    cell["total"] += 1
    if correct:
        metrics.correct += 1
        cell["correct"] += 1


def score_grounding(records, threshold=Fraction(1, 2)) -> Metrics:
    """Top-1 accuracy: a record is correct when IoU(pred, gold) >= threshold."""
    threshold = Fraction(threshold) if not isinstance(threshold, Fraction) else threshold
    metrics = Metrics()
    for rec in records:
        if rec.predicted is None:
            _bump(metrics, rec.level, False)
            metrics.flagged.append((rec.item_id, "missing prediction"))
            continue
        _bump(metrics, rec.level, iou(rec.predicted, rec.gold) >= threshold)
    return _finalize_accuracy(metrics)


def score_multichoice(records) -> Metrics:
    """Candidate-selection accuracy.

    The model's predicted box selects the candidate it overlaps most;
    the record scores correct when that is also the candidate closest to
    gold.  IoU ties resolve to the lowest candidate index and flag the
    record.
    """
    metrics = Metrics()
    for rec in records:
        if rec.candidates is None or len(rec.candidates) < 2:
            n = 0 if rec.candidates is None else len(rec.candidates)
            raise MalformedRecordError(f"record {rec.item_id!r} has {n} candidates, need at least 2")
        if rec.predicted is None:
            _bump(metrics, rec.level, False)
            metrics.flagged.append((rec.item_id, "missing prediction"))
            continue
        gold_idx, gold_tied = _argmax_iou(rec.gold, rec.candidates)
        sel_idx, sel_tied = _argmax_iou(rec.predicted, rec.candidates)
        if gold_tied or sel_tied:
            metrics.flagged.append((rec.item_id, "iou tie broken to lowest index"))
        _bump(metrics, rec.level, sel_idx == gold_idx)
    return _finalize_accuracy(metrics)


def _argmax_iou(box: BBox, candidates) -> tuple[int, bool]:
    scores = [iou(box, c) for c in candidates]
    best = max(scores)
    winners = [i for i, s in enumerate(scores) if s == best]
    return winners[0], len(winners) > 1


def corpus_stats(instances) -> Metrics:
    """Corpus-level statistics over nested instances.

    Object count per instance is the number of distinct head entities in
    its expression hierarchy; the complexity average is over instance
    max levels; the histogram counts expressions per level.
    """
    instances = list(instances)
    if not instances:
        raise EmptyCorpusError("no instances to compute statistics over")
    metrics = Metrics(total=len(instances))
    object_counts = []
    level_sum = 0
    for inst in instances:
        if not isinstance(inst, NestedInstance):
            raise TypeError(f"corpus_stats expects NestedInstance, got {type(inst).__name__}")
        object_counts.append(len({e.head_entity_id for e in inst.expressions}))
        level_sum += inst.max_level
        for e in inst.expressions:
            metrics.level_histogram[e.level] = metrics.level_histogram.get(e.level, 0) + 1
    metrics.avg_objects = Fraction(sum(object_counts), len(instances))
    metrics.avg_level = Fraction(level_sum, len(instances))
    return metrics


def _fraction_entry(value: Fraction | None) -> dict | None:
    if value is None:
        return None
    return {"fraction": f"{value.numerator}/{value.denominator}", "value": float(value)}


def metrics_to_json(metrics: Metrics) -> dict:
    """Machine-readable report: exact fraction strings beside rounded floats."""
    return {
        "total": metrics.total,
        "correct": metrics.correct,
        "accuracy": _fraction_entry(metrics.accuracy),
        "per_level": {
            str(level): {
                "total": cell["total"],
                "correct": cell["correct"],
                "accuracy": _fraction_entry(cell.get("accuracy")),
            }
            for level, cell in sorted(metrics.per_level.items())
        },
        "flagged": [{"id": item, "reason": reason} for item, reason in metrics.flagged],
        "avg_objects": _fraction_entry(metrics.avg_objects),
        "avg_level": _fraction_entry(metrics.avg_level),
        "level_histogram": {str(k): v for k, v in sorted(metrics.level_histogram.items())},
    }


def metrics_to_table(metrics: Metrics) -> str:
    """Aligned text table for terminals."""
    lines = []
    if metrics.accuracy is not None:
        lines.append(f"{'overall':<10} {metrics.correct:>7}/{metrics.total:<7} {float(metrics.accuracy):>8.4f}")
        for level, cell in sorted(metrics.per_level.items()):
            acc = cell.get("accuracy")
            shown = f"{float(acc):>8.4f}" if acc is not None else f"{'n/a':>8}"
            lines.append(f"{'level ' + str(level):<10} {cell['correct']:>7}/{cell['total']:<7} {shown}")
    if metrics.avg_objects is not None:
        lines.append(f"{'instances':<14} {metrics.total}")
        lines.append(f"{'avg objects':<14} {float(metrics.avg_objects):.2f}")
        lines.append(f"{'avg level':<14} {float(metrics.avg_level):.2f}")
        for level, count in sorted(metrics.level_histogram.items()):
            lines.append(f"{'level ' + str(level) + ' exprs':<14} {count}")
    if metrics.flagged:
        lines.append(f"{'flagged':<14} {len(metrics.flagged)}")
    return "\n".join(lines)


def record_from_json(payload: dict) -> EvalRecord:
    def box(v):
        return BBox(*v) if v is not None else None

    candidates = payload.get("candidates")
    return EvalRecord(
        item_id=str(payload["id"]),
        text=payload.get("text", ""),
        level=int(payload.get("level", 1)),
        gold=BBox(*payload["gold"]),
        predicted=box(payload.get("predicted")),
        candidates=tuple(box(c) for c in candidates) if candidates is not None else None,
    )
