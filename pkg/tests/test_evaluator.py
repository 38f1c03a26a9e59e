from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest

from compoground.composer import build_instances
from compoground.errors import EmptyCorpusError, MalformedRecordError
from compoground.evaluator import (
    EvalRecord,
    corpus_stats,
    iou,
    metrics_to_json,
    metrics_to_table,
    record_from_json,
    score_grounding,
    score_multichoice,
)
from compoground.scene_graph import BBox, Entity, Predicate, RegionDescription, SceneGraph

from oracles import pixel_iou


def graph_of(names, triples, regions=(), image_id="img"):
    entities = tuple(
        Entity(entity_id=str(i), name=name, bbox=BBox(i * 10, 0, i * 10 + 5, 5), image_id=image_id)
        for i, name in enumerate(names)
    )
    return SceneGraph(
        image_id=image_id,
        width=640,
        height=480,
        entities=entities,
        predicates=tuple(Predicate(subject_id=s, relation=r, object_id=o) for s, r, o in triples),
        regions=tuple(regions),
    )


def load_records(path):
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(json.loads(line)) for line in fh if line.strip()]


class TestIou:
    def test_identical(self):
        assert iou(BBox(10, 10, 50, 50), BBox(10, 10, 50, 50)) == 1

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0

    def test_touching_edges_do_not_overlap(self):
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0

    def test_unit_overlap(self):
        assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == Fraction(1, 7)

    def test_containment(self):
        assert iou(BBox(0, 0, 4, 4), BBox(1, 1, 3, 3)) == Fraction(1, 4)

    def test_symmetric(self):
        a, b = BBox(3, 4, 20, 18), BBox(10, 2, 26, 14)
        assert iou(a, b) == iou(b, a)

    def test_matches_pixel_counting_oracle(self):
        rng = random.Random(11)
        for _ in range(100):
            def rand_box():
                x0 = rng.randrange(0, 30)
                y0 = rng.randrange(0, 30)
                return BBox(x0, y0, rng.randint(x0 + 1, 40), rng.randint(y0 + 1, 40))

            a, b = rand_box(), rand_box()
            assert iou(a, b) == pixel_iou(a, b)


class TestScoreGrounding:
    def test_inclusive_threshold(self):
        rec = EvalRecord("r", "", 1, gold=BBox(0, 0, 10, 10), predicted=BBox(0, 0, 10, 5))
        assert iou(rec.predicted, rec.gold) == Fraction(1, 2)
        assert score_grounding([rec], threshold=Fraction(1, 2)).correct == 1
        assert score_grounding([rec], threshold=Fraction(1, 2) + Fraction(1, 1000)).correct == 0

    def test_float_half_threshold_is_exact(self):
        rec = EvalRecord("r", "", 1, gold=BBox(0, 0, 10, 10), predicted=BBox(0, 0, 10, 5))
        assert score_grounding([rec], threshold=0.5).correct == 1

    def test_fixture_thresholds(self, fixtures_dir):
        records = load_records(fixtures_dir / "grounding_20.jsonl")
        assert len(records) == 20
        at30 = score_grounding(records, threshold=Fraction(3, 10))
        at50 = score_grounding(records, threshold=Fraction(1, 2))
        at70 = score_grounding(records, threshold=Fraction(7, 10))
        assert (at30.correct, at30.total) == (13, 20)
        assert (at50.correct, at50.total) == (10, 20)
        assert (at70.correct, at70.total) == (6, 20)
        assert at30.accuracy == Fraction(13, 20)
        assert at30.correct >= at50.correct >= at70.correct

    def test_fixture_per_level(self, fixtures_dir):
        records = load_records(fixtures_dir / "grounding_20.jsonl")
        per = score_grounding(records, threshold=Fraction(1, 2)).per_level
        assert per[1]["accuracy"] == Fraction(3, 7)
        assert per[2]["accuracy"] == Fraction(3, 7)
        assert per[3]["accuracy"] == Fraction(2, 3)
        assert sum(cell["total"] for cell in per.values()) == 20

    def test_missing_predictions_flagged(self, fixtures_dir):
        records = load_records(fixtures_dir / "grounding_20.jsonl")
        metrics = score_grounding(records)
        assert sorted(metrics.flagged) == [
            ("g07", "missing prediction"),
            ("g14", "missing prediction"),
        ]


class TestScoreMultichoice:
    def test_fixture_accuracy_and_flags(self, fixtures_dir):
        records = load_records(fixtures_dir / "multichoice_8.jsonl")
        metrics = score_multichoice(records)
        assert (metrics.correct, metrics.total) == (5, 8)
        assert metrics.accuracy == Fraction(5, 8)
        assert sorted(metrics.flagged) == [
            ("m4", "missing prediction"),
            ("m5", "iou tie broken to lowest index"),
            ("m6", "iou tie broken to lowest index"),
        ]

    def test_fixture_per_level(self, fixtures_dir):
        records = load_records(fixtures_dir / "multichoice_8.jsonl")
        per = score_multichoice(records).per_level
        assert per[1]["accuracy"] == Fraction(1, 2)
        assert per[2]["accuracy"] == Fraction(2, 3)
        assert per[3]["accuracy"] == Fraction(2, 3)

    def test_selection_logic(self):
        candidates = (BBox(0, 0, 10, 10), BBox(100, 0, 110, 10))
        # prediction overlaps candidate 1 most, gold is candidate 1
        rec = EvalRecord(
            "a", "", 1, gold=BBox(100, 0, 110, 10), predicted=BBox(101, 0, 111, 10),
            candidates=candidates,
        )
        assert score_multichoice([rec]).correct == 1
        # prediction overlaps candidate 0 most while gold is candidate 1
        wrong = EvalRecord(
            "b", "", 1, gold=BBox(100, 0, 110, 10), predicted=BBox(1, 0, 11, 10),
            candidates=candidates,
        )
        assert score_multichoice([wrong]).correct == 0

    def test_too_few_candidates_rejected(self):
        rec = EvalRecord("a", "", 1, gold=BBox(0, 0, 1, 1), candidates=(BBox(0, 0, 1, 1),))
        with pytest.raises(MalformedRecordError):
            score_multichoice([rec])
        bare = EvalRecord("b", "", 1, gold=BBox(0, 0, 1, 1))
        with pytest.raises(MalformedRecordError):
            score_multichoice([bare])


def stats_corpus():
    """Ten instances with hand-computed statistics.

    Instance max levels: 3,2,2,3,4,2,3,2,2,2 -> avg 25/10 = 5/2.
    Distinct heads:      3,2,2,3,4,2,3,2,2,1 -> avg 24/10 = 12/5.
    """
    two_chain = [
        graph_of(["man", "woman", "horse"], [("0", "behind", "1"), ("1", "riding", "2")]),
        graph_of(["shirt", "woman", "hat"], [("0", "of", "1"), ("1", "with", "2")]),
        graph_of(["cup", "table", "window"], [("0", "on", "1"), ("1", "near", "2")]),
    ]
    one_chain = [
        graph_of(["man", "dog"], [("0", "with", "1")]),
        graph_of(["woman", "horse"], [("0", "riding", "1")]),
        graph_of(["boy", "kite"], [("0", "holding", "1")]),
        graph_of(["cat", "chair"], [("0", "under", "1")]),
        graph_of(["bird", "branch"], [("0", "on", "1")]),
    ]
    three_chain = graph_of(
        ["car", "person", "man", "jacket"],
        [("0", "behind", "1"), ("1", "next to", "2"), ("2", "with", "3")],
    )
    region_graph = graph_of(
        ["man", "dog"],
        [("0", "with", "1")],
        regions=[RegionDescription(text="a man in the park", entity_id="0")],
    )
    region_inst = next(
        i
        for i in build_instances(region_graph, include_regions=True).instances
        if len(i.expressions) == 2
    )
    instances = []
    instances.append(build_instances(two_chain[0]).instances[0])
    instances.append(build_instances(one_chain[0]).instances[0])
    instances.append(build_instances(one_chain[1]).instances[0])
    instances.append(build_instances(two_chain[1]).instances[0])
    instances.append(build_instances(three_chain).instances[0])
    instances.append(build_instances(one_chain[2]).instances[0])
    instances.append(build_instances(two_chain[2]).instances[0])
    instances.append(build_instances(one_chain[3]).instances[0])
    instances.append(build_instances(one_chain[4]).instances[0])
    instances.append(region_inst)
    return instances


class TestCorpusStats:
    def test_exact_averages(self):
        metrics = corpus_stats(stats_corpus())
        assert metrics.total == 10
        assert metrics.avg_level == Fraction(5, 2)
        assert metrics.avg_objects == Fraction(12, 5)

    def test_level_histogram(self):
        metrics = corpus_stats(stats_corpus())
        assert metrics.level_histogram == {1: 24, 2: 10, 3: 4, 4: 1}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpusError):
            corpus_stats([])

    def test_type_checked(self):
        with pytest.raises(TypeError):
            corpus_stats(["not an instance"])


class TestReports:
    def test_metrics_json_shape(self, fixtures_dir):
        records = load_records(fixtures_dir / "grounding_20.jsonl")
        payload = metrics_to_json(score_grounding(records))
        assert payload["total"] == 20 and payload["correct"] == 10
        assert payload["accuracy"] == {"fraction": "1/2", "value": 0.5}
        assert set(payload["per_level"]) == {"1", "2", "3"}
        assert payload["per_level"]["3"]["accuracy"]["fraction"] == "2/3"
        assert {"id": "g07", "reason": "missing prediction"} in payload["flagged"]

    def test_stats_json_full_precision(self):
        payload = metrics_to_json(corpus_stats(stats_corpus()))
        assert payload["avg_level"] == {"fraction": "5/2", "value": 2.5}
        assert payload["avg_objects"] == {"fraction": "12/5", "value": 2.4}
        assert payload["level_histogram"] == {"1": 24, "2": 10, "3": 4, "4": 1}

    def test_accuracy_table(self, fixtures_dir):
        records = load_records(fixtures_dir / "grounding_20.jsonl")
        table = metrics_to_table(score_grounding(records))
        lines = table.splitlines()
        assert lines[0].startswith("overall") and "10/20" in lines[0].replace(" ", "")
        assert any(line.startswith("level 1") for line in lines)
        assert any(line.startswith("flagged") for line in lines)

    def test_stats_table(self):
        table = metrics_to_table(corpus_stats(stats_corpus()))
        assert "avg objects" in table and "2.40" in table
        assert "avg level" in table and "2.50" in table


class TestRecordFromJson:
    def test_full_record(self):
        rec = record_from_json(
            {
                "id": 7,
                "text": "a dog",
                "level": 2,
                "gold": [0, 0, 10, 10],
                "predicted": [1, 1, 9, 9],
                "candidates": [[0, 0, 10, 10], [20, 0, 30, 10]],
            }
        )
        assert rec.item_id == "7"
        assert rec.level == 2
        assert rec.gold == BBox(0, 0, 10, 10)
        assert rec.predicted == BBox(1, 1, 9, 9)
        assert rec.candidates == (BBox(0, 0, 10, 10), BBox(20, 0, 30, 10))

    def test_defaults(self):
        rec = record_from_json({"id": "x", "gold": [0, 0, 1, 1]})
        assert rec.text == "" and rec.level == 1
        assert rec.predicted is None and rec.candidates is None

    def test_null_prediction(self):
        rec = record_from_json({"id": "x", "gold": [0, 0, 1, 1], "predicted": None})
        assert rec.predicted is None
