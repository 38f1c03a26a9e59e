from __future__ import annotations

import pytest

from compoground.decomposer import (
    DecompEntry,
    DecompositionResult,
    Span,
    decompose,
    decomposition_from_record,
    decomposition_to_record,
    extract_noun_phrases,
    filter_referential,
    ingest_bundle_batch,
    make_bundle,
    parse_bundle_ingest,
    span_head,
)
from compoground.errors import InconsistentParseError, ParseFormatError
from compoground.parses import read_bracketed, read_conllu

from golden_parses import GOLDEN


def golden_bundle(sentence):
    entry = GOLDEN[sentence]
    tree = read_bracketed(entry["bracket"])
    dep = read_conllu(entry["conllu"])[0]
    return make_bundle(tree, dep, source=sentence)


class TestExtractNounPhrases:
    def test_shirt_sentence_enumeration(self):
        tree = read_bracketed(GOLDEN["the shirt of the woman with a blue hat"]["bracket"])
        spans = extract_noun_phrases(tree)
        assert [(s.start, s.end, s.text) for s in spans] == [
            (6, 9, "a blue hat"),
            (3, 5, "the woman"),
            (3, 9, "the woman with a blue hat"),
            (0, 2, "the shirt"),
            (0, 9, "the shirt of the woman with a blue hat"),
        ]

    def test_clause_tree_has_no_full_span(self):
        tree = read_bracketed(GOLDEN["the man is behind the woman riding a horse"]["bracket"])
        spans = extract_noun_phrases(tree)
        assert [(s.start, s.end) for s in spans] == [(7, 9), (4, 6), (4, 9), (0, 2)]

    def test_duplicate_spans_collapse(self):
        tree = read_bracketed("(NP (NP (NN dog)))")
        spans = extract_noun_phrases(tree)
        assert [(s.start, s.end) for s in spans] == [(0, 1)]


class TestSpanHead:
    def dep(self, sentence):
        return read_conllu(GOLDEN[sentence]["conllu"])[0]

    def test_plain_noun_phrase(self):
        dep = self.dep("the woman riding a horse")
        assert span_head(dep, Span(0, 2, "the woman")) == 2

    def test_copular_promotion_on_full_span(self):
        dep = self.dep("the man is behind the woman riding a horse")
        assert span_head(dep, Span(0, 9, "")) == 2

    def test_no_promotion_when_copula_outside_span(self):
        dep = self.dep("the man is behind the woman riding a horse")
        assert span_head(dep, Span(4, 9, "the woman riding a horse")) == 6

    def test_nested_object_span(self):
        dep = self.dep("the man is behind the woman riding a horse")
        assert span_head(dep, Span(7, 9, "a horse")) == 9


class TestFilterReferential:
    def dep(self, sentence):
        return read_conllu(GOLDEN[sentence]["conllu"])[0]

    def test_single_span_sentence_kept(self):
        dep = self.dep("a horse")
        spans = [Span(0, 2, "a horse")]
        assert filter_referential(spans, dep) == spans

    def test_whole_sentence_span_always_kept(self):
        dep = self.dep("the man is behind the woman riding a horse")
        full = Span(0, 9, "the man is behind the woman riding a horse")
        assert filter_referential([full], dep) == [full]

    def test_noun_blocked_pair_dropped(self):
        # man and horse only relate through the woman; with her span missing
        # neither survives on its own
        dep = self.dep("the man is behind the woman riding a horse")
        spans = [Span(0, 2, "the man"), Span(7, 9, "a horse")]
        assert filter_referential(spans, dep) == []

    def test_adjacent_heads_kept(self):
        dep = self.dep("the man is behind the woman riding a horse")
        spans = [Span(0, 2, "the man"), Span(4, 6, "the woman"), Span(7, 9, "a horse")]
        assert filter_referential(spans, dep) == spans

    def test_span_with_two_member_heads_kept(self):
        # (3, 9) encloses the heads of both smaller spans, so it survives
        # without any path test
        dep = self.dep("the shirt of the woman with a blue hat")
        spans = [
            Span(3, 5, "the woman"),
            Span(6, 9, "a blue hat"),
            Span(3, 9, "the woman with a blue hat"),
        ]
        assert filter_referential(spans, dep) == spans


class TestDecompose:
    def test_fig3_level_three(self):
        result = decompose(golden_bundle("the man is behind the woman riding a horse"))
        assert not result.degraded
        assert [(e.level, e.text) for e in result.entries] == [
            (1, "the man"),
            (1, "the woman"),
            (1, "a horse"),
            (2, "the woman riding a horse"),
            (3, "the man is behind the woman riding a horse"),
        ]
        assert result.target.text == "the man is behind the woman riding a horse"
        assert result.max_level == 3
        assert result.levels == (1, 2, 3)

    def test_shirt_sentence(self):
        result = decompose(golden_bundle("the shirt of the woman with a blue hat"))
        assert [(e.level, e.text, e.start, e.end) for e in result.entries] == [
            (1, "the shirt", 0, 2),
            (1, "the woman", 3, 5),
            (1, "a blue hat", 6, 9),
            (2, "the woman with a blue hat", 3, 9),
            (3, "the shirt of the woman with a blue hat", 0, 9),
        ]

    def test_four_level_sentence(self):
        result = decompose(golden_bundle("the car behind the person next to the man with a jacket"))
        assert result.max_level == 4
        assert [(e.level, e.text) for e in result.entries] == [
            (1, "the car"),
            (1, "the person"),
            (1, "the man"),
            (1, "a jacket"),
            (2, "the man with a jacket"),
            (3, "the person next to the man with a jacket"),
            (4, "the car behind the person next to the man with a jacket"),
        ]

    def test_single_noun_phrase_passes_through(self):
        result = decompose(golden_bundle("a horse"))
        assert not result.degraded
        assert [(e.level, e.text) for e in result.entries] == [(1, "a horse")]

    def test_graph_hint_accepts_matching_heads(self, fig3_graph):
        result = decompose(golden_bundle("the man is behind the woman riding a horse"), fig3_graph)
        assert not result.degraded
        assert result.max_level == 3

    def test_graph_hint_mismatch_degrades(self, fig3_graph):
        result = decompose(golden_bundle("the shirt of the woman with a blue hat"), fig3_graph)
        assert result.degraded
        assert result.entries == (
            DecompEntry(text="the shirt of the woman with a blue hat", level=1, start=0, end=9),
        )

    def test_degraded_still_covers_input(self):
        result = decompose(golden_bundle("the shirt of the woman with a blue hat"))
        assert not result.degraded  # sanity: hint-free decomposition works
        degraded = decompose(
            golden_bundle("the shirt of the woman with a blue hat"),
            graph_hint=None,
        )
        assert degraded.entries[-1].end == 9


class TestDecompositionResult:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            DecompositionResult(entries=())

    def test_at_level(self):
        result = decompose(golden_bundle("the man is behind the woman riding a horse"))
        assert [e.text for e in result.at_level(1)] == ["the man", "the woman", "a horse"]
        assert [e.text for e in result.at_level(4)] == []


class TestBundleIngest:
    def test_make_bundle_token_mismatch(self):
        tree = read_bracketed("(NP (DT a) (NN horse))")
        dep = read_conllu(GOLDEN["the woman riding a horse"]["conllu"])[0]
        with pytest.raises(InconsistentParseError):
            make_bundle(tree, dep)

    def test_fixture_files_round_trip(self, fixtures_dir):
        bundle = parse_bundle_ingest(fixtures_dir / "fig3_l3.tree", fixtures_dir / "fig3_l3.conllu")
        assert bundle.text == "the man is behind the woman riding a horse"
        result = decompose(bundle)
        assert result.max_level == 3

    def test_single_ingest_rejects_multiple_trees(self, tmp_path):
        entry = GOLDEN["a horse"]
        tree_path = tmp_path / "two.tree"
        tree_path.write_text(entry["bracket"] + "\n" + entry["bracket"] + "\n", encoding="utf-8")
        dep_path = tmp_path / "one.conllu"
        dep_path.write_text(entry["conllu"], encoding="utf-8")
        with pytest.raises(ParseFormatError):
            parse_bundle_ingest(tree_path, dep_path)

    def test_batch_requires_aligned_counts(self, tmp_path):
        entry = GOLDEN["a horse"]
        tree_path = tmp_path / "two.tree"
        tree_path.write_text(entry["bracket"] + "\n" + entry["bracket"] + "\n", encoding="utf-8")
        dep_path = tmp_path / "one.conllu"
        dep_path.write_text(entry["conllu"], encoding="utf-8")
        with pytest.raises(InconsistentParseError):
            ingest_bundle_batch(tree_path, dep_path)

    def test_batch_pairs_in_order(self, tmp_path):
        first = GOLDEN["a horse"]
        second = GOLDEN["the woman riding a horse"]
        tree_path = tmp_path / "batch.tree"
        tree_path.write_text(first["bracket"] + "\n" + second["bracket"] + "\n", encoding="utf-8")
        dep_path = tmp_path / "batch.conllu"
        dep_path.write_text(first["conllu"] + "\n" + second["conllu"], encoding="utf-8")
        bundles = ingest_bundle_batch(tree_path, dep_path)
        assert [b.text for b in bundles] == ["a horse", "the woman riding a horse"]


class TestRecords:
    def test_round_trip_preserves_entries(self):
        result = decompose(golden_bundle("the shirt of the woman with a blue hat"))
        record = decomposition_to_record(result, id="item-1")
        assert record["id"] == "item-1"
        back = decomposition_from_record(record)
        assert back.entries == result.entries
        assert back.degraded == result.degraded

    def test_from_record_defaults_offsets(self):
        back = decomposition_from_record({"entries": [{"text": "a dog", "level": 1}]})
        assert back.entries[0].start == 0 and back.entries[0].end == 0
