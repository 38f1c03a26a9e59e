"""Exact parses for every construction the sublanguage grammar covers."""

from __future__ import annotations

import re

import pytest

from sidecar.grammar import UnsupportedSentenceError, parse


def rows(*cols) -> str:
    """CoNLL-U source from compact (form, lemma, upos, head, deprel) rows."""
    lines = []
    for n, (form, lemma, upos, head, deprel) in enumerate(cols, start=1):
        lines.append("\t".join([str(n), form, lemma, upos, "_", "_", str(head), deprel, "_", "_"]))
    return "\n".join(lines) + "\n"


def leaves(bracket: str) -> list[str]:
    return [m.group(1) for m in re.finditer(r"\(\S+ ([^()\s]+)\)", bracket)]


def test_single_noun():
    parsed, bracket = parse("horse")
    assert parsed.forms == ["horse"]
    assert parsed.conllu() == rows(("horse", "horse", "NOUN", 0, "root"))
    assert bracket == "(NP (NN horse))"


def test_bare_article_noun():
    parsed, bracket = parse("a horse")
    assert parsed.conllu() == rows(
        ("a", "a", "DET", 2, "det"),
        ("horse", "horse", "NOUN", 0, "root"),
    )
    assert bracket == "(NP (DT a) (NN horse))"


def test_vowel_article():
    parsed, bracket = parse("an apple")
    assert parsed.conllu() == rows(
        ("an", "an", "DET", 2, "det"),
        ("apple", "apple", "NOUN", 0, "root"),
    )
    assert bracket == "(NP (DT an) (NN apple))"


def test_modified_noun():
    parsed, bracket = parse("a blue hat")
    assert parsed.conllu() == rows(
        ("a", "a", "DET", 3, "det"),
        ("blue", "blue", "ADJ", 3, "amod"),
        ("hat", "hat", "NOUN", 0, "root"),
    )
    assert bracket == "(NP (DT a) (JJ blue) (NN hat))"


def test_participle_chain():
    parsed, bracket = parse("the woman riding a horse")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("woman", "woman", "NOUN", 0, "root"),
        ("riding", "riding", "VERB", 2, "acl"),
        ("a", "a", "DET", 5, "det"),
        ("horse", "horse", "NOUN", 3, "obj"),
    )
    assert bracket == "(NP (NP (DT the) (NN woman)) (VP (VBG riding) (NP (DT a) (NN horse))))"


def test_copular_sentence():
    parsed, bracket = parse("the man is behind the woman riding a horse")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("man", "man", "NOUN", 6, "nsubj"),
        ("is", "be", "AUX", 6, "cop"),
        ("behind", "behind", "ADP", 6, "case"),
        ("the", "the", "DET", 6, "det"),
        ("woman", "woman", "NOUN", 0, "root"),
        ("riding", "riding", "VERB", 6, "acl"),
        ("a", "a", "DET", 9, "det"),
        ("horse", "horse", "NOUN", 7, "obj"),
    )
    assert bracket == (
        "(S (NP (DT the) (NN man)) (VP (VBZ is) (PP (IN behind)"
        " (NP (NP (DT the) (NN woman)) (VP (VBG riding) (NP (DT a) (NN horse)))))))"
    )


def test_nested_prepositions():
    parsed, bracket = parse("the shirt of the woman with a blue hat")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("shirt", "shirt", "NOUN", 0, "root"),
        ("of", "of", "ADP", 5, "case"),
        ("the", "the", "DET", 5, "det"),
        ("woman", "woman", "NOUN", 2, "nmod"),
        ("with", "with", "ADP", 9, "case"),
        ("a", "a", "DET", 9, "det"),
        ("blue", "blue", "ADJ", 9, "amod"),
        ("hat", "hat", "NOUN", 5, "nmod"),
    )
    assert bracket == (
        "(NP (NP (DT the) (NN shirt)) (PP (IN of) (NP (NP (DT the) (NN woman))"
        " (PP (IN with) (NP (DT a) (JJ blue) (NN hat))))))"
    )


def test_multiword_preposition():
    parsed, bracket = parse("the car behind the person next to the man with a jacket")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("car", "car", "NOUN", 0, "root"),
        ("behind", "behind", "ADP", 5, "case"),
        ("the", "the", "DET", 5, "det"),
        ("person", "person", "NOUN", 2, "nmod"),
        ("next", "next", "ADP", 9, "case"),
        ("to", "to", "ADP", 6, "fixed"),
        ("the", "the", "DET", 9, "det"),
        ("man", "man", "NOUN", 5, "nmod"),
        ("with", "with", "ADP", 12, "case"),
        ("a", "a", "DET", 12, "det"),
        ("jacket", "jacket", "NOUN", 9, "nmod"),
    )
    assert bracket == (
        "(NP (NP (DT the) (NN car)) (PP (IN behind) (NP (NP (DT the) (NN person))"
        " (PP (IN next) (IN to) (NP (NP (DT the) (NN man)) (PP (IN with)"
        " (NP (DT a) (NN jacket))))))))"
    )


def test_subject_relative():
    parsed, bracket = parse("the man that holds a cup")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("man", "man", "NOUN", 0, "root"),
        ("that", "that", "PRON", 4, "nsubj"),
        ("holds", "hold", "VERB", 2, "acl:relcl"),
        ("a", "a", "DET", 6, "det"),
        ("cup", "cup", "NOUN", 4, "obj"),
    )
    assert bracket == "(NP (NP (DT the) (NN man)) (SBAR (WDT that) (VP (VBZ holds) (NP (DT a) (NN cup)))))"


def test_participle_with_preposition():
    parsed, bracket = parse("the man sitting on a bench")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("man", "man", "NOUN", 0, "root"),
        ("sitting", "sitting", "VERB", 2, "acl"),
        ("on", "on", "ADP", 6, "case"),
        ("a", "a", "DET", 6, "det"),
        ("bench", "bench", "NOUN", 3, "obl"),
    )
    assert bracket == "(NP (NP (DT the) (NN man)) (VP (VBG sitting) (PP (IN on) (NP (DT a) (NN bench)))))"


def test_object_relative_progressive():
    # backward arc: the relative clause's verb closes the sentence
    parsed, bracket = parse("the woman that a horse is feeding")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("woman", "woman", "NOUN", 0, "root"),
        ("that", "that", "PRON", 7, "obj"),
        ("a", "a", "DET", 5, "det"),
        ("horse", "horse", "NOUN", 7, "nsubj"),
        ("is", "be", "AUX", 7, "aux"),
        ("feeding", "feeding", "VERB", 2, "acl:relcl"),
    )
    assert bracket == (
        "(NP (NP (DT the) (NN woman)) (SBAR (WDT that)"
        " (S (NP (DT a) (NN horse)) (VP (VBZ is) (VP (VBG feeding))))))"
    )


def test_object_relative_finite():
    parsed, bracket = parse("the cup that the man holds")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("cup", "cup", "NOUN", 0, "root"),
        ("that", "that", "PRON", 6, "obj"),
        ("the", "the", "DET", 5, "det"),
        ("man", "man", "NOUN", 6, "nsubj"),
        ("holds", "hold", "VERB", 2, "acl:relcl"),
    )
    assert bracket == (
        "(NP (NP (DT the) (NN cup)) (SBAR (WDT that) (S (NP (DT the) (NN man)) (VP (VBZ holds)))))"
    )


def test_stacked_object_relatives():
    parsed, bracket = parse("the dog that the woman that a horse is feeding is holding")
    assert parsed.conllu() == rows(
        ("the", "the", "DET", 2, "det"),
        ("dog", "dog", "NOUN", 0, "root"),
        ("that", "that", "PRON", 12, "obj"),
        ("the", "the", "DET", 5, "det"),
        ("woman", "woman", "NOUN", 12, "nsubj"),
        ("that", "that", "PRON", 10, "obj"),
        ("a", "a", "DET", 8, "det"),
        ("horse", "horse", "NOUN", 10, "nsubj"),
        ("is", "be", "AUX", 10, "aux"),
        ("feeding", "feeding", "VERB", 5, "acl:relcl"),
        ("is", "be", "AUX", 12, "aux"),
        ("holding", "holding", "VERB", 2, "acl:relcl"),
    )
    assert bracket == (
        "(NP (NP (DT the) (NN dog)) (SBAR (WDT that) (S (NP (NP (DT the) (NN woman))"
        " (SBAR (WDT that) (S (NP (DT a) (NN horse)) (VP (VBZ is) (VP (VBG feeding))))))"
        " (VP (VBZ is) (VP (VBG holding))))))"
    )


def test_leading_ing_word_is_a_noun():
    # only a non-initial -ing word starts a participle, so nouns like
    # "building" still work as the first (or only) name word
    parsed, bracket = parse("the building near a tree")
    assert parsed.forms == ["the", "building", "near", "a", "tree"]
    assert bracket == "(NP (NP (DT the) (NN building)) (PP (IN near) (NP (DT a) (NN tree))))"


def test_case_is_preserved():
    parsed, bracket = parse("The woman riding a Horse")
    assert parsed.forms == ["The", "woman", "riding", "a", "Horse"]
    assert "\tHorse\thorse\tNOUN\t" in parsed.conllu()
    assert "(NN Horse)" in bracket


def test_trailing_punctuation_is_stripped():
    for text in ("a horse.", "a horse !", "a horse?!"):
        parsed, _ = parse(text)
        assert parsed.forms == ["a", "horse"]


def test_tokenizations_agree_everywhere():
    sentences = [
        "horse",
        "an apple",
        "a blue hat",
        "the woman riding a horse",
        "the man is behind the woman riding a horse",
        "the shirt of the woman with a blue hat",
        "the car behind the person next to the man with a jacket",
        "the man that holds a cup",
        "the man sitting on a bench",
        "the woman that a horse is feeding",
        "the cup that the man holds",
        "the dog that the woman that a horse is feeding is holding",
        "the lamp to the left of a sofa",
    ]
    for text in sentences:
        parsed, bracket = parse(text)
        conllu_forms = [line.split("\t")[1] for line in parsed.conllu().splitlines()]
        assert parsed.forms == conllu_forms == leaves(bracket) == text.split()


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty sentence"),
        ("...", "empty sentence"),
        ("the", "expected a noun"),
        ("the man behind", "expected a noun"),
        ("the man is purple", "expected a preposition after 'is'"),
        ("the man that", "dangling 'that'"),
        ("the man that is behind a horse", "expected a verb after 'that'"),
        ("the man that a", "incomplete relative clause"),
        ("the man that the person is next to", "ending in a preposition"),
        ("the woman that a horse is", "ending in 'is'"),
        ("the woman that a horse is fed", "expected an -ing verb after 'is'"),
        ("the woman that a horse is feeding grass", "unparsed words inside relative clause"),
        # known boundary: an -ing word after a modifier reads as a verb
        ("the brick building", "expected a noun"),
    ],
)
def test_unsupported_sentences(text, message):
    with pytest.raises(UnsupportedSentenceError) as err:
        parse(text)
    assert message in str(err.value)
