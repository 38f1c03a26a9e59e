"""Template phrasing of relation chains for the /generate endpoint.

Stands in for a live language model: renders a chain of subject/relation/
object triples as one referring expression using only the chain's own
words plus articles and linking words, so callers that verify vocabulary
closure accept the output.
"""

from __future__ import annotations

from .grammar import DETERMINERS, PREPOSITIONS

_VOWELS = "aeiou"


class BadChainError(ValueError):
    """Triples do not form a connected head-first chain."""


def _indefinite(name: str) -> str:
    article = "an" if name[:1].lower() in _VOWELS else "a"
    return f"{article} {name}"


def _kind(relation: str) -> str:
    if relation in PREPOSITIONS:
        return "prep"
    if relation.split()[0].endswith("ing"):
        return "ing"
    return "verb"


def phrase_chain(triples: list[tuple[str, str, str]]) -> str:
    """One expression for a head-first chain; deterministic and closed.

    ``triples[i]`` must link to ``triples[i+1]`` through its object.  The
    head keeps the definite article, the terminal entity the indefinite
    one; the outermost preposition (except "of") takes a copula.
    """
    if not triples:
        raise BadChainError("empty chain")
    for (_, _, obj), (nxt, _, _) in zip(triples, triples[1:]):
        if obj.lower() != nxt.lower():
            raise BadChainError(f"chain breaks between {obj!r} and {nxt!r}")
    for subj, relation, obj in triples:
        for name in (subj, relation, obj):
            if not str(name).strip():
                raise BadChainError("blank name or relation in chain")

    k = len(triples)
    text = _indefinite(triples[-1][2])
    for i in range(k - 1, -1, -1):
        focus = f"the {triples[i][0]}"
        relation = triples[i][1]
        kind = _kind(relation)
        if kind == "prep":
            rel = f"is {relation}" if i == 0 and relation != "of" else relation
            text = f"{focus} {rel} {text}"
        elif kind == "ing":
            text = f"{focus} {relation} {text}"
        else:
            text = f"{focus} that {relation} {text}"
    return " ".join(text.lower().split())


def chain_vocabulary(triples, entities) -> set[str]:
    """Words a phrased chain may use; mirrors the caller's closure check."""
    words = {"the", "a", "an", "is", "are", "that"}
    for name in entities:
        words.update(str(name).lower().split())
    for subj, relation, obj in triples:
        words.update(str(subj).lower().split())
        words.update(str(relation).lower().split())
        words.update(str(obj).lower().split())
    return words


# DETERMINERS re-exported for callers sanity-checking articles
__all__ = ["BadChainError", "phrase_chain", "chain_vocabulary", "DETERMINERS"]
