"""Deterministic parser for the toolkit's template sublanguage.

Sentences built from determiner + noun groups chained by prepositions,
participles, and "that"-relatives parse into one constituency tree and
one dependency graph that tokenize identically.  The grammar is rule
based and total over the sentence shapes the expression composer emits,
with one documented exception: relative clauses ending in a stranded
preposition ("the man that the person is next to") are rejected with a
diagnostic rather than mis-annotated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# Longest match wins, so multiword entries come first.
PREPOSITIONS = (
    "to the left of",
    "to the right of",
    "in front of",
    "on top of",
    "close to",
    "left of",
    "right of",
    "next to",
    "part of",
    "above",
    "across",
    "against",
    "along",
    "around",
    "at",
    "behind",
    "below",
    "beside",
    "between",
    "by",
    "in",
    "inside",
    "near",
    "of",
    "on",
    "outside",
    "over",
    "under",
    "with",
)
_PREP_SEQS = tuple(tuple(p.split()) for p in PREPOSITIONS)
DETERMINERS = ("the", "a", "an")
_PUNCT = ".!?,;:"


class UnsupportedSentenceError(ValueError):
    """Sentence falls outside the deterministic sublanguage."""


@dataclass
class Token:
    form: str
    upos: str
    tag: str
    deprel: str = ""
    head: "Token | None" = None
    lemma: str = ""

    def __post_init__(self):
        if not self.lemma:
            self.lemma = _lemma_of(self.form, self.upos)


def _lemma_of(form: str, upos: str) -> str:
    low = form.lower()
    if low == "is":
        return "be"
    # bare heuristic for finite verbs; participles keep their surface form
    if upos == "VERB" and low.endswith("s") and not low.endswith("ss") and len(low) > 2:
        return low[:-1]
    return low


@dataclass
class NounGroup:
    det: Token | None
    mods: list[Token]
    head: Token
    tail: object | None = None

    def bracket(self) -> str:
        parts = []
        if self.det is not None:
            parts.append(f"(DT {self.det.form})")
        parts.extend(f"(JJ {t.form})" for t in self.mods)
        parts.append(f"(NN {self.head.form})")
        core = f"(NP {' '.join(parts)})"
        if self.tail is None:
            return core
        return self.tail.bracket(core)


@dataclass
class PrepTail:
    rel: list[Token]
    inner: NounGroup

    def bracket(self, core: str) -> str:
        rels = " ".join(f"(IN {t.form})" for t in self.rel)
        return f"(NP {core} (PP {rels} {self.inner.bracket()}))"


@dataclass
class PartTail:
    verb: Token
    preps: list[Token]
    inner: NounGroup

    def bracket(self, core: str) -> str:
        inner = self.inner.bracket()
        if self.preps:
            rels = " ".join(f"(IN {t.form})" for t in self.preps)
            inner = f"(PP {rels} {inner})"
        return f"(NP {core} (VP (VBG {self.verb.form}) {inner}))"


@dataclass
class RelclTail:
    that: Token
    verb: Token
    preps: list[Token]
    inner: NounGroup

    def bracket(self, core: str) -> str:
        inner = self.inner.bracket()
        if self.preps:
            rels = " ".join(f"(IN {t.form})" for t in self.preps)
            inner = f"(PP {rels} {inner})"
        return f"(NP {core} (SBAR (WDT {self.that.form}) (VP (VBZ {self.verb.form}) {inner})))"


@dataclass
class BackwardTail:
    that: Token
    inner: NounGroup
    aux: Token | None
    verb: Token

    def bracket(self, core: str) -> str:
        if self.aux is not None:
            clause = f"(S {self.inner.bracket()} (VP (VBZ {self.aux.form}) (VP (VBG {self.verb.form}))))"
        else:
            clause = f"(S {self.inner.bracket()} (VP (VBZ {self.verb.form})))"
        return f"(NP {core} (SBAR (WDT {self.that.form}) {clause}))"


@dataclass
class Copular:
    subj: NounGroup
    cop: Token
    rel: list[Token]
    pred: NounGroup

    def bracket(self) -> str:
        rels = " ".join(f"(IN {t.form})" for t in self.rel)
        return f"(S {self.subj.bracket()} (VP (VBZ {self.cop.form}) (PP {rels} {self.pred.bracket()})))"


@dataclass
class ParsedSentence:
    tokens: list[Token] = field(default_factory=list)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def conllu(self) -> str:
        index = {id(t): n for n, t in enumerate(self.tokens, start=1)}
        rows = []
        for n, t in enumerate(self.tokens, start=1):
            head = index[id(t.head)] if t.head is not None else 0
            rows.append("\t".join([str(n), t.form, t.lemma, t.upos, "_", "_", str(head), t.deprel, "_", "_"]))
        return "\n".join(rows) + "\n"


class _Parser:
    def __init__(self, words: list[str]):
        self.words = words
        self.low = [w.lower() for w in words]
        self.toks: list[Token | None] = [None] * len(words)
        self.i = 0
        self.limit = len(words)

    def error(self, message: str) -> UnsupportedSentenceError:
        return UnsupportedSentenceError(f"{message} (near token {self.i + 1} of {' '.join(self.words)!r})")

    def done(self) -> bool:
        return self.i >= self.limit

    def peek(self) -> str | None:
        return self.low[self.i] if not self.done() else None

    def take(self, upos: str, tag: str) -> Token:
        tok = Token(self.words[self.i], upos, tag)
        self.toks[self.i] = tok
        self.i += 1
        return tok

    def prep_length(self, at: int | None = None) -> int:
        """Longest preposition starting at the cursor, in words; 0 if none."""
        start = self.i if at is None else at
        for seq in _PREP_SEQS:
            end = start + len(seq)
            if end <= self.limit and tuple(self.low[start:end]) == seq:
                return len(seq)
        return 0

    def take_prep(self) -> list[Token]:
        count = self.prep_length()
        return [self.take("ADP", "IN") for _ in range(count)]

    def parse_noun_group(self) -> NounGroup:
        det = None
        if not self.done() and self.peek() in DETERMINERS:
            det = self.take("DET", "DT")
        run: list[Token] = []
        while not self.done():
            w = self.peek()
            if w in ("is", "that") or self.prep_length():
                break
            # an -ing word after the first name word starts a participle
            if run and w.endswith("ing"):
                break
            run.append(self.take("NOUN", "NN"))
        if not run:
            raise self.error("expected a noun after this point")
        head = run[-1]
        for t in run[:-1]:
            t.upos, t.tag, t.deprel, t.head = "ADJ", "JJ", "amod", head
        if det is not None:
            det.deprel, det.head = "det", head
        group = NounGroup(det=det, mods=run[:-1], head=head)
        group.tail = self.parse_tail(group)
        return group

    def parse_tail(self, outer: NounGroup):
        if self.done():
            return None
        w = self.peek()
        if self.prep_length():
            rel = self.take_prep()
            inner = self.parse_noun_group()
            rel[0].deprel, rel[0].head = "case", inner.head
            for t in rel[1:]:
                t.deprel, t.head = "fixed", rel[0]
            inner.head.deprel, inner.head.head = "nmod", outer.head
            return PrepTail(rel=rel, inner=inner)
        if w is not None and w.endswith("ing"):
            verb = self.take("VERB", "VBG")
            verb.deprel, verb.head = "acl", outer.head
            preps = self.take_prep()
            inner = self.parse_noun_group()
            for t in preps:
                t.deprel, t.head = "case", inner.head
            inner.head.deprel = "obl" if preps else "obj"
            inner.head.head = verb
            return PartTail(verb=verb, preps=preps, inner=inner)
        if w == "that":
            that = self.take("PRON", "WDT")
            if self.done():
                raise self.error("dangling 'that'")
            if self.peek() in DETERMINERS:
                return self.parse_backward(outer, that)
            if self.peek() == "is" or self.prep_length():
                raise self.error("expected a verb after 'that'")
            verb = self.take("VERB", "VBZ")
            verb.deprel, verb.head = "acl:relcl", outer.head
            that.deprel, that.head = "nsubj", verb
            preps = self.take_prep()
            inner = self.parse_noun_group()
            for t in preps:
                t.deprel, t.head = "case", inner.head
            inner.head.deprel = "obl" if preps else "obj"
            inner.head.head = verb
            return RelclTail(that=that, verb=verb, preps=preps, inner=inner)
        # leave "is" for the top-level copular rule
        return None

    def parse_backward(self, outer: NounGroup, that: Token):
        """Object relative: "that <chain> is VERBing" or "that <chain> VERBs".

        The trailing verb closes the sentence (every outer template wraps
        by prepending), so the verb is found from the right edge of the
        current clause.
        """
        end = self.limit
        if end - self.i < 2:
            raise self.error("incomplete relative clause")
        for seq in _PREP_SEQS:
            if end - len(seq) >= self.i and tuple(self.low[end - len(seq):end]) == seq:
                raise self.error("relative clause ending in a preposition is not supported")
        if self.low[end - 1] == "is":
            raise self.error("relative clause ending in 'is'")
        if end - 2 >= self.i and self.low[end - 2] == "is":
            if not self.low[end - 1].endswith("ing"):
                raise self.error("expected an -ing verb after 'is'")
            inner_end, aux_at, verb_at = end - 2, end - 2, end - 1
        else:
            inner_end, aux_at, verb_at = end - 1, None, end - 1

        saved = self.limit
        self.limit = inner_end
        inner = self.parse_noun_group()
        if not self.done():
            raise self.error("unparsed words inside relative clause")
        self.limit = saved

        aux = None
        if aux_at is not None:
            aux = self.take("AUX", "VBZ")
            tag = "VBG"
        else:
            tag = "VBZ"
        verb = self.take("VERB", tag)
        verb.deprel, verb.head = "acl:relcl", outer.head
        that.deprel, that.head = "obj", verb
        inner.head.deprel, inner.head.head = "nsubj", verb
        if aux is not None:
            aux.deprel, aux.head = "aux", verb
        return BackwardTail(that=that, inner=inner, aux=aux, verb=verb)


def parse(sentence: str) -> tuple[ParsedSentence, str]:
    """Parse one sentence; returns (token/dependency view, bracket source).

    Raises :class:`UnsupportedSentenceError` with a diagnostic when the
    sentence steps outside the sublanguage.
    """
    words = sentence.split()
    while words and all(c in _PUNCT for c in words[-1]):
        words.pop()
    if words:
        words[-1] = words[-1].rstrip(_PUNCT) or words[-1]
    if not words:
        raise UnsupportedSentenceError("empty sentence")

    parser = _Parser(words)
    subject = parser.parse_noun_group()
    if parser.peek() == "is":
        cop = parser.take("AUX", "VBZ")
        rel = parser.take_prep()
        if not rel:
            raise parser.error("expected a preposition after 'is'")
        pred = parser.parse_noun_group()
        cop.deprel, cop.head = "cop", pred.head
        rel[0].deprel, rel[0].head = "case", pred.head
        for t in rel[1:]:
            t.deprel, t.head = "fixed", rel[0]
        subject.head.deprel, subject.head.head = "nsubj", pred.head
        pred.head.deprel, pred.head.head = "root", None
        top = Copular(subj=subject, cop=cop, rel=rel, pred=pred)
    else:
        subject.head.deprel, subject.head.head = "root", None
        top = subject
    if not parser.done():
        raise parser.error("unparsed words after the expression")

    parsed = ParsedSentence(tokens=[t for t in parser.toks if t is not None])
    if len(parsed.tokens) != len(words):
        raise UnsupportedSentenceError(f"internal: {len(words) - len(parsed.tokens)} words left unassigned")
    for t in parsed.tokens:
        if not t.deprel:
            raise UnsupportedSentenceError(f"internal: no dependency role for {t.form!r}")
    return parsed, top.bracket()
