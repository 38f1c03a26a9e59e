"""Decomposition of compositional expressions into nested sub-expressions.

A constituency parse supplies candidate noun-phrase spans (innermost
first), the dependency parse decides which of them are referential and
how deep each one is, and the result is the ordered level structure the
progressive decoder consumes.  Parses always arrive from files or the
parse service, never from an in-process parser.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .composer import noun_depth
from .errors import InconsistentParseError, ParseFormatError
from .parses import (
    ConstituencyTree,
    DepGraph,
    ParseBundle,
    read_bracketed_lines,
    read_conllu,
)
from .scene_graph import SceneGraph


@dataclass(frozen=True)
class Span:
    """Contiguous token span; ``start`` inclusive, ``end`` exclusive, 0-based."""

    start: int
    end: int
    text: str

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class DecompEntry:
    text: str
    level: int
    start: int
    end: int


@dataclass(frozen=True)
class DecompositionResult:
    """Sub-expressions of one input expression, lowest level first.

    ``degraded`` marks inputs whose parse could not support decomposition;
    those carry the whole expression as a single level-one entry.
    """

    entries: tuple[DecompEntry, ...]
    degraded: bool = False
    dropped_spans: int = 0

    def __post_init__(self):
        if not self.entries:
            raise ValueError("decomposition has no entries")

    @property
    def target(self) -> DecompEntry:
        return max(self.entries, key=lambda e: (e.level, e.end - e.start))

    @property
    def max_level(self) -> int:
        return max(e.level for e in self.entries)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(sorted({e.level for e in self.entries}))

    def at_level(self, level: int) -> tuple[DecompEntry, ...]:
        return tuple(e for e in self.entries if e.level == level)


def parse_bundle_ingest(const_path, dep_path) -> ParseBundle:
    """Read one bracketed tree plus one CoNLL-U sentence into a bundle."""
    trees = read_bracketed_lines(Path(const_path).read_text(encoding="utf-8"))
    deps = read_conllu(Path(dep_path).read_text(encoding="utf-8"))
    if len(trees) != 1:
        raise ParseFormatError(f"{const_path}: expected exactly one tree, found {len(trees)}")
    if len(deps) != 1:
        raise ParseFormatError(f"{dep_path}: expected exactly one sentence, found {len(deps)}")
    return make_bundle(trees[0], deps[0], source=str(const_path))


def ingest_bundle_batch(const_path, dep_path) -> list[ParseBundle]:
    """Read aligned multi-sentence parse files; i-th tree pairs with i-th sentence."""
    trees = read_bracketed_lines(Path(const_path).read_text(encoding="utf-8"))
    deps = read_conllu(Path(dep_path).read_text(encoding="utf-8"))
    if len(trees) != len(deps):
        raise InconsistentParseError(f"{len(trees)} trees vs {len(deps)} dependency sentences")
    return [make_bundle(t, d, source=f"{const_path}#{i}") for i, (t, d) in enumerate(zip(trees, deps))]


def make_bundle(tree: ConstituencyTree, dep: DepGraph, source: str = "") -> ParseBundle:
    """Pair a tree with a dependency graph, verifying they tokenize alike."""
    if tree.leaves != dep.forms:
        raise InconsistentParseError(
            f"constituency tokens {list(tree.leaves)} != dependency tokens {list(dep.forms)}"
        )
    return ParseBundle(text=dep.text, tree=tree, dep=dep, source=source)


def extract_noun_phrases(tree: ConstituencyTree) -> list[Span]:
    """All NP constituent spans, innermost first, left-to-right within a depth."""
    found: list[tuple[int, int, int]] = []  # (depth, start, end)

    def walk(node, depth: int):
        if node.is_leaf:
            return
        if node.label == "NP":
            found.append((depth, node.start, node.end))
        for child in node.children:
            walk(child, depth + 1)

    walk(tree.root, 0)
    found.sort(key=lambda t: (-t[0], t[1]))
    out: list[Span] = []
    seen: set[tuple[int, int]] = set()
    for _, start, end in found:
        if (start, end) in seen:
            continue
        seen.add((start, end))
        out.append(Span(start, end, " ".join(tree.leaves[start:end])))
    return out


def span_head(dep: DepGraph, span: Span) -> int | None:
    """1-based index of the span's head token, with copular promotion.

    The head is the token whose dependency head lies outside the span.
    When several qualify, nominal tokens win, then sentence order.  A
    copular head whose subject sits inside the span promotes to that
    subject.
    """
    lo, hi = span.start + 1, span.end  # token indices covered, 1-based inclusive
    inside = range(lo, hi + 1)
    outward = [dep.token(i) for i in inside if dep.token(i).head == 0 or not (lo <= dep.token(i).head <= hi)]
    if not outward:
        return None
    outward.sort(key=lambda t: (not t.is_noun, t.index))
    head = outward[0]
    cop = [c for c in dep.children(head.index, "cop") if lo <= c.index <= hi]
    nsubj = [c for c in dep.children(head.index, "nsubj") if c.is_noun and lo <= c.index <= hi]
    if cop and nsubj:
        return nsubj[0].index
    return head.index


def filter_referential(spans: list[Span], dep: DepGraph) -> list[Span]:
    """Drop level-one spans that are arguments of no shared relation.

    A span is level-one when it contains exactly one span-head token.
    Such a span survives only if the dependency path from its head to
    some other span's head crosses no further noun tokens, i.e. the two
    heads are co-arguments of one relation's function words.  Spans
    containing several heads and spans covering the whole sentence
    always survive.
    """
    heads: dict[Span, int | None] = {s: span_head(dep, s) for s in spans}
    head_set = {h for h in heads.values() if h is not None}
    total = len(dep.tokens)
    kept = []
    for s in spans:
        h = heads[s]
        if h is None:
            continue
        if s.start == 0 and s.end == total:
            kept.append(s)
            continue
        inside = {i for i in head_set if s.start + 1 <= i <= s.end}
        if len(inside) > 1:
            kept.append(s)
            continue
        ok = False
        for g in sorted(head_set):
            if g == h:
                continue
            if not any(dep.token(i).is_noun for i in dep.path_between(h, g)):
                ok = True
                break
        if ok:
            kept.append(s)
    return kept


def _span_level(dep: DepGraph, span: Span, graph_hint: SceneGraph | None) -> int | None:
    head = span_head(dep, span)
    if head is None:
        return None
    if graph_hint is not None and not _head_in_graph(dep, head, graph_hint):
        return None
    allowed = set(range(span.start + 1, span.end + 1))
    return noun_depth(dep, head, allowed)


def _head_in_graph(dep: DepGraph, head_index: int, graph: SceneGraph) -> bool:
    token = dep.token(head_index)
    variants = {token.form.lower(), token.lemma.lower(), token.form.lower().rstrip("s"), token.form.lower() + "s"}
    return any(variants & set(e.name_words) for e in graph.entities)


def decompose(bundle: ParseBundle, graph_hint: SceneGraph | None = None) -> DecompositionResult:
    """Level structure of one expression from its parse bundle.

    Mirrors the construction used for training data: noun-phrase spans
    become sub-expressions, their depth is read off the dependency graph,
    and the full expression sits at the top.  Unresolvable parses fall
    back to a single-level result rather than failing.
    """
    n = len(bundle.dep.tokens)
    full = Span(0, n, bundle.text)
    spans = extract_noun_phrases(bundle.tree)
    if not any(s.start == 0 and s.end == n for s in spans):
        spans.append(full)
    kept = filter_referential(spans, bundle.dep)
    if not any(s.start == 0 and s.end == n for s in kept):
        return _degraded(full)

    entries = []
    dropped = 0
    for s in kept:
        level = _span_level(bundle.dep, s, graph_hint)
        if level is None:
            if s.start == 0 and s.end == n:
                return _degraded(full)
            dropped += 1
            continue
        entries.append(DecompEntry(text=s.text, level=level, start=s.start, end=s.end))
    if not entries:
        return _degraded(full)
    entries.sort(key=lambda e: (e.level, e.start, e.end))
    full_entry = next((e for e in entries if e.start == 0 and e.end == n), None)
    if full_entry is None or full_entry.level < max(e.level for e in entries):
        # the whole expression must sit alone at the highest level; anything
        # else signals a parse the downstream decoder cannot drive
        return _degraded(full)
    return DecompositionResult(entries=tuple(entries), degraded=False, dropped_spans=dropped)


def _degraded(full: Span) -> DecompositionResult:
    return DecompositionResult(
        entries=(DecompEntry(text=full.text, level=1, start=full.start, end=full.end),),
        degraded=True,
    )


def decomposition_to_record(result: DecompositionResult, **extra) -> dict:
    record = {
        "entries": [
            {"text": e.text, "level": e.level, "start": e.start, "end": e.end} for e in result.entries
        ],
        "degraded": result.degraded,
    }
    record.update(extra)
    return record


def decomposition_from_record(record: dict) -> DecompositionResult:
    entries = tuple(
        DecompEntry(text=e["text"], level=e["level"], start=e.get("start", 0), end=e.get("end", 0))
        for e in record["entries"]
    )
    return DecompositionResult(entries=entries, degraded=record.get("degraded", False))
