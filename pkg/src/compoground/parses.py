"""Dependency and constituency parse structures plus their wire formats.

Dependency graphs travel as 10-column CoNLL-U; constituency trees as
single-line Penn-style bracketed strings.  Both readers are strict about
structure (single root, heads in range, balanced brackets) and tolerant
about annotation extras (comment lines, multiword ranges, enhanced ids
are skipped).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseFormatError

NOUN_TAGS = {"NOUN", "PROPN", "PRON"}


@dataclass(frozen=True)
class DepToken:
    """One word of a dependency parse; ``head`` is 1-based, 0 = root."""

    index: int
    form: str
    lemma: str
    upos: str
    head: int
    deprel: str

    @property
    def is_noun(self) -> bool:
        return self.upos in NOUN_TAGS


@dataclass(frozen=True)
class DepGraph:
    """A single-rooted dependency tree over a tokenized sentence."""

    tokens: tuple[DepToken, ...]

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise ParseFormatError("dependency graph has no tokens")
        roots = [t for t in self.tokens if t.head == 0]
        if len(roots) != 1:
            raise ParseFormatError(f"dependency graph must have exactly one root, found {len(roots)}")
        for t in self.tokens:
            if t.index < 1 or t.index > n:
                raise ParseFormatError(f"token index {t.index} out of range 1..{n}")
            if t.head < 0 or t.head > n:
                raise ParseFormatError(f"head {t.head} of token {t.index} out of range 0..{n}")
            if t.head == t.index:
                raise ParseFormatError(f"token {t.index} is its own head")
        if [t.index for t in self.tokens] != list(range(1, n + 1)):
            raise ParseFormatError("token indices must be 1..n in order")
        # reject cycles: walking up from any token must reach the root
        for t in self.tokens:
            seen = set()
            cur = t.index
            while cur != 0:
                if cur in seen:
                    raise ParseFormatError(f"dependency cycle through token {t.index}")
                seen.add(cur)
                cur = self.tokens[cur - 1].head

    @property
    def root(self) -> DepToken:
        return next(t for t in self.tokens if t.head == 0)

    def token(self, index: int) -> DepToken:
        return self.tokens[index - 1]

    def children(self, index: int, deprel: str | None = None) -> list[DepToken]:
        out = [t for t in self.tokens if t.head == index]
        if deprel is not None:
            out = [t for t in out if t.deprel == deprel or t.deprel.startswith(deprel + ":")]
        return out

    def path_to_root(self, index: int) -> list[int]:
        """Token indices from ``index`` up to and including the root."""
        out = []
        cur = index
        while cur != 0:
            out.append(cur)
            cur = self.tokens[cur - 1].head
        return out

    def path_between(self, a: int, b: int) -> list[int]:
        """Token indices strictly between ``a`` and ``b`` on the tree path."""
        up_a = self.path_to_root(a)
        up_b = self.path_to_root(b)
        set_a = set(up_a)
        meet = next(i for i in up_b if i in set_a)
        seg_a = up_a[: up_a.index(meet)]
        seg_b = up_b[: up_b.index(meet)]
        inner = seg_a[1:] + [meet] + list(reversed(seg_b[1:]))
        if meet in (a, b):
            inner = [i for i in inner if i not in (a, b)]
        return [i for i in inner if i not in (a, b)]

    @property
    def forms(self) -> tuple[str, ...]:
        return tuple(t.form for t in self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.forms)


def read_conllu(text: str) -> list[DepGraph]:
    """Parse CoNLL-U text into one DepGraph per sentence block."""
    graphs = []
    block: list[DepToken] = []
    for raw in text.splitlines() + [""]:
        line = raw.rstrip("\n")
        if not line.strip():
            if block:
                graphs.append(DepGraph(tuple(block)))
                block = []
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseFormatError(f"CoNLL-U line must have 10 tab-separated columns, got {len(cols)}: {line!r}")
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword ranges and empty nodes carry no tree structure
        try:
            block.append(
                DepToken(
                    index=int(tok_id),
                    form=cols[1],
                    lemma=cols[2] if cols[2] != "_" else cols[1].lower(),
                    upos=cols[3],
                    head=int(cols[6]),
                    deprel=cols[7],
                )
            )
        except ValueError as exc:
            raise ParseFormatError(f"bad CoNLL-U line {line!r}: {exc}") from exc
    return graphs


def write_conllu(graph: DepGraph) -> str:
    lines = []
    for t in graph.tokens:
        lines.append("\t".join([str(t.index), t.form, t.lemma, t.upos, "_", "_", str(t.head), t.deprel, "_", "_"]))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TreeNode:
    """Constituency node covering leaves ``start`` (incl) to ``end`` (excl)."""

    label: str
    children: tuple["TreeNode", ...]
    start: int
    end: int
    word: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class ConstituencyTree:
    root: TreeNode
    leaves: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.leaves)

    def spans(self, label: str | None = None) -> list[TreeNode]:
        out = [n for n in self.root.walk() if not n.is_leaf]
        if label is not None:
            out = [n for n in out if n.label == label]
        return out


_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def read_bracketed(text: str) -> ConstituencyTree:
    """Parse one Penn-style bracketed tree, e.g. ``(NP (DT the) (NN man))``."""
    toks = _TOKEN_RE.findall(text)
    if not toks:
        raise ParseFormatError("empty bracketed tree")
    pos = 0
    leaf_counter = [0]
    leaves: list[str] = []

    def parse_node() -> TreeNode:
        nonlocal pos
        if toks[pos] != "(":
            raise ParseFormatError(f"expected '(' at token {pos} of bracketed tree")
        pos += 1
        if pos >= len(toks) or toks[pos] in "()":
            raise ParseFormatError("bracketed node missing a label")
        label = toks[pos]
        pos += 1
        children: list[TreeNode] = []
        word = None
        while pos < len(toks) and toks[pos] != ")":
            if toks[pos] == "(":
                if word is not None:
                    raise ParseFormatError(f"node {label!r} mixes words and children")
                children.append(parse_node())
            else:
                if word is not None or children:
                    raise ParseFormatError(f"node {label!r} mixes words and children")
                word = toks[pos]
                pos += 1
        if pos >= len(toks):
            raise ParseFormatError("unbalanced brackets: missing ')'")
        pos += 1  # consume ')'
        if word is not None:
            idx = leaf_counter[0]
            leaf_counter[0] += 1
            leaves.append(word)
            return TreeNode(label=label, children=(), start=idx, end=idx + 1, word=word)
        if not children:
            raise ParseFormatError(f"node {label!r} has neither word nor children")
        return TreeNode(label=label, children=tuple(children), start=children[0].start, end=children[-1].end)

    root = parse_node()
    if pos != len(toks):
        raise ParseFormatError("trailing material after bracketed tree")
    return ConstituencyTree(root=root, leaves=tuple(leaves))


def read_bracketed_lines(text: str) -> list[ConstituencyTree]:
    """One tree per non-empty line."""
    return [read_bracketed(line) for line in text.splitlines() if line.strip()]


def write_bracketed(tree: ConstituencyTree) -> str:
    def render(node: TreeNode) -> str:
        if node.is_leaf:
            return f"({node.label} {node.word})"
        return "(" + node.label + " " + " ".join(render(c) for c in node.children) + ")"

    return render(tree.root)


@dataclass(frozen=True)
class ParseBundle:
    """Matched constituency + dependency analyses of one sentence."""

    text: str
    tree: ConstituencyTree
    dep: DepGraph
    source: str = field(default="", compare=False)
