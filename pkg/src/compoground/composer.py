"""Nested compositional instance construction from scene graphs.

Predicate chains that share entities are discovered, ordered from simple
to complex, and rendered into referring expressions of increasing
relational depth (level = chain length + 1).  Each expression's box is
the box of its head entity.  Text comes from an external generator when
configured, with a deterministic template grammar as the hermetic
fallback; generated text is vocabulary-checked against the chain so no
out-of-chain object or relation survives.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol

from .errors import (
    GeneratorUnavailableError,
    HallucinationError,
    UnresolvableHeadError,
)
from .parses import DepGraph
from .scene_graph import BBox, SceneGraph

# relations rendered as prepositional attachment rather than verb forms
PREPOSITIONS = frozenset(
    {
        "on", "in", "at", "by", "of", "with", "near", "under", "over",
        "above", "below", "behind", "beside", "against", "around",
        "between", "along", "inside", "outside", "across",
        "next to", "in front of", "on top of", "close to", "left of",
        "right of", "to the left of", "to the right of", "part of",
    }
)
FUNCTION_WORDS = frozenset({"the", "a", "an", "is", "are", "that"})
_VOWELS = "aeiou"


@dataclass(frozen=True)
class Expression:
    """One referring expression with its head entity's box.

    ``parents`` are the strictly lower-level expressions this one extends;
    level-one expressions have none.
    """

    text: str
    level: int
    head_entity_id: str
    bbox: BBox
    parents: tuple["Expression", ...] = ()

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")
        if (self.level == 1) != (not self.parents):
            raise ValueError("level 1 iff no parents")
        for p in self.parents:
            if p.level >= self.level:
                raise ValueError(f"parent level {p.level} not below {self.level}")
        if not self.text.strip():
            raise ValueError("expression text is empty")


@dataclass(frozen=True)
class PredicateChain:
    """Ordered predicates linked by shared entities along a simple path.

    ``shared_entities[i]`` is the entity common to ``predicates[i]`` and
    ``predicates[i+1]``.  The induced entity walk ``vertices`` never
    repeats an entity.
    """

    predicates: tuple
    shared_entities: tuple
    vertices: tuple = field(init=False, compare=False, repr=False, default=())

    def __post_init__(self):
        preds = self.predicates
        shared = self.shared_entities
        if not preds:
            raise ValueError("chain needs at least one predicate")
        if len(shared) != len(preds) - 1:
            raise ValueError(f"{len(preds)} predicates need {len(preds) - 1} shared entities, got {len(shared)}")
        for i, s in enumerate(shared):
            inter = preds[i].endpoints & preds[i + 1].endpoints
            if inter != {s}:
                raise ValueError(
                    f"predicates {i} and {i + 1} must share exactly {s!r}, endpoints intersect in {sorted(inter)}"
                )
        if len(preds) == 1:
            walk = [preds[0].subject_id, preds[0].object_id]
        else:
            first_other = next(iter(preds[0].endpoints - {shared[0]}))
            walk = [first_other]
            for i, s in enumerate(shared):
                walk.append(s)
            walk.append(next(iter(preds[-1].endpoints - {shared[-1]})))
        if len(set(walk)) != len(walk):
            raise ValueError(f"chain revisits an entity: {walk}")
        for i, p in enumerate(preds):
            if p.endpoints != {walk[i], walk[i + 1]}:
                raise ValueError(f"predicate {i} does not connect {walk[i]!r} and {walk[i + 1]!r}")
        object.__setattr__(self, "vertices", tuple(walk))

    @classmethod
    def from_predicates(cls, predicates: Sequence) -> "PredicateChain":
        preds = tuple(predicates)
        shared = []
        for i in range(len(preds) - 1):
            inter = preds[i].endpoints & preds[i + 1].endpoints
            if len(inter) != 1:
                raise ValueError(f"predicates {i} and {i + 1} share {len(inter)} entities, need exactly 1")
            shared.append(next(iter(inter)))
        return cls(predicates=preds, shared_entities=tuple(shared))

    def __len__(self) -> int:
        return len(self.predicates)

    @property
    def head_entity_id(self) -> str:
        return self.vertices[0]

    @property
    def is_forward(self) -> bool:
        """True when every predicate points from the walk's earlier vertex to the later one."""
        return all(
            p.subject_id == self.vertices[i] and p.object_id == self.vertices[i + 1]
            for i, p in enumerate(self.predicates)
        )

    @property
    def arc_directions(self) -> tuple[bool, ...]:
        return tuple(p.subject_id == self.vertices[i] for i, p in enumerate(self.predicates))

    def suffix(self, start: int) -> "PredicateChain":
        return PredicateChain(self.predicates[start:], self.shared_entities[start:])

    def sort_key(self):
        return (self.vertices, tuple(p.relation for p in self.predicates), self.arc_directions)


def find_chains(graph: SceneGraph, max_depth: int) -> list[PredicateChain]:
    """Every chain of 1..max_depth predicates linked by shared entities.

    Chains are ordered predicate sequences; a sequence and its reversal
    are distinct chains.  Output is sorted by (entity walk, relations,
    arc directions), so repeat runs are identical.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    chains: list[PredicateChain] = []
    preds = graph.predicates

    def extend(seq: list, walk: list, used: set):
        if len(seq) < max_depth:
            tail = walk[-1]
            for j, q in enumerate(preds):
                if j in used or tail not in q.endpoints:
                    continue
                if q.endpoints & seq[-1].endpoints != {tail}:
                    continue
                nxt = next(iter(q.endpoints - {tail}))
                if nxt in walk:
                    continue
                chain = PredicateChain.from_predicates(seq + [q])
                chains.append(chain)
                extend(seq + [q], walk + [nxt], used | {j})

    for i, p in enumerate(preds):
        chains.append(PredicateChain.from_predicates([p]))
        # a 2-chain can attach at either endpoint of the opening predicate
        for first, second in ((p.subject_id, p.object_id), (p.object_id, p.subject_id)):
            extend_walk = [first, second]
            extend([p], extend_walk, {i})
    # dedupe: the two seed orientations reach identical continuations only
    # when the chain stays length 1, which the loop above never re-adds;
    # longer chains differ by walk, so the sort key separates them.
    uniq = {}
    for c in chains:
        uniq.setdefault((tuple((p.subject_id, p.relation, p.object_id) for p in c.predicates)), c)
    return sorted(uniq.values(), key=PredicateChain.sort_key)


class TextGenerator(Protocol):
    """External text composition service for chains of two or more predicates."""

    def compose_text(self, triples: Sequence[tuple[str, str, str]], entities: Sequence[str]) -> str:
        """Render the chain's triples into one referring expression."""
        ...


DEFAULT_SYSTEM_PROMPT = (
    "Combine the given subject-relation-object triples into one natural "
    "referring expression for the first triple's subject. Use only the "
    "entity and relation words provided; never introduce new objects, "
    "attributes, or relations. Answer with the expression only."
)


class HTTPTextGenerator:
    """Text-generation client for any endpoint speaking the generate wire format.

    POSTs {system_prompt, triples, entities} and expects {"text": ...}.
    Transport failures surface as GeneratorUnavailableError so composition
    falls back to the template grammar.  The underlying client is safe for
    concurrent use.
    """

    def __init__(self, url: str, timeout: float = 30.0, system_prompt: str = DEFAULT_SYSTEM_PROMPT, client=None):
        import httpx

        self.url = url
        self.system_prompt = system_prompt
        self._client = client or httpx.Client(timeout=timeout)

    def compose_text(self, triples: Sequence[tuple[str, str, str]], entities: Sequence[str]) -> str:
        import httpx

        body = {
            "system_prompt": self.system_prompt,
            "triples": [list(t) for t in triples],
            "entities": list(entities),
        }
        try:
            resp = self._client.post(self.url, json=body)
        except httpx.HTTPError as exc:
            raise GeneratorUnavailableError(f"generator unreachable at {self.url}: {exc}") from exc
        if resp.status_code != 200:
            raise GeneratorUnavailableError(f"generator returned HTTP {resp.status_code}")
        try:
            return str(resp.json()["text"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GeneratorUnavailableError(f"generator response missing 'text': {exc}") from exc


def _definite(name: str) -> str:
    return f"the {name}"


def _indefinite(name: str) -> str:
    article = "an" if name[:1] in _VOWELS else "a"
    return f"{article} {name}"


def _relation_kind(relation: str) -> str:
    if relation in PREPOSITIONS:
        return "prep"
    if relation.split()[0].endswith("ing"):
        return "ing"
    return "verb"


def render_chain_text(chain: PredicateChain, graph: SceneGraph, outermost: bool = True) -> str:
    """Deterministic template rendering of a chain.

    Focus entities take the definite article, the terminal entity the
    indefinite one.  Prepositional relations attach bare ("the car behind
    the person") except at the outermost arc, where a copula is inserted
    ("the man is behind ..."); "of"-style possessives never take one.
    Verbal relations keep the bare -ing form or gain "that" for finite
    verbs.  Backward arcs render as relative clauses.
    """
    names = [graph.entity(v).name for v in chain.vertices]
    k = len(chain.predicates)
    text = _indefinite(names[k])
    for i in range(k - 1, -1, -1):
        pred = chain.predicates[i]
        focus = _definite(names[i])
        kind = _relation_kind(pred.relation)
        if chain.arc_directions[i]:
            if kind == "prep":
                copular = outermost and i == 0 and pred.relation != "of"
                rel = f"is {pred.relation}" if copular else pred.relation
                text = f"{focus} {rel} {text}"
            elif kind == "ing":
                text = f"{focus} {pred.relation} {text}"
            else:
                text = f"{focus} that {pred.relation} {text}"
        else:
            rel = pred.relation if kind == "verb" else f"is {pred.relation}"
            text = f"{focus} that {text} {rel}"
    return text


def chain_triples(chain: PredicateChain, graph: SceneGraph) -> list[tuple[str, str, str]]:
    return [
        (graph.entity(p.subject_id).name, p.relation, graph.entity(p.object_id).name)
        for p in chain.predicates
    ]


def allowed_vocabulary(chain: PredicateChain, graph: SceneGraph) -> set[str]:
    words = set(FUNCTION_WORDS)
    for v in chain.vertices:
        words.update(graph.entity(v).name_words)
    for p in chain.predicates:
        words.update(p.relation.split())
    return words


def check_vocabulary(text: str, allowed: set[str]) -> None:
    """Raise HallucinationError when text uses a word outside ``allowed``.

    Matching is at the surface-word level with bare plural tolerance
    (token, token minus trailing s, token plus s).
    """
    offending = set()
    for raw in text.lower().split():
        tok = raw.strip(".,;:!?\"'()")
        if not tok:
            continue
        if tok in allowed or tok.rstrip("s") in allowed or tok + "s" in allowed:
            continue
        offending.add(tok)
    if offending:
        raise HallucinationError(text, offending)


def _head_prefix_ok(text: str, head_name_words: tuple[str, ...]) -> bool:
    words = text.lower().split()
    if words and words[0] in ("the", "a", "an"):
        words = words[1:]
    return tuple(words[: len(head_name_words)]) == head_name_words


def compose_expression(chain: PredicateChain, graph: SceneGraph, generator: TextGenerator | None = None) -> Expression:
    """Build the expression family for a chain; returns the top expression.

    Level-one expressions cover the chain's entities; each suffix chain of
    j predicates yields the level-(j+1) expression, whose parents are the
    next-shorter suffix plus the focus entity's level-one expression.  The
    generator (when given) serves chains of two or more predicates only;
    one-predicate chains always use the template.  Generator text failing
    the vocabulary check raises HallucinationError; a generator that
    reports itself unavailable falls back to the template.
    """
    k = len(chain.predicates)
    verts = chain.vertices

    def leaf(i: int) -> Expression:
        ent = graph.entity(verts[i])
        text = _indefinite(ent.name) if i == k else _definite(ent.name)
        return Expression(text=text, level=1, head_entity_id=ent.entity_id, bbox=ent.bbox)

    leaves = {i: leaf(i) for i in range(k + 1)}
    expr: Expression | None = None
    for i in range(k - 1, -1, -1):
        sub = chain.suffix(i)
        level = k - i + 1
        text = render_chain_text(sub, graph, outermost=(i == 0))
        if generator is not None and len(sub) >= 2:
            try:
                candidate = " ".join(generator.compose_text(chain_triples(sub, graph), [graph.entity(v).name for v in sub.vertices]).lower().split())
            except GeneratorUnavailableError:
                candidate = ""
            if candidate:
                check_vocabulary(candidate, allowed_vocabulary(sub, graph))
                head_words = graph.entity(sub.vertices[0]).name_words
                if not _head_prefix_ok(candidate, head_words):
                    raise UnresolvableHeadError(
                        f"generated text {candidate!r} does not lead with head entity {graph.entity(sub.vertices[0]).name!r}"
                    )
                text = candidate
        head = graph.entity(verts[i])
        parents = (expr, leaves[i]) if expr is not None else (leaves[i], leaves[i + 1])
        expr = Expression(text=text, level=level, head_entity_id=head.entity_id, bbox=head.bbox, parents=parents)
    return expr


def identify_head(expr_text: str, dep: DepGraph) -> int:
    """1-based token index of the expression's head noun.

    The dependency root wins; a copular root with a nominal subject is
    promoted to that subject, and a verbal root defers to its subject.
    """
    _check_text_matches(expr_text, dep)
    root = dep.root
    if root.is_noun:
        cop = dep.children(root.index, "cop")
        nsubj = [t for t in dep.children(root.index, "nsubj") if t.is_noun]
        if cop and nsubj:
            return nsubj[0].index
        return root.index
    if root.upos in ("VERB", "AUX", "ADJ"):
        nsubj = [t for t in dep.children(root.index, "nsubj") if t.is_noun]
        if nsubj:
            return nsubj[0].index
    raise UnresolvableHeadError(f"no head noun in parse of {expr_text!r}")


def assign_level(expr_text: str, dep: DepGraph, graph: SceneGraph | None = None) -> int:
    """Relational depth of an expression: 1 plus the deepest referential sub-expression."""
    head = identify_head(expr_text, dep)
    if graph is not None and not _matches_graph_entity(dep.token(head), graph):
        raise UnresolvableHeadError(
            f"head noun {dep.token(head).form!r} of {expr_text!r} matches no scene entity"
        )
    allowed = set(range(1, len(dep.tokens) + 1))
    return noun_depth(dep, head, allowed)


def noun_depth(dep: DepGraph, head_index: int, allowed: set[int], _visited: frozenset = frozenset()) -> int:
    """Depth of the modifier structure under one noun, counting nouns reachable
    through nominal modifiers, clause modifiers' arguments, and copular predicates."""
    if head_index in _visited:
        return 1
    visited = _visited | {head_index}
    related = _related_nouns(dep, head_index, allowed)
    if not related:
        return 1
    return 1 + max(noun_depth(dep, m, allowed, visited) for m in related)


_ARG_RELS = ("obj", "obl", "iobj", "nmod")


def _related_nouns(dep: DepGraph, n_index: int, allowed: set[int]) -> list[int]:
    rel = []
    for m in dep.children(n_index, "nmod"):
        if m.is_noun:
            rel.append(m.index)
    for v in dep.children(n_index, "acl"):
        if v.upos == "VERB":
            for r in _ARG_RELS:
                for m in dep.children(v.index, r):
                    if m.is_noun:
                        rel.append(m.index)
    tok = dep.token(n_index)
    if tok.deprel.split(":")[0] == "nsubj" and tok.head != 0:
        p = dep.token(tok.head)
        if p.is_noun:
            rel.append(p.index)
        for r in _ARG_RELS:
            for m in dep.children(p.index, r):
                if m.is_noun:
                    rel.append(m.index)
    seen = set()
    out = []
    for i in rel:
        if i in allowed and i != n_index and i not in seen:
            seen.add(i)
            out.append(i)
    return out


def _matches_graph_entity(token, graph: SceneGraph) -> bool:
    form = token.form.lower()
    lemma = token.lemma.lower()
    variants = {form, lemma, form.rstrip("s"), form + "s"}
    for ent in graph.entities:
        if variants & set(ent.name_words):
            return True
    return False


def _check_text_matches(expr_text: str, dep: DepGraph) -> None:
    if tuple(expr_text.lower().split()) != tuple(f.lower() for f in dep.forms):
        raise ValueError(f"dependency parse tokens {dep.forms} do not match text {expr_text!r}")


@dataclass(frozen=True)
class NestedInstance:
    """One training instance: an expression hierarchy over a single image.

    Levels are contiguous from 1 to max_level; the expressions at
    max_level are the instance's targets; every parent of a higher-level
    expression is itself a member.
    """

    image_id: str
    expressions: tuple[Expression, ...]
    max_level: int

    def __post_init__(self):
        if not self.expressions:
            raise ValueError("instance has no expressions")
        levels = {e.level for e in self.expressions}
        if levels != set(range(1, self.max_level + 1)):
            raise ValueError(f"levels {sorted(levels)} not contiguous 1..{self.max_level}")
        members = {id(e) for e in self.expressions}
        by_value = {(e.level, e.text, e.head_entity_id) for e in self.expressions}
        for e in self.expressions:
            for p in e.parents:
                if id(p) not in members and (p.level, p.text, p.head_entity_id) not in by_value:
                    raise ValueError(f"parent {p.text!r} of {e.text!r} missing from instance")
        object.__setattr__(self, "expressions", tuple(sorted(self.expressions, key=lambda e: (e.level, e.text))))

    @property
    def targets(self) -> tuple[Expression, ...]:
        return tuple(e for e in self.expressions if e.level == self.max_level)

    def at_level(self, level: int) -> tuple[Expression, ...]:
        return tuple(e for e in self.expressions if e.level == level)


@dataclass
class BuildReport:
    chains_found: int = 0
    forward_maximal: int = 0
    composed: int = 0
    hallucination_rejected: int = 0
    head_failures: int = 0
    duplicate_texts_dropped: int = 0
    cap_dropped: int = 0
    region_pairs: int = 0
    region_skipped: int = 0
    per_level_counts: dict = field(default_factory=dict)

    def merge(self, other: "BuildReport") -> None:
        self.chains_found += other.chains_found
        self.forward_maximal += other.forward_maximal
        self.composed += other.composed
        self.hallucination_rejected += other.hallucination_rejected
        self.head_failures += other.head_failures
        self.duplicate_texts_dropped += other.duplicate_texts_dropped
        self.cap_dropped += other.cap_dropped
        self.region_pairs += other.region_pairs
        self.region_skipped += other.region_skipped
        for k, v in other.per_level_counts.items():
            self.per_level_counts[k] = self.per_level_counts.get(k, 0) + v


class BuildResult(Sequence):
    """Instances from one graph plus the generation report; acts as a sequence."""

    def __init__(self, instances: list[NestedInstance], report: BuildReport):
        self.instances = instances
        self.report = report

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]


def _expression_closure(top: Expression) -> tuple[Expression, ...]:
    seen: dict[int, Expression] = {}

    def walk(e: Expression):
        if id(e) in seen:
            return
        seen[id(e)] = e
        for p in e.parents:
            walk(p)

    walk(top)
    return tuple(seen.values())


def _is_contiguous_subchain(short: PredicateChain, long: PredicateChain) -> bool:
    if len(short) >= len(long):
        return False
    s = tuple((p.subject_id, p.relation, p.object_id) for p in short.predicates)
    l = tuple((p.subject_id, p.relation, p.object_id) for p in long.predicates)
    return any(l[i : i + len(s)] == s for i in range(len(l) - len(s) + 1))


def build_instances(
    graph: SceneGraph,
    generator: TextGenerator | None = None,
    max_depth: int = 3,
    per_image_cap: int | None = None,
    include_regions: bool = False,
) -> BuildResult:
    """Compose one NestedInstance per maximal forward chain of the graph.

    Forward chains (every predicate pointing away from the head) whose
    predicate sequence is not contained in a longer discovered forward
    chain each become one instance.  Instances with duplicate top-level
    text keep the first in chain order; a per-image cap trims the rest.
    Hallucinating or head-ambiguous generator output skips the instance
    and is counted in the report.
    """
    report = BuildReport()
    chains = find_chains(graph, max_depth)
    report.chains_found = len(chains)
    forward = [c for c in chains if c.is_forward]
    maximal = [c for c in forward if not any(_is_contiguous_subchain(c, d) for d in forward)]
    report.forward_maximal = len(maximal)

    instances: list[NestedInstance] = []
    seen_texts: set[str] = set()
    for chain in maximal:
        try:
            top = compose_expression(chain, graph, generator)
        except HallucinationError:
            report.hallucination_rejected += 1
            continue
        except UnresolvableHeadError:
            report.head_failures += 1
            continue
        if top.text in seen_texts:
            report.duplicate_texts_dropped += 1
            continue
        seen_texts.add(top.text)
        exprs = _expression_closure(top)
        instances.append(NestedInstance(image_id=graph.image_id, expressions=exprs, max_level=top.level))

    if include_regions:
        for region in sorted(graph.regions, key=lambda r: r.text):
            if not graph.has_entity(region.entity_id):
                report.region_skipped += 1
                continue
            ent = graph.entity(region.entity_id)
            text = " ".join(region.text.lower().split())
            if not text or text in seen_texts:
                report.region_skipped += 1
                continue
            seen_texts.add(text)
            base = Expression(text=_definite(ent.name), level=1, head_entity_id=ent.entity_id, bbox=ent.bbox)
            pair = Expression(text=text, level=2, head_entity_id=ent.entity_id, bbox=ent.bbox, parents=(base,))
            instances.append(NestedInstance(image_id=graph.image_id, expressions=(base, pair), max_level=2))
            report.region_pairs += 1

    if per_image_cap is not None and len(instances) > per_image_cap:
        report.cap_dropped = len(instances) - per_image_cap
        instances = instances[:per_image_cap]

    report.composed = len(instances)
    for inst in instances:
        for e in inst.expressions:
            report.per_level_counts[e.level] = report.per_level_counts.get(e.level, 0) + 1
    return BuildResult(instances, report)


def instance_to_record(instance: NestedInstance, width: int, height: int) -> dict:
    """JSON-ready record; parents become indices into the expression list."""
    exprs = list(instance.expressions)
    index_of = {id(e): i for i, e in enumerate(exprs)}
    payload = []
    for e in exprs:
        parent_ids = []
        for p in e.parents:
            if id(p) in index_of:
                parent_ids.append(index_of[id(p)])
            else:
                parent_ids.append(next(i for i, x in enumerate(exprs) if (x.level, x.text, x.head_entity_id) == (p.level, p.text, p.head_entity_id)))
        payload.append(
            {
                "text": e.text,
                "level": e.level,
                "head_entity_id": e.head_entity_id,
                "bbox": e.bbox.to_list(),
                "parents": sorted(parent_ids),
            }
        )
    return {
        "image_id": instance.image_id,
        "width": width,
        "height": height,
        "max_level": instance.max_level,
        "expressions": payload,
    }


def instance_from_record(record: dict) -> tuple[NestedInstance, tuple[int, int]]:
    raw = record["expressions"]
    built: list[Expression | None] = [None] * len(raw)

    def build(i: int) -> Expression:
        if built[i] is None:
            e = raw[i]
            parents = tuple(build(j) for j in e.get("parents", []))
            built[i] = Expression(
                text=e["text"],
                level=e["level"],
                head_entity_id=e["head_entity_id"],
                bbox=BBox(*e["bbox"]),
                parents=parents,
            )
        return built[i]

    exprs = tuple(build(i) for i in range(len(raw)))
    instance = NestedInstance(image_id=record["image_id"], expressions=exprs, max_level=record["max_level"])
    return instance, (record["width"], record["height"])
