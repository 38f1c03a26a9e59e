from __future__ import annotations

import random
from pathlib import Path

import pytest

from compoground.parses import read_bracketed, read_conllu
from compoground.decomposer import make_bundle
from compoground.scene_graph import BBox, Entity, Predicate, SceneGraph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def fig3_graph() -> SceneGraph:
    """Three entities in a two-predicate chain: man behind woman riding horse."""
    return SceneGraph(
        image_id="fig3",
        width=640,
        height=427,
        entities=(
            Entity(entity_id="1", name="man", bbox=BBox(40, 120, 180, 380), image_id="fig3"),
            Entity(entity_id="2", name="woman", bbox=BBox(230, 80, 360, 320), image_id="fig3"),
            Entity(entity_id="3", name="horse", bbox=BBox(200, 140, 440, 390), image_id="fig3"),
        ),
        predicates=(
            Predicate(subject_id="1", relation="behind", object_id="2"),
            Predicate(subject_id="2", relation="riding", object_id="3"),
        ),
    )


def bundle_for(sentence: str):
    """ParseBundle from the golden registry; fails the test when absent."""
    from golden_parses import GOLDEN

    entry = GOLDEN[sentence]
    tree = read_bracketed(entry["bracket"])
    dep = read_conllu(entry["conllu"])[0]
    return make_bundle(tree, dep, source="golden")


def random_graph(rng: random.Random, max_entities: int = 5, max_predicates: int = 4) -> SceneGraph:
    """Small random scene graph; may contain parallel or crossing relations."""
    names = ["man", "woman", "horse", "dog", "car", "tree", "cup", "hat"]
    relations = ["behind", "riding", "with", "holding", "near", "next to"]
    n = rng.randint(1, max_entities)
    width, height = rng.choice([(640, 480), (320, 240), (800, 600)])
    entities = []
    for i in range(n):
        x = rng.randint(0, width - 20)
        y = rng.randint(0, height - 20)
        w = rng.randint(10, width - x)
        h = rng.randint(10, height - y)
        entities.append(
            Entity(entity_id=str(i), name=names[i % len(names)], bbox=BBox(x, y, x + w, y + h), image_id="rand")
        )
    preds = []
    if n >= 2:
        seen = set()
        for _ in range(rng.randint(0, max_predicates)):
            a, b = rng.sample(range(n), 2)
            rel = rng.choice(relations)
            if (str(a), rel, str(b)) in seen:
                continue
            seen.add((str(a), rel, str(b)))
            preds.append(Predicate(subject_id=str(a), relation=rel, object_id=str(b)))
    return SceneGraph(
        image_id="rand",
        width=width,
        height=height,
        entities=tuple(entities),
        predicates=tuple(preds),
    )
