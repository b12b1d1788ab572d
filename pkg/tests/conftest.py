import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from compforge.lexical import WordNetResource
from compforge.model import ObjectNode, RelEdge, Region, SceneGraph, attr, from_visual_genome, obj, rel
from compforge.parser import Lexicon
from compforge.pipeline import bundled

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURE = bundled("fixture")


@pytest.fixture(scope="session")
def lexicon() -> Lexicon:
    return Lexicon.load()


@pytest.fixture(scope="session")
def wordnet() -> WordNetResource:
    return WordNetResource.load()


@pytest.fixture(scope="session")
def fixture_graphs() -> dict[str, SceneGraph]:
    entries = json.loads((FIXTURE / "scene_graphs.json").read_text())
    return {str(e["image_id"]): from_visual_genome(e) for e in entries}


def graph(objects, edges=(), image_id="t", size=None) -> SceneGraph:
    """Compact builder: objects as (id, name, [attrs]) or (id, name, [attrs], (x, y, w, h))."""
    nodes = []
    for o in objects:
        box = Region(*o[3]) if len(o) > 3 else None
        nodes.append(ObjectNode(o[0], obj(o[1]), tuple(attr(a) for a in o[2]), box))
    return SceneGraph(tuple(nodes), tuple(RelEdge(s, rel(r), t) for s, r, t in edges), image_id, size)


def _words(name: str) -> list[str]:
    return [w for w in (FIXTURE.parent / "lexicon" / name).read_text().split("\n") if w]


NOUNS = sorted(_words("nouns.txt"))
ADJECTIVES = sorted(_words("adjectives.txt"))
RELATIONS = sorted(_words("prepositions.txt") + _words("verbs.txt"))


@st.composite
def scene_graphs(draw, max_objects=4, max_attrs=2, max_edges=4, nouns=NOUNS, adjectives=ADJECTIVES,
                 relations=RELATIONS, min_objects=1):
    """Random valid scene graphs over the bundled lexicon."""
    n = draw(st.integers(min_objects, max_objects))
    objects = []
    for i in range(n):
        attrs = draw(st.lists(st.sampled_from(adjectives), max_size=max_attrs, unique=True))
        objects.append((i + 1, draw(st.sampled_from(nouns)), attrs))
    edges = []
    if n >= 2:
        pairs = draw(st.lists(st.tuples(st.integers(1, n), st.integers(1, n)).filter(lambda p: p[0] != p[1]),
                              max_size=max_edges, unique=True))
        edges = [(s, draw(st.sampled_from(relations)), o) for s, o in pairs]
    return graph(objects, edges)
