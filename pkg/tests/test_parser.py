import re

import pytest
from hypothesis import given, settings

from compforge.captions import template_caption
from compforge.errors import AlignmentError, EmptyParse
from compforge.model import SceneGraph, canonically_equal, singularize
from compforge.parser import Lexicon, evaluate_parser, parse_caption, parse_caption_spans

from .conftest import graph, scene_graphs


def triples(g):
    return {(g.node(e.subject_id).lemma, e.relationship.lemma, g.node(e.object_id).lemma) for e in g.relationships}


def test_tall_and_blue_boy(lexicon):
    g = parse_caption("tall and blue boy on green grass", lexicon)
    expected = graph([(1, "boy", ["tall", "blue"]), (2, "grass", ["green"])], [(1, "on", 2)])
    assert canonically_equal(g, expected)


def test_multiword_relationship(lexicon):
    g = parse_caption("a grill on top of the porch", lexicon)
    assert sorted(o.lemma for o in g.objects) == ["grill", "porch"]
    assert triples(g) == {("grill", "on top of", "porch")}


def test_bare_noun(lexicon):
    g = parse_caption("sunset", lexicon)
    assert [o.lemma for o in g.objects] == ["sunset"]
    assert g.relationships == ()


def test_plural_and_copula(lexicon):
    g = parse_caption("Two dogs are sitting on a white couch.", lexicon)
    assert {o.lemma for o in g.objects} == {"dog", "couch"}
    assert [a.lemma for o in g.objects for a in o.attributes] == ["white"]
    (t,) = triples(g)
    assert t[0] == "dog" and t[2] == "couch"


def test_definite_reference_reuses_object(lexicon):
    g = parse_caption("a dog on a bed and the dog next to a cat", lexicon)
    assert [o.lemma for o in g.objects].count("dog") == 1
    assert triples(g) == {("dog", "on", "bed"), ("dog", "next to", "cat")}


def test_ordinal_reference(lexicon):
    g = parse_caption("a window next to a window and the second window on a wall", lexicon)
    windows = [o.id for o in g.objects if o.lemma == "window"]
    assert len(windows) == 2
    edge = next(e for e in g.relationships if e.relationship.lemma == "on")
    assert edge.subject_id == windows[1]


@pytest.mark.parametrize("text", ["", "   ", "the of and", "!!!"])
def test_no_object_raises(lexicon, text):
    with pytest.raises(EmptyParse):
        parse_caption(text, lexicon)


def test_spans_point_at_words(lexicon):
    text = "A black dog on top of a white bed"
    parsed = parse_caption_spans(text, lexicon)
    nouns = {text[s:e].lower() for m in parsed.mentions for s, e in [m.noun_span]}
    assert nouns == {"dog", "bed"}
    assert {text[s:e] for s, e in parsed.edge_spans} == {"on top of"}


def test_deterministic(lexicon):
    text = "a small brown dog chasing a red ball near a tall tree"
    assert parse_caption(text, lexicon) == parse_caption(text, lexicon)


@given(scene_graphs(max_objects=6, max_attrs=3, max_edges=8))
@settings(max_examples=300)
def test_template_round_trip(lexicon, g):
    assert canonically_equal(parse_caption(template_caption(g), lexicon), g)


@given(scene_graphs(max_objects=5, max_attrs=2, max_edges=5))
@settings(max_examples=200)
def test_no_hallucinated_atoms(lexicon, g):
    text = template_caption(g) + " near the old"
    words = re.findall(r"[a-z]+", text.lower())
    vocabulary = set(words) | {singularize(w) for w in words}
    phrases = " ".join(words)
    parsed = parse_caption(text, lexicon)
    for o in parsed.objects:
        assert o.lemma in vocabulary or o.lemma in phrases
        for a in o.attributes:
            assert a.lemma in vocabulary
    for e in parsed.relationships:
        assert e.relationship.lemma in phrases


class TestEvaluateParser:
    def test_identical(self):
        g = graph([(1, "dog", ["black"]), (2, "bed", [])], [(1, "on", 2)])
        report = evaluate_parser([g], [g])
        for cat in ("object", "attribute", "relationship", "triplet"):
            assert report[cat].precision == 1.0 and report[cat].recall == 1.0

    def test_empty_prediction(self):
        report = evaluate_parser([SceneGraph()], [graph([(1, "dog", [])])])
        assert report["object"].recall == 0.0
        assert report["object"].precision is None

    def test_half_right(self):
        pred = graph([(1, "dog", []), (2, "lamp", [])])
        gold = graph([(1, "dog", []), (2, "cat", [])])
        score = evaluate_parser([pred], [gold])["object"]
        assert (score.tp, score.fp, score.fn) == (1, 1, 1)
        assert score.precision == 0.5 and score.recall == 0.5

    def test_length_mismatch(self):
        with pytest.raises(AlignmentError):
            evaluate_parser([], [graph([(1, "dog", [])])])

    def test_to_dict_undefined_is_none(self):
        d = evaluate_parser([SceneGraph()], [SceneGraph()]).to_dict()
        assert d["triplet"] == {"tp": 0, "fp": 0, "fn": 0, "precision": None, "recall": None}


def test_lexicon_overlap_prefers_adjective(tmp_path):
    for name, words in {"nouns.txt": "dog\nred\n", "adjectives.txt": "red\n", "prepositions.txt": "on\n",
                        "verbs.txt": ""}.items():
        (tmp_path / name).write_text(words)
    lex = Lexicon.load(tmp_path)
    g = parse_caption("red dog on a red", lex)
    dog = next(o for o in g.objects if o.lemma == "dog")
    assert [a.lemma for a in dog.attributes] == ["red"]
