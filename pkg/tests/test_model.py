
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compforge.errors import GraphError, InvalidAtom
from compforge.model import (Atom, AtomKind, AttrObj, ObjRelObj, Region, SceneGraph, atom_count, atom_set, attr,
                             canonicalize, canonically_equal, compound_from_fields, compounds_of, from_visual_genome,
                             obj, rel, signature, singularize, subgraph, to_visual_genome)

from .conftest import graph, scene_graphs


def boy_on_grass():
    return graph([(1, "boy", ["tall", "blue"]), (2, "grass", ["green"])], [(1, "on", 2)])


class TestCanonicalize:
    def test_plural_object(self):
        assert canonicalize("Dogs", AtomKind.OBJECT) == Atom(AtomKind.OBJECT, "dog")

    def test_attribute_already_canonical(self):
        assert canonicalize("black", "Attribute") == Atom(AtomKind.ATTRIBUTE, "black")

    def test_relationship_whitespace(self):
        assert canonicalize("  On Top Of ", AtomKind.RELATIONSHIP).lemma == "on top of"

    def test_surface_kept_but_ignored_for_equality(self):
        a = canonicalize("Dogs", AtomKind.OBJECT)
        assert a.surface == "Dogs"
        assert a == obj("dog")
        assert hash(a) == hash(obj("dog"))

    @pytest.mark.parametrize("surface", ["", "   ", "\t\n"])
    def test_empty_rejected(self, surface):
        with pytest.raises(InvalidAtom):
            canonicalize(surface, AtomKind.OBJECT)

    def test_unnormalized_lemma_rejected(self):
        with pytest.raises(InvalidAtom):
            Atom(AtomKind.OBJECT, "Dog")

    @pytest.mark.parametrize("plural,singular", [
        ("dogs", "dog"), ("boxes", "box"), ("benches", "bench"), ("puppies", "puppy"), ("people", "person"),
        ("leaves", "leaf"), ("buses", "bus"), ("glasses", "glasses"), ("grass", "grass"), ("bus", "bus"),
        ("traffic lights", "traffic light"), ("sheep", "sheep"), ("horses", "horse"),
    ])
    def test_singularize(self, plural, singular):
        assert singularize(plural) == singular

    def test_relationships_and_attributes_not_singularized(self):
        assert rel("has").lemma == "has"
        assert attr("glass").lemma == "glass"

    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz AEIOUS", min_size=1, max_size=20),
           st.sampled_from(list(AtomKind)))
    def test_idempotent(self, surface, kind):
        try:
            first = canonicalize(surface, kind)
        except InvalidAtom:
            return
        assert canonicalize(first.lemma, kind) == first


class TestCompounds:
    def test_boy_on_grass(self):
        assert compounds_of(boy_on_grass()) == {
            AttrObj(attr("tall"), obj("boy")), AttrObj(attr("blue"), obj("boy")),
            AttrObj(attr("green"), obj("grass")), ObjRelObj(obj("boy"), rel("on"), obj("grass"))}

    def test_bare_object_has_none(self):
        assert compounds_of(graph([(1, "sunset", [])])) == frozenset()

    def test_two_windows_one_edge(self):
        g = graph([(1, "window", []), (2, "window", [])], [(1, "next to", 2)])
        assert compounds_of(g) == {ObjRelObj(obj("window"), rel("next to"), obj("window"))}

    def test_role_order_enforced(self):
        with pytest.raises(InvalidAtom):
            AttrObj(obj("dog"), attr("black"))
        with pytest.raises(InvalidAtom):
            ObjRelObj(obj("dog"), obj("cat"), rel("on"))

    def test_subject_object_not_symmetrized(self):
        assert ObjRelObj(obj("dog"), rel("on"), obj("bed")) != ObjRelObj(obj("bed"), rel("on"), obj("dog"))

    def test_fields_round_trip(self):
        for c in compounds_of(boy_on_grass()):
            assert compound_from_fields(c.to_fields()) == c
        with pytest.raises(ValueError):
            compound_from_fields(["ao", "x"])

    @given(scene_graphs())
    def test_compound_atoms_are_graph_atoms(self, g):
        atoms = atom_set(g)
        for c in compounds_of(g):
            assert set(c.atoms) <= atoms

    @given(scene_graphs(), st.randoms(use_true_random=False))
    def test_order_insensitive(self, g, rnd):
        objs, edges = list(g.objects), list(g.relationships)
        rnd.shuffle(objs)
        rnd.shuffle(edges)
        shuffled = SceneGraph(tuple(objs), tuple(edges))
        assert compounds_of(shuffled) == compounds_of(g)
        assert signature(shuffled) == signature(g)
        assert canonically_equal(shuffled, g)


class TestAtomCount:
    def test_boy_on_grass(self):
        assert atom_count(boy_on_grass()) == 6

    def test_empty_and_single(self):
        assert atom_count(SceneGraph()) == 0
        assert atom_count(graph([(1, "dog", [])])) == 1

    def test_instances_counted(self):
        g = graph([(1, "window", []), (2, "window", [])])
        assert atom_count(g) == 2
        assert len(atom_set(g)) == 1

    @given(scene_graphs())
    def test_at_least_distinct_atoms(self, g):
        assert atom_count(g) >= len(atom_set(g))


class TestSceneGraph:
    def test_duplicate_ids(self):
        with pytest.raises(GraphError):
            graph([(1, "dog", []), (1, "cat", [])])

    def test_dangling_edge(self):
        with pytest.raises(GraphError):
            graph([(1, "dog", [])], [(1, "on", 2)])

    def test_bbox_must_fit(self):
        with pytest.raises(GraphError):
            graph([(1, "dog", [], (0, 0, 200, 200))], size=(100, 100))

    @given(scene_graphs())
    def test_dict_round_trip(self, g):
        again = SceneGraph.from_dict(g.to_dict())
        assert again == g

    def test_visual_genome_reader(self):
        entry = {"image_id": 7, "width": 100, "height": 80, "objects": [
            {"object_id": 1, "names": ["Dogs", "puppy"], "attributes": ["Black", "black"], "x": 0, "y": 0,
             "w": 10, "h": 10},
            {"object_id": 2, "names": ["bed"], "x": 5, "y": 5, "w": 20, "h": 20}],
            "relationships": [{"subject_id": 1, "predicate": "on", "object_id": 2},
                              {"subject_id": 1, "predicate": "on", "object_id": 2},
                              {"subject_id": 1, "predicate": "near", "object_id": 99}]}
        g = from_visual_genome(entry)
        assert g.image_id == "7" and g.image_size == (100, 80)
        assert g.node(1).lemma == "dog"
        assert [a.lemma for a in g.node(1).attributes] == ["black"]
        assert len(g.relationships) == 1
        assert from_visual_genome(to_visual_genome(g)) == g

    def test_components(self):
        g = graph([(1, "a", []), (2, "b", []), (3, "c", []), (4, "d", [])], [(3, "on", 1)])
        assert sorted(map(sorted, g.components())) == [[1, 3], [2], [4]]

    def test_subgraph_keeps_ids(self):
        g = boy_on_grass()
        s = subgraph(g, [1], {1: [attr("tall")]})
        assert [o.id for o in s.objects] == [1]
        assert [a.lemma for a in s.node(1).attributes] == ["tall"]
        assert s.relationships == ()


class TestRegion:
    def test_geometry(self):
        a, b = Region(0, 0, 10, 10), Region(5, 5, 10, 10)
        assert a.area == 100
        assert a.intersection_area(b) == 25
        assert a.iou(b) == pytest.approx(25 / 175)
        assert a.union(b) == Region(0, 0, 15, 15)
        assert a.union(b).contains(a) and a.union(b).contains(b)

    def test_iou_half(self):
        # 10x10 and 10x20 with full overlap of the smaller one: 100 / 200
        assert Region(0, 0, 10, 10).iou(Region(0, 0, 10, 20)) == pytest.approx(0.5)

    def test_positive_size(self):
        with pytest.raises(Exception):
            Region(0, 0, 0, 5)
