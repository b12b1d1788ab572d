"""Compositional vocabulary: atoms, compounds, scene graphs and regions."""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import GraphError, InvalidAtom


class AtomKind(str, enum.Enum):
    OBJECT = "Object"
    ATTRIBUTE = "Attribute"
    RELATIONSHIP = "Relationship"


# Irregular plurals and words whose trailing "s" is not a plural marker.
_IRREGULAR_PLURALS = {
    "people": "person",
    "men": "man",
    "women": "woman",
    "children": "child",
    "feet": "foot",
    "teeth": "tooth",
    "mice": "mouse",
    "geese": "goose",
    "oxen": "ox",
    "leaves": "leaf",
    "knives": "knife",
    "wolves": "wolf",
    "shelves": "shelf",
    "halves": "half",
    "scarves": "scarf",
    "loaves": "loaf",
    "calves": "calf",
    "wives": "wife",
    "lives": "life",
    "thieves": "thief",
    "tomatoes": "tomato",
    "potatoes": "potato",
    "heroes": "hero",
    "mangoes": "mango",
    "buses": "bus",
    "gases": "gas",
    "lenses": "lens",
    "canvases": "canvas",
    "cacti": "cactus",
}
_INVARIANT = frozenset({
    "gas", "canvas", "atlas", "bias", "lens", "jeans", "pants", "shorts",
    "scissors", "glasses", "series", "species", "news", "sunglasses",
    "trousers", "tongs", "goggles", "tennis", "chess", "physics", "sheep",
    "fish", "deer", "aircraft", "shrimp", "moose", "bison", "salmon",
    "headphones", "earphones", "binoculars", "pajamas", "stairs", "clothes",
    "always", "yes", "this", "its", "his", "has", "was", "is", "as", "us",
})
_ES_AFTER = ("ches", "shes", "xes", "zes", "sses")
_WS = re.compile(r"\s+")


def _singular_word(word: str) -> str:
    if word in _INVARIANT:
        return word
    if word in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[word]
    if len(word) <= 3 or not word.endswith("s"):
        return word
    if word.endswith(("ss", "us", "is")):
        return word
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(_ES_AFTER):
        return word[:-2]
    return word[:-1]


def singularize(phrase: str) -> str:
    """Singularize the head (last word) of a noun phrase."""
    head, _, last = phrase.rpartition(" ")
    last = _singular_word(last)
    return f"{head} {last}" if head else last


def normalize_text(surface: str) -> str:
    return _WS.sub(" ", surface.strip().lower())


@dataclass(frozen=True)
class Atom:
    kind: AtomKind
    lemma: str
    surface: str = field(default="", compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.lemma or self.lemma != normalize_text(self.lemma):
            raise InvalidAtom(f"atom lemma must be non-empty and normalized: {self.lemma!r}")

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.kind.value, self.lemma)

    def __str__(self) -> str:
        return self.lemma


def canonicalize(surface: str, kind: AtomKind | str) -> Atom:
    """Map a surface string onto its canonical atom.

    Lowercases, trims, collapses inner whitespace and, for objects only,
    reduces a plural head noun to its singular form.
    """
    kind = AtomKind(kind)
    if surface is None:
        raise InvalidAtom("atom surface is missing")
    lemma = normalize_text(surface)
    if not lemma:
        raise InvalidAtom(f"atom surface {surface!r} is empty after normalization")
    if kind is AtomKind.OBJECT:
        lemma = singularize(lemma)
    return Atom(kind, lemma, surface)


def obj(surface: str) -> Atom:
    return canonicalize(surface, AtomKind.OBJECT)


def attr(surface: str) -> Atom:
    return canonicalize(surface, AtomKind.ATTRIBUTE)


def rel(surface: str) -> Atom:
    return canonicalize(surface, AtomKind.RELATIONSHIP)


@dataclass(frozen=True)
class AttrObj:
    attribute: Atom
    object: Atom

    def __post_init__(self) -> None:
        if self.attribute.kind is not AtomKind.ATTRIBUTE or self.object.kind is not AtomKind.OBJECT:
            raise InvalidAtom("AttrObj needs an Attribute atom and an Object atom")

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return (self.attribute, self.object)

    @property
    def sort_key(self) -> tuple[str, ...]:
        return ("ao", self.attribute.lemma, self.object.lemma)

    def to_fields(self) -> list[str]:
        return ["ao", self.attribute.lemma, self.object.lemma]


@dataclass(frozen=True)
class ObjRelObj:
    subject: Atom
    relationship: Atom
    object: Atom

    def __post_init__(self) -> None:
        kinds = (self.subject.kind, self.relationship.kind, self.object.kind)
        if kinds != (AtomKind.OBJECT, AtomKind.RELATIONSHIP, AtomKind.OBJECT):
            raise InvalidAtom("ObjRelObj needs Object, Relationship, Object atoms in that order")

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return (self.subject, self.relationship, self.object)

    @property
    def sort_key(self) -> tuple[str, ...]:
        return ("oro", self.subject.lemma, self.relationship.lemma, self.object.lemma)

    def to_fields(self) -> list[str]:
        return ["oro", self.subject.lemma, self.relationship.lemma, self.object.lemma]


Compound = Union[AttrObj, ObjRelObj]


def compound_from_fields(fields: list[str]) -> Compound:
    tag, *rest = fields
    if tag == "ao" and len(rest) == 2:
        return AttrObj(attr(rest[0]), obj(rest[1]))
    if tag == "oro" and len(rest) == 3:
        return ObjRelObj(obj(rest[0]), rel(rest[1]), obj(rest[2]))
    raise ValueError(f"malformed compound fields: {fields!r}")


@dataclass(frozen=True)
class Region:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if min(self.x, self.y) < 0:
            raise GraphError(f"region origin must be non-negative: {self}")
        if self.w <= 0 or self.h <= 0:
            raise GraphError(f"region must have positive extent: {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def fits(self, size: tuple[int, int]) -> bool:
        return self.x2 <= size[0] and self.y2 <= size[1]

    def contains(self, other: "Region") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x2 <= self.x2 and other.y2 <= self.y2)

    def union(self, other: "Region") -> "Region":
        x, y = min(self.x, other.x), min(self.y, other.y)
        return Region(x, y, max(self.x2, other.x2) - x, max(self.y2, other.y2) - y)

    def intersection_area(self, other: "Region") -> int:
        w = min(self.x2, other.x2) - max(self.x, other.x)
        h = min(self.y2, other.y2) - max(self.y, other.y)
        return max(w, 0) * max(h, 0)

    def iou(self, other: "Region") -> float:
        inter = self.intersection_area(other)
        return inter / (self.area + other.area - inter)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ObjectNode:
    id: int
    atom: Atom
    attributes: tuple[Atom, ...] = ()
    bbox: Optional[Region] = None

    def __post_init__(self) -> None:
        if self.atom.kind is not AtomKind.OBJECT:
            raise GraphError(f"object node {self.id} carries a {self.atom.kind.value} atom")
        if any(a.kind is not AtomKind.ATTRIBUTE for a in self.attributes):
            raise GraphError(f"object node {self.id} has a non-attribute attribute")
        object.__setattr__(self, "attributes", tuple(self.attributes))

    @property
    def lemma(self) -> str:
        return self.atom.lemma

    def attribute_lemmas(self) -> frozenset[str]:
        return frozenset(a.lemma for a in self.attributes)


@dataclass(frozen=True)
class RelEdge:
    subject_id: int
    relationship: Atom
    object_id: int

    def __post_init__(self) -> None:
        if self.relationship.kind is not AtomKind.RELATIONSHIP:
            raise GraphError("relationship edge must carry a Relationship atom")


@dataclass(frozen=True)
class SceneGraph:
    objects: tuple[ObjectNode, ...] = ()
    relationships: tuple[RelEdge, ...] = ()
    image_id: Optional[str] = None
    image_size: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relationships", tuple(self.relationships))
        if self.image_id is not None:
            object.__setattr__(self, "image_id", str(self.image_id))
        if self.image_size is not None:
            object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise GraphError(f"duplicate object ids in graph {self.image_id}")
        known = set(ids)
        for e in self.relationships:
            if e.subject_id not in known or e.object_id not in known:
                raise GraphError(
                    f"edge ({e.subject_id}, {e.relationship.lemma}, {e.object_id}) "
                    f"references a missing object in graph {self.image_id}")
        if self.image_size is not None:
            for o in self.objects:
                if o.bbox is not None and not o.bbox.fits(self.image_size):
                    raise GraphError(f"bbox of object {o.id} exceeds image size {self.image_size}")

    def node(self, object_id: int) -> ObjectNode:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    @property
    def nodes(self) -> dict[int, ObjectNode]:
        return {o.id: o for o in self.objects}

    def atoms(self) -> Iterator[Atom]:
        """Every atom instance, in object order then edge order."""
        for o in self.objects:
            yield o.atom
            yield from o.attributes
        for e in self.relationships:
            yield e.relationship

    def edges_of(self, object_id: int) -> list[RelEdge]:
        return [e for e in self.relationships if object_id in (e.subject_id, e.object_id)]

    def components(self) -> list[list[int]]:
        """Connected components over relationship edges, in object order."""
        parent = {o.id: o.id for o in self.objects}

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in self.relationships:
            a, b = find(e.subject_id), find(e.object_id)
            if a != b:
                parent[max(a, b)] = min(a, b)
        groups: dict[int, list[int]] = {}
        for o in self.objects:
            groups.setdefault(find(o.id), []).append(o.id)
        return list(groups.values())

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_size": list(self.image_size) if self.image_size else None,
            "objects": [
                {
                    "id": o.id,
                    "name": o.atom.surface or o.atom.lemma,
                    "attributes": [a.surface or a.lemma for a in o.attributes],
                    "bbox": o.bbox.to_list() if o.bbox else None,
                }
                for o in self.objects
            ],
            "relationships": [
                {"subject": e.subject_id,
                 "predicate": e.relationship.surface or e.relationship.lemma,
                 "object": e.object_id}
                for e in self.relationships
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SceneGraph":
        objects = []
        for o in data.get("objects", []):
            bbox = o.get("bbox")
            objects.append(ObjectNode(
                int(o["id"]), obj(o["name"]),
                tuple(attr(a) for a in o.get("attributes", [])),
                Region(*bbox) if bbox else None,
            ))
        edges = tuple(
            RelEdge(int(r["subject"]), rel(r["predicate"]), int(r["object"]))
            for r in data.get("relationships", [])
        )
        size = data.get("image_size")
        return cls(tuple(objects), edges, data.get("image_id"), tuple(size) if size else None)


def from_visual_genome(entry: Mapping) -> SceneGraph:
    """Build a graph from one Visual Genome style image record.

    The first entry of ``names`` names the object; attributes duplicated on a
    node are kept once, and relationships whose endpoints were not annotated
    are dropped, as are repeated identical edges.
    """
    objects = []
    for o in entry.get("objects", []):
        names = o.get("names") or ([o["name"]] if "name" in o else [])
        if not names:
            continue
        seen: dict[Atom, None] = {}
        for a in o.get("attributes", []) or []:
            if normalize_text(a):
                seen.setdefault(attr(a), None)
        bbox = None
        if all(k in o for k in ("x", "y", "w", "h")) and o["w"] > 0 and o["h"] > 0:
            bbox = Region(int(o["x"]), int(o["y"]), int(o["w"]), int(o["h"]))
        objects.append(ObjectNode(int(o["object_id"]), obj(names[0]), tuple(seen), bbox))
    known = {o.id for o in objects}
    edges = tuple(dict.fromkeys(
        RelEdge(int(r["subject_id"]), rel(r["predicate"]), int(r["object_id"]))
        for r in entry.get("relationships", [])
        if r["subject_id"] in known and r["object_id"] in known and normalize_text(r["predicate"])
    ))
    size = None
    if entry.get("width") and entry.get("height"):
        size = (int(entry["width"]), int(entry["height"]))
    return SceneGraph(tuple(objects), edges, str(entry["image_id"]), size)


def to_visual_genome(graph: SceneGraph) -> dict:
    out: dict = {"image_id": graph.image_id}
    if graph.image_size:
        out["width"], out["height"] = graph.image_size
    out["objects"] = []
    for o in graph.objects:
        row = {"object_id": o.id, "names": [o.atom.surface or o.lemma],
               "attributes": [a.surface or a.lemma for a in o.attributes]}
        if o.bbox:
            row.update(x=o.bbox.x, y=o.bbox.y, w=o.bbox.w, h=o.bbox.h)
        out["objects"].append(row)
    out["relationships"] = [
        {"subject_id": e.subject_id, "predicate": e.relationship.surface or e.relationship.lemma,
         "object_id": e.object_id}
        for e in graph.relationships
    ]
    return out


def compounds_of(graph: SceneGraph) -> frozenset[Compound]:
    nodes = graph.nodes
    out: set[Compound] = set()
    for o in graph.objects:
        for a in o.attributes:
            out.add(AttrObj(a, o.atom))
    for e in graph.relationships:
        out.add(ObjRelObj(nodes[e.subject_id].atom, e.relationship, nodes[e.object_id].atom))
    return frozenset(out)


def atom_count(graph: SceneGraph) -> int:
    return len(graph.objects) + sum(len(o.attributes) for o in graph.objects) + len(graph.relationships)


def atom_set(graph: SceneGraph) -> frozenset[Atom]:
    return frozenset(graph.atoms())


def atom_multiset(graph: SceneGraph) -> Counter:
    return Counter(graph.atoms())


def sorted_atoms(atoms: Iterable[Atom]) -> list[Atom]:
    return sorted(atoms, key=lambda a: a.sort_key)


def sorted_compounds(compounds: Iterable[Compound]) -> list[Compound]:
    return sorted(compounds, key=lambda c: c.sort_key)


def signature(graph: SceneGraph) -> str:
    """Sorted canonical serialization of a graph's atoms and compounds."""
    atoms = ";".join(f"{a.kind.value[0]}:{a.lemma}" for a in sorted_atoms(atom_set(graph)))
    comps = ";".join("|".join(c.to_fields()) for c in sorted_compounds(compounds_of(graph)))
    return f"{atoms}#{comps}"


def canonically_equal(a: SceneGraph, b: SceneGraph) -> bool:
    """Same atom instances (as a multiset) and the same compound set."""
    return atom_multiset(a) == atom_multiset(b) and compounds_of(a) == compounds_of(b)


def subgraph(graph: SceneGraph, object_ids: Iterable[int],
             attributes: Optional[Mapping[int, Iterable[Atom]]] = None,
             edges: Optional[Iterable[RelEdge]] = None) -> SceneGraph:
    """Restrict ``graph`` to some objects, attributes and edges, keeping ids and order."""
    keep = set(object_ids)
    chosen_edges = set(edges) if edges is not None else None
    objects = []
    for o in graph.objects:
        if o.id not in keep:
            continue
        if attributes is None:
            attrs = o.attributes
        else:
            wanted = set(attributes.get(o.id, ()))
            attrs = tuple(a for a in o.attributes if a in wanted)
        objects.append(ObjectNode(o.id, o.atom, attrs, o.bbox))
    rels = tuple(
        e for e in graph.relationships
        if e.subject_id in keep and e.object_id in keep
        and (chosen_edges is None or e in chosen_edges)
    )
    return SceneGraph(tuple(objects), rels, graph.image_id, graph.image_size)
