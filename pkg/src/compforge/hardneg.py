"""Hard-negative captions (atom foil, compound foil, swap, negation) verified
against the full scene graph of the image."""

from __future__ import annotations

import enum
import itertools
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .errors import AlignmentError, EmptyParse, NoFoilAvailable, PreconditionError
from .lexical import LexicalResource
from .model import (
    Atom,
    AtomKind,
    ObjectNode,
    RelEdge,
    SceneGraph,
    atom_count,
    attr,
    canonically_equal,
    compounds_of,
    normalize_text,
    obj,
    rel,
    signature,
)
from .parser import Lexicon, ParsedCaption, parse_caption, parse_caption_spans

log = logging.getLogger(__name__)


class HNType(str, enum.Enum):
    ATOM = "Atom"
    COMP = "Comp"
    SWAP = "Swap"
    NEG = "Neg"


@dataclass(frozen=True)
class HNConfig:
    atom: int = 5
    comp: int = 5
    swap: int = 5
    neg: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.atom, self.comp, self.swap, self.neg) < 1:
            raise PreconditionError("hard-negative counts must be at least 1")

    @classmethod
    def systematicity(cls, seed: int = 0) -> "HNConfig":
        return cls(atom=4, comp=6, seed=seed)

    @classmethod
    def productivity(cls, seed: int = 0) -> "HNConfig":
        return cls(atom=5, swap=5, neg=5, seed=seed)

    def count(self, hn_type: HNType) -> int:
        return getattr(self, hn_type.value.lower())


@dataclass(frozen=True)
class Claim:
    """What a negative asserts, in the caption's own object ids.

    ``graphs`` are asserted to hold (each one independently for compound foils).
    A negation names what is asserted absent:
    ``("caption",)``, ``("attribute", oid, lemma)``, ``("relationship", s, lemma, o)``
    or ``("object", oid)``.
    """

    graphs: tuple[SceneGraph, ...]
    negation: Optional[tuple] = None


@dataclass(frozen=True)
class HardNegative:
    text: str
    hn_type: HNType
    provenance: str
    verified: bool = True
    claim: Optional[Claim] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"text": self.text, "hn_type": self.hn_type.value, "provenance": self.provenance}


# -- graph matching -------------------------------------------------------------

def embeddings(sub: SceneGraph, parent: SceneGraph, pinned: Optional[dict[int, int]] = None) -> Iterator[dict[int, int]]:
    """Injective maps of ``sub``'s objects into ``parent`` preserving names,
    attributes (as subsets) and labelled edges."""
    p_nodes = parent.nodes
    p_edges = {(e.subject_id, e.relationship.lemma, e.object_id) for e in parent.relationships}
    by_lemma: dict[str, list[int]] = {}
    for o in parent.objects:
        by_lemma.setdefault(o.lemma, []).append(o.id)
    order = sorted(sub.objects, key=lambda o: -len(sub.edges_of(o.id)))
    edges = [(e.subject_id, e.relationship.lemma, e.object_id) for e in sub.relationships]
    pinned = pinned or {}

    def candidates(o: ObjectNode) -> list[int]:
        pool = [pinned[o.id]] if o.id in pinned else by_lemma.get(o.lemma, [])
        need = o.attribute_lemmas()
        return [p for p in pool if p in p_nodes and p_nodes[p].lemma == o.lemma
                and need <= p_nodes[p].attribute_lemmas()]

    def extend(i: int, mapping: dict[int, int], used: set[int]) -> Iterator[dict[int, int]]:
        if i == len(order):
            yield dict(mapping)
            return
        o = order[i]
        for p in candidates(o):
            if p in used:
                continue
            mapping[o.id] = p
            ok = all(
                (mapping[s], r, mapping[t]) in p_edges
                for s, r, t in edges if s in mapping and t in mapping and o.id in (s, t)
            )
            if ok:
                used.add(p)
                yield from extend(i + 1, mapping, used)
                used.discard(p)
            del mapping[o.id]

    yield from extend(0, {}, set())


def embeds(sub: SceneGraph, parent: SceneGraph) -> bool:
    return next(embeddings(sub, parent), None) is not None


def isomorphism(a: SceneGraph, b: SceneGraph) -> Optional[dict[int, int]]:
    """An exact object bijection a -> b with equal names, attribute sets and edges."""
    if atom_count(a) != atom_count(b) or len(a.objects) != len(b.objects):
        return None
    for m in embeddings(a, b):
        if all(a.node(i).attribute_lemmas() == b.node(j).attribute_lemmas() for i, j in m.items()):
            if len(set(m.values())) == len(b.objects) and len(a.relationships) == len(b.relationships):
                return m
    return None


# -- graph edits ----------------------------------------------------------------

def _with(graph: SceneGraph, objects=None, relationships=None) -> SceneGraph:
    return SceneGraph(tuple(objects if objects is not None else graph.objects),
                      tuple(relationships if relationships is not None else graph.relationships),
                      graph.image_id, graph.image_size)


def relabel_objects(graph: SceneGraph, names: dict[int, str]) -> SceneGraph:
    return _with(graph, [ObjectNode(o.id, obj(names[o.id]) if o.id in names else o.atom, o.attributes, o.bbox)
                         for o in graph.objects])


def set_attributes(graph: SceneGraph, attrs: dict[int, Sequence[str]]) -> SceneGraph:
    return _with(graph, [ObjectNode(o.id, o.atom, tuple(attr(a) for a in attrs[o.id]) if o.id in attrs
                                    else o.attributes, o.bbox) for o in graph.objects])


def relabel_edges(graph: SceneGraph, labels: dict[int, str]) -> SceneGraph:
    return _with(graph, relationships=[
        RelEdge(e.subject_id, rel(labels[k]), e.object_id) if k in labels else e
        for k, e in enumerate(graph.relationships)])


def drop_edge(graph: SceneGraph, k: int) -> SceneGraph:
    return _with(graph, relationships=[e for i, e in enumerate(graph.relationships) if i != k])


def apply_edits(text: str, edits: Iterable[tuple[int, int, str]]) -> str:
    out = text
    for start, end, repl in sorted(edits, key=lambda e: e[0], reverse=True):
        out = out[:start] + repl + out[end:]
    return out


_ARTICLE_A = re.compile(r"\b([Aa])n? (?=([A-Za-z]))")


def _clean(text: str, like: Optional[str] = None) -> str:
    """Collapse whitespace, fix a/an agreement and copy the leading case of ``like``."""
    text = re.sub(r"\s+", " ", text).strip()
    text = _ARTICLE_A.sub(lambda m: m.group(1) + ("n " if m.group(2).lower() in "aeiou" else " "), text)
    if like:
        first = str.upper if like[:1].isupper() else str.lower
        text = first(text[:1]) + text[1:]
    return text


# -- alignment ------------------------------------------------------------------

@dataclass
class AlignedCaption:
    text: str
    parsed: ParsedCaption
    to_parent: dict[int, int]  # caption object id -> parent object id
    parent: SceneGraph

    @property
    def graph(self) -> SceneGraph:
        return self.parsed.graph

    def parent_node(self, oid: int) -> ObjectNode:
        return self.parent.node(self.to_parent[oid])


def align_caption(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
                  lexicon: Lexicon) -> AlignedCaption:
    """Parse ``caption`` and tie each mentioned object to its node in ``parent_graph``.

    ``subgraph`` carries parent object ids; the parse must match it exactly.
    """
    try:
        parsed = parse_caption_spans(caption, lexicon)
    except EmptyParse as exc:
        raise AlignmentError(str(exc)) from exc
    iso = isomorphism(parsed.graph, subgraph)
    if iso is None:
        raise AlignmentError(f"caption {caption!r} does not parse to its subgraph")
    pnodes = parent_graph.nodes
    for pid in iso.values():
        if pid not in pnodes:
            raise AlignmentError(f"subgraph object {pid} missing from parent graph {parent_graph.image_id}")
    return AlignedCaption(caption, parsed, iso, parent_graph)


def ground_in_parent(graph: SceneGraph, parent: SceneGraph) -> Optional[SceneGraph]:
    """Re-express a parsed caption graph with the object ids of its first
    embedding into ``parent`` (None when it does not embed)."""
    m = next(embeddings(graph, parent), None)
    if m is None:
        return None
    objects = [ObjectNode(m[o.id], o.atom, o.attributes, parent.node(m[o.id]).bbox) for o in graph.objects]
    edges = [RelEdge(m[e.subject_id], e.relationship, m[e.object_id]) for e in graph.relationships]
    return SceneGraph(tuple(objects), tuple(edges), parent.image_id, parent.image_size)


# -- foils ---------------------------------------------------------------------

def _foils(lemma: str, kind: AtomKind, lex: LexicalResource, known: Optional[frozenset[str]]) -> list[str]:
    """Antonyms when any exist, otherwise cousins; sorted, restricted to ``known``."""
    for pool in (lex.antonyms(lemma, kind), lex.cousins(lemma, kind)):
        pool = {p for p in pool if p != lemma and (known is None or p in known)}
        if pool:
            return sorted(pool)
    return []


def _known(lexicon: Lexicon, kind: AtomKind) -> frozenset[str]:
    if kind is AtomKind.OBJECT:
        return lexicon.nouns
    if kind is AtomKind.ATTRIBUTE:
        return lexicon.adjectives
    return lexicon.prepositions | lexicon.verbs


@dataclass(frozen=True)
class _AtomEdit:
    position: int
    kind: AtomKind
    original: str
    foil: str
    graph: SceneGraph
    edits: tuple[tuple[int, int, str], ...]

    @property
    def describe(self) -> str:
        return f"{self.kind.value.lower()} {self.original} -> {self.foil}"


def _atom_edits(al: AlignedCaption, lex: LexicalResource, lexicon: Lexicon,
                positions: Optional[set] = None) -> list[_AtomEdit]:
    """Every guarded single-atom substitution, in (position, lemma) order."""
    g, parsed, parent = al.graph, al.parsed, al.parent
    p_edges = {(e.subject_id, e.relationship.lemma, e.object_id) for e in parent.relationships}
    out: list[_AtomEdit] = []
    for o in g.objects:
        spans = parsed.object_spans(o.id)
        for f in _foils(o.lemma, AtomKind.OBJECT, lex, _known(lexicon, AtomKind.OBJECT)):
            if f == al.parent_node(o.id).lemma:
                continue
            out.append(_AtomEdit(spans[0][0], AtomKind.OBJECT, o.lemma, f, relabel_objects(g, {o.id: f}),
                                 tuple((s, e, f) for s, e in spans)))
        for a in o.attributes:
            span = parsed.attribute_spans[(o.id, a.lemma)]
            have = al.parent_node(o.id).attribute_lemmas() | o.attribute_lemmas()
            for f in _foils(a.lemma, AtomKind.ATTRIBUTE, lex, _known(lexicon, AtomKind.ATTRIBUTE)):
                if f in have:
                    continue
                attrs = [f if x.lemma == a.lemma else x.lemma for x in o.attributes]
                out.append(_AtomEdit(span[0], AtomKind.ATTRIBUTE, a.lemma, f, set_attributes(g, {o.id: attrs}),
                                     ((span[0], span[1], f),)))
    for k, e in enumerate(g.relationships):
        span = parsed.edge_spans[k]
        ps, po = al.to_parent[e.subject_id], al.to_parent[e.object_id]
        for f in _foils(e.relationship.lemma, AtomKind.RELATIONSHIP, lex, _known(lexicon, AtomKind.RELATIONSHIP)):
            if (ps, f, po) in p_edges:
                continue
            out.append(_AtomEdit(span[0], AtomKind.RELATIONSHIP, e.relationship.lemma, f,
                                 relabel_edges(g, {k: f}), ((span[0], span[1], f),)))
    out.sort(key=lambda x: (x.position, x.foil))
    return out


def _text_matches(text: str, graph: SceneGraph, lexicon: Lexicon) -> bool:
    try:
        return canonically_equal(parse_caption(text, lexicon), graph)
    except EmptyParse:
        return False


def _unique(cands: list[HardNegative]) -> list[HardNegative]:
    seen: set[str] = set()
    out = []
    for c in cands:
        if c.text not in seen:
            seen.add(c.text)
            out.append(c)
    return out


def _sample(cands: list[HardNegative], count: int, seed: int, gt: str) -> list[HardNegative]:
    seen = {normalize_text(gt)}
    unique = []
    for c in cands:
        key = normalize_text(c.text)
        if key not in seen:
            seen.add(key)
            unique.append(c)
    if len(unique) <= count:
        return unique
    picks = sorted(random.Random(seed).sample(range(len(unique)), count))
    return [unique[i] for i in picks]


def hn_atom_candidates(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
                       lex: LexicalResource, lexicon: Lexicon, verify_text: bool = True) -> list[HardNegative]:
    al = align_caption(caption, subgraph, parent_graph, lexicon)
    out = []
    for ed in _atom_edits(al, lex, lexicon):
        if embeds(ed.graph, parent_graph):
            continue
        text = _clean(apply_edits(caption, ed.edits), caption)
        if verify_text and not _text_matches(text, ed.graph, lexicon):
            continue
        out.append(HardNegative(text, HNType.ATOM, ed.describe, True, Claim((ed.graph,))))
    return _unique(out)


def hn_atom(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph, lex: LexicalResource,
            lexicon: Lexicon, count: int = 4, seed: int = 0, verify_text: bool = True) -> list[HardNegative]:
    """Replace one atom with an antonym or cousin that the image graph does not support."""
    cands = hn_atom_candidates(caption, subgraph, parent_graph, lex, lexicon, verify_text)
    picked = _sample(cands, count, seed, caption)
    if not picked:
        raise NoFoilAvailable(f"no atom foil for {caption!r}")
    return picked


_ARTICLE = re.compile(r"^(a|an|the|some|one|two|three)\b", re.I)
_THERE = re.compile(r"^\s*there\s+(is|are)\s+", re.I)
_COPULA_BEFORE = re.compile(r"\b(is|are)\s+$", re.I)


def hn_comp_candidates(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
                       lex: LexicalResource, lexicon: Lexicon, verify_text: bool = True) -> list[HardNegative]:
    if len(compounds_of(subgraph)) != 1:
        raise PreconditionError(f"compound foils need a one-compound caption, got {caption!r}")
    al = align_caption(caption, subgraph, parent_graph, lexicon)
    edits = []
    for ed in _atom_edits(al, lex, lexicon):
        if embeds(ed.graph, parent_graph):
            continue
        text = _clean(apply_edits(caption, ed.edits), caption)
        if verify_text and not _text_matches(text, ed.graph, lexicon):
            continue
        edits.append((ed, text))
    out = []
    for (e1, t1), (e2, t2) in itertools.combinations(edits, 2):
        if e1.position == e2.position:
            continue
        second = _clean(t2, "x").rstrip(".")
        if not (_ARTICLE.match(second) or _THERE.match(second)):
            second = f"a {second}"
        text = f"{t1.rstrip('.')} and {second}"
        out.append(HardNegative(text, HNType.COMP, f"{e1.describe}; {e2.describe}", True,
                                Claim((e1.graph, e2.graph))))
    return _unique(out)


def hn_comp(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph, lex: LexicalResource,
            lexicon: Lexicon, count: int = 6, seed: int = 0, verify_text: bool = True) -> list[HardNegative]:
    """Join two compound foils, each with a different atom replaced."""
    cands = hn_comp_candidates(caption, subgraph, parent_graph, lex, lexicon, verify_text)
    picked = _sample(cands, count, seed, caption)
    if not picked:
        raise NoFoilAvailable(f"fewer than two compound foils for {caption!r}")
    return picked


# -- swaps ----------------------------------------------------------------------

def _words(text: str) -> Counter:
    return Counter(re.findall(r"[a-z0-9]+", text.lower()))


def _surface(text: str, span: tuple[int, int]) -> str:
    return text[span[0]:span[1]]


def _permutation_edit(al: AlignedCaption, obj_perm: dict[int, int], attr_perm: dict, edge_perm: dict[int, int]):
    """Graph and text edits after moving labels: target slot <- source slot."""
    g, parsed, text = al.graph, al.parsed, al.text
    names = {t: g.node(s).lemma for t, s in obj_perm.items()}
    edits = []
    for t, s in obj_perm.items():
        src = _surface(text, parsed.object_spans(s)[0])
        edits.extend((a, b, src) for a, b in parsed.object_spans(t))
    new_attrs: dict[int, list[str]] = {}
    for (to, ta), (so, sa) in attr_perm.items():
        new_attrs.setdefault(to, [x.lemma for x in g.node(to).attributes])
        idx = new_attrs[to].index(ta)
        new_attrs[to][idx] = sa
        span = parsed.attribute_spans[(to, ta)]
        edits.append((span[0], span[1], _surface(text, parsed.attribute_spans[(so, sa)])))
    labels = {}
    for t, s in edge_perm.items():
        labels[t] = g.relationships[s].relationship.lemma
        edits.append((*parsed.edge_spans[t], _surface(text, parsed.edge_spans[s])))
    graph = relabel_edges(set_attributes(relabel_objects(g, names), new_attrs), labels)
    return graph, edits


def _remove_attribute_text(text: str, span: tuple[int, int]) -> tuple[int, int]:
    """Span covering an attribute and its joining "and" / trailing space."""
    start, end = span
    after = re.match(r"\s+and\s+", text[end:])
    if after:
        return start, end + after.end()
    before = re.search(r"\s+and\s+$", text[:start])
    if before:
        return before.start(), end
    trail = re.match(r"\s+", text[end:])
    return start, end + (trail.end() if trail else 0)


def _insert_attribute_edit(al: AlignedCaption, oid: int, lemma: str) -> tuple[int, int, str]:
    m = al.parsed.first_mention(oid)
    has = bool(al.graph.node(oid).attributes)
    at = m.phrase_start
    if m.det_span is not None and m.det_span[0] == at:
        at = m.noun_span[0] if not has else min(
            s for (o, _), (s, _) in al.parsed.attribute_spans.items() if o == oid)
    return (at, at, f"{lemma} and " if has else f"{lemma} ")


def hn_swap_candidates(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
                       lexicon: Lexicon, verify_text: bool = True) -> list[HardNegative]:
    al = align_caption(caption, subgraph, parent_graph, lexicon)
    g, parsed = al.graph, al.parsed
    if not any(sum(1 for _ in group) >= 2 for group in (g.objects, [a for o in g.objects for a in o.attributes],
                                                          g.relationships)):
        raise PreconditionError(f"no two atoms of one kind to swap in {caption!r}")
    connected = {frozenset((e.subject_id, e.object_id)) for e in g.relationships}
    raw: list[tuple[str, SceneGraph, list]] = []

    def add(label, graph, edits):
        raw.append((label, graph, edits))

    for k, e in enumerate(g.relationships):  # (a) subject <-> object
        s, o = e.subject_id, e.object_id
        if s != o and g.node(s).lemma != g.node(o).lemma:
            add(f"swap subject/object {g.node(s).lemma}<->{g.node(o).lemma}",
                *_permutation_edit(al, {s: o, o: s}, {}, {}))
    attr_slots = [(o.id, a.lemma) for o in g.objects for a in o.attributes]
    for (o1, a1), (o2, a2) in itertools.combinations(attr_slots, 2):  # (b) attributes across objects
        if o1 == o2 or a1 == a2:
            continue
        if a1 in al.parent_node(o2).attribute_lemmas() or a2 in al.parent_node(o1).attribute_lemmas():
            continue
        if a1 in g.node(o2).attribute_lemmas() or a2 in g.node(o1).attribute_lemmas():
            continue
        add(f"swap attributes {a1}<->{a2}", *_permutation_edit(al, {}, {(o1, a1): (o2, a2), (o2, a2): (o1, a1)}, {}))
    for x, y in itertools.combinations(g.objects, 2):  # (c) unconnected objects
        if frozenset((x.id, y.id)) in connected or x.lemma == y.lemma:
            continue
        graph, edits = _permutation_edit(al, {x.id: y.id, y.id: x.id}, {}, {})
        if signature(graph) != signature(g):
            add(f"swap objects {x.lemma}<->{y.lemma}", graph, edits)
    for (o1, a1) in attr_slots:  # (d) attribute transfer
        for o2 in g.objects:
            if o2.id == o1 or a1 in o2.attribute_lemmas() or a1 in al.parent_node(o2.id).attribute_lemmas():
                continue
            remaining = {o1: [x.lemma for x in g.node(o1).attributes if x.lemma != a1],
                         o2.id: [x.lemma for x in o2.attributes] + [a1]}
            graph = set_attributes(g, remaining)
            cut = _remove_attribute_text(al.text, parsed.attribute_spans[(o1, a1)])
            edits = [(cut[0], cut[1], ""), _insert_attribute_edit(al, o2.id, a1)]
            add(f"move attribute {a1}: {g.node(o1).lemma}->{o2.lemma}", graph, edits)
    if atom_count(g) == 4:  # (e) any same-kind permutation at low complexity
        ids = [o.id for o in g.objects]
        for perm in itertools.permutations(ids):
            mapping = {t: s for t, s in zip(ids, perm) if t != s}
            if mapping:
                names = "/".join(g.node(s).lemma for s in perm)
                add(f"permute objects -> {names}", *_permutation_edit(al, mapping, {}, {}))
        for perm in itertools.permutations(attr_slots):
            mapping = {t: s for t, s in zip(attr_slots, perm) if t != s}
            if mapping:
                add("permute attributes", *_permutation_edit(al, {}, mapping, {}))
        ks = list(range(len(g.relationships)))
        for perm in itertools.permutations(ks):
            mapping = {t: s for t, s in zip(ks, perm) if t != s}
            if mapping:
                add("permute relationships", *_permutation_edit(al, {}, {}, mapping))

    gt_words = _words(caption)
    out = []
    for label, graph, edits in raw:
        if embeds(graph, parent_graph):
            continue
        text = _clean(apply_edits(caption, edits), caption)
        if _words(text) != gt_words:  # a swap only rearranges the caption's own words
            continue
        if verify_text and not _text_matches(text, graph, lexicon):
            continue
        out.append(HardNegative(text, HNType.SWAP, label, True, Claim((graph,))))
    return _unique(out)


def hn_swap(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph, lexicon: Lexicon,
            count: int = 5, seed: int = 0, verify_text: bool = True) -> list[HardNegative]:
    """Permute atoms of one kind so that the result no longer describes the image."""
    cands = hn_swap_candidates(caption, subgraph, parent_graph, lexicon, verify_text)
    picked = _sample(cands, count, seed, caption)
    if not picked:
        raise NoFoilAvailable(f"no admissible swap for {caption!r}")
    return picked


# -- negations -------------------------------------------------------------------

def _parent_edges(parent: SceneGraph) -> dict[tuple[int, int], set[str]]:
    out: dict[tuple[int, int], set[str]] = {}
    for e in parent.relationships:
        out.setdefault((e.subject_id, e.object_id), set()).add(e.relationship.lemma)
    return out


def _looks_like(parent: SceneGraph, x: ObjectNode, node: ObjectNode, attrs: frozenset[str]) -> bool:
    return x.lemma == node.lemma and attrs <= x.attribute_lemmas()


def attribute_negation_ok(g: SceneGraph, oid: int, attribute: str, parent: SceneGraph) -> bool:
    """No object of the same name lacks the attribute while sharing the rest:
    the other attributes and every relationship (to a similarly named and
    attributed neighbour) of the caption's object."""
    node = g.node(oid)
    others = node.attribute_lemmas() - {attribute}
    pe = _parent_edges(parent)
    pn = parent.nodes
    for x in parent.objects:
        if not _looks_like(parent, x, node, others) or attribute in x.attribute_lemmas():
            continue
        if all(_has_matching_edge(g, e, oid, x.id, pe, pn) for e in g.edges_of(oid)):
            return False
    return True


def _has_matching_edge(g: SceneGraph, e: RelEdge, oid: int, xid: int, pe, pn) -> bool:
    outgoing = e.subject_id == oid
    other = g.node(e.object_id if outgoing else e.subject_id)
    need = other.attribute_lemmas()
    for (s, t), labels in pe.items():
        if e.relationship.lemma not in labels:
            continue
        if outgoing and s == xid and _looks_like(None, pn[t], other, need):
            return True
        if not outgoing and t == xid and _looks_like(None, pn[s], other, need):
            return True
    return False


def relationship_negation_ok(g: SceneGraph, k: int, parent: SceneGraph) -> bool:
    """No similar subject/object pair in the image stands in another (or no)
    relationship instead."""
    e = g.relationships[k]
    s, o = g.node(e.subject_id), g.node(e.object_id)
    pe = _parent_edges(parent)
    for x in parent.objects:
        if not _looks_like(parent, x, s, s.attribute_lemmas()):
            continue
        for y in parent.objects:
            if y.id == x.id and e.subject_id != e.object_id:
                continue
            if not _looks_like(parent, y, o, o.attribute_lemmas()):
                continue
            if e.relationship.lemma not in pe.get((x.id, y.id), set()):
                return False
    return True


def object_negation_ok(g: SceneGraph, oid: int, al: AlignedCaption) -> bool:
    """No other object in the image has the same name, attributes and relationships."""
    node = g.node(oid)
    parent = al.parent
    own = al.to_parent[oid]
    pe = _parent_edges(parent)
    pn = parent.nodes
    for x in parent.objects:
        if x.id == own or not _looks_like(parent, x, node, node.attribute_lemmas()):
            continue
        if all(_has_matching_edge(g, e, oid, x.id, pe, pn) for e in g.edges_of(oid)):
            return False
    return True




def _negate_caption_text(caption: str) -> str:
    body = _THERE.sub("", caption).strip().rstrip(".")
    body = body[:1].lower() + body[1:]
    return f"this image does not contain {body}"


def hn_neg_candidates(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
                      lexicon: Lexicon) -> list[HardNegative]:
    al = align_caption(caption, subgraph, parent_graph, lexicon)
    g, parsed = al.graph, al.parsed
    out: list[HardNegative] = []
    if embeds(g, parent_graph):
        out.append(HardNegative(_negate_caption_text(caption), HNType.NEG, "negate caption", True,
                                Claim((g,), ("caption",))))
    for o in g.objects:
        for a in o.attributes:
            if not attribute_negation_ok(g, o.id, a.lemma, parent_graph):
                continue
            cut = _remove_attribute_text(caption, parsed.attribute_spans[(o.id, a.lemma)])
            noun_end = parsed.first_mention(o.id).noun_span[1]
            text = _clean(apply_edits(caption, [(cut[0], cut[1], ""), (noun_end, noun_end, f" that is not {a.lemma}")]),
                          caption)
            rest = set_attributes(g, {o.id: [x.lemma for x in o.attributes if x.lemma != a.lemma]})
            out.append(HardNegative(text, HNType.NEG, f"negate attribute {a.lemma} of {o.lemma}", True,
                                    Claim((rest,), ("attribute", o.id, a.lemma))))
    for k, e in enumerate(g.relationships):
        if not relationship_negation_ok(g, k, parent_graph):
            continue
        start, end = parsed.edge_spans[k]
        lead = "not" if _COPULA_BEFORE.search(caption[:start]) or _THERE.match(caption) else "is not"
        text = _clean(apply_edits(caption, [(start, end, f"{lead} {caption[start:end]}")]), caption)
        out.append(HardNegative(text, HNType.NEG,
                                f"negate relationship {g.node(e.subject_id).lemma} {e.relationship.lemma} "
                                f"{g.node(e.object_id).lemma}", True,
                                Claim((drop_edge(g, k),), ("relationship", e.subject_id, e.relationship.lemma,
                                                            e.object_id))))
    for o in g.objects:
        if len(parsed.object_spans(o.id)) != 1 or not object_negation_ok(g, o.id, al):
            continue
        m = parsed.first_mention(o.id)
        start = m.det_span[0] if m.det_span else m.phrase_start
        phrase = caption[m.phrase_start if not m.det_span else m.det_span[1]:m.noun_span[1]].strip()
        text = _clean(apply_edits(caption, [(start, m.noun_span[1], f"no {phrase.lower()}")]), caption)
        out.append(HardNegative(text, HNType.NEG, f"negate object {o.lemma}", True,
                                Claim((g,), ("object", o.id))))
    return _unique(out)


def hn_neg(caption: str, subgraph: SceneGraph, parent_graph: SceneGraph, lexicon: Lexicon,
           count: int = 5, seed: int = 0) -> list[HardNegative]:
    """Negate the caption or one of its atoms where the image graph confirms the negation is false."""
    if not subgraph.objects:
        raise PreconditionError("cannot negate an empty subgraph")
    cands = hn_neg_candidates(caption, subgraph, parent_graph, lexicon)
    picked = _sample(cands, count, seed, caption)
    if not picked:
        raise NoFoilAvailable(f"no verifiable negation for {caption!r}")
    return picked


def generate(hn_type: HNType, caption: str, subgraph: SceneGraph, parent_graph: SceneGraph,
             lex: Optional[LexicalResource], lexicon: Lexicon, count: int, seed: int) -> list[HardNegative]:
    if hn_type is HNType.ATOM:
        return hn_atom(caption, subgraph, parent_graph, lex, lexicon, count, seed)
    if hn_type is HNType.COMP:
        return hn_comp(caption, subgraph, parent_graph, lex, lexicon, count, seed)
    if hn_type is HNType.SWAP:
        return hn_swap(caption, subgraph, parent_graph, lexicon, count, seed)
    return hn_neg(caption, subgraph, parent_graph, lexicon, count, seed)
