"""Rule-based caption parser producing scene graphs, plus a precision/recall harness."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import AlignmentError, EmptyParse
from .model import (
    Atom,
    AtomKind,
    ObjectNode,
    RelEdge,
    SceneGraph,
    attr,
    normalize_text,
    obj,
    rel,
    singularize,
)

ADJ, NOUN, PREP, VERB = "adj", "noun", "prep", "verb"
_CATEGORY_FILES = {NOUN: "nouns.txt", ADJ: "adjectives.txt", PREP: "prepositions.txt", VERB: "verbs.txt"}

DETERMINERS = frozenset({
    "a", "an", "the", "some", "this", "these", "those", "his", "her", "its", "their",
    "my", "your", "our", "one", "two", "three", "four", "five", "several", "many", "each",
    "another", "any",
})
COPULAS = frozenset({"is", "are", "was", "were", "be", "been", "being", "am"})
STOPWORDS = frozenset({
    "there", "also", "which", "who", "that", "very", "just", "here", "it", "they", "he",
    "she", "while", "where", "what", "can", "could", "will", "would", "does", "do", "did",
    "not", "no", "image", "picture", "photo", "shows", "contain", "contains",
})
ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
            "ninth", "tenth", "eleventh", "twelfth")
_ORDINAL_INDEX = {w: i for i, w in enumerate(ORDINALS)}
_BOUNDARY = frozenset({",", ";", ".", ":", "!", "?"})
_MAX_PHRASE = 4

_TOKEN = re.compile(r"[a-z0-9]+(?:['-][a-z0-9]+)*|[,;.:!?]")
_ADJ_SUFFIXES = ("ous", "ful", "ish", "less", "able", "ible", "ive", "ic", "ed")
_NOUN_SUFFIXES = ("tion", "ment", "ness", "ity", "ship", "hood")


@dataclass(frozen=True)
class Lexicon:
    nouns: frozenset[str]
    adjectives: frozenset[str]
    prepositions: frozenset[str]
    verbs: frozenset[str]
    source: str = ""

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "Lexicon":
        """Read ``nouns.txt``, ``adjectives.txt``, ``prepositions.txt`` and ``verbs.txt``.

        With no directory, the bundled word lists are used.
        """
        sets = {}
        if directory is None:
            base = resources.files("compforge").joinpath("data", "lexicon")
            source = "bundled"
        else:
            base = Path(directory)
            source = str(directory)
        for cat, name in _CATEGORY_FILES.items():
            path = base.joinpath(name)
            text = path.read_text(encoding="utf-8") if path.is_file() else ""
            sets[cat] = frozenset(
                normalize_text(line) for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")
            )
        return cls(sets[NOUN], sets[ADJ], sets[PREP], sets[VERB], source)

    def extended(self, **extra: Iterable[str]) -> "Lexicon":
        return Lexicon(
            self.nouns | frozenset(map(normalize_text, extra.get("nouns", ()))),
            self.adjectives | frozenset(map(normalize_text, extra.get("adjectives", ()))),
            self.prepositions | frozenset(map(normalize_text, extra.get("prepositions", ()))),
            self.verbs | frozenset(map(normalize_text, extra.get("verbs", ()))),
            self.source,
        )

    def categories(self, phrase: str) -> frozenset[str]:
        cats = set()
        if phrase in self.adjectives:
            cats.add(ADJ)
        if phrase in self.nouns or singularize(phrase) in self.nouns:
            cats.add(NOUN)
        if phrase in self.prepositions:
            cats.add(PREP)
        if phrase in self.verbs:
            cats.add(VERB)
        return frozenset(cats)

    @property
    def _phrase_lengths(self) -> frozenset[int]:
        cached = self.__dict__.get("_lengths")
        if cached is None:
            cached = frozenset(
                min(p.count(" ") + 1, _MAX_PHRASE)
                for s in (self.nouns, self.adjectives, self.prepositions, self.verbs) for p in s
            ) | {1}
            object.__setattr__(self, "_lengths", cached)
        return cached


def _fallback_category(word: str) -> frozenset[str]:
    if word.isdigit() or word.endswith("ly"):
        return frozenset()
    if word.endswith("ing") and len(word) > 5:
        return frozenset({VERB})
    if word.endswith(_ADJ_SUFFIXES) and len(word) > 4:
        return frozenset({ADJ})
    if word.endswith(_NOUN_SUFFIXES) and len(word) > 5:
        return frozenset({NOUN})
    return frozenset()


@dataclass
class _Chunk:
    text: str
    start: int
    end: int
    cats: frozenset[str] = frozenset()
    closed: str = ""  # det / cop / conj / stop / ord / boundary

    @property
    def is_rel(self) -> bool:
        return bool(self.cats & {PREP, VERB})

    @property
    def is_nominal(self) -> bool:
        return bool(self.cats & {ADJ, NOUN})


def _chunks(text: str, lexicon: Lexicon) -> list[_Chunk]:
    lowered = text.lower()
    tokens = [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(lowered)]
    out: list[_Chunk] = []
    lengths = sorted(lexicon._phrase_lengths, reverse=True)
    i = 0
    while i < len(tokens):
        word, start, end = tokens[i]
        if word in _BOUNDARY:
            out.append(_Chunk(word, start, end, closed="boundary"))
            i += 1
            continue
        matched = None
        for n in lengths:
            if n == 1 or i + n > len(tokens):
                continue
            words = [t[0] for t in tokens[i:i + n]]
            if any(w in _BOUNDARY for w in words):
                continue
            phrase = " ".join(words)
            cats = lexicon.categories(phrase)
            if cats:
                matched = _Chunk(phrase, start, tokens[i + n - 1][2], cats)
                i += n
                break
        if matched is not None:
            out.append(matched)
            continue
        i += 1
        if word == "and":
            out.append(_Chunk(word, start, end, closed="conj"))
        elif word in DETERMINERS:
            out.append(_Chunk(word, start, end, closed="det"))
        elif word in COPULAS:
            out.append(_Chunk(word, start, end, closed="cop"))
        elif word in _ORDINAL_INDEX:
            out.append(_Chunk(word, start, end, closed="ord"))
        else:
            cats = lexicon.categories(word)
            if not cats and word not in STOPWORDS:
                cats = _fallback_category(word)
            out.append(_Chunk(word, start, end, cats, closed="" if cats else "stop"))
    return out


@dataclass(frozen=True)
class Mention:
    """One textual mention of an object: optional determiner, attributes, head noun."""

    object_id: int
    noun_span: tuple[int, int]
    phrase_start: int
    det_span: Optional[tuple[int, int]]
    coreferent: bool
    ordinal: bool = False


@dataclass
class ParsedCaption:
    text: str
    graph: SceneGraph
    mentions: list[Mention] = field(default_factory=list)
    attribute_spans: dict[tuple[int, str], tuple[int, int]] = field(default_factory=dict)
    edge_spans: list[tuple[int, int]] = field(default_factory=list)

    def object_spans(self, object_id: int) -> list[tuple[int, int]]:
        return [m.noun_span for m in self.mentions if m.object_id == object_id]

    def first_mention(self, object_id: int) -> Mention:
        return next(m for m in self.mentions if m.object_id == object_id)


class _Builder:
    def __init__(self, text: str):
        self.text = text
        self.objects: list[dict] = []
        self.edges: list[tuple[int, Atom, int, tuple[int, int]]] = []
        self.mentions: list[Mention] = []
        self.attribute_spans: dict[tuple[int, str], tuple[int, int]] = {}

    def resolve(self, lemma: str, definite: bool, ordinal: Optional[int]) -> Optional[int]:
        if not definite:
            return None
        instances = [o["id"] for o in self.objects if o["atom"].lemma == lemma]
        if not instances:
            return None
        if ordinal is None:
            return instances[-1]
        return instances[ordinal] if ordinal < len(instances) else None

    def add_attributes(self, oid: int, attrs: list[_Chunk]) -> None:
        node = self.objects[oid]
        for c in attrs:
            atom = attr(self.text[c.start:c.end])
            if atom not in node["attributes"]:
                node["attributes"].append(atom)
                self.attribute_spans[(oid, atom.lemma)] = (c.start, c.end)

    def graph(self) -> SceneGraph:
        objects = tuple(ObjectNode(o["id"], o["atom"], tuple(o["attributes"])) for o in self.objects)
        seen = set()
        edges = []
        spans = []
        for s, r, o, span in self.edges:
            key = (s, r, o)
            if key in seen:
                continue
            seen.add(key)
            edges.append(RelEdge(s, r, o))
            spans.append(span)
        self.edge_span_list = spans
        return SceneGraph(objects, tuple(edges))


def parse_caption_spans(text: str, lexicon: Lexicon) -> ParsedCaption:
    """Parse ``text`` and keep the character span of every atom mention."""
    if not text or not text.strip():
        raise EmptyParse("caption text is empty")
    chunks = _chunks(text, lexicon)
    b = _Builder(text)

    np_det: Optional[_Chunk] = None
    np_ord: Optional[int] = None
    np_attrs: list[_Chunk] = []
    np_nouns: list[_Chunk] = []
    np_start: Optional[int] = None
    prev_np: Optional[int] = None
    clause_subject: Optional[int] = None
    last_clause_subject: Optional[int] = None
    pending_rel: Optional[list[_Chunk]] = None
    saw_cop = False

    def np_open() -> bool:
        return bool(np_det or np_attrs or np_nouns or np_ord is not None)

    def flush() -> None:
        nonlocal np_det, np_ord, np_attrs, np_nouns, np_start, prev_np, clause_subject
        nonlocal pending_rel, saw_cop
        if np_nouns:
            head = np_nouns[-1]
            noun_text = " ".join(text[c.start:c.end] for c in np_nouns)
            atom = obj(noun_text)
            definite = np_det is not None and np_det.text == "the"
            oid = b.resolve(atom.lemma, definite, np_ord)
            coref = oid is not None
            if oid is None:
                oid = len(b.objects)
                b.objects.append({"id": oid, "atom": atom, "attributes": []})
            b.add_attributes(oid, np_attrs)
            b.mentions.append(Mention(
                oid, (np_nouns[0].start, head.end), np_start,
                (np_det.start, np_det.end) if np_det else None, coref, np_ord is not None,
            ))
            subject = prev_np if prev_np is not None else last_clause_subject
            if pending_rel and subject is not None:
                r_text = " ".join(text[c.start:c.end] for c in pending_rel)
                b.edges.append((subject, rel(r_text), oid, (pending_rel[0].start, pending_rel[-1].end)))
            prev_np = oid
            if clause_subject is None:
                clause_subject = oid
            pending_rel = None
            saw_cop = False
        elif np_attrs and prev_np is not None and saw_cop and not pending_rel:
            # predicate adjective: "the dog is black"
            b.add_attributes(prev_np, np_attrs)
        np_det, np_ord, np_attrs, np_nouns, np_start = None, None, [], [], None

    def next_meaningful(i: int) -> Optional[_Chunk]:
        rest = chunks[i + 1:]
        for j, c in enumerate(rest):
            if c.closed == "stop":
                continue
            if c.closed == "conj" and j + 1 < len(rest) and rest[j + 1].closed != "det":
                continue  # "orange and blue car": the conjunction stays inside the phrase
            return c
        return None

    for i, c in enumerate(chunks):
        if c.closed == "boundary":
            flush()
            last_clause_subject = clause_subject if clause_subject is not None else last_clause_subject
            prev_np, clause_subject, pending_rel, saw_cop = None, None, None, False
            continue
        if c.closed == "conj":
            if np_attrs and not np_nouns:
                continue  # conjoined adjectives inside one noun phrase
            flush()
            if clause_subject is not None:
                last_clause_subject = clause_subject
            prev_np, clause_subject, pending_rel, saw_cop = None, None, None, False
            continue
        if c.closed == "det":
            if np_nouns:
                flush()
            if np_start is None:
                np_start = c.start
            np_det = c
            continue
        if c.closed == "ord":
            if np_det is not None and np_det.text == "the" and not np_attrs and not np_nouns:
                np_ord = _ORDINAL_INDEX[c.text]
            continue
        if c.closed == "cop":
            flush()
            saw_cop = True
            continue
        if c.closed == "stop":
            continue

        # open-class chunk: decide between relation and noun-phrase roles
        role = None
        if c.is_rel and (not c.is_nominal or pending_rel is not None):
            role = "rel"
        elif c.is_rel and c.is_nominal:
            if np_nouns or (not np_open() and prev_np is not None):
                role = "rel"
        if role == "rel":
            if np_nouns or np_attrs:
                flush()
            if pending_rel is not None:
                pending_rel.append(c)
            else:
                pending_rel = [c]
            continue

        if ADJ in c.cats and NOUN in c.cats:
            nxt = next_meaningful(i)
            is_adj = nxt is not None and nxt.is_nominal and not (nxt.is_rel and not nxt.cats & {NOUN})
            role = "adj" if is_adj else "noun"
        elif ADJ in c.cats:
            role = "adj"
        elif NOUN in c.cats:
            role = "noun"
        else:
            continue

        if role == "adj":
            if np_nouns:
                flush()
            if np_start is None:
                np_start = c.start
            np_attrs.append(c)
        else:
            if np_start is None:
                np_start = c.start
            np_nouns.append(c)
    flush()

    graph = b.graph()
    if not graph.objects:
        raise EmptyParse(f"no object found in caption {text!r}")
    return ParsedCaption(text, graph, b.mentions, b.attribute_spans, b.edge_span_list)


def parse_caption(text: str, lexicon: Lexicon) -> SceneGraph:
    return parse_caption_spans(text, lexicon).graph


# -- evaluation -------------------------------------------------------------

CATEGORIES = ("object", "attribute", "relationship", "triplet")


@dataclass(frozen=True)
class CategoryScore:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None


@dataclass(frozen=True)
class ParserReport:
    scores: dict[str, CategoryScore]

    def __getitem__(self, category: str) -> CategoryScore:
        return self.scores[category]

    def to_dict(self) -> dict:
        return {
            cat: {"tp": s.tp, "fp": s.fp, "fn": s.fn, "precision": s.precision, "recall": s.recall}
            for cat, s in self.scores.items()
        }


def _bags(graph: SceneGraph) -> dict[str, Counter]:
    nodes = graph.nodes
    return {
        "object": Counter(o.lemma for o in graph.objects),
        "attribute": Counter(a.lemma for o in graph.objects for a in o.attributes),
        "relationship": Counter(e.relationship.lemma for e in graph.relationships),
        "triplet": Counter(
            (nodes[e.subject_id].lemma, e.relationship.lemma, nodes[e.object_id].lemma)
            for e in graph.relationships
        ),
    }


def evaluate_parser(predictions: Sequence[SceneGraph], gold: Sequence[SceneGraph]) -> ParserReport:
    if len(predictions) != len(gold):
        raise AlignmentError(f"{len(predictions)} predictions vs {len(gold)} gold graphs")
    totals = {cat: [0, 0, 0] for cat in CATEGORIES}
    for pred, ref in zip(predictions, gold):
        pb, gb = _bags(pred), _bags(ref)
        for cat in CATEGORIES:
            tp = sum((pb[cat] & gb[cat]).values())
            totals[cat][0] += tp
            totals[cat][1] += sum(pb[cat].values()) - tp
            totals[cat][2] += sum(gb[cat].values()) - tp
    return ParserReport({cat: CategoryScore(*v) for cat, v in totals.items()})


def known_words(lexicon: Lexicon, kind: AtomKind) -> frozenset[str]:
    if kind is AtomKind.OBJECT:
        return lexicon.nouns
    if kind is AtomKind.ATTRIBUTE:
        return lexicon.adjectives
    return lexicon.prepositions | lexicon.verbs
