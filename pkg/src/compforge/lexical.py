"""Lexical resource for foil selection: antonyms, hypernym chains and cousins.

Reads the Princeton WordNet database files (``index.<pos>`` / ``data.<pos>``)
and an optional ``overrides.tsv`` with rows ``relation<TAB>kind<TAB>lemma<TAB>target``
where ``relation`` is ``antonym``, ``hypernym`` or ``exclude``.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .errors import ConfigError
from .model import AtomKind, normalize_text

log = logging.getLogger(__name__)

_POS_FILES = {"n": "noun", "v": "verb", "a": "adj", "s": "adj"}
_KIND_POS = {
    AtomKind.OBJECT: ("n",),
    # adjectives carry no hypernyms; their noun senses (e.g. colour nouns) do
    AtomKind.ATTRIBUTE: ("a", "n"),
    AtomKind.RELATIONSHIP: ("v",),
}
GRAND_DEPTH = 2


class LexicalResource(Protocol):
    def antonyms(self, lemma: str, kind: AtomKind) -> set[str]: ...

    def hypernym_chains(self, lemma: str, kind: AtomKind) -> list[list[str]]: ...

    def cousins(self, lemma: str, kind: AtomKind) -> set[str]: ...


@dataclass
class _Synset:
    offset: str
    pos: str
    lemmas: list[str]
    hypernyms: list[tuple[str, str]] = field(default_factory=list)  # (pos, offset)
    antonyms: list[tuple[int, str, str, int]] = field(default_factory=list)  # (src, pos, off, tgt)


def _lemma_text(word: str) -> str:
    # adjective markers such as "(a)" / "(p)" trail the word in data.adj
    if word.endswith(")") and "(" in word:
        word = word[:word.index("(")]
    return normalize_text(word.replace("_", " "))


def read_data_file(path: Path, pos: str) -> dict[str, _Synset]:
    synsets: dict[str, _Synset] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith(" "):
                continue
            body = line.split(" | ", 1)[0].split()
            offset, ss_type = body[0], body[2]
            w_cnt = int(body[3], 16)
            words = [_lemma_text(body[4 + 2 * i]) for i in range(w_cnt)]
            i = 4 + 2 * w_cnt
            p_cnt = int(body[i])
            syn = _Synset(offset, "a" if ss_type == "s" else ss_type, words)
            for j in range(p_cnt):
                sym, target, tpos, srctgt = body[i + 1 + 4 * j: i + 5 + 4 * j]
                tpos = "a" if tpos == "s" else tpos
                if sym in ("@", "@i"):
                    syn.hypernyms.append((tpos, target))
                elif sym == "!":
                    syn.antonyms.append((int(srctgt[:2], 16), tpos, target, int(srctgt[2:], 16)))
            synsets[offset] = syn
    return synsets


def read_index_file(path: Path) -> dict[str, list[str]]:
    index: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith(" "):
                continue
            parts = line.split()
            lemma = _lemma_text(parts[0])
            synset_cnt, p_cnt = int(parts[2]), int(parts[3])
            offsets = parts[4 + p_cnt + 2:]
            index[lemma] = offsets[:synset_cnt]
    return index


class WordNetResource:
    """WordNet-backed :class:`LexicalResource` with TSV overrides.

    Cousins share the ancestor exactly two levels above the first sense of a
    lemma. Synonyms, ancestors and descendants of the lemma are never cousins.
    """

    def __init__(self) -> None:
        self._synsets: dict[tuple[str, str], _Synset] = {}
        self._index: dict[str, dict[str, list[str]]] = {"n": {}, "v": {}, "a": {}}
        self._extra_antonyms: dict[tuple[AtomKind, str], set[str]] = defaultdict(set)
        self._extra_parents: dict[tuple[AtomKind, str], list[str]] = defaultdict(list)
        self._excluded: dict[tuple[AtomKind, str], set[str]] = defaultdict(set)
        self._cousin_cache: dict[AtomKind, dict[str, set[str]]] = {}
        self.source = ""

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "WordNetResource":
        res = cls()
        if directory is None:
            base = Path(str(resources.files("compforge").joinpath("data", "wordnet")))
        else:
            base = Path(directory)
        if not base.is_dir():
            raise ConfigError(f"wordnet directory not found: {base}")
        res.source = str(base)
        for pos, name in (("n", "noun"), ("v", "verb"), ("a", "adj")):
            data, index = base / f"data.{name}", base / f"index.{name}"
            if data.is_file():
                for off, syn in read_data_file(data, pos).items():
                    res._synsets[(pos, off)] = syn
            if index.is_file():
                res._index[pos] = read_index_file(index)
        overrides = base / "overrides.tsv"
        if overrides.is_file():
            res.add_overrides(overrides)
        log.debug("loaded %d synsets from %s", len(res._synsets), base)
        return res

    def add_overrides(self, path: str | Path) -> None:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise ConfigError(f"{path}:{n}: expected 4 tab-separated fields")
                relation, kind, lemma, target = parts
                kind = AtomKind(kind)
                lemma, target = normalize_text(lemma), normalize_text(target)
                if relation == "antonym":
                    self._extra_antonyms[(kind, lemma)].add(target)
                    self._extra_antonyms[(kind, target)].add(lemma)
                elif relation == "hypernym":
                    self._extra_parents[(kind, lemma)].append(target)
                elif relation == "exclude":
                    self._excluded[(kind, lemma)].add(target)
                    self._excluded[(kind, target)].add(lemma)
                else:
                    raise ConfigError(f"{path}:{n}: unknown relation {relation!r}")
        self._cousin_cache.clear()

    def _senses(self, lemma: str, pos: str) -> list[_Synset]:
        offsets = self._index[pos].get(lemma)
        if offsets is None:
            return [s for (p, _), s in self._synsets.items() if p == pos and lemma in s.lemmas]
        return [self._synsets[(pos, o)] for o in offsets if (pos, o) in self._synsets]

    def antonyms(self, lemma: str, kind: AtomKind) -> set[str]:
        kind = AtomKind(kind)
        lemma = normalize_text(lemma)
        out = set(self._extra_antonyms.get((kind, lemma), ()))
        for pos in _KIND_POS[kind][:1]:
            for syn in self._senses(lemma, pos):
                for src, tpos, off, tgt in syn.antonyms:
                    if src and syn.lemmas[src - 1] != lemma:
                        continue
                    target = self._synsets.get((tpos, off))
                    if target is None:
                        continue
                    out.update([target.lemmas[tgt - 1]] if tgt else target.lemmas)
        out.discard(lemma)
        return out

    def synonyms(self, lemma: str, kind: AtomKind) -> set[str]:
        out = set()
        for pos in _KIND_POS[AtomKind(kind)]:
            for syn in self._senses(normalize_text(lemma), pos):
                out.update(syn.lemmas)
        return out

    def _chains_from(self, syn: _Synset, seen: frozenset) -> list[list[str]]:
        if not syn.hypernyms or syn.offset in seen:
            return [[syn.lemmas[0]]]
        chains = []
        for pos, off in syn.hypernyms:
            parent = self._synsets.get((pos, off))
            if parent is None:
                continue
            for tail in self._chains_from(parent, seen | {syn.offset}):
                chains.append([syn.lemmas[0]] + tail)
        return chains or [[syn.lemmas[0]]]

    def _override_chains(self, lemma: str, kind: AtomKind, seen: frozenset = frozenset()) -> list[list[str]]:
        parents = self._extra_parents.get((kind, lemma))
        if not parents or lemma in seen:
            return []
        chains = []
        for p in parents:
            tails = self._override_chains(p, kind, seen | {lemma}) or [[p]]
            chains.extend([lemma] + t for t in tails)
        return chains

    def hypernym_chains(self, lemma: str, kind: AtomKind) -> list[list[str]]:
        """Hypernym paths from the lemma to a root, one lemma per synset."""
        kind = AtomKind(kind)
        lemma = normalize_text(lemma)
        chains = self._override_chains(lemma, kind)
        if chains:
            return chains
        for pos in _KIND_POS[kind]:
            for syn in self._senses(lemma, pos):
                if not syn.hypernyms:
                    continue
                for c in self._chains_from(syn, frozenset()):
                    chains.append([lemma] + c[1:])
            if chains:
                break
        return chains

    def grand_hypernyms(self, lemma: str, kind: AtomKind) -> set[str]:
        chains = self.hypernym_chains(lemma, kind)
        return {c[GRAND_DEPTH] for c in chains[:1] if len(c) > GRAND_DEPTH}

    def _vocabulary(self, kind: AtomKind) -> set[str]:
        words = {lemma for (k, lemma) in self._extra_parents if k is kind}
        for pos in _KIND_POS[kind]:
            words.update(self._index[pos])
        return words

    def _cousin_groups(self, kind: AtomKind) -> dict[str, set[str]]:
        groups = self._cousin_cache.get(kind)
        if groups is None:
            groups = defaultdict(set)
            for word in self._vocabulary(kind):
                for g in self.grand_hypernyms(word, kind):
                    groups[g].add(word)
            self._cousin_cache[kind] = groups
        return groups

    def cousins(self, lemma: str, kind: AtomKind) -> set[str]:
        kind = AtomKind(kind)
        lemma = normalize_text(lemma)
        grands = self.grand_hypernyms(lemma, kind)
        if not grands:
            return set()
        groups = self._cousin_groups(kind)
        out: set[str] = set()
        for g in grands:
            out |= groups.get(g, set())
        related = {lemma} | self.synonyms(lemma, kind) | self._excluded.get((kind, lemma), set())
        for chain in self.hypernym_chains(lemma, kind):
            related.update(chain)
        for c in list(out):
            if any(lemma in chain for chain in self.hypernym_chains(c, kind)):
                related.add(c)
        return out - related
