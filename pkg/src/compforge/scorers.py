"""Reference scorers used to exercise the retrieval metrics without a model.

The image side of every pair is represented by its ground-truth caption.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable, Mapping, Protocol

from .retrieval import RetrievalItem, RetrievalSet, ScoreTable
from .sampler import derive_seed


class Scorer(Protocol):
    name: str

    def score(self, image_id: str, text_id: str, ctx: RetrievalSet) -> float: ...


class OracleScorer:
    name = "oracle"

    def score(self, image_id: str, text_id: str, ctx: RetrievalSet) -> float:
        return 1.0 if ctx.image_gt.get(image_id) == text_id else 0.0


class RandomScorer:
    """Uniform scores in [0, 1), a pure function of (seed, pair)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.name = f"random({seed})"

    def score(self, image_id: str, text_id: str, ctx: RetrievalSet) -> float:
        return derive_seed(self.seed, image_id, text_id) / 2.0 ** 64


def _bag(text: str) -> Counter:
    return Counter(re.findall(r"[a-z0-9]+", text.lower()))


def bow_cosine(a: str, b: str) -> float:
    ca, cb = _bag(a), _bag(b)
    dot = sum(ca[t] * cb[t] for t in ca)
    norm = math.sqrt(sum(v * v for v in ca.values())) * math.sqrt(sum(v * v for v in cb.values()))
    return dot / norm if norm else 0.0


class BagOfWordsScorer:
    """Token-multiset cosine against the image's ground-truth caption; word order is ignored."""

    name = "bag-of-words"

    def score(self, image_id: str, text_id: str, ctx: RetrievalSet) -> float:
        return bow_cosine(ctx.texts[ctx.image_gt[image_id]], ctx.texts[text_id])


def reference_scorers(seed: int = 0) -> dict[str, Scorer]:
    return {s.name: s for s in (OracleScorer(), RandomScorer(seed), BagOfWordsScorer())}


def score_items(items: Iterable[RetrievalItem], scorer: Scorer, ctx: RetrievalSet) -> ScoreTable:
    table: dict[tuple[str, str], float] = {}
    for it in items:
        for c in it.candidate_ids:
            pair = it.pair(c)
            if pair not in table:
                table[pair] = scorer.score(pair[0], pair[1], ctx)
    return ScoreTable(table, scorer.name)


def raw_context(texts: Mapping[str, str]) -> RetrievalSet:
    """Context for RAW folds, where image and caption share a record id."""
    return RetrievalSet([], dict(texts), {rid: rid for rid in texts})
