"""Retrieval sets, score tables and Recall@K with K-fold summaries."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InsufficientData, RecordError, ScoreCoverageError, ValidationError
from .model import normalize_text

KS = (1, 3, 5)
DEFAULT_FOLD_CAP = 20


class Direction(str, enum.Enum):
    IMAGE_TO_TEXT = "ImageToText"
    TEXT_TO_IMAGE = "TextToImage"


@dataclass(frozen=True, order=True)
class Stratum:
    split: Optional[str] = None
    complexity: Optional[int] = None
    hn_type: Optional[str] = None

    @property
    def label(self) -> str:
        parts = [self.split or "all", f"n={self.complexity}" if self.complexity is not None else "n=all",
                 self.hn_type or "RAW"]
        return "/".join(parts)

    def _key(self) -> tuple:
        return (self.split or "", self.complexity if self.complexity is not None else -1, self.hn_type or "")


@dataclass(frozen=True)
class RetrievalItem:
    """One query with its candidates. Score lookups are always keyed
    (image-side id, text-side id) whatever the direction."""

    query_id: str
    gt_id: str
    candidate_ids: tuple[str, ...]
    stratum: Stratum = Stratum()
    direction: Direction = Direction.IMAGE_TO_TEXT

    def __post_init__(self) -> None:
        if self.gt_id not in self.candidate_ids:
            raise ValidationError(f"ground truth {self.gt_id} not among candidates of {self.query_id}")
        if len(set(self.candidate_ids)) != len(self.candidate_ids):
            raise ValidationError(f"duplicate candidates for {self.query_id}")

    def pair(self, candidate_id: str) -> tuple[str, str]:
        if self.direction is Direction.IMAGE_TO_TEXT:
            return self.query_id, candidate_id
        return candidate_id, self.query_id


# -- score tables -------------------------------------------------------------------

class ScoreTable:
    """Scores for (image-side id, text-side id) pairs."""

    def __init__(self, scores: Optional[Mapping[tuple[str, str], float]] = None, source: str = "<memory>",
                 fallback: Optional[Callable[[str, str], Optional[float]]] = None):
        self.scores: dict[tuple[str, str], float] = dict(scores or {})
        self.source = source
        self._fallback = fallback
        for pair, s in self.scores.items():
            if not math.isfinite(s):
                raise ValidationError(f"non-finite score for {pair} in {source}")

    def get(self, query_id: str, candidate_id: str) -> float:
        key = (query_id, candidate_id)
        if key in self.scores:
            return self.scores[key]
        if self._fallback is not None:
            s = self._fallback(query_id, candidate_id)
            if s is not None:
                self.scores[key] = s
                return s
        raise ScoreCoverageError(query_id, candidate_id)

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScoreTable":
        scores = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    scores[(str(row["query_id"]), str(row["candidate_id"]))] = float(row["score"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise RecordError(f"{path}:{lineno}: bad score row ({exc})") from exc
        return cls(scores, str(path))

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (q, c), s in sorted(self.scores.items()):
                fh.write(json.dumps({"query_id": q, "candidate_id": c, "score": s}) + "\n")

    @classmethod
    def from_matrix(cls, path: str | Path) -> "ScoreTable":
        """Dense ``.npz`` with arrays ``scores`` (rows x cols), ``row_ids`` and ``col_ids``."""
        with np.load(path, allow_pickle=False) as data:
            matrix = np.asarray(data["scores"], dtype=np.float64)
            rows = [str(x) for x in data["row_ids"]]
            cols = [str(x) for x in data["col_ids"]]
        if matrix.shape != (len(rows), len(cols)):
            raise RecordError(f"{path}: matrix shape {matrix.shape} does not match id headers")
        scores = {(r, c): float(matrix[i, j]) for i, r in enumerate(rows) for j, c in enumerate(cols)}
        return cls(scores, str(path))

    @staticmethod
    def save_matrix(path: str | Path, row_ids: Sequence[str], col_ids: Sequence[str], matrix) -> None:
        np.savez(path, scores=np.asarray(matrix, dtype=np.float64),
                 row_ids=np.asarray(list(row_ids)), col_ids=np.asarray(list(col_ids)))

    @classmethod
    def from_embeddings(cls, path: str | Path) -> "ScoreTable":
        """Cosine similarity between per-id vectors, computed on demand."""
        vectors = read_embeddings(path)

        def cosine(a: str, b: str) -> Optional[float]:
            if a not in vectors or b not in vectors:
                return None
            u, v = vectors[a], vectors[b]
            denom = float(np.linalg.norm(u) * np.linalg.norm(v))
            return float(u @ v) / denom if denom else 0.0

        return cls({}, str(path), fallback=cosine)


def read_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise RecordError(f"{path}: first line must be dim=<d>")
        dim = int(header[4:])
        out = {}
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            ident, _, rest = line.rstrip("\n").partition("\t")
            vec = np.array(rest.split(), dtype=np.float32)
            if vec.shape != (dim,):
                raise RecordError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
            out[ident] = vec.astype(np.float64)
    return out


def load_scores(path: str | Path) -> ScoreTable:
    p = str(path)
    if p.endswith(".npz"):
        return ScoreTable.from_matrix(path)
    if p.endswith((".emb", ".tsv", ".txt")):
        return ScoreTable.from_embeddings(path)
    return ScoreTable.from_jsonl(path)


# -- set assembly ---------------------------------------------------------------------

def gt_id(query_id: str) -> str:
    return f"{query_id}::gt"


def neg_id(query_id: str, i: int) -> str:
    return f"{query_id}::neg{i}"


@dataclass
class RetrievalSet:
    items: list[RetrievalItem]
    texts: dict[str, str] = field(default_factory=dict)         # text-side id -> caption
    image_gt: dict[str, str] = field(default_factory=dict)      # image-side id -> gt text-side id
    excluded: int = 0
    duplicates: int = 0


def assemble_hn_sets(hn_rows: Iterable[Mapping], strata: Mapping[str, Stratum],
                     mode: str = "per_type") -> RetrievalSet:
    """Image-to-text items over the ground truth plus its hard negatives.

    ``mode`` is ``per_type`` (one item per query and negative type) or
    ``combined`` (one item per query over all its negatives).
    """
    if mode not in ("per_type", "combined"):
        raise ValidationError(f"unknown assembly mode {mode!r}")
    out = RetrievalSet([])
    for row in hn_rows:
        q = str(row["query_id"])
        gt_text = row["gt"]
        base = strata.get(q, Stratum())
        out.texts[gt_id(q)] = gt_text
        out.image_gt[q] = gt_id(q)
        seen = {normalize_text(gt_text)}
        by_type: dict[str, list[str]] = {}
        for i, neg in enumerate(row.get("negatives", ())):
            key = normalize_text(neg["text"])
            if key in seen:
                out.duplicates += 1
                continue
            seen.add(key)
            out.texts[neg_id(q, i)] = neg["text"]
            by_type.setdefault(neg["hn_type"], []).append(neg_id(q, i))
        groups = ({"combined": [c for t in sorted(by_type) for c in by_type[t]]} if mode == "combined"
                  else by_type)
        if not any(groups.values()):
            out.excluded += 1
            continue
        for hn_type in sorted(groups):
            cands = groups[hn_type]
            stratum = Stratum(base.split, base.complexity, hn_type)
            out.items.append(RetrievalItem(q, gt_id(q), (gt_id(q), *cands), stratum))
    return out


def kfold_count(dataset_size: int, fold_size: int, cap: int = DEFAULT_FOLD_CAP) -> int:
    """Number of folds: the cap, or as many disjoint folds as fit."""
    if fold_size <= 0:
        raise ValidationError("fold size must be positive")
    if dataset_size < fold_size:
        raise InsufficientData(f"{dataset_size} records cannot fill one fold of {fold_size}")
    return min(cap, dataset_size // fold_size)


@dataclass(frozen=True)
class RawRecord:
    record_id: str
    stratum: Stratum = Stratum()


def assemble_raw_folds(records: Sequence[RawRecord], fold_size: int, cap: int = DEFAULT_FOLD_CAP,
                       seed: int = 0, directions: Sequence[Direction] = (Direction.IMAGE_TO_TEXT,)
                       ) -> dict[Stratum, list[list[RetrievalItem]]]:
    """Per stratum, disjoint folds of ``fold_size`` records sampled without
    replacement; within a fold every record's caption competes with every other."""
    groups: dict[Stratum, list[str]] = {}
    for r in records:
        groups.setdefault(r.stratum, []).append(r.record_id)
    out = {}
    for stratum in sorted(groups, key=Stratum._key):
        ids = sorted(groups[stratum])
        k = kfold_count(len(ids), fold_size, cap)
        chosen = random.Random(f"{seed}:{stratum.label}").sample(ids, k * fold_size)
        folds = []
        for f in range(k):
            members = tuple(chosen[f * fold_size:(f + 1) * fold_size])
            folds.append([RetrievalItem(rid, rid, members, stratum, d) for d in directions for rid in members])
        out[stratum] = folds
    return out


# -- metrics ---------------------------------------------------------------------------

def gt_rank(item: RetrievalItem, scores: ScoreTable) -> int:
    """1-based rank of the ground truth; equal scores rank ahead of it."""
    gt = scores.get(*item.pair(item.gt_id))
    ahead = 0
    for c in item.candidate_ids:
        if c != item.gt_id and scores.get(*item.pair(c)) >= gt:
            ahead += 1
    return ahead + 1


def recall_at_k(items: Sequence[RetrievalItem], scores: ScoreTable, k: int) -> float:
    if not items:
        raise InsufficientData("no retrieval items")
    return sum(gt_rank(it, scores) <= k for it in items) / len(items)


def average_recall(recalls: Mapping[int, float]) -> float:
    """Mean of Recall@1, @3 and @5."""
    return sum(recalls[k] for k in KS) / len(KS)


@dataclass
class MetricRow:
    stratum: Stratum
    direction: Direction
    items: int
    recall: dict[int, float]
    avg_recall: float
    fold_mean: Optional[float] = None
    fold_std: Optional[float] = None
    folds: Optional[int] = None

    def values(self) -> dict[str, float | int | None]:
        out: dict[str, float | int | None] = {f"recall@{k}": self.recall[k] for k in KS}
        out["avg_recall@k"] = self.avg_recall
        if self.folds is not None:
            out.update({"r1_fold_mean": self.fold_mean, "r1_fold_std": self.fold_std, "folds": self.folds})
        out["items"] = self.items
        return out


@dataclass
class MetricsReport:
    scorer: str
    rows: list[MetricRow] = field(default_factory=list)

    def row(self, stratum: Stratum, direction: Direction = Direction.IMAGE_TO_TEXT) -> MetricRow:
        for r in self.rows:
            if r.stratum == stratum and r.direction == direction:
                return r
        raise KeyError(stratum)

    def to_dict(self) -> dict:
        return {"scorer": self.scorer, "rows": [
            {"stratum": r.stratum.label, "direction": r.direction.value, **r.values()} for r in self.rows]}


def _rank_rows(items: Sequence[RetrievalItem], scores: ScoreTable) -> tuple[int, dict[int, float]]:
    ranks = [gt_rank(it, scores) for it in items]
    return len(ranks), {k: sum(r <= k for r in ranks) / len(ranks) for k in KS}


def evaluate_items(items: Sequence[RetrievalItem], scores: ScoreTable, scorer: str = "scores") -> MetricsReport:
    groups: dict[tuple, list[RetrievalItem]] = {}
    for it in items:
        groups.setdefault((it.stratum, it.direction), []).append(it)
    report = MetricsReport(scorer)
    for (stratum, direction) in sorted(groups, key=lambda g: (g[0]._key(), g[1].value)):
        n, rec = _rank_rows(groups[(stratum, direction)], scores)
        report.rows.append(MetricRow(stratum, direction, n, rec, average_recall(rec)))
    return report


def kfold_summary(folds: Mapping[Stratum, Sequence[Sequence[RetrievalItem]]], scores: ScoreTable,
                  scorer: str = "scores") -> MetricsReport:
    """Recall@1 per fold, then mean and population std across folds, per stratum and direction."""
    report = MetricsReport(scorer)
    for stratum in sorted(folds, key=Stratum._key):
        fold_list = folds[stratum]
        if not fold_list:
            raise InsufficientData(f"no folds for {stratum.label}")
        directions = sorted({it.direction for f in fold_list for it in f}, key=lambda d: d.value)
        for d in directions:
            per_fold = [[it for it in f if it.direction is d] for f in fold_list]
            r1 = [recall_at_k(f, scores, 1) for f in per_fold]
            n, rec = _rank_rows([it for f in per_fold for it in f], scores)
            report.rows.append(MetricRow(stratum, d, n, rec, average_recall(rec),
                                         statistics.fmean(r1), statistics.pstdev(r1), len(per_fold)))
    return report


# -- reports ---------------------------------------------------------------------------

def report_csv(reports: Sequence[MetricsReport], set_name: Optional[str] = None, header: bool = True) -> str:
    """Long-form CSV, one line per (scorer, stratum, direction, metric)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    lead = ["set"] if set_name is not None else []
    if header:
        w.writerow(lead + ["scorer", "stratum", "direction", "metric", "value"])
    prefix = [set_name] if set_name is not None else []
    for rep in reports:
        for r in rep.rows:
            for metric, value in r.values().items():
                w.writerow(prefix + [rep.scorer, r.stratum.label, r.direction.value, metric,
                                     f"{value:.4f}" if isinstance(value, float) else value])
    return buf.getvalue()


def _column(stratum: Stratum, axis: str) -> str:
    if axis == "split":
        return stratum.split or "all"
    if axis == "complexity":
        return f"n={stratum.complexity}" if stratum.complexity is not None else "all"
    return stratum.hn_type or "RAW"


def report_markdown(reports: Sequence[MetricsReport], metric: str = "recall@1", axis: str = "split",
                    direction: Direction = Direction.IMAGE_TO_TEXT, title: Optional[str] = None) -> str:
    """Scorers as rows, strata along ``axis`` as columns; cells average over
    the strata that collapse onto the same column (weighted by item count)."""
    cells: dict[tuple[str, str], list[tuple[float, int]]] = {}
    columns: list[str] = []
    for rep in reports:
        for r in rep.rows:
            if r.direction is not direction:
                continue
            value = r.values().get(metric)
            if value is None:
                continue
            col = _column(r.stratum, axis)
            if col not in columns:
                columns.append(col)
            cells.setdefault((rep.scorer, col), []).append((float(value), r.items))
    order = {"SC": 0, "UC": 1, "UA": 2}
    columns.sort(key=lambda c: (order.get(c, 3), int(c[2:]) if c.startswith("n=") else 0, c))
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| scorer | " + " | ".join(columns) + " |")
    lines.append("|---|" + "---|" * len(columns))
    for rep in reports:
        vals = []
        for col in columns:
            entries = cells.get((rep.scorer, col))
            if not entries:
                vals.append("-")
                continue
            total = sum(n for _, n in entries)
            vals.append(f"{sum(v * n for v, n in entries) / total:.3f}" if total else "-")
        lines.append(f"| {rep.scorer} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"
