"""Seen-atom/compound index, quality filters and SC/UC/UA split assignment."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import RecordError, ValidationError
from .model import (
    Atom,
    AtomKind,
    Compound,
    Region,
    SceneGraph,
    atom_count,
    atom_set,
    canonicalize,
    compound_from_fields,
    compounds_of,
    signature,
    sorted_atoms,
    sorted_compounds,
)

log = logging.getLogger(__name__)


class SplitLabel(str, enum.Enum):
    SC = "SC"
    UC = "UC"
    UA = "UA"

    @property
    def rank(self) -> int:
        return {"SC": 0, "UC": 1, "UA": 2}[self.value]


@dataclass(frozen=True)
class SeenIndex:
    atoms: frozenset[Atom] = frozenset()
    compounds: frozenset[Compound] = frozenset()
    source_corpus: str = ""
    record_count: int = 0
    skipped: int = 0

    def __post_init__(self) -> None:
        for c in self.compounds:
            missing = [a for a in c.atoms if a not in self.atoms]
            if missing:
                raise ValidationError(f"compound {c.to_fields()} has unseen atoms {missing}")

    def seen_atom(self, atom: Atom) -> bool:
        return atom in self.atoms

    def seen_compound(self, compound: Compound) -> bool:
        return compound in self.compounds

    def union(self, other: "SeenIndex") -> "SeenIndex":
        return SeenIndex(
            self.atoms | other.atoms,
            self.compounds | other.compounds,
            self.source_corpus if self.source_corpus == other.source_corpus
            else "+".join(filter(None, (self.source_corpus, other.source_corpus))),
            self.record_count + other.record_count,
            self.skipped + other.skipped,
        )

    def save(self, directory: str | Path) -> None:
        """Write ``atoms.txt``, ``compounds.txt`` (sorted, tab-separated) and ``meta.json``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        atoms = "".join(f"{a.kind.value}\t{a.lemma}\n" for a in sorted_atoms(self.atoms))
        comps = "".join("\t".join(c.to_fields()) + "\n" for c in sorted_compounds(self.compounds))
        (out / "atoms.txt").write_text(atoms, encoding="utf-8")
        (out / "compounds.txt").write_text(comps, encoding="utf-8")
        meta = {"source_corpus": self.source_corpus, "record_count": self.record_count,
                "skipped": self.skipped, "atoms": len(self.atoms), "compounds": len(self.compounds)}
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "SeenIndex":
        base = Path(directory)
        atoms = set()
        for line in (base / "atoms.txt").read_text(encoding="utf-8").splitlines():
            if line:
                kind, lemma = line.split("\t")
                atoms.add(canonicalize(lemma, AtomKind(kind)))
        compounds = {
            compound_from_fields(line.split("\t"))
            for line in (base / "compounds.txt").read_text(encoding="utf-8").splitlines() if line
        }
        meta_path = base / "meta.json"
        meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
        return cls(frozenset(atoms), frozenset(compounds), meta.get("source_corpus", ""),
                   meta.get("record_count", 0), meta.get("skipped", 0))


def build_seen_index(parsed_corpus: Iterable[Union[SceneGraph, Mapping]],
                     source_corpus: str = "") -> SeenIndex:
    """Union atoms and compounds over a stream of parsed graphs.

    Records may be graphs or their serialized dicts; undecodable records are
    logged, skipped and counted in ``SeenIndex.skipped``.
    """
    atoms: set[Atom] = set()
    compounds: set[Compound] = set()
    count = skipped = 0
    for record in parsed_corpus:
        try:
            graph = record if isinstance(record, SceneGraph) else SceneGraph.from_dict(
                record["graph"] if "graph" in record else record)
        except Exception as exc:  # noqa: BLE001 - any malformed record is skipped
            skipped += 1
            log.warning("skipping unreadable record: %s", exc)
            continue
        count += 1
        atoms.update(graph.atoms())
        compounds.update(compounds_of(graph))
    return SeenIndex(frozenset(atoms), frozenset(compounds), source_corpus, count, skipped)


def classify_split(test_graph: SceneGraph, index: SeenIndex) -> SplitLabel:
    if any(a not in index.atoms for a in test_graph.atoms()):
        return SplitLabel.UA
    if any(c not in index.compounds for c in compounds_of(test_graph)):
        return SplitLabel.UC
    return SplitLabel.SC


@dataclass(frozen=True)
class FilterPolicy:
    min_region_area: int = 40_000
    min_image_fraction: float = 0.10
    aspect_ratio_range: tuple[float, float] = (0.5, 2.0)
    min_atoms: int = 2
    min_compounds: int = 1
    dedup_by_graph: bool = True

    def __post_init__(self) -> None:
        lo, hi = self.aspect_ratio_range
        if min(self.min_region_area, self.min_image_fraction, lo, hi) <= 0:
            raise ValidationError("filter thresholds must be positive")
        if self.min_atoms < 0 or self.min_compounds < 0:
            raise ValidationError("graph thresholds must be non-negative")
        if not lo < hi:
            raise ValidationError(f"aspect ratio range must satisfy lower < upper: {self.aspect_ratio_range}")

    def region_ok(self, region: Region, image_size: tuple[int, int]) -> bool:
        lo, hi = self.aspect_ratio_range
        return (
            region.area >= self.min_region_area
            and region.area >= self.min_image_fraction * image_size[0] * image_size[1]
            and lo <= region.w / region.h <= hi
        )

    def graph_ok(self, graph: SceneGraph) -> bool:
        return atom_count(graph) >= self.min_atoms and len(compounds_of(graph)) >= self.min_compounds

    @classmethod
    def from_dict(cls, data: Mapping) -> "FilterPolicy":
        data = dict(data)
        if "aspect_ratio_range" in data:
            data["aspect_ratio_range"] = tuple(data["aspect_ratio_range"])
        return cls(**data)


@dataclass(frozen=True)
class CaptionRecord:
    caption_id: str
    text: str
    graph: Optional[SceneGraph] = None
    source_image_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValidationError(f"caption {self.caption_id} has empty text")


@dataclass
class FilterStats:
    seen: int = 0
    kept: int = 0
    geometry: int = 0
    graph: int = 0
    duplicate: int = 0
    errors: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def filter_records(
    records: Iterable[tuple[Optional[Region], SceneGraph, CaptionRecord]],
    policy: FilterPolicy = FilterPolicy(),
    image_size: Optional[Union[tuple[int, int], Mapping[str, tuple[int, int]]]] = None,
    stats: Optional[FilterStats] = None,
) -> Iterator[tuple[Optional[Region], SceneGraph, CaptionRecord]]:
    """Yield records passing the geometric, graph and duplicate checks.

    ``image_size`` may be one size for every record or a mapping from image id;
    otherwise the graph's own ``image_size`` is used. Records with a region but
    no known image size are counted as errors and skipped.
    """
    stats = stats if stats is not None else FilterStats()
    seen_signatures: set[str] = set()
    for region, graph, caption in records:
        stats.seen += 1
        if region is not None:
            size = _size_for(image_size, graph, caption)
            if size is None:
                stats.errors += 1
                log.warning("%s", RecordError(f"record {caption.caption_id}: region given without image size"))
                continue
            if not policy.region_ok(region, size):
                stats.geometry += 1
                continue
        if not policy.graph_ok(graph):
            stats.graph += 1
            continue
        if policy.dedup_by_graph:
            sig = signature(graph)
            if sig in seen_signatures:
                stats.duplicate += 1
                continue
            seen_signatures.add(sig)
        stats.kept += 1
        yield region, graph, caption


def _size_for(image_size, graph: SceneGraph, caption: CaptionRecord) -> Optional[tuple[int, int]]:
    if isinstance(image_size, tuple):
        return image_size
    if isinstance(image_size, Mapping):
        key = caption.source_image_id or graph.image_id
        if key in image_size:
            return tuple(image_size[key])
    return graph.image_size
