"""Fixed-complexity subgraph sampling by seeded random walk, plus crop filtering."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import GraphTooSmall, ValidationError, WalkFailed
from .index import FilterPolicy
from .model import Region, RelEdge, SceneGraph, atom_count, subgraph


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary parts; independent of hash randomization."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class WalkConfig:
    n: int = 4
    max_retries: int = 50
    seed: int = 0
    samples_per_image_per_n: int = 4
    max_overlap: float = 0.75

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError("walk length n must be at least 2")
        if not 0 < self.max_overlap <= 1:
            raise ValidationError("max_overlap must lie in (0, 1]")
        if self.max_retries < 1:
            raise ValidationError("max_retries must be positive")


@dataclass(frozen=True)
class SampledSubgraph:
    subgraph: SceneGraph
    parent_image_id: Optional[str]
    crop: Optional[Region]
    complexity: int
    sample_index: int = 0

    def to_dict(self) -> dict:
        return {
            "parent_image_id": self.parent_image_id,
            "complexity": self.complexity,
            "sample_index": self.sample_index,
            "crop": self.crop.to_list() if self.crop else None,
            "graph": self.subgraph.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampledSubgraph":
        crop = data.get("crop")
        return cls(SceneGraph.from_dict(data["graph"]), data.get("parent_image_id"),
                   Region(*crop) if crop else None, int(data["complexity"]),
                   int(data.get("sample_index", 0)))


# a compound candidate: ("attr", object_id, attribute_index) or ("edge", edge_index)
Step = tuple


@dataclass
class WalkTrace:
    """Per-step record of a walk, for checking the jump rule."""

    steps: list[tuple[str, object]] = field(default_factory=list)


class _WalkState:
    def __init__(self, graph: SceneGraph):
        self.graph = graph
        self.objects: list[int] = []
        self.attrs: set[tuple[int, int]] = set()
        self.edges: set[int] = set()

    @property
    def size(self) -> int:
        return len(self.objects) + len(self.attrs) + len(self.edges)

    def eligible(self, oid: int) -> list[Step]:
        node = self.graph.node(oid)
        out: list[Step] = [("attr", oid, i) for i in range(len(node.attributes)) if (oid, i) not in self.attrs]
        for k, e in enumerate(self.graph.relationships):
            if k not in self.edges and oid in (e.subject_id, e.object_id):
                out.append(("edge", k))
        return out

    def gain(self, step: Step) -> int:
        if step[0] == "attr":
            return 1
        e = self.graph.relationships[step[1]]
        return 1 + sum(1 for x in {e.subject_id, e.object_id} if x not in self.objects)

    def apply(self, step: Step, current: int) -> int:
        if step[0] == "attr":
            self.attrs.add((step[1], step[2]))
            return current
        k = step[1]
        e = self.graph.relationships[k]
        self.edges.add(k)
        nxt = e.object_id if e.subject_id == current else e.subject_id
        for x in (e.subject_id, e.object_id):
            if x not in self.objects:
                self.objects.append(x)
        return nxt

    def result(self) -> SceneGraph:
        attrs = {}
        for oid, i in self.attrs:
            attrs.setdefault(oid, []).append(self.graph.node(oid).attributes[i])
        edges = [self.graph.relationships[k] for k in self.edges]
        return subgraph(self.graph, self.objects, attrs, edges)


def _walk_once(graph: SceneGraph, n: int, rng: random.Random,
               components: list[list[int]], trace: Optional[WalkTrace]) -> Optional[SceneGraph]:
    st = _WalkState(graph)
    comp_of = {oid: ci for ci, comp in enumerate(components) for oid in comp}
    current = rng.choice([o.id for o in graph.objects])
    st.objects.append(current)
    if trace is not None:
        trace.steps.append(("start", current))
    while st.size < n:
        options = [(current, s) for s in st.eligible(current)]
        if not options:
            # current object is spent; continue from any added object of this component
            comp = comp_of[current]
            options = [(oid, s) for oid in st.objects if comp_of[oid] == comp for s in st.eligible(oid)]
        if options:
            current, step = rng.choice(options)
            if st.size + st.gain(step) > n:
                if trace is not None:
                    trace.steps.append(("overshoot", step))
                return None
            current = st.apply(step, current)
            if trace is not None:
                trace.steps.append(("add", step))
            continue
        # component exhausted: jump to a random object of an untouched component
        touched = {comp_of[o] for o in st.objects}
        fresh = [o.id for o in graph.objects if comp_of[o.id] not in touched]
        if not fresh:
            return None
        current = rng.choice(fresh)
        st.objects.append(current)
        if trace is not None:
            trace.steps.append(("jump", current))
    return st.result()


def random_walk(graph: SceneGraph, config: WalkConfig, trace: Optional[WalkTrace] = None) -> SampledSubgraph:
    """Sample an ``config.n``-atom subgraph of ``graph``.

    Starts from a uniformly chosen object and repeatedly adds a uniformly chosen
    compound holding at least one unadded atom; relationship steps move the walk
    to the other endpoint. Walks that overshoot ``n`` are discarded and retried.
    """
    n = config.n
    if atom_count(graph) < n:
        raise GraphTooSmall(f"graph {graph.image_id} has {atom_count(graph)} atoms, walk needs {n}")
    rng = random.Random(config.seed)
    components = graph.components()
    for _ in range(config.max_retries):
        if trace is not None:
            trace.steps.clear()
        sub = _walk_once(graph, n, rng, components, trace)
        if sub is not None:
            return SampledSubgraph(sub, graph.image_id, crop_of(sub), atom_count(sub))
    raise WalkFailed(f"no {n}-atom walk on graph {graph.image_id} after {config.max_retries} tries")


def crop_of(graph: SceneGraph) -> Optional[Region]:
    boxes = [o.bbox for o in graph.objects if o.bbox is not None]
    if not boxes:
        return None
    crop = boxes[0]
    for b in boxes[1:]:
        crop = crop.union(b)
    return crop


def sample_image(graph: SceneGraph, complexities: Iterable[int], config: WalkConfig) -> list[SampledSubgraph]:
    """Draw ``samples_per_image_per_n`` walks per complexity with per-sample derived seeds."""
    out = []
    for n in complexities:
        if atom_count(graph) < n:
            continue
        for idx in range(config.samples_per_image_per_n):
            cfg = WalkConfig(n, config.max_retries, derive_seed(config.seed, graph.image_id, n, idx),
                             config.samples_per_image_per_n, config.max_overlap)
            try:
                s = random_walk(graph, cfg)
            except WalkFailed:
                continue
            out.append(SampledSubgraph(s.subgraph, s.parent_image_id, s.crop, s.complexity, idx))
    return out


def crop_and_filter(samples: Iterable[SampledSubgraph], policy: FilterPolicy,
                    config: WalkConfig) -> list[SampledSubgraph]:
    """Drop crops failing the geometric checks, then greedily drop same-image,
    same-complexity crops whose IoU with an already kept crop exceeds ``max_overlap``."""
    kept: list[SampledSubgraph] = []
    by_group: dict[tuple, list[Region]] = {}
    for s in samples:
        size = s.subgraph.image_size
        if s.crop is None or size is None or not policy.region_ok(s.crop, size):
            continue
        group = by_group.setdefault((s.parent_image_id, s.complexity), [])
        if any(s.crop.iou(other) > config.max_overlap for other in group):
            continue
        group.append(s.crop)
        kept.append(s)
    return kept
