"""Ground-truth captions for subgraphs: a deterministic template and an LLM prompt path."""

from __future__ import annotations

import json
import os
import re
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .errors import ConfigError, EmptyGraph
from .model import SceneGraph, atom_count, normalize_text, singularize
from .parser import ORDINALS, Lexicon, parse_caption

DEFAULT_CUTOVER = 5


def _phrase(graph: SceneGraph, oid: int) -> str:
    node = graph.node(oid)
    attrs = " and ".join(a.lemma for a in node.attributes)
    return f"{attrs} {node.lemma}" if attrs else node.lemma


def template_caption(subgraph: SceneGraph) -> str:
    """Render a subgraph as text.

    Objects read "<attr> and <attr> <object>"; relationships chain in edge
    order while each edge continues from the previous edge's object, otherwise
    a new "and" clause starts. Later mentions of an object use "the <object>"
    (with an ordinal when an earlier instance of the same name must be picked
    out). Objects left over are appended as "and a <object>".
    """
    if not subgraph.objects:
        raise EmptyGraph("cannot caption an empty subgraph")
    introduced: list[int] = []
    nodes = subgraph.nodes

    def ref(oid: int) -> str:
        if oid not in introduced:
            introduced.append(oid)
            return _phrase(subgraph, oid)
        lemma = nodes[oid].lemma
        same = [i for i in introduced if nodes[i].lemma == lemma]
        if same[-1] == oid:
            return f"the {lemma}"
        return f"the {ORDINALS[same.index(oid)]} {lemma}"

    parts: list[str] = []
    tail: Optional[int] = None
    for e in subgraph.relationships:
        r = e.relationship.lemma
        if tail is not None and e.subject_id == tail:
            parts.append(f"{r} {ref(e.object_id)}")
        else:
            fresh = e.subject_id not in introduced
            subject = ref(e.subject_id)
            if parts:
                parts.append("and a" if fresh else "and")
            parts.append(f"{subject} {r} {ref(e.object_id)}")
        tail = e.object_id
    for o in subgraph.objects:
        if o.id not in introduced:
            parts.append(f"and a {ref(o.id)}" if parts else ref(o.id))
    return " ".join(parts)


# -- prompting ----------------------------------------------------------------

def object_labels(graph: SceneGraph) -> dict[int, str]:
    """Object names, numbered in id order when a name occurs more than once."""
    counts: dict[str, int] = {}
    for o in graph.objects:
        counts[o.lemma] = counts.get(o.lemma, 0) + 1
    seen: dict[str, int] = {}
    labels = {}
    for o in sorted(graph.objects, key=lambda o: o.id):
        if counts[o.lemma] > 1:
            seen[o.lemma] = seen.get(o.lemma, 0) + 1
            labels[o.id] = f"{o.lemma}{seen[o.lemma]}"
        else:
            labels[o.id] = o.lemma
    return labels


def describe(graph: SceneGraph) -> tuple[str, str]:
    labels = object_labels(graph)
    objects = "; ".join(
        " ".join([a.lemma for a in o.attributes] + [labels[o.id]]) for o in graph.objects)
    relations = "; ".join(
        f"{labels[e.subject_id]} {e.relationship.lemma} {labels[e.object_id]}" for e in graph.relationships)
    return objects, relations


@dataclass(frozen=True)
class PromptSpec:
    objects_line: str
    relations_line: str
    few_shot: tuple[tuple[str, str], ...] = ()

    def render(self) -> str:
        blocks = [f"{desc}\nCAPTION: {caption}" for desc, caption in self.few_shot]
        blocks.append(f"OBJECTS: {self.objects_line}\nRELATIONS: {self.relations_line}\nCAPTION:")
        return "\n\n".join(blocks)


FewShotBank = Mapping[int, Sequence[tuple[SceneGraph, str]]]


def load_few_shot_bank(path: str | Path) -> dict[int, list[tuple[SceneGraph, str]]]:
    bank: dict[int, list[tuple[SceneGraph, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                bank.setdefault(int(row["n"]), []).append((SceneGraph.from_dict(row["graph"]), row["caption"]))
    return bank


def build_prompt(subgraph: SceneGraph, few_shot_bank: FewShotBank, shots: int = 5) -> PromptSpec:
    n = atom_count(subgraph)
    examples = list(few_shot_bank.get(n, ()))
    if len(examples) < shots:
        raise ConfigError(f"few-shot bank has {len(examples)} examples for complexity {n}, need {shots}")
    few = []
    for graph, caption in examples[:shots]:
        objs, rels = describe(graph)
        few.append((f"OBJECTS: {objs}\nRELATIONS: {rels}", caption))
    objs, rels = describe(subgraph)
    return PromptSpec(objs, rels, tuple(few))


class GenClient(Protocol):
    name: str

    def generate(self, prompt: str) -> str: ...


class MockGenClient:
    """Offline client: decodes the final prompt block and returns the template
    caption in sentence case."""

    name = "mock-template"

    def __init__(self, lexicon: Optional[Lexicon] = None):
        self.lexicon = lexicon or Lexicon.load()

    def decode(self, prompt: str) -> SceneGraph:
        objects_line = relations_line = ""
        for line in prompt.splitlines():
            if line.startswith("OBJECTS:"):
                objects_line = line[len("OBJECTS:"):].strip()
            elif line.startswith("RELATIONS:"):
                relations_line = line[len("RELATIONS:"):].strip()
        objects, labels = [], {}
        for k, entry in enumerate(filter(None, (e.strip() for e in objects_line.split(";")))):
            m = re.match(r"^(.*?)(\d+)?$", entry)
            text, suffix = m.group(1), m.group(2) or ""
            node = parse_caption(text, self.lexicon).objects[-1]
            labels[f"{node.lemma}{suffix}"] = k
            objects.append({"id": k, "name": node.lemma, "attributes": [a.lemma for a in node.attributes]})
        rels = []
        by_length = sorted(labels, key=len, reverse=True)
        for clause in filter(None, (c.strip() for c in relations_line.split(";"))):
            subj = next(l for l in by_length if clause.startswith(l + " "))
            obj_ = next(l for l in by_length if clause.endswith(" " + l))
            rels.append({"subject": labels[subj], "predicate": clause[len(subj):-len(obj_)].strip(),
                         "object": labels[obj_]})
        return SceneGraph.from_dict({"objects": objects, "relationships": rels})

    def generate(self, prompt: str) -> str:
        text = template_caption(self.decode(prompt))
        return text[:1].upper() + text[1:] + "."


class HTTPGenClient:
    """JSON-over-HTTP text generation: POST ``{"prompt", "max_tokens"}``, read ``{"text"}``.

    Endpoint and key come from ``FORGE_GEN_ENDPOINT`` / ``FORGE_GEN_API_KEY``
    unless passed explicitly.
    """

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None,
                 max_tokens: int = 64, timeout: float = 30.0):
        self.endpoint = endpoint or os.environ.get("FORGE_GEN_ENDPOINT")
        if not self.endpoint:
            raise ConfigError("no generation endpoint: set FORGE_GEN_ENDPOINT")
        self.api_key = api_key if api_key is not None else os.environ.get("FORGE_GEN_API_KEY")
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.name = f"http:{self.endpoint} (nondeterministic)"

    def generate(self, prompt: str) -> str:
        body = json.dumps({"prompt": prompt, "max_tokens": self.max_tokens}).encode()
        req = urllib.request.Request(self.endpoint, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode())["text"].strip()


def generate_many(client: GenClient, prompts: Iterable[str], max_in_flight: int = 4) -> list[str]:
    """Run prompts with bounded concurrency; results come back in input order."""
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        return list(pool.map(client.generate, prompts))


def _tokens(text: str) -> list[str]:
    return [singularize(t) for t in re.findall(r"[a-z0-9]+(?:['-][a-z0-9]+)*", text.lower())]


def _contains(tokens: list[str], phrase: str) -> bool:
    want = _tokens(phrase)
    n = len(want)
    return any(tokens[i:i + n] == want for i in range(len(tokens) - n + 1))


def filter_generated(caption: str, subgraph: SceneGraph, strict: bool = False) -> bool:
    """Accept a generated caption only if it mentions every object of the subgraph.

    Matching is on canonical (singular, lowercase) forms, so a synonym does not
    count. ``strict`` also requires every attribute and relationship.
    """
    tokens = _tokens(caption)
    for o in subgraph.objects:
        if not (_contains(tokens, o.lemma) or (o.atom.surface and _contains(tokens, o.atom.surface))):
            return False
    if strict:
        for o in subgraph.objects:
            if not all(_contains(tokens, a.lemma) for a in o.attributes):
                return False
        if not all(_contains(tokens, e.relationship.lemma) for e in subgraph.relationships):
            return False
    return True


@dataclass(frozen=True)
class GeneratedCaption:
    text: str
    engine: str
    prompt: Optional[str] = None


def caption_subgraph(subgraph: SceneGraph, client: Optional[GenClient] = None,
                     few_shot_bank: Optional[FewShotBank] = None,
                     cutover: int = DEFAULT_CUTOVER, strict: bool = False) -> GeneratedCaption:
    """Template below ``cutover`` atoms (or with no client); prompted generation
    above it, falling back to the template when the output drops an object."""
    if client is None or atom_count(subgraph) < cutover:
        return GeneratedCaption(template_caption(subgraph), "template")
    prompt = build_prompt(subgraph, few_shot_bank or {}).render()
    text = client.generate(prompt)
    if filter_generated(text, subgraph, strict):
        return GeneratedCaption(text, client.name, prompt)
    return GeneratedCaption(template_caption(subgraph), "template-fallback", prompt)
