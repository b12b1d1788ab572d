"""End-to-end batch pipeline: parse, index, split, sample, caption, hardneg, eval, report.

Every stage writes its artifacts atomically plus a manifest recording input
hashes, settings and counts; a stage whose manifest still matches is skipped.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import shutil
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib.resources import files
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .captions import (DEFAULT_CUTOVER, HTTPGenClient, MockGenClient, build_prompt, filter_generated,
                       generate_many, load_few_shot_bank, template_caption)
from .errors import (AlignmentError, ConfigError, EmptyParse, ForgeError, InsufficientData, NoFoilAvailable,
                     PreconditionError, ValidationError)
from .hardneg import HNConfig, HNType, embeddings, generate, ground_in_parent
from .index import FilterPolicy, FilterStats, SeenIndex, build_seen_index, classify_split, filter_records
from .io import dumps, read_captions, read_jsonl, read_regions, read_scene_graphs, sha256_file, write_jsonl, write_text
from .lexical import WordNetResource
from .model import Region, SceneGraph, atom_count, compounds_of
from .parser import Lexicon, parse_caption
from .retrieval import (Direction, MetricRow, MetricsReport, RawRecord, RetrievalSet, Stratum, assemble_hn_sets,
                        assemble_raw_folds, average_recall, evaluate_items, kfold_summary, load_scores,
                        report_csv, report_markdown)
from .sampler import WalkConfig, crop_and_filter, derive_seed, sample_image
from .scorers import RandomScorer, raw_context, reference_scorers, score_items

log = logging.getLogger(__name__)

STAGES = ("parse", "index", "split", "sample", "caption", "hardneg", "eval", "report")


def code_digest() -> str:
    """Digest of the package sources, so edited code invalidates earlier manifests."""
    import hashlib

    h = hashlib.sha256()
    root = Path(__file__).parent
    for f in sorted(root.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def bundled(*parts: str) -> Path:
    return Path(str(files("compforge").joinpath("data", *parts)))


@dataclass
class Paths:
    train_captions: Path = field(default_factory=lambda: bundled("fixture", "train_captions.jsonl"))
    test_regions: Path = field(default_factory=lambda: bundled("fixture", "test_regions.jsonl"))
    scene_graphs: Path = field(default_factory=lambda: bundled("fixture", "scene_graphs.json"))
    wordnet: Path = field(default_factory=lambda: bundled("wordnet"))
    lexicon: Optional[Path] = None
    few_shot: Path = field(default_factory=lambda: bundled("fixture", "few_shot.jsonl"))
    out: Path = Path("forge-out")


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    seed: int = 0
    jobs: int = 1
    filter: FilterPolicy = field(default_factory=FilterPolicy)
    walk: WalkConfig = field(default_factory=WalkConfig)
    complexities: tuple[int, ...] = tuple(range(4, 13))
    hn_systematicity: HNConfig = field(default_factory=HNConfig.systematicity)
    hn_productivity: HNConfig = field(default_factory=HNConfig.productivity)
    engine: str = "mock"
    cutover: int = DEFAULT_CUTOVER
    max_in_flight: int = 4
    fold_size: int = 1855
    fold_cap: int = 20
    scorers: tuple[str, ...] = ("oracle", "random", "bag-of-words")
    score_files: dict[str, Path] = field(default_factory=dict)
    stages: tuple[str, ...] = STAGES

    def validate(self, stages: Sequence[str]) -> None:
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        if self.engine not in ("mock", "http", "template"):
            raise ConfigError(f"unknown caption engine {self.engine!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.fold_size < 1:
            raise ConfigError("fold_size must be positive")
        if any(n < 2 for n in self.complexities):
            raise ConfigError("complexities must be at least 2")
        need = {"parse": ["train_captions", "test_regions"], "split": ["scene_graphs"],
                "sample": ["scene_graphs"], "caption": ["few_shot"], "hardneg": ["scene_graphs", "wordnet"]}
        for stage in stages:
            for name in need.get(stage, []):
                p = getattr(self.paths, name)
                if p is None or not Path(p).exists():
                    raise ConfigError(f"stage {stage} needs {name}, which does not exist: {p}")
        if "hardneg" in stages and not Path(self.paths.wordnet).is_dir():
            raise ConfigError(f"wordnet directory not found: {self.paths.wordnet}")
        for name, p in self.score_files.items():
            if "eval" in stages and not Path(p).exists():
                raise ConfigError(f"score file for {name} not found: {p}")

    def stage_settings(self, stage: str) -> dict:
        """Settings that influence a stage's output (recorded in its manifest)."""
        common = {"seed": self.seed, "version": __version__, "code": code_digest()}
        if stage == "split":
            return {**common, "filter": asdict(self.filter)}
        if stage == "sample":
            return {**common, "filter": asdict(self.filter), "walk": asdict(self.walk),
                    "complexities": list(self.complexities)}
        if stage == "caption":
            return {**common, "engine": self.engine, "cutover": self.cutover}
        if stage == "hardneg":
            return {**common, "systematicity": asdict(self.hn_systematicity),
                    "productivity": asdict(self.hn_productivity)}
        if stage == "eval":
            return {**common, "fold_size": self.fold_size, "fold_cap": self.fold_cap, "scorers": list(self.scorers),
                    "score_files": sorted(self.score_files)}
        return common

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path = Path(".")) -> "PipelineConfig":
        data = dict(data)
        known = {"paths", "seed", "jobs", "filter", "walk", "complexities", "hardneg", "caption", "eval", "stages"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        cfg = cls()
        try:
            paths = Paths()
            for key, value in dict(data.get("paths", {})).items():
                if not hasattr(paths, key):
                    raise ConfigError(f"unknown path key {key!r}")
                p = Path(value)
                setattr(paths, key, p if p.is_absolute() else base_dir / p)
            cfg.paths = paths
            cfg.seed = int(data.get("seed", 0))
            cfg.jobs = int(data.get("jobs", 1))
            if "filter" in data:
                cfg.filter = FilterPolicy.from_dict(data["filter"])
            if "walk" in data:
                cfg.walk = WalkConfig(**data["walk"])
            if "complexities" in data:
                cfg.complexities = tuple(int(n) for n in data["complexities"])
            hn = dict(data.get("hardneg", {}))
            if "systematicity" in hn:
                cfg.hn_systematicity = HNConfig(**{**asdict(cfg.hn_systematicity), **hn["systematicity"]})
            if "productivity" in hn:
                cfg.hn_productivity = HNConfig(**{**asdict(cfg.hn_productivity), **hn["productivity"]})
            cap = dict(data.get("caption", {}))
            cfg.engine = cap.get("engine", cfg.engine)
            cfg.cutover = int(cap.get("cutover", cfg.cutover))
            cfg.max_in_flight = int(cap.get("max_in_flight", cfg.max_in_flight))
            ev = dict(data.get("eval", {}))
            cfg.fold_size = int(ev.get("fold_size", cfg.fold_size))
            cfg.fold_cap = int(ev.get("fold_cap", cfg.fold_cap))
            cfg.scorers = tuple(ev.get("scorers", cfg.scorers))
            cfg.score_files = {k: (Path(v) if Path(v).is_absolute() else base_dir / v)
                               for k, v in dict(ev.get("score_files", {})).items()}
            if "stages" in data:
                cfg.stages = tuple(data["stages"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ConfigError(f"invalid config: {exc}") from exc
        return cfg

    @classmethod
    def from_toml(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)


def fixture_config(out: str | Path = "forge-out", seed: int = 0) -> PipelineConfig:
    """Settings sized for the bundled 50-image fixture."""
    cfg = PipelineConfig(seed=seed, complexities=(4, 5, 6, 7, 8), fold_size=10)
    cfg.paths.out = Path(out)
    cfg.walk = WalkConfig(samples_per_image_per_n=2)
    return cfg


# -- artifacts -----------------------------------------------------------------------

ARTIFACTS = {
    "parse": ["parsed_train.jsonl", "parsed_test.jsonl"],
    "index": ["index/atoms.txt", "index/compounds.txt", "index/meta.json"],
    "split": ["systematicity.jsonl"],
    "sample": ["subgraphs.jsonl"],
    "caption": ["productivity.jsonl"],
    "hardneg": ["hn_systematicity.jsonl", "hn_productivity.jsonl"],
    "eval": ["metrics.jsonl", "eval_pairs.jsonl"],
    "report": ["report.csv", "report.md"],
}

SCHEMAS: dict[str, dict[str, type | tuple]] = {
    "parsed_train.jsonl": {"caption_id": str, "text": str, "graph": dict},
    "parsed_test.jsonl": {"caption_id": str, "image_id": str, "text": str, "region": list, "graph": dict},
    "systematicity.jsonl": {"query_id": str, "image_id": str, "text": str, "region": list, "graph": dict,
                            "split": str},
    "subgraphs.jsonl": {"query_id": str, "parent_image_id": str, "complexity": int, "crop": list, "graph": dict},
    "productivity.jsonl": {"query_id": str, "parent_image_id": str, "complexity": int, "graph": dict,
                           "caption": str, "engine": str},
    "hn_systematicity.jsonl": {"query_id": str, "gt": str, "negatives": list, "stratum": dict},
    "hn_productivity.jsonl": {"query_id": str, "gt": str, "negatives": list, "stratum": dict},
    "metrics.jsonl": {"scorer": str, "set": str, "stratum": dict},
    "eval_pairs.jsonl": {"image_id": str, "text_id": str, "text": str},
}


def check_rows(name: str, rows: Iterable[Mapping]) -> Iterable[Mapping]:
    schema = SCHEMAS[name]
    for i, row in enumerate(rows):
        for key, typ in schema.items():
            if key not in row or not isinstance(row[key], typ):
                raise ValidationError(f"{name} row {i}: field {key!r} missing or not {typ}")
        yield row


def stage_inputs(cfg: PipelineConfig, stage: str) -> dict[str, Path]:
    out = cfg.paths.out
    p = cfg.paths
    deps = {
        "parse": {"train_captions": p.train_captions, "test_regions": p.test_regions,
                  **({"lexicon": p.lexicon} if p.lexicon else {})},
        "index": {"parsed_train.jsonl": out / "parsed_train.jsonl"},
        "split": {"parsed_test.jsonl": out / "parsed_test.jsonl", "scene_graphs": p.scene_graphs,
                  **{a: out / a for a in ARTIFACTS["index"]}},
        "sample": {"scene_graphs": p.scene_graphs},
        "caption": {"subgraphs.jsonl": out / "subgraphs.jsonl", "few_shot": p.few_shot},
        "hardneg": {"systematicity.jsonl": out / "systematicity.jsonl",
                    "productivity.jsonl": out / "productivity.jsonl", "scene_graphs": p.scene_graphs,
                    **{f"wordnet/{f.name}": f for f in sorted(Path(p.wordnet).glob("*")) if f.is_file()}},
        "eval": {"hn_systematicity.jsonl": out / "hn_systematicity.jsonl",
                 "hn_productivity.jsonl": out / "hn_productivity.jsonl",
                 "systematicity.jsonl": out / "systematicity.jsonl",
                 "productivity.jsonl": out / "productivity.jsonl",
                 **{f"scores/{k}": v for k, v in sorted(cfg.score_files.items())}},
        "report": {"metrics.jsonl": out / "metrics.jsonl"},
    }
    return deps[stage]


def _hash_inputs(inputs: Mapping[str, Path]) -> dict[str, str]:
    missing = [str(v) for v in inputs.values() if not Path(v).exists()]
    if missing:
        raise ConfigError(f"missing stage input(s): {', '.join(missing)}")
    return {k: sha256_file(v) for k, v in sorted(inputs.items())}


def manifest_path(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.paths.out / "manifests" / f"{stage}.json"


def _up_to_date(cfg: PipelineConfig, stage: str, inputs: dict[str, str]) -> bool:
    mp = manifest_path(cfg, stage)
    if not mp.exists():
        return False
    try:
        m = json.loads(mp.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    if m.get("inputs") != inputs or m.get("settings") != json.loads(json.dumps(cfg.stage_settings(stage))):
        return False
    for name, digest in m.get("outputs", {}).items():
        f = cfg.paths.out / name
        if not f.exists() or sha256_file(f) != digest:
            return False
    return True


# -- stage bodies --------------------------------------------------------------------

_WORKER: dict[str, Any] = {}


def _init_parse_worker(lexicon_dir: Optional[str]) -> None:
    _WORKER["lexicon"] = Lexicon.load(lexicon_dir)


def _parse_one(text: str) -> Optional[dict]:
    try:
        return parse_caption(text, _WORKER["lexicon"]).to_dict()
    except EmptyParse:
        return None


def parse_texts(texts: Sequence[str], lexicon_dir: Optional[Path] = None, jobs: int = 1,
                chunksize: int = 512) -> list[Optional[dict]]:
    """Parse captions to serialized graphs (None where nothing parsed), in input order."""
    arg = str(lexicon_dir) if lexicon_dir else None
    if jobs <= 1:
        _init_parse_worker(arg)
        return [_parse_one(t) for t in texts]
    with multiprocessing.get_context("fork").Pool(jobs, _init_parse_worker, (arg,)) as pool:
        return pool.map(_parse_one, texts, chunksize=chunksize)


def _stage_parse(cfg: PipelineConfig) -> dict:
    train = list(read_captions(cfg.paths.train_captions))
    test = list(read_regions(cfg.paths.test_regions))
    graphs = parse_texts([c.text for c in train] + [c.text for c, _ in test], cfg.paths.lexicon, cfg.jobs)
    train_rows = [{"caption_id": c.caption_id, "text": c.text, "graph": g}
                  for c, g in zip(train, graphs[:len(train)]) if g is not None]
    test_rows = [{"caption_id": c.caption_id, "image_id": c.source_image_id, "text": c.text,
                  "region": r.to_list(), "graph": g}
                 for (c, r), g in zip(test, graphs[len(train):]) if g is not None]
    out = cfg.paths.out
    write_jsonl(out / "parsed_train.jsonl", check_rows("parsed_train.jsonl", train_rows))
    write_jsonl(out / "parsed_test.jsonl", check_rows("parsed_test.jsonl", test_rows))
    return {"train": len(train_rows), "test": len(test_rows), "unparsed": len(graphs) - len(train_rows) - len(test_rows)}


def _stage_index(cfg: PipelineConfig) -> dict:
    index = build_seen_index(read_jsonl(cfg.paths.out / "parsed_train.jsonl"), "parsed_train.jsonl")
    index.save(cfg.paths.out / "index")
    return {"atoms": len(index.atoms), "compounds": len(index.compounds), "records": index.record_count,
            "skipped": index.skipped}


def _stage_split(cfg: PipelineConfig) -> dict:
    from .index import CaptionRecord

    index = SeenIndex.load(cfg.paths.out / "index")
    graphs = read_scene_graphs(cfg.paths.scene_graphs)
    sizes = {k: g.image_size for k, g in graphs.items() if g.image_size}
    records = []
    for row in read_jsonl(cfg.paths.out / "parsed_test.jsonl"):
        records.append((Region(*row["region"]), SceneGraph.from_dict(row["graph"]),
                        CaptionRecord(row["caption_id"], row["text"], source_image_id=row["image_id"])))
    stats = FilterStats()
    rows, counts = [], {"SC": 0, "UC": 0, "UA": 0}
    for region, graph, cap in filter_records(records, cfg.filter, sizes, stats):
        label = classify_split(graph, index).value
        counts[label] += 1
        rows.append({"query_id": cap.caption_id, "image_id": cap.source_image_id, "text": cap.text,
                     "region": region.to_list(), "graph": graph.to_dict(), "split": label})
    write_jsonl(cfg.paths.out / "systematicity.jsonl", check_rows("systematicity.jsonl", rows))
    return {"splits": counts, "filter": stats.as_dict()}


def _stage_sample(cfg: PipelineConfig) -> dict:
    graphs = read_scene_graphs(cfg.paths.scene_graphs)
    walk = replace(cfg.walk, seed=cfg.seed)
    rows, per_n = [], {}
    for image_id in sorted(graphs):
        samples = crop_and_filter(sample_image(graphs[image_id], cfg.complexities, walk), cfg.filter, walk)
        for s in samples:
            d = s.to_dict()
            rows.append({"query_id": f"{image_id}#n{s.complexity}#{s.sample_index}", **d})
            per_n[str(s.complexity)] = per_n.get(str(s.complexity), 0) + 1
    write_jsonl(cfg.paths.out / "subgraphs.jsonl", check_rows("subgraphs.jsonl", rows))
    return {"subgraphs": len(rows), "per_complexity": dict(sorted(per_n.items(), key=lambda kv: int(kv[0])))}


def _client(cfg: PipelineConfig, lexicon: Lexicon):
    if cfg.engine == "mock":
        return MockGenClient(lexicon)
    if cfg.engine == "http":
        return HTTPGenClient()
    return None


def _stage_caption(cfg: PipelineConfig) -> dict:
    lexicon = Lexicon.load(cfg.paths.lexicon)
    bank = load_few_shot_bank(cfg.paths.few_shot)
    client = _client(cfg, lexicon)
    rows = list(read_jsonl(cfg.paths.out / "subgraphs.jsonl"))
    graphs = [SceneGraph.from_dict(r["graph"]) for r in rows]
    captions = [template_caption(g) for g in graphs]
    engines = ["template"] * len(rows)
    prompted = [i for i, g in enumerate(graphs) if client is not None and atom_count(g) >= cfg.cutover]
    if prompted:
        prompts = [build_prompt(graphs[i], bank).render() for i in prompted]
        for i, text in zip(prompted, generate_many(client, prompts, cfg.max_in_flight)):
            if filter_generated(text, graphs[i]):
                captions[i], engines[i] = text, client.name
            else:
                engines[i] = "template-fallback"
    out = [{"query_id": r["query_id"], "parent_image_id": r["parent_image_id"], "complexity": r["complexity"],
            "crop": r["crop"], "graph": r["graph"], "caption": c, "engine": e}
           for r, c, e in zip(rows, captions, engines)]
    write_jsonl(cfg.paths.out / "productivity.jsonl", check_rows("productivity.jsonl", out))
    tally: dict[str, int] = {}
    for e in engines:
        tally[e] = tally.get(e, 0) + 1
    return {"captions": len(out), "engines": dict(sorted(tally.items()))}


SYSTEMATICITY_TYPES = (HNType.ATOM, HNType.COMP)
PRODUCTIVITY_TYPES = (HNType.ATOM, HNType.SWAP, HNType.NEG)


def grounded_subgraph(graph: SceneGraph, parent: SceneGraph) -> Optional[SceneGraph]:
    """The caption graph in parent ids: as given when its ids already fit, else via its first embedding."""
    pnodes = parent.nodes
    if all(o.id in pnodes for o in graph.objects):
        identity = {o.id: o.id for o in graph.objects}
        if next(embeddings(graph, parent, identity), None) is not None:
            return SceneGraph(graph.objects, graph.relationships, parent.image_id, parent.image_size)
    return ground_in_parent(graph, parent)


def negatives_for_row(row: Mapping, parent: SceneGraph, lex, lexicon: Lexicon, types: Sequence[HNType],
                      hn: HNConfig, global_seed: int) -> dict:
    """Hard negatives of each requested type for one query; shortfalls and skips are reported."""
    text = row.get("caption") or row["text"]
    graph = SceneGraph.from_dict(row["graph"])
    sub = grounded_subgraph(graph, parent)
    out: dict[str, Any] = {"negatives": [], "shortfall": {}, "skipped": {}}
    if sub is None:
        out["skipped"] = {t.value: "AlignmentError" for t in types}
        return out
    for t in types:
        want = hn.count(t)
        try:
            negs = generate(t, text, sub, parent, lex, lexicon, want,
                            derive_seed(global_seed, hn.seed, row["query_id"], t.value))
        except (NoFoilAvailable, PreconditionError, AlignmentError) as exc:
            out["skipped"][t.value] = type(exc).__name__
            continue
        out["negatives"].extend(n.to_dict() for n in negs)
        if len(negs) < want:
            out["shortfall"][t.value] = want - len(negs)
    return out


def _init_hn_worker(wordnet: str, lexicon_dir: Optional[str], graphs_path: str) -> None:
    _WORKER["wn"] = WordNetResource.load(wordnet)
    _WORKER["lexicon"] = Lexicon.load(lexicon_dir)
    _WORKER["graphs"] = read_scene_graphs(graphs_path)


def _hn_task(task: tuple) -> dict:
    row, image_id, types, hn, seed = task
    return negatives_for_row(row, _WORKER["graphs"][image_id], _WORKER["wn"], _WORKER["lexicon"], types, hn, seed)


def _stage_hardneg(cfg: PipelineConfig) -> dict:
    out_dir = cfg.paths.out
    sets = [
        ("hn_systematicity.jsonl", list(read_jsonl(out_dir / "systematicity.jsonl")), "image_id",
         SYSTEMATICITY_TYPES, cfg.hn_systematicity),
        ("hn_productivity.jsonl", list(read_jsonl(out_dir / "productivity.jsonl")), "parent_image_id",
         PRODUCTIVITY_TYPES, cfg.hn_productivity),
    ]
    init = (str(cfg.paths.wordnet), str(cfg.paths.lexicon) if cfg.paths.lexicon else None,
            str(cfg.paths.scene_graphs))
    counts: dict[str, Any] = {}
    pool = None
    if cfg.jobs > 1:
        pool = multiprocessing.get_context("fork").Pool(cfg.jobs, _init_hn_worker, init)
    else:
        _init_hn_worker(*init)
    try:
        for name, rows, image_key, types, hn in sets:
            tasks = [(r, r[image_key], types, hn, cfg.seed) for r in rows]
            results = pool.map(_hn_task, tasks, chunksize=8) if pool else [_hn_task(t) for t in tasks]
            out_rows, per_type, shortfall, skipped = [], {}, {}, {}
            for r, res in zip(rows, results):
                stratum = {"split": r.get("split"), "complexity": r.get("complexity", atom_count(
                    SceneGraph.from_dict(r["graph"])))}
                out_rows.append({"query_id": r["query_id"], "gt": r.get("caption") or r["text"],
                                 "image_id": r[image_key], "stratum": stratum, **res})
                for n in res["negatives"]:
                    per_type[n["hn_type"]] = per_type.get(n["hn_type"], 0) + 1
                for k, v in res["shortfall"].items():
                    shortfall[k] = shortfall.get(k, 0) + v
                for k in res["skipped"]:
                    skipped[k] = skipped.get(k, 0) + 1
            write_jsonl(out_dir / name, check_rows(name, out_rows))
            counts[name] = {"queries": len(out_rows), "negatives": dict(sorted(per_type.items())),
                            "shortfall": dict(sorted(shortfall.items())), "skipped": dict(sorted(skipped.items()))}
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return counts


def _stratum_of(d: Mapping, hn_type: Optional[str] = None) -> Stratum:
    return Stratum(d.get("split"), d.get("complexity"), hn_type)


def _stratum_dict(s: Stratum) -> dict:
    return {"split": s.split, "complexity": s.complexity, "hn_type": s.hn_type}


def _metric_rows(report: MetricsReport, set_name: str) -> list[dict]:
    return [{"scorer": report.scorer, "set": set_name, "stratum": _stratum_dict(r.stratum),
             "direction": r.direction.value, **r.values()} for r in report.rows]


def _scorer_tables(cfg: PipelineConfig, items, ctx: RetrievalSet) -> list[tuple[str, Callable]]:
    out = []
    refs = reference_scorers(cfg.seed)
    for name in cfg.scorers:
        key = "random(%d)" % cfg.seed if name == "random" else name
        if key not in refs:
            raise ConfigError(f"unknown scorer {name!r}")
        out.append((refs[key].name, lambda items, ctx, s=refs[key]: score_items(items, s, ctx)))
    for name, path in sorted(cfg.score_files.items()):
        table = load_scores(path)
        out.append((name, lambda items, ctx, t=table: t))
    return out


def _stage_eval(cfg: PipelineConfig) -> dict:
    out_dir = cfg.paths.out
    metric_rows: list[dict] = []
    pairs: dict[tuple[str, str], str] = {}
    counts: dict[str, Any] = {}

    def record_pairs(items, ctx: RetrievalSet):
        for it in items:
            for c in it.candidate_ids:
                img, txt = it.pair(c)
                pairs[(img, txt)] = ctx.texts[txt]

    def hn_set(name: str, mode: str):
        rows = list(read_jsonl(out_dir / f"{name}.jsonl"))
        strata = {r["query_id"]: _stratum_of(r["stratum"]) for r in rows}
        ctx = assemble_hn_sets(rows, strata, mode)
        counts[f"{name}:{mode}"] = {"items": len(ctx.items), "excluded": ctx.excluded,
                                    "duplicates": ctx.duplicates}
        if not ctx.items:
            return
        record_pairs(ctx.items, ctx)
        for scorer, make in _scorer_tables(cfg, ctx.items, ctx):
            table = make(ctx.items, ctx)
            metric_rows.extend(_metric_rows(evaluate_items(ctx.items, table, scorer), f"{name}:{mode}"))

    hn_set("hn_systematicity", "per_type")
    hn_set("hn_productivity", "per_type")
    hn_set("hn_productivity", "combined")

    for name, text_key, strat in (("systematicity", "text", lambda r: Stratum(r["split"])),
                                  ("productivity", "caption", lambda r: Stratum(None, r["complexity"]))):
        rows = list(read_jsonl(out_dir / f"{name}.jsonl"))
        texts = {r["query_id"]: r[text_key] for r in rows}
        ctx = raw_context(texts)
        groups: dict[Stratum, list[RawRecord]] = {}
        for r in rows:
            groups.setdefault(strat(r), []).append(RawRecord(r["query_id"], strat(r)))
        folds = {}
        for stratum in sorted(groups, key=Stratum._key):
            try:
                folds.update(assemble_raw_folds(groups[stratum], cfg.fold_size, cfg.fold_cap, cfg.seed,
                                                tuple(Direction)))
            except InsufficientData:
                metric_rows.append({"scorer": "-", "set": f"raw_{name}", "stratum": _stratum_dict(stratum),
                                    "status": "insufficient data", "records": len(groups[stratum])})
        counts[f"raw_{name}"] = {"strata": len(folds), "folds": sum(len(v) for v in folds.values())}
        if not folds:
            continue
        items = [it for fl in folds.values() for f in fl for it in f]
        record_pairs(items, ctx)
        for scorer, make in _scorer_tables(cfg, items, ctx):
            table = make(items, ctx)
            metric_rows.extend(_metric_rows(kfold_summary(folds, table, scorer), f"raw_{name}"))

    write_jsonl(out_dir / "metrics.jsonl", check_rows("metrics.jsonl", metric_rows))
    write_jsonl(out_dir / "eval_pairs.jsonl", check_rows("eval_pairs.jsonl", (
        {"image_id": i, "text_id": t, "text": s} for (i, t), s in sorted(pairs.items()))))
    return {"metric_rows": len(metric_rows), "pairs": len(pairs), "sets": counts}


def reports_from_rows(rows: Iterable[Mapping], set_name: str) -> list[MetricsReport]:
    by_scorer: dict[str, MetricsReport] = {}
    for row in rows:
        if row["set"] != set_name or "recall@1" not in row:
            continue
        rep = by_scorer.setdefault(row["scorer"], MetricsReport(row["scorer"]))
        s = row["stratum"]
        recall = {k: row[f"recall@{k}"] for k in (1, 3, 5)}
        rep.rows.append(MetricRow(Stratum(s.get("split"), s.get("complexity"), s.get("hn_type")),
                                  Direction(row["direction"]), row["items"], recall, row["avg_recall@k"],
                                  row.get("r1_fold_mean"), row.get("r1_fold_std"), row.get("folds")))
    return list(by_scorer.values())


def _stage_report(cfg: PipelineConfig) -> dict:
    rows = list(read_jsonl(cfg.paths.out / "metrics.jsonl"))
    sets = sorted({r["set"] for r in rows})
    csv_parts, md = [], ["# Retrieval report", ""]
    for s in sets:
        reports = reports_from_rows(rows, s)
        if not reports:
            continue
        csv_parts.append(report_csv(reports, s, header=not csv_parts))
        axis = "complexity" if "productivity" in s else "split"
        if s.startswith("raw_"):
            for d in Direction:
                md.append(report_markdown(reports, "r1_fold_mean", axis, d, f"{s} {d.value}: mean Recall@1 over folds"))
                md.append(report_markdown(reports, "r1_fold_std", axis, d, f"{s} {d.value}: std of Recall@1 over folds"))
        else:
            types = sorted({r.stratum.hn_type for rep in reports for r in rep.rows})
            for t in types:
                sub = [MetricsReport(rep.scorer, [r for r in rep.rows if r.stratum.hn_type == t]) for rep in reports]
                md.append(report_markdown(sub, "recall@1", axis, title=f"{s} {t}: Recall@1"))
    skipped = [r for r in rows if r.get("status")]
    if skipped:
        md += ["### Skipped strata", ""]
        md += [f"- {r['set']} {Stratum(**{k: v for k, v in r['stratum'].items()}).label}: {r['status']} "
               f"({r['records']} records)" for r in skipped]
        md.append("")
    write_text(cfg.paths.out / "report.csv", "".join(csv_parts) or "set,scorer,stratum,direction,metric,value\n")
    write_text(cfg.paths.out / "report.md", "\n".join(md))
    return {"sets": len(sets)}


STAGE_FUNCS: dict[str, Callable[[PipelineConfig], dict]] = {
    "parse": _stage_parse, "index": _stage_index, "split": _stage_split, "sample": _stage_sample,
    "caption": _stage_caption, "hardneg": _stage_hardneg, "eval": _stage_eval, "report": _stage_report,
}


# -- driver --------------------------------------------------------------------------

@dataclass
class StageResult:
    stage: str
    status: str  # "ran" | "skipped (up-to-date)"
    counts: dict = field(default_factory=dict)


@dataclass
class RunSummary:
    results: list[StageResult] = field(default_factory=list)

    def counts(self, stage: str) -> dict:
        for r in self.results:
            if r.stage == stage:
                return r.counts
        raise KeyError(stage)

    def render(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{r.stage}: {r.status}")
            if r.stage == "split" and r.counts.get("splits"):
                lines.append("  " + ", ".join(f"{k}={v}" for k, v in r.counts["splits"].items()))
        return "\n".join(lines)


def _quarantine(cfg: PipelineConfig, stage: str, exc: BaseException) -> None:
    qdir = cfg.paths.out / "quarantine" / stage
    for name in ARTIFACTS[stage]:
        f = cfg.paths.out / name
        if f.exists():
            dest = qdir / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(f), dest)
    mp = manifest_path(cfg, stage)
    if mp.exists():
        mp.unlink()
    report = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    write_text(cfg.paths.out / "errors" / f"{stage}.json", json.dumps(report, indent=2, sort_keys=True) + "\n")


def run(cfg: PipelineConfig, stages: Optional[Sequence[str]] = None, force: bool = False) -> RunSummary:
    """Run ``stages`` (default: the configured ones) in pipeline order."""
    wanted = list(stages if stages is not None else cfg.stages)
    cfg.validate(wanted)
    ordered = [s for s in STAGES if s in wanted]
    cfg.paths.out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary()
    for stage in ordered:
        inputs = _hash_inputs(stage_inputs(cfg, stage))
        if not force and _up_to_date(cfg, stage, inputs):
            m = json.loads(manifest_path(cfg, stage).read_text(encoding="utf-8"))
            summary.results.append(StageResult(stage, "skipped (up-to-date)", m.get("counts", {})))
            log.info("%s: skipped (up-to-date)", stage)
            continue
        log.info("%s: running", stage)
        try:
            counts = STAGE_FUNCS[stage](cfg)
        except BaseException as exc:
            _quarantine(cfg, stage, exc)
            raise
        manifest = {"stage": stage, "settings": cfg.stage_settings(stage), "inputs": inputs,
                    "outputs": {name: sha256_file(cfg.paths.out / name) for name in ARTIFACTS[stage]},
                    "counts": counts}
        write_text(manifest_path(cfg, stage), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        summary.results.append(StageResult(stage, "ran", counts))
    return summary
