"""``forge`` command line."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from .errors import ForgeError, ValidationError
from .hardneg import HNConfig, HNType
from .index import (CaptionRecord, FilterPolicy, FilterStats, SeenIndex, build_seen_index, classify_split,
                    filter_records)
from .io import read_jsonl, read_scene_graphs, write_jsonl, write_text
from .lexical import WordNetResource
from .model import Region, SceneGraph
from .parser import Lexicon
from .pipeline import (STAGES, PipelineConfig, fixture_config, negatives_for_row, parse_texts, run)
from .sampler import WalkConfig, crop_and_filter, sample_image
from .retrieval import (assemble_hn_sets, evaluate_items, load_scores, report_csv, report_markdown)
from .scorers import reference_scorers, score_items

EXIT_OK, EXIT_FAILURE, EXIT_VALIDATION = 0, 1, 2


def _config(config: Optional[str], seed: Optional[int], jobs: Optional[int], out: Optional[str]) -> PipelineConfig:
    cfg = PipelineConfig.from_toml(config) if config else fixture_config()
    if seed is not None:
        cfg.seed = seed
    if jobs is not None:
        cfg.jobs = jobs
    if out is not None:
        cfg.paths.out = Path(out)
    return cfg


def _common(f):
    f = click.option("--out", type=click.Path(), help="Output directory (or file for standalone modes).")(f)
    f = click.option("--jobs", type=int, default=None, help="Worker processes.")(f)
    f = click.option("--seed", type=int, default=None, help="Global seed.")(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None,
                     help="TOML config; defaults to the bundled fixture settings.")(f)
    return f


@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose: int) -> None:
    """Build compositional retrieval benchmarks from scene graphs."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


def _print_summary(summary) -> None:
    click.echo(summary.render())


@cli.command("run")
@_common
@click.option("--stages", default=None, help="Comma-separated subset of stages.")
@click.option("--force", is_flag=True, help="Rerun stages even when up to date.")
def run_cmd(config, seed, jobs, out, stages, force):
    """Run the pipeline end to end."""
    cfg = _config(config, seed, jobs, out)
    wanted = stages.split(",") if stages else None
    _print_summary(run(cfg, wanted, force))


def _stage_command(stage: str, doc: str):
    @_common
    @click.option("--force", is_flag=True)
    def cmd(config, seed, jobs, out, force):
        cfg = _config(config, seed, jobs, out)
        _print_summary(run(cfg, [stage], force))

    cmd.__doc__ = doc
    cli.command(stage)(cmd)


for _stage, _doc in [("caption", "Caption sampled subgraphs."),
                     ("report", "Write CSV and Markdown tables from computed metrics.")]:
    _stage_command(_stage, _doc)


@cli.command("index")
@_common
@click.option("--train", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: parsed training captions (JSONL); writes the index into --out.")
@click.option("--force", is_flag=True)
def index_cmd(config, seed, jobs, out, train, force):
    """Build the seen atom/compound index from parsed training captions."""
    if train is None:
        _print_summary(run(_config(config, seed, jobs, out), ["index"], force))
        return
    index = build_seen_index(read_jsonl(train), Path(train).name)
    index.save(out or "index")
    click.echo(f"{len(index.atoms)} atoms, {len(index.compounds)} compounds from {index.record_count} records"
               f" ({index.skipped} skipped) -> {out or 'index'}")


@cli.command("split")
@_common
@click.option("--test", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: parsed test captions (JSONL); writes split labels to --out.")
@click.option("--index", "index_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--graphs", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scene graphs supplying image sizes for region checks.")
@click.option("--force", is_flag=True)
def split_cmd(config, seed, jobs, out, test, index_dir, graphs, force):
    """Filter test captions and label them SC, UC or UA."""
    if test is None:
        _print_summary(run(_config(config, seed, jobs, out), ["split"], force))
        return
    if index_dir is None:
        raise click.UsageError("--index is required with --test")
    index = SeenIndex.load(index_dir)
    sizes = {k: g.image_size for k, g in read_scene_graphs(graphs).items()} if graphs else {}
    records = []
    for row in read_jsonl(test):
        region = Region(*row["region"]) if graphs and row.get("region") else None
        records.append((region, SceneGraph.from_dict(row["graph"]),
                        CaptionRecord(row["caption_id"], row["text"], source_image_id=row.get("image_id"))))
    stats = FilterStats()
    rows = [{"caption_id": c.caption_id, "split": classify_split(g, index).value}
            for _, g, c in filter_records(records, FilterPolicy(), sizes, stats)]
    write_jsonl(out or "splits.jsonl", rows)
    tally = {k: sum(r["split"] == k for r in rows) for k in ("SC", "UC", "UA")}
    click.echo(" ".join(f"{k}={v}" for k, v in tally.items()) + f" (filtered {stats.seen - stats.kept})")


def _complexity_range(text: str) -> tuple[int, ...]:
    lo, sep, hi = text.partition("..")
    try:
        return tuple(range(int(lo), int(hi) + 1)) if sep else tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise click.BadParameter(f"expected 'a..b' or a comma list, got {text!r}") from exc


@cli.command("sample")
@_common
@click.option("--graphs", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: scene graphs to sample from; writes subgraphs to --out.")
@click.option("--n", "n_range", default="4..12", show_default=True)
@click.option("--per-image", type=int, default=4, show_default=True)
@click.option("--force", is_flag=True)
def sample_cmd(config, seed, jobs, out, graphs, n_range, per_image, force):
    """Sample fixed-complexity subgraphs by random walk."""
    if graphs is None:
        _print_summary(run(_config(config, seed, jobs, out), ["sample"], force))
        return
    walk = WalkConfig(seed=seed or 0, samples_per_image_per_n=per_image)
    rows = []
    for image_id, g in sorted(read_scene_graphs(graphs).items()):
        for s in crop_and_filter(sample_image(g, _complexity_range(n_range), walk), FilterPolicy(), walk):
            rows.append({"query_id": f"{image_id}#n{s.complexity}#{s.sample_index}", **s.to_dict()})
    write_jsonl(out or "subgraphs.jsonl", rows)
    click.echo(f"{len(rows)} subgraphs -> {out or 'subgraphs.jsonl'}")


@cli.command("parse")
@_common
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: caption JSONL/TSV to parse into --out (a JSONL file).")
@click.option("--lexicon", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--force", is_flag=True)
def parse_cmd(config, seed, jobs, out, in_path, lexicon, force):
    """Parse captions into scene graphs."""
    if in_path is None:
        cfg = _config(config, seed, jobs, out)
        _print_summary(run(cfg, ["parse"], force))
        return
    from .io import read_captions

    records = list(read_captions(in_path))
    graphs = parse_texts([r.text for r in records], Path(lexicon) if lexicon else None, jobs or 1)
    rows = [{"caption_id": r.caption_id, "text": r.text, "graph": g} for r, g in zip(records, graphs) if g]
    target = out or "parsed.jsonl"
    write_jsonl(target, rows)
    click.echo(f"parsed {len(rows)} of {len(records)} captions -> {target}")


@cli.command("hardneg")
@_common
@click.option("--type", "types", multiple=True, type=click.Choice(["atom", "comp", "swap", "neg"]),
              help="Negative type (repeatable). Standalone mode only.")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: rows with query_id, caption/text, graph and image_id/parent_image_id.")
@click.option("--graphs", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--wordnet", type=click.Path(), default=None)
@click.option("--counts", type=click.Choice(["systematicity", "productivity"]), default="productivity")
@click.option("--force", is_flag=True)
def hardneg_cmd(config, seed, jobs, out, types, in_path, graphs, wordnet, counts, force):
    """Generate verified hard negatives."""
    if in_path is None:
        cfg = _config(config, seed, jobs, out)
        if wordnet:
            cfg.paths.wordnet = Path(wordnet)
        _print_summary(run(cfg, ["hardneg"], force))
        return
    if not graphs:
        raise click.UsageError("--graphs is required with --in")
    wn = WordNetResource.load(wordnet)
    lexicon = Lexicon.load()
    parents = read_scene_graphs(graphs)
    hn = HNConfig.systematicity(seed or 0) if counts == "systematicity" else HNConfig.productivity(seed or 0)
    chosen = [HNType(t.capitalize()) for t in types] or (
        [HNType.ATOM, HNType.COMP] if counts == "systematicity" else [HNType.ATOM, HNType.SWAP, HNType.NEG])
    rows = []
    for row in read_jsonl(in_path):
        image_id = row.get("parent_image_id") or row.get("image_id")
        if image_id not in parents:
            raise ValidationError(f"query {row.get('query_id')}: unknown image {image_id!r}")
        res = negatives_for_row(row, parents[image_id], wn, lexicon, chosen, hn, seed or 0)
        rows.append({"query_id": row["query_id"], "gt": row.get("caption") or row["text"], **res})
    target = out or "hn.jsonl"
    write_jsonl(target, rows)
    click.echo(f"{sum(len(r['negatives']) for r in rows)} negatives for {len(rows)} queries -> {target}")


@cli.command("eval")
@_common
@click.option("--hn", "hn_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Standalone: hard-negative rows to evaluate.")
@click.option("--scores", "score_paths", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Score file(s): JSONL triples, .npz matrix or embeddings.")
@click.option("--scorer", "scorers", multiple=True, type=click.Choice(["oracle", "random", "bag-of-words"]))
@click.option("--mode", type=click.Choice(["per_type", "combined"]), default="per_type")
@click.option("--force", is_flag=True)
def eval_cmd(config, seed, jobs, out, hn_path, score_paths, scorers, mode, force):
    """Score retrieval sets and compute Recall@K."""
    if hn_path is None:
        cfg = _config(config, seed, jobs, out)
        if scorers:
            cfg.scorers = tuple(scorers)
        for p in score_paths:
            cfg.score_files[Path(p).stem] = Path(p)
        _print_summary(run(cfg, ["eval"], force))
        return
    rows = list(read_jsonl(hn_path))
    ctx = assemble_hn_sets(rows, {}, mode)
    refs = reference_scorers(seed or 0)
    reports = []
    for name in scorers or (() if score_paths else ("oracle", "random", "bag-of-words")):
        s = refs[f"random({seed or 0})" if name == "random" else name]
        reports.append(evaluate_items(ctx.items, score_items(ctx.items, s, ctx), s.name))
    for p in score_paths:
        reports.append(evaluate_items(ctx.items, load_scores(p), Path(p).stem))
    if out:
        write_text(Path(out).with_suffix(".csv"), report_csv(reports))
        write_text(Path(out).with_suffix(".md"), report_markdown(reports, axis="hn_type"))
    click.echo(report_markdown(reports, axis="hn_type"))


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="forge", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except click.Abort:
        return EXIT_FAILURE
    except ValidationError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        return EXIT_VALIDATION
    except ForgeError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        return EXIT_FAILURE
    except OSError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
