"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible without ``-s``) and
then asserts, so the summary survives in the tee'd test log.
"""

import filecmp
import os
import random
import time
from contextlib import contextmanager

import pytest

from compforge.captions import template_caption
from compforge.errors import EmptyParse, InsufficientData
from compforge.hardneg import HNConfig, HNType, generate
from compforge.index import CaptionRecord, FilterPolicy, build_seen_index, classify_split, filter_records
from compforge.io import read_jsonl
from compforge.model import Region, SceneGraph, atom_count, canonically_equal
from compforge.parser import parse_caption
from compforge.pipeline import fixture_config, grounded_subgraph, parse_texts, run
from compforge.retrieval import RetrievalItem, ScoreTable, Stratum, kfold_count, kfold_summary, recall_at_k
from compforge.sampler import WalkConfig, derive_seed, random_walk, sample_image
from compforge.scorers import RandomScorer, raw_context, score_items

from .conftest import ADJECTIVES, NOUNS, RELATIONS, graph
from .oracles import claim_is_true, holds, split_oracle, subgraph_key, walk_support


@contextmanager
def criterion(capsys, number, title):
    """Print one PASS/FAIL line for the enclosed checks, then re-raise any failure."""
    start = time.perf_counter()
    status, detail = "PASS", ""
    try:
        yield
    except BaseException as exc:
        status, detail = "FAIL", f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        raise
    finally:
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {status} {title} in {time.perf_counter() - start:.2f}s{detail}")


@pytest.fixture(scope="module")
def fixture_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept") / "a"
    start = time.perf_counter()
    run(fixture_config(out, seed=17))
    return out, time.perf_counter() - start


def random_graph(rng, max_objects, nouns, adjectives, relations):
    n = rng.randint(1, max_objects)
    objects = [(i + 1, rng.choice(nouns), rng.sample(adjectives, rng.randint(0, min(2, len(adjectives)))))
               for i in range(n)]
    pairs = [(s, o) for s in range(1, n + 1) for o in range(1, n + 1) if s != o]
    edges = [(s, rng.choice(relations), o) for s, o in rng.sample(pairs, rng.randint(0, min(3, len(pairs))))]
    return graph(objects, edges)


def test_split_partition(capsys):
    rng = random.Random(1)
    # small vocabularies so that all three labels occur often
    vocab = (["dog", "cat", "bed", "lamp"], ["black", "white", "small"], ["on", "near"])
    labels = set()
    with criterion(capsys, 1, "split labels agree with the set-definition oracle on 1000 corpora"):
        start = time.perf_counter()
        disagreements = 0
        for _ in range(1000):
            train = [random_graph(rng, 3, *vocab) for _ in range(rng.randint(0, 10))]
            test = [random_graph(rng, 3, *vocab) for _ in range(rng.randint(1, 10))]
            index = build_seen_index(train)
            for t in test:
                got = classify_split(t, index).value
                labels.add(got)
                disagreements += got != split_oracle(t, train)
        elapsed = time.perf_counter() - start
        assert disagreements == 0
        assert labels == {"SC", "UC", "UA"}
        assert elapsed < 10, elapsed


def test_filter_constants(capsys):
    dog = graph([(1, "dog", ["black"])])
    single = graph([(1, "dog", [])])

    def passes(w, h, size=(600, 600), g=dog, policy=FilterPolicy()):
        rec = (Region(0, 0, w, h), g, CaptionRecord("c", "text", g, None))
        return len(list(filter_records([rec], policy, size))) == 1

    strip = FilterPolicy(aspect_ratio_range=(1e-9, 1e9), min_image_fraction=1e-9)
    cases = [
        (passes(39999, 1, (40000, 10), policy=strip), False),
        (passes(40000, 1, (40000, 10), policy=strip), True),
        (passes(40001, 1, (40001, 10), policy=strip), True),
        (passes(200, 200), True),
        (passes(199, 201), False),
        # 10% of 600 x 666 is 39960, of 633 x 633 it is 40068.9
        (passes(200, 200, (600, 666)), True),
        (passes(200, 200, (633, 633)), False),
        (passes(200, 400), True),
        (passes(200, 401), False),
        (passes(400, 200), True),
        (passes(401, 200), False),
        (passes(300, 300, g=single), False),
        (passes(300, 300, g=graph([(1, "dog", []), (2, "cat", [])])), False),
        (passes(300, 300, g=graph([(1, "dog", []), (2, "cat", [])], [(1, "on", 2)])), True),
    ]
    with criterion(capsys, 2, "filter boundaries for area, image fraction, aspect ratio and graph size"):
        assert [got for got, _ in cases] == [want for _, want in cases]


def test_random_walk(capsys):
    g = graph([(1, "dog", ["black"]), (2, "bed", ["white"]), (3, "lamp", []), (4, "cat", [])],
              [(1, "on", 2), (3, "next to", 2)])
    with criterion(capsys, 3, "10k walks per n in {4,5,6} on an 8-atom graph cover exactly the reachable set"):
        assert atom_count(g) == 8
        start = time.perf_counter()
        for n in (4, 5, 6):
            support = set()
            for seed in range(10_000):
                sub = random_walk(g, WalkConfig(n=n, seed=derive_seed(n, seed))).subgraph
                assert atom_count(sub) == n
                for o in sub.objects:
                    assert o.atom == g.node(o.id).atom
                    assert set(o.attributes) <= set(g.node(o.id).attributes)
                assert set(sub.relationships) <= set(g.relationships)
                support.add(subgraph_key(sub, g))
            assert support == walk_support(g, n), n
        elapsed = time.perf_counter() - start
        assert elapsed < 30, elapsed


def test_template_round_trip(capsys, fixture_graphs, lexicon):
    rng = random.Random(4)
    images = sorted(fixture_graphs)
    subs = []
    while len(subs) < 500:
        parent = fixture_graphs[rng.choice(images)]
        n = rng.randint(2, 8)
        if atom_count(parent) < n:
            continue
        subs += sample_image(parent, [n], WalkConfig(seed=rng.getrandbits(32), samples_per_image_per_n=1))
    with criterion(capsys, 4, "template captions of 500 fixture subgraphs parse back to the same graph"):
        failures = [s for s in subs[:500]
                    if not canonically_equal(parse_caption(template_caption(s.subgraph), lexicon), s.subgraph)]
        assert not failures, template_caption(failures[0].subgraph)


def _conjunct_splits(text, size, lexicon):
    """Ways to cut a compound foil at an "and" into two captions of the query's size."""
    words = text.split()
    for i, w in enumerate(words):
        if w.lower() != "and":
            continue
        halves = [" ".join(words[:i]), " ".join(words[i + 1:])]
        try:
            graphs = [parse_caption(h, lexicon) for h in halves]
        except EmptyParse:
            continue
        if all(atom_count(g) == size for g in graphs):
            yield graphs


def _independently_false(neg, caption, parent, lexicon):
    """Checks that rely only on the emitted text and the brute-force oracle."""
    if neg.hn_type in (HNType.ATOM, HNType.SWAP):
        return not holds(parse_caption(neg.text, lexicon), parent)
    if neg.hn_type is HNType.COMP:
        # the foil pair is false only if neither conjunct is in the image
        splits = list(_conjunct_splits(neg.text, atom_count(parse_caption(caption, lexicon)), lexicon))
        return bool(splits) and all(not holds(g, parent) for graphs in splits for g in graphs)
    return True


def test_hardneg_soundness(capsys, fixture_out, fixture_graphs, wordnet, lexicon):
    out, _ = fixture_out
    plans = [("hn_systematicity.jsonl", "systematicity.jsonl", "image_id", HNConfig.systematicity()),
             ("hn_productivity.jsonl", "productivity.jsonl", "parent_image_id", HNConfig.productivity())]
    checked = {t: 0 for t in HNType}
    with criterion(capsys, 5, "every emitted negative of all four types is false of its image"):
        assert (HNConfig.systematicity().count(HNType.ATOM), HNConfig.systematicity().count(HNType.COMP)) == (4, 6)
        assert {HNConfig.productivity().count(t) for t in (HNType.ATOM, HNType.SWAP, HNType.NEG)} == {5}
        for hn_name, query_name, image_key, hn in plans:
            queries = {r["query_id"]: r for r in read_jsonl(out / query_name)}
            for row in read_jsonl(out / hn_name):
                q = queries[row["query_id"]]
                parent = fixture_graphs[q[image_key]]
                text = q.get("caption") or q["text"]
                sub = grounded_subgraph(SceneGraph.from_dict(q["graph"]), parent)
                emitted = {}
                for neg in row["negatives"]:
                    emitted.setdefault(neg["hn_type"], []).append(neg["text"])
                for type_name, texts in emitted.items():
                    t = HNType(type_name)
                    assert len(texts) + row["shortfall"].get(type_name, 0) == hn.count(t)
                    # regenerate to recover each negative's claim
                    negs = generate(t, text, sub, parent, wordnet, lexicon, hn.count(t),
                                    derive_seed(17, hn.seed, row["query_id"], type_name))
                    assert [n.text for n in negs] == texts
                    for neg in negs:
                        assert not claim_is_true(neg.claim, parent), (text, neg.text)
                        assert _independently_false(neg, text, parent, lexicon), (text, neg.text)
                        checked[t] += 1
        assert all(checked.values()), checked


def test_exemplars(capsys, fixture_graphs, wordnet, lexicon):
    from compforge.hardneg import hn_atom_candidates, hn_comp_candidates, hn_swap_candidates

    def query(caption, image_id):
        parent = fixture_graphs[image_id]
        return caption, grounded_subgraph(parse_caption(caption, lexicon), parent), parent

    with criterion(capsys, 6, "the three worked hard-negative examples are generated"):
        cap, sub, parent = query("a grill on top of the porch", "img001")
        assert "a grill underneath the porch" in [n.text for n in hn_atom_candidates(cap, sub, parent, wordnet, lexicon)]
        cap, sub, parent = query("a pink car", "img002")
        assert "a blue car and a pink toy" in [n.text for n in hn_comp_candidates(cap, sub, parent, wordnet, lexicon)]
        cap, sub, parent = query("There is a dog on the bed and also a nightstand", "img003")
        assert "There is a nightstand on the dog and also a bed" in [
            n.text for n in hn_swap_candidates(cap, sub, parent, lexicon)]


def test_metrics(capsys, fixture_out):
    out, _ = fixture_out
    rows = list(read_jsonl(out / "metrics.jsonl"))
    items = [RetrievalItem(f"q{i}", "c0", tuple(f"c{j}" for j in range(5))) for i in range(10_000)]
    with criterion(capsys, 7, "recall is monotone, oracle is perfect, random is at chance, bag-of-words fails swaps"):
        for r in rows:
            assert r["recall@1"] <= r["recall@3"] <= r["recall@5"], r
        oracle = [r for r in rows if r["scorer"] == "oracle"]
        assert oracle and all(r["recall@1"] == 1.0 for r in oracle)
        swaps = [r for r in rows if r["scorer"] == "bag-of-words" and r["stratum"]["hn_type"] == "Swap"]
        assert swaps and all(r["recall@1"] == 0.0 for r in swaps)
        chance = recall_at_k(items, score_items(items, RandomScorer(17), raw_context({})), 1)
        assert abs(chance - 0.2) <= 0.012, chance


def test_kfold(capsys):
    fold = [RetrievalItem(f"q{i}", "g", ("g", "x")) for i in range(6)]
    scores = ScoreTable({(f"q{i}", c): float(i % 2 == 0 and c == "g") for i in range(6) for c in ("g", "x")})
    with criterion(capsys, 8, "fold counts 1000/3710/40000 -> error/2/20 and zero spread on identical folds"):
        with pytest.raises(InsufficientData):
            kfold_count(1000, 1855)
        assert (kfold_count(3710, 1855), kfold_count(40000, 1855)) == (2, 20)
        row = kfold_summary({Stratum(): [fold] * 4}, scores).rows[0]
        assert row.folds == 4 and row.fold_std == 0.0 and row.fold_mean == pytest.approx(0.5)


def test_determinism(capsys, fixture_out, tmp_path):
    first, elapsed = fixture_out
    second = tmp_path / "b"
    with criterion(capsys, 9, "two seed-17 fixture runs give byte-identical JSONL, each under 60 s"):
        start = time.perf_counter()
        run(fixture_config(second, seed=17))
        again = time.perf_counter() - start
        names = sorted(p.relative_to(first) for p in first.rglob("*.jsonl"))
        assert names == sorted(p.relative_to(second) for p in second.rglob("*.jsonl"))
        _, mismatch, errors = filecmp.cmpfiles(first, second, [str(n) for n in names], shallow=False)
        assert not mismatch and not errors, mismatch + errors
        assert max(elapsed, again) < 60, (elapsed, again)


def _synthetic_captions(count):
    rng = random.Random(10)
    return [template_caption(random_graph(rng, 3, NOUNS, ADJECTIVES, RELATIONS)) for _ in range(count)]


def _parse_and_index(texts, jobs):
    start = time.perf_counter()
    graphs = parse_texts(texts, jobs=jobs)
    build_seen_index(g for g in graphs if g is not None)
    return time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.xfail(os.cpu_count() is not None and os.cpu_count() < 4, strict=True,
                   reason="4-worker scaling cannot be shown with fewer than 4 CPU cores")
def test_throughput(capsys):
    texts = _synthetic_captions(100_000)
    with criterion(capsys, 10, f"parse and index 100k captions under 60 s, 4 workers scale within 30% "
                               f"({os.cpu_count()} cores)"):
        single = _parse_and_index(texts, 1)
        assert single < 60, single
        four = _parse_and_index(texts, 4)
        speedup = single / four
        # linear within 30% means at least 70% of the ideal fourfold speedup
        assert speedup >= 0.7 * 4, f"single {single:.1f}s, four workers {four:.1f}s, speedup {speedup:.2f}"
