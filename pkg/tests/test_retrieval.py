import json
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from compforge.errors import InsufficientData, RecordError, ScoreCoverageError, ValidationError
from compforge.retrieval import (Direction, RawRecord, RetrievalItem, ScoreTable, Stratum, assemble_hn_sets,
                                 assemble_raw_folds, average_recall, evaluate_items, gt_rank, kfold_count,
                                 kfold_summary, load_scores, recall_at_k, report_csv, report_markdown)
from compforge.scorers import (BagOfWordsScorer, OracleScorer, RandomScorer, bow_cosine, raw_context,
                               reference_scorers, score_items)

from .oracles import expected_folds, pessimistic_rank


def item(cands=("g", "a", "b"), gt="g", q="q"):
    return RetrievalItem(q, gt, tuple(cands))


def table(q="q", **scores):
    return ScoreTable({(q, c): s for c, s in scores.items()})


class TestRank:
    def test_clear_winner(self):
        assert gt_rank(item(), table(g=0.9, a=0.1, b=0.2)) == 1

    def test_ties_rank_last(self):
        assert gt_rank(item(), table(g=0.5, a=0.5, b=0.1)) == 2
        assert gt_rank(item(), table(g=0.5, a=0.5, b=0.5)) == 3

    def test_missing_score(self):
        with pytest.raises(ScoreCoverageError):
            gt_rank(item(), table(g=0.5, a=0.1))

    def test_item_validation(self):
        with pytest.raises(ValidationError):
            item(cands=("a", "b"))
        with pytest.raises(ValidationError):
            item(cands=("g", "a", "a"))

    def test_text_to_image_pairs_are_flipped(self):
        it = RetrievalItem("t1", "i1", ("i1", "i2"), direction=Direction.TEXT_TO_IMAGE)
        scores = ScoreTable({("i1", "t1"): 0.2, ("i2", "t1"): 0.9})
        assert gt_rank(it, scores) == 2

    @given(st.dictionaries(st.sampled_from("gabcdef"), st.integers(0, 3).map(float), min_size=1))
    def test_rank_matches_sort_oracle(self, scores):
        scores.setdefault("g", 1.0)
        it = item(cands=tuple(sorted(scores)))
        assert gt_rank(it, table(**scores)) == pessimistic_rank(scores, "g")


class TestRecall:
    def test_examples(self):
        items = [item(q="q1"), item(q="q2")]
        scores = ScoreTable({("q1", "g"): 1, ("q1", "a"): 0, ("q1", "b"): 0,
                             ("q2", "g"): 0, ("q2", "a"): 1, ("q2", "b"): 2})
        assert recall_at_k(items, scores, 1) == 0.5
        assert recall_at_k(items, scores, 3) == 1.0

    def test_empty(self):
        with pytest.raises(InsufficientData):
            recall_at_k([], ScoreTable(), 1)

    def test_average(self):
        assert average_recall({1: 0.2, 3: 0.5, 5: 0.8}) == pytest.approx(0.5)

    @given(st.lists(st.lists(st.floats(0, 1), min_size=2, max_size=6), min_size=1, max_size=10))
    def test_monotone_and_saturating(self, rows):
        items, scores = [], {}
        for i, row in enumerate(rows):
            cands = tuple(f"c{j}" for j in range(len(row)))
            items.append(RetrievalItem(f"q{i}", "c0", cands))
            scores.update({(f"q{i}", c): s for c, s in zip(cands, row)})
        t = ScoreTable(scores)
        values = [recall_at_k(items, t, k) for k in range(1, 8)]
        assert values == sorted(values)
        assert recall_at_k(items, t, max(len(r) for r in rows)) == 1.0


class TestFolds:
    @pytest.mark.parametrize("size,expected", [(3710, 2), (40000, 20), (1855, 1), (37099, 19)])
    def test_fold_count(self, size, expected):
        assert kfold_count(size, 1855) == expected == expected_folds(size, 1855)

    def test_too_small(self):
        with pytest.raises(InsufficientData):
            kfold_count(1000, 1855)

    @given(st.integers(0, 5000), st.integers(1, 400), st.integers(1, 30))
    def test_formula(self, size, n, cap):
        want = expected_folds(size, n, cap)
        if want is None:
            with pytest.raises(InsufficientData):
                kfold_count(size, n, cap)
        else:
            assert kfold_count(size, n, cap) == want

    def test_folds_partition_a_sample(self):
        records = [RawRecord(f"r{i}", Stratum("SC")) for i in range(53)] + \
                  [RawRecord(f"u{i}", Stratum("UC")) for i in range(20)]
        folds = assemble_raw_folds(records, 10, cap=4, seed=3)
        assert [len(folds[s]) for s in sorted(folds)] == [4, 2]
        sc = folds[Stratum("SC")]
        members = [it.query_id for f in sc for it in f]
        assert len(members) == len(set(members)) == 40
        for f in sc:
            assert all(len(it.candidate_ids) == 10 for it in f)
        assert folds == assemble_raw_folds(records, 10, cap=4, seed=3)
        assert folds != assemble_raw_folds(records, 10, cap=4, seed=4)

    def test_fold_statistics(self):
        # two folds with Recall@1 of 0.4 and 0.6
        folds = {Stratum(): [[RetrievalItem(f"f{f}q{i}", "g", ("g", "x")) for i in range(5)] for f in range(2)]}
        wins = {0: 2, 1: 3}
        scores = {}
        for f in range(2):
            for i in range(5):
                q = f"f{f}q{i}"
                scores[(q, "g")] = 1.0 if i < wins[f] else 0.0
                scores[(q, "x")] = 0.5
        row = kfold_summary(folds, ScoreTable(scores)).rows[0]
        assert row.fold_mean == pytest.approx(0.5)
        assert row.fold_std == pytest.approx(0.1)
        assert row.folds == 2
        assert row.fold_std == pytest.approx(statistics.pstdev([0.4, 0.6]))

    def test_identical_folds_have_zero_std(self):
        fold = [RetrievalItem(f"q{i}", "g", ("g", "x")) for i in range(4)]
        scores = ScoreTable({(f"q{i}", c): s for i in range(4) for c, s in (("g", 1.0), ("x", 0.0))})
        row = kfold_summary({Stratum(): [fold, fold, fold]}, scores).rows[0]
        assert row.fold_std == 0.0 and row.fold_mean == 1.0


def hn_rows():
    return [
        {"query_id": "q1", "gt": "a black dog", "negatives": [
            {"text": "a white dog", "hn_type": "Atom", "provenance": ""},
            {"text": "dog a black", "hn_type": "Swap", "provenance": ""},
            {"text": "A black dog", "hn_type": "Atom", "provenance": ""}]},
        {"query_id": "q2", "gt": "a cat", "negatives": []},
    ]


class TestAssembly:
    def test_per_type(self):
        rs = assemble_hn_sets(hn_rows(), {"q1": Stratum("UC", 4)})
        assert [(it.stratum.label, it.candidate_ids) for it in rs.items] == [
            ("UC/n=4/Atom", ("q1::gt", "q1::neg0")), ("UC/n=4/Swap", ("q1::gt", "q1::neg1"))]
        assert rs.duplicates == 1 and rs.excluded == 1

    def test_combined(self):
        rs = assemble_hn_sets(hn_rows(), {}, mode="combined")
        assert [it.candidate_ids for it in rs.items] == [("q1::gt", "q1::neg0", "q1::neg1")]
        with pytest.raises(ValidationError):
            assemble_hn_sets(hn_rows(), {}, mode="mixed")


class TestScorers:
    def test_oracle_is_perfect(self):
        rs = assemble_hn_sets(hn_rows(), {})
        scores = score_items(rs.items, OracleScorer(), rs)
        assert recall_at_k(rs.items, scores, 1) == 1.0

    def test_bag_of_words_ties_on_swaps(self):
        rs = assemble_hn_sets(hn_rows(), {})
        scores = score_items(rs.items, BagOfWordsScorer(), rs)
        report = evaluate_items(rs.items, scores)
        assert report.row(Stratum(None, None, "Swap")).recall[1] == 0.0
        assert report.row(Stratum(None, None, "Atom")).recall[1] == 1.0

    def test_bow_cosine(self):
        assert bow_cosine("a b", "b a") == pytest.approx(1.0)
        assert bow_cosine("a", "b") == 0.0
        assert bow_cosine("", "a") == 0.0

    def test_random_is_pure(self):
        ctx = raw_context({"r": "x"})
        assert RandomScorer(7).score("i", "t", ctx) == RandomScorer(7).score("i", "t", ctx)
        assert RandomScorer(7).score("i", "t", ctx) != RandomScorer(8).score("i", "t", ctx)
        assert set(reference_scorers(7)) == {"oracle", "random(7)", "bag-of-words"}

    def test_random_near_chance(self):
        items = [RetrievalItem(f"q{i}", "c0", tuple(f"c{j}" for j in range(5))) for i in range(4000)]
        scores = score_items(items, RandomScorer(1), raw_context({}))
        assert abs(recall_at_k(items, scores, 1) - 0.2) < 0.025


class TestScoreFiles:
    def test_jsonl_round_trip(self, tmp_path):
        t = ScoreTable({("i", "t"): 0.25, ("i", "u"): -1.0})
        path = tmp_path / "s.jsonl"
        t.to_jsonl(path)
        again = load_scores(path)
        assert again.scores == t.scores

    def test_bad_jsonl(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(json.dumps({"query_id": "i"}) + "\n")
        with pytest.raises(RecordError):
            load_scores(path)

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            ScoreTable({("i", "t"): float("nan")})

    def test_matrix(self, tmp_path):
        path = tmp_path / "m.npz"
        ScoreTable.save_matrix(path, ["i1", "i2"], ["t1", "t2", "t3"], [[1, 2, 3], [4, 5, 6]])
        t = load_scores(path)
        assert t.get("i2", "t1") == 4.0 and len(t) == 6

    def test_embeddings(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_text("dim=2\ni1\t1 0\nt1\t2 0\nt2\t0 3\nz\t0 0\n")
        t = load_scores(path)
        assert t.get("i1", "t1") == pytest.approx(1.0)
        assert t.get("i1", "t2") == pytest.approx(0.0)
        assert t.get("i1", "z") == 0.0
        with pytest.raises(ScoreCoverageError):
            t.get("i1", "missing")

    def test_embedding_header(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_text("i1\t1 0\n")
        with pytest.raises(RecordError):
            load_scores(path)


class TestReports:
    def reports(self):
        items = [RetrievalItem("q1", "g", ("g", "x"), Stratum("SC", 4, "Atom")),
                 RetrievalItem("q2", "g", ("g", "x"), Stratum("UC", 5, "Atom")),
                 RetrievalItem("q3", "g", ("g", "x"), Stratum("UC", 4, "Atom"))]
        scores = ScoreTable({("q1", "g"): 1, ("q1", "x"): 0, ("q2", "g"): 0, ("q2", "x"): 1,
                             ("q3", "g"): 1, ("q3", "x"): 0})
        return [evaluate_items(items, scores, "toy")]

    def test_csv(self):
        text = report_csv(self.reports(), set_name="hn")
        lines = text.splitlines()
        assert lines[0] == "set,scorer,stratum,direction,metric,value"
        assert "hn,toy,SC/n=4/Atom,ImageToText,recall@1,1.0000" in lines

    def test_markdown_weighted_columns(self):
        md = report_markdown(self.reports(), axis="split")
        assert "| scorer | SC | UC |" in md
        assert "| toy | 1.000 | 0.500 |" in md
        md = report_markdown(self.reports(), axis="complexity", title="By n")
        assert md.startswith("### By n")
        assert "| toy | 1.000 | 0.000 |" in md

    def test_report_dict(self):
        d = self.reports()[0].to_dict()
        assert d["scorer"] == "toy" and len(d["rows"]) == 3
        assert d["rows"][0]["avg_recall@k"] == 1.0
