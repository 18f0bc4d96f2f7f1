import math

import pytest
from scipy import stats

from conftest import ScriptedRng
from innovnet.corpus_prep import Document
from innovnet.pair_builder import (AbstractTooShortError, PairExample,
                                   break_abstract, build_pairs,
                                   read_pairs_jsonl, read_split_csv,
                                   stratified_split, write_pairs_jsonl,
                                   write_split_csv)
from innovnet.rng import SeededRng


def abstract(n_sentences, doc_id="p1", year=2001):
    text = " ".join(f"Claim {doc_id} number {j} covers the method." for j in range(n_sentences))
    return Document(id=doc_id, year=year, source="patent", text=text)


class TestBreakAbstract:
    def test_three_sentences_forced_cut(self):
        doc = abstract(3)
        a, b = break_abstract(doc, ScriptedRng(ints=[1]))
        assert a == "Claim p1 number 0 covers the method."
        assert b == ("Claim p1 number 1 covers the method. "
                     "Claim p1 number 2 covers the method.")

    def test_two_sentences_rejected(self):
        with pytest.raises(AbstractTooShortError):
            break_abstract(abstract(2), SeededRng(0))

    def test_chunk_b_keeps_at_least_two_sentences(self):
        doc = abstract(5)
        rng = SeededRng(3)
        for _ in range(200):
            _, b = break_abstract(doc, rng)
            assert b.count("covers the method") >= 2

    def test_breakpoint_uniformity(self):
        # 10 sentences -> admissible cuts {1..8}
        doc = abstract(10)
        rng = SeededRng(17)
        counts = {i: 0 for i in range(1, 9)}
        for _ in range(10000):
            a, _ = break_abstract(doc, rng)
            counts[a.count("covers the method")] += 1
        _, p = stats.chisquare(list(counts.values()))
        assert p > 0.01


class TestBuildPairs:
    def test_two_abstracts_forced_negatives_swap(self):
        docs = [abstract(3, "pA"), abstract(3, "pB")]
        rng = ScriptedRng(ints=[1, 1], floats=[0.9, 0.9])  # both coins negative
        pairs = build_pairs(docs, 2001, rng)
        assert [p.label for p in pairs] == [0, 0]
        assert pairs[0].a_patent_id == "pA" and pairs[0].b_patent_id == "pB"
        assert pairs[1].a_patent_id == "pB" and pairs[1].b_patent_id == "pA"
        assert "pB" in pairs[0].b_text and "pA" in pairs[1].b_text

    def test_positive_pair_keeps_own_chunk(self):
        docs = [abstract(3, "pA"), abstract(3, "pB")]
        rng = ScriptedRng(ints=[1, 1], floats=[0.1, 0.9])
        pairs = build_pairs(docs, 2001, rng)
        assert pairs[0].label == 1
        assert pairs[0].a_patent_id == pairs[0].b_patent_id == "pA"

    def test_label_consistency_definitional(self):
        docs = [abstract(4, f"p{i}") for i in range(50)]
        pairs = build_pairs(docs, 2001, SeededRng(9))
        for p in pairs:
            assert (p.label == 1) == (p.a_patent_id == p.b_patent_id)

    def test_label_mean_binomial_bound(self):
        docs = [abstract(4, f"p{i}") for i in range(1000)]
        for seed in (1, 2, 3):
            pairs = build_pairs(docs, 2001, SeededRng(seed))
            mean = sum(p.label for p in pairs) / len(pairs)
            assert abs(mean - 0.5) <= 3.2905 * 0.5 / math.sqrt(len(pairs))

    def test_short_abstracts_filtered_and_year_respected(self):
        docs = [abstract(2, "short"), abstract(4, "ok1"), abstract(4, "ok2"),
                abstract(4, "wrong_year", year=1999)]
        pairs = build_pairs(docs, 2001, SeededRng(1))
        ids = {p.a_patent_id for p in pairs}
        assert ids == {"ok1", "ok2"}

    def test_single_eligible_abstract_is_error(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_pairs([abstract(4, "only"), abstract(2, "short")], 2001, SeededRng(0))

    def test_determinism(self):
        docs = [abstract(5, f"p{i}") for i in range(30)]
        assert build_pairs(docs, 2001, SeededRng(4)) == build_pairs(docs, 2001, SeededRng(4))


class TestStratifiedSplit:
    def make_pairs(self, n, label, year=2001):
        return [PairExample(year=year, a_text="a", b_text="b", label=label,
                            a_patent_id=f"x{i}{label}{year}",
                            b_patent_id=(f"x{i}{label}{year}" if label == 1 else "other"))
                for i in range(n)]

    def test_ten_pairs_five_per_label(self):
        pairs = self.make_pairs(5, 1) + self.make_pairs(5, 0)
        folds = stratified_split(pairs, 0.7, SeededRng(2))
        train = [a.pair_index for a in folds if a.fold == "train"]
        assert len(train) == 7
        train_labels = [pairs[i].label for i in train]
        assert train_labels.count(0) >= 3 and train_labels.count(1) >= 3

    def test_three_pairs_one_label(self):
        pairs = self.make_pairs(3, 1)
        folds = stratified_split(pairs, 0.7, SeededRng(3))
        assert sum(a.fold == "train" for a in folds) == 2

    def test_singleton_stratum_goes_to_train(self):
        pairs = self.make_pairs(1, 1) + self.make_pairs(8, 0)
        folds = stratified_split(pairs, 0.7, SeededRng(5))
        by_index = {a.pair_index: a.fold for a in folds}
        assert by_index[0] == "train"

    def test_within_one_of_target_per_stratum(self):
        rng = SeededRng(8)
        for trial in range(20):
            pairs = []
            for year in (2001, 2002):
                for label in (0, 1):
                    pairs.extend(self.make_pairs(2 + rng.randint(0, 40), label, year))
            folds = stratified_split(pairs, 0.7, rng.spawn(trial))
            strata = {}
            for a in folds:
                key = (pairs[a.pair_index].year, pairs[a.pair_index].label)
                tot, tr = strata.get(key, (0, 0))
                strata[key] = (tot + 1, tr + (a.fold == "train"))
            for (tot, tr) in strata.values():
                assert abs(tr - 0.7 * tot) <= 1.0

    def test_partition_every_pair_once(self):
        pairs = self.make_pairs(17, 0) + self.make_pairs(23, 1)
        folds = stratified_split(pairs, 0.7, SeededRng(6))
        assert sorted(a.pair_index for a in folds) == list(range(40))

    def test_determinism(self):
        pairs = self.make_pairs(20, 0) + self.make_pairs(20, 1)
        a = stratified_split(pairs, 0.7, SeededRng(7))
        b = stratified_split(pairs, 0.7, SeededRng(7))
        assert a == b

    def test_bad_train_frac(self):
        with pytest.raises(ValueError):
            stratified_split(self.make_pairs(5, 1), 1.0, SeededRng(0))


def test_file_roundtrips_byte_stable(tmp_path):
    docs = [abstract(5, f"p{i}") for i in range(40)]
    pairs = build_pairs(docs, 2001, SeededRng(11))
    folds = stratified_split(pairs, 0.7, SeededRng(12))

    p1, p2 = tmp_path / "pairs1.jsonl", tmp_path / "pairs2.jsonl"
    write_pairs_jsonl(pairs, p1)
    write_pairs_jsonl(build_pairs(docs, 2001, SeededRng(11)), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert read_pairs_jsonl(p1) == pairs

    s1 = tmp_path / "split.csv"
    write_split_csv(folds, s1)
    assert read_split_csv(s1) == folds
