import json

import pytest
from scipy import stats

from conftest import ScriptedRng
from innovnet.corpus_prep import (Document, chunk_corpus, chunk_document,
                                  filter_patent_abstracts, read_chunks_jsonl,
                                  read_documents_jsonl, split_sentences,
                                  write_chunks_jsonl, write_documents_jsonl)
from innovnet.rng import SeededRng

TWELVE_SENTENCES = (
    "The committee met on Tuesday. Dr. Smith presented the outlook. "
    "Inflation rose 0.4 percent in March. Members were concerned. "
    "Did the data support easing? Not yet. Policy remained unchanged! "
    "The vote was 9 to 1. Projections for growth were revised. "
    "Staff noted several risks. Markets expected cuts. The meeting adjourned"
)


def make_doc(text, doc_id="d1", year=2000, source="fomc"):
    return Document(id=doc_id, year=year, source=source, text=text)


class TestSplitSentences:
    def test_delimiter_split(self):
        assert split_sentences("A. B! C?") == ["A.", "B!", "C?"]

    def test_punctuation_restored(self):
        assert split_sentences("One sentence") == ["One sentence."]

    def test_twelve_sentence_fixture(self):
        # hand-labeled: 12 sentences, including a guarded "Dr." and a decimal
        sentences = split_sentences(TWELVE_SENTENCES)
        assert len(sentences) == 12
        assert sentences[1] == "Dr. Smith presented the outlook."
        assert sentences[2] == "Inflation rose 0.4 percent in March."
        assert sentences[-1] == "The meeting adjourned."

    def test_abbreviation_guard(self):
        assert split_sentences("Mr. Jones spoke. He left.") == \
            ["Mr. Jones spoke.", "He left."]

    def test_boundary_needs_upper_or_digit(self):
        assert split_sentences("costs fell. prices rose") == ["costs fell. prices rose."]
        assert split_sentences("It ended. 9 members agreed.") == \
            ["It ended.", "9 members agreed."]

    def test_empty_input_yields_empty_list(self):
        assert split_sentences("   ") == []


class TestChunkDocument:
    def test_short_document_kept_whole(self):
        text = " ".join(f"Sentence {i} is here." for i in range(9))
        chunks = chunk_document(make_doc(text), SeededRng(1))
        assert len(chunks) == 1
        assert chunks[0].sentence_count == 9
        assert chunks[0].seq == 0

    def test_forced_draw_sequence(self):
        text = " ".join(f"Sentence {i} is here." for i in range(10))
        chunks = chunk_document(make_doc(text), ScriptedRng(ints=[3, 7]))
        assert [c.sentence_count for c in chunks] == [3, 7]

    def test_residual_final_chunk(self):
        text = " ".join(f"Sentence {i} is here." for i in range(11))
        chunks = chunk_document(make_doc(text), ScriptedRng(ints=[4, 4, 5]))
        assert [c.sentence_count for c in chunks] == [4, 4, 3]

    def test_partition_invariant(self):
        rng = SeededRng(77)
        for i in range(50):
            n = 10 + rng.randint(0, 60)
            sentences = [f"Sentence number {i} {j} stands alone." for j in range(n)]
            doc = make_doc(" ".join(sentences), doc_id=f"doc{i}")
            chunks = chunk_document(doc, rng.spawn(doc.id))
            assert sum(c.sentence_count for c in chunks) == n
            assert [c.seq for c in chunks] == list(range(len(chunks)))
            assert " ".join(c.text for c in chunks) == " ".join(sentences)
            for c in chunks[:-1]:
                assert 3 <= c.sentence_count <= 7

    def test_determinism_byte_identical(self, tmp_path):
        docs = [make_doc(" ".join(f"Sentence {i} {j} here." for j in range(30)),
                         doc_id=f"d{i}") for i in range(20)]
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_chunks_jsonl(chunk_corpus(docs, seed=5), out1)
        write_chunks_jsonl(chunk_corpus(docs, seed=5), out2)
        assert out1.read_bytes() == out2.read_bytes()
        write_chunks_jsonl(chunk_corpus(docs, seed=6), tmp_path / "c.jsonl")
        assert out1.read_bytes() != (tmp_path / "c.jsonl").read_bytes()

    def test_order_independence(self):
        docs = [make_doc(" ".join(f"Sentence {i} {j} here." for j in range(25)),
                         doc_id=f"d{i}") for i in range(10)]
        a = chunk_corpus(docs, seed=3)
        b = chunk_corpus(list(reversed(docs)), seed=3)
        assert sorted(a, key=lambda c: (c.doc_id, c.seq)) == \
            sorted(b, key=lambda c: (c.doc_id, c.seq))

    def test_size_distribution_uniform(self):
        root = SeededRng(12)
        sizes = []
        for i in range(300):
            text = " ".join(f"Sentence {i} {j} here." for j in range(60))
            chunks = chunk_document(make_doc(text, doc_id=f"d{i}"), root.spawn(i))
            sizes.extend(c.sentence_count for c in chunks[:-1])
        counts = [sizes.count(v) for v in range(3, 8)]
        _, p = stats.chisquare(counts)
        assert p > 0.01


class TestPatentFilter:
    def test_301_words_removed_300_kept(self):
        over = make_doc(" ".join(["word"] * 301), doc_id="over", source="patent")
        at = make_doc(" ".join(["word"] * 300), doc_id="at", source="patent")
        kept, frac = filter_patent_abstracts([over, at])
        assert [d.id for d in kept] == ["at"]
        assert frac == 0.5

    def test_removed_fraction_four_in_thousand(self):
        docs = [make_doc("Short abstract text.", doc_id=f"p{i}", source="patent")
                for i in range(996)]
        docs += [make_doc(" ".join(["w"] * 301), doc_id=f"long{i}", source="patent")
                 for i in range(4)]
        kept, frac = filter_patent_abstracts(docs)
        assert len(kept) == 996
        assert frac == 0.004

    def test_empty_input(self):
        kept, frac = filter_patent_abstracts([])
        assert kept == [] and frac == 0.0

    def test_non_patent_rejected(self):
        with pytest.raises(ValueError, match="source"):
            filter_patent_abstracts([make_doc("Text here.", source="fomc")])


class TestDocumentValidation:
    def test_empty_id(self):
        with pytest.raises(ValueError):
            Document(id="", year=2000, source="fomc", text="Hello.")

    def test_year_out_of_range(self):
        with pytest.raises(ValueError):
            Document(id="x", year=1700, source="fomc", text="Hello.")

    def test_bad_source(self):
        with pytest.raises(ValueError):
            Document(id="x", year=2000, source="tweet", text="Hello.")

    def test_blank_text(self):
        with pytest.raises(ValueError):
            Document(id="x", year=2000, source="fomc", text="   ")


def test_jsonl_roundtrip(tmp_path):
    docs = [make_doc("First sentence. Second sentence.", doc_id="a"),
            make_doc("Unicode gamma blows past naive encoders.", doc_id="b", source="book")]
    path = tmp_path / "docs.jsonl"
    write_documents_jsonl(docs, path)
    assert read_documents_jsonl(path) == docs

    chunks = chunk_corpus(docs, seed=1)
    cpath = tmp_path / "chunks.jsonl"
    write_chunks_jsonl(chunks, cpath)
    assert read_chunks_jsonl(cpath) == chunks
    first = json.loads(cpath.read_text().splitlines()[0])
    assert set(first) == {"doc_id", "year", "seq", "text", "sentence_count"}
