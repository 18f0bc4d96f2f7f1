"""Document cleaning, sentence splitting, and randomized chunking.

Long documents are partitioned into consecutive chunks of 3 to 7 sentences
(size drawn per chunk); documents under 10 sentences pass through whole,
and leftover sentences at the end of a document become one final chunk of
whatever size remains.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .rng import SeededRng

SOURCES = ("fomc", "patent", "book", "other")

WHOLE_DOC_BELOW = 10      # documents with fewer sentences are kept intact
CHUNK_MIN, CHUNK_MAX = 3, 7
PATENT_WORD_LIMIT = 300   # abstracts longer than this are removed

# Guarded abbreviations: a "." inside these never ends a sentence. The
# list errs short; a missed abbreviation splits a sentence early, which
# downstream chunking tolerates.
ABBREVIATIONS = (
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Sr.", "Jr.", "vs.",
    "etc.", "e.g.", "i.e.", "cf.", "al.", "U.S.", "U.K.", "No.", "Fig.",
    "Eq.", "Inc.", "Ltd.", "Co.", "Corp.", "Jan.", "Feb.", "Mar.", "Apr.",
    "Jun.", "Jul.", "Aug.", "Sep.", "Sept.", "Oct.", "Nov.", "Dec.",
    "approx.",
)

_SENTINEL = "\x00"
_DECIMAL_RE = re.compile(r"(?<=\d)\.(?=\d)")
# Sentence boundary: terminal punctuation, whitespace, then an uppercase
# letter or digit.
_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9])")


@dataclass(frozen=True)
class Document:
    id: str
    year: int
    source: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be nonempty")
        if not 1800 <= self.year <= 2100:
            raise ValueError(f"document year {self.year} outside [1800, 2100]")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if not self.text.strip():
            raise ValueError("document text empty after whitespace trim")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    year: int
    seq: int
    text: str
    sentence_count: int


def split_sentences(text: str) -> list[str]:
    """Split text into trimmed sentences with terminal punctuation.

    Rule-based: a sentence ends at ., ! or ? followed by whitespace and an
    uppercase letter or digit. Dots inside guarded abbreviations and
    decimal numbers do not split. A final sentence lacking terminal
    punctuation gets a "." appended.
    """
    if not text.strip():
        return []
    protected = _DECIMAL_RE.sub(_SENTINEL, text)
    for abbr in ABBREVIATIONS:
        protected = protected.replace(abbr, abbr.replace(".", _SENTINEL))
    sentences = []
    for part in _BOUNDARY_RE.split(protected):
        sent = part.replace(_SENTINEL, ".").strip()
        if not sent:
            continue
        if sent[-1] not in ".!?":
            sent += "."
        sentences.append(sent)
    return sentences


def chunk_document(doc: Document, rng: SeededRng) -> list[Chunk]:
    """Partition a document into consecutive sentence chunks.

    Under WHOLE_DOC_BELOW sentences the document becomes a single chunk.
    Otherwise chunk sizes are drawn uniformly from {3..7}; when a draw
    reaches past the end, the remaining sentences form the final chunk.
    """
    sentences = split_sentences(doc.text)
    n = len(sentences)
    if n == 0:
        return []
    sizes: list[int] = []
    if n < WHOLE_DOC_BELOW:
        sizes = [n]
    else:
        remaining = n
        while remaining > 0:
            k = rng.randint(CHUNK_MIN, CHUNK_MAX)
            if k >= remaining:
                sizes.append(remaining)
                break
            sizes.append(k)
            remaining -= k
    chunks = []
    pos = 0
    for seq, size in enumerate(sizes):
        chunks.append(Chunk(
            doc_id=doc.id,
            year=doc.year,
            seq=seq,
            text=" ".join(sentences[pos:pos + size]),
            sentence_count=size,
        ))
        pos += size
    return chunks


def chunk_corpus(docs: Iterable[Document], seed: int) -> list[Chunk]:
    """Chunk every document with a per-document substream keyed by id.

    Keying on the id makes the output independent of document order, so
    corpora can be processed in parallel and still reproduce exactly.
    """
    root = SeededRng(seed)
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, root.spawn(doc.id)))
    return chunks


def filter_patent_abstracts(docs: list[Document]) -> tuple[list[Document], float]:
    """Drop patent abstracts longer than PATENT_WORD_LIMIT words.

    Words are whitespace tokens; exactly 300 words is kept. Returns the
    surviving documents and the removed fraction (0.0 for empty input).
    """
    for doc in docs:
        if doc.source != "patent":
            raise ValueError(f"document {doc.id} has source {doc.source!r}, expected 'patent'")
    if not docs:
        return [], 0.0
    kept = [d for d in docs if len(d.text.split()) <= PATENT_WORD_LIMIT]
    return kept, (len(docs) - len(kept)) / len(docs)


def read_documents_jsonl(path: str | Path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.append(Document(id=rec["id"], year=int(rec["year"]),
                                 source=rec["source"], text=rec["text"]))
    return docs


def write_documents_jsonl(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(
                {"id": d.id, "year": d.year, "source": d.source, "text": d.text},
                ensure_ascii=False) + "\n")


def write_chunks_jsonl(chunks: Iterable[Chunk], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(
                {"doc_id": c.doc_id, "year": c.year, "seq": c.seq,
                 "text": c.text, "sentence_count": c.sentence_count},
                ensure_ascii=False) + "\n")


def read_chunks_jsonl(path: str | Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            chunks.append(Chunk(doc_id=rec["doc_id"], year=int(rec["year"]),
                                seq=int(rec["seq"]), text=rec["text"],
                                sentence_count=int(rec["sentence_count"])))
    return chunks
