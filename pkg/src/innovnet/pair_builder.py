"""Balanced same-patent / different-patent chunk-pair dataset construction.

Each eligible abstract (more than two sentences) is split at a random
breaking point into chunk A and chunk B. Negative examples replace B with
the B-chunk of the next abstract in shuffled order (rotation by one), and
a per-example fair coin decides whether the true or rotated B is kept.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus_prep import Document, split_sentences
from .rng import SeededRng

FOLDS = ("train", "test")


class AbstractTooShortError(ValueError):
    """Abstract has too few sentences to admit a breaking point."""


@dataclass(frozen=True)
class PairExample:
    year: int
    a_text: str
    b_text: str
    label: int
    a_patent_id: str
    b_patent_id: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if not self.a_text or not self.b_text:
            raise ValueError("pair chunks must be nonempty")
        same = self.a_patent_id == self.b_patent_id
        if same != (self.label == 1):
            raise ValueError("label inconsistent with patent ids")


@dataclass(frozen=True)
class SplitAssignment:
    pair_index: int
    fold: str


def break_abstract(abstract: Document, rng: SeededRng) -> tuple[str, str]:
    """Split an abstract into (chunk_a, chunk_b) at a random sentence cut.

    The cut index is uniform on {1, ..., n-2}, i.e. strictly between the
    first and the penultimate sentence, so chunk B always keeps at least
    two sentences. Requires more than two sentences.
    """
    sentences = split_sentences(abstract.text)
    n = len(sentences)
    if n <= 2:
        raise AbstractTooShortError(
            f"abstract {abstract.id} has {n} sentences; need more than two")
    cut = rng.randint(1, n - 2)
    return " ".join(sentences[:cut]), " ".join(sentences[cut:])


def build_pairs(abstracts: list[Document], year: int, rng: SeededRng) -> list[PairExample]:
    """Build one labeled pair per eligible abstract of the given year.

    Procedure: filter to abstracts with >2 sentences, shuffle, break each
    into (A, B), rotate the B list by one position for negatives, then per
    example keep the true B with probability 0.5 (label 1) or take the
    rotated B (label 0).
    """
    eligible = [a for a in abstracts if a.year == year
                and len(split_sentences(a.text)) > 2]
    if len(eligible) < 2:
        raise ValueError(
            f"year {year}: need at least 2 eligible abstracts, found {len(eligible)}")
    order = list(eligible)
    rng.shuffle(order)
    broken = [break_abstract(a, rng) for a in order]
    n = len(order)
    pairs = []
    for i, (doc, (a_text, b_text)) in enumerate(zip(order, broken)):
        keep_true = rng.random() < 0.5
        if keep_true:
            pairs.append(PairExample(year=year, a_text=a_text, b_text=b_text,
                                     label=1, a_patent_id=doc.id,
                                     b_patent_id=doc.id))
        else:
            j = (i + 1) % n
            pairs.append(PairExample(year=year, a_text=a_text,
                                     b_text=broken[j][1], label=0,
                                     a_patent_id=doc.id,
                                     b_patent_id=order[j].id))
    return pairs


def stratified_split(pairs: list[PairExample], train_frac: float,
                     rng: SeededRng) -> list[SplitAssignment]:
    """Assign each pair to train or test, stratified by (year, label).

    Per-stratum train counts are the floors of train_frac * size, with the
    leftover up to the global target (nearest integer to train_frac * N,
    half rounded up) handed out by descending fractional remainder. Every
    stratum lands within one example of the target fraction; singleton
    strata always go to train.
    """
    if not pairs:
        raise ValueError("no pairs to split")
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")

    strata: dict[tuple[int, int], list[int]] = {}
    for idx, p in enumerate(pairs):
        strata.setdefault((p.year, p.label), []).append(idx)

    keys = sorted(strata)
    target = math.floor(train_frac * len(pairs) + 0.5)
    n_train = {k: math.floor(train_frac * len(strata[k])) for k in keys}
    leftover = target - sum(n_train.values())
    by_remainder = sorted(
        keys, key=lambda k: (-(train_frac * len(strata[k]) - n_train[k]), k))
    for k in by_remainder:
        if leftover <= 0:
            break
        if n_train[k] < len(strata[k]):
            n_train[k] += 1
            leftover -= 1
    for k in keys:
        if len(strata[k]) == 1:
            n_train[k] = 1

    assignments: list[SplitAssignment] = []
    for k in keys:
        idxs = list(strata[k])
        rng.shuffle(idxs)
        train_set = set(idxs[:n_train[k]])
        for idx in strata[k]:
            fold = "train" if idx in train_set else "test"
            assignments.append(SplitAssignment(pair_index=idx, fold=fold))
    assignments.sort(key=lambda a: a.pair_index)
    return assignments


def write_pairs_jsonl(pairs: Iterable[PairExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(
                {"year": p.year, "a_text": p.a_text, "b_text": p.b_text,
                 "label": p.label, "a_patent_id": p.a_patent_id,
                 "b_patent_id": p.b_patent_id}, ensure_ascii=False) + "\n")


def read_pairs_jsonl(path: str | Path) -> list[PairExample]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs.append(PairExample(
                year=int(rec["year"]), a_text=rec["a_text"],
                b_text=rec["b_text"], label=int(rec["label"]),
                a_patent_id=rec["a_patent_id"], b_patent_id=rec["b_patent_id"]))
    return pairs


def write_split_csv(assignments: Iterable[SplitAssignment], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_index", "fold"])
        for a in assignments:
            writer.writerow([a.pair_index, a.fold])


def read_split_csv(path: str | Path) -> list[SplitAssignment]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            fold = row["fold"]
            if fold not in FOLDS:
                raise ValueError(f"unknown fold {fold!r}")
            out.append(SplitAssignment(pair_index=int(row["pair_index"]), fold=fold))
    return out
