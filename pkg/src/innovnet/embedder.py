"""Text embeddings, pair features, and the on-disk embedding table.

The encoder sits behind a small provider surface: `toy_embed` is a
deterministic hash-based stand-in (bag of seeded random unit token
vectors, averaged and re-normalized), and `EmbeddingTable.load` ingests
vectors produced elsewhere. Real encoder adapters are expected to
truncate inputs to 512 tokens; `toy_embed` has no such limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .rng import SeededRng, fnv1a64, _mix


@lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    stream = SeededRng(fnv1a64(token.encode("utf-8")) ^ _mix(seed))
    vec = np.array([stream.gauss() for _ in range(dim)])
    return vec / np.linalg.norm(vec)


def toy_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-words embedding: mean of unit token vectors,
    L2-normalized. Identical text gives an identical vector; token order
    does not matter."""
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot embed empty text")
    acc = np.zeros(dim)
    for tok in tokens:
        acc += _token_vector(tok, dim, seed)
    mean = acc / len(tokens)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValueError("token vectors cancelled exactly; cannot normalize")
    return mean / norm


def compose_pair_feature(h_a: np.ndarray, h_b: np.ndarray) -> np.ndarray:
    """Concatenate [h_A; h_B; h_A*h_B; |h_A-h_B|] into a 4d vector."""
    if h_a.shape != h_b.shape:
        raise ValueError(f"dimension mismatch: {h_a.shape} vs {h_b.shape}")
    return np.concatenate([h_a, h_b, h_a * h_b, np.abs(h_a - h_b)])


@dataclass
class EmbeddingTable:
    """Dense patent vectors plus a (patent_id, firm_id, year) index."""

    vectors: np.ndarray = field(repr=False)   # (n, d) float64
    patent_ids: list[str] = field(default_factory=list)
    firm_ids: list[str] = field(default_factory=list)
    years: list[int] = field(default_factory=list)

    def __post_init__(self):
        n = self.vectors.shape[0]
        if not (len(self.patent_ids) == len(self.firm_ids) == len(self.years) == n):
            raise ValueError("index columns must match vector row count")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains non-finite values")
        self._groups: dict[tuple[str, int], list[int]] | None = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def _group_index(self) -> dict[tuple[str, int], list[int]]:
        if self._groups is None:
            groups: dict[tuple[str, int], list[int]] = {}
            for i, (f, y) in enumerate(zip(self.firm_ids, self.years)):
                groups.setdefault((f, y), []).append(i)
            self._groups = groups
        return self._groups

    def rows_for(self, firm: str, year: int) -> np.ndarray:
        return np.array(self._group_index().get((firm, year), ()), dtype=int)

    def firms_in_year(self, year: int) -> list[str]:
        return sorted({f for (f, y) in self._group_index() if y == year})

    def mean_vector(self, firm: str, year: int) -> np.ndarray | None:
        """Arithmetic mean of the firm's patent vectors for the year.

        Raw vectors are averaged without re-normalization; cosine applied
        downstream is scale-invariant. Returns None when the firm has no
        patents that year.
        """
        rows = self.rows_for(firm, year)
        if rows.size == 0:
            return None
        return self.vectors[rows].mean(axis=0)

    def save(self, prefix: str | Path) -> tuple[Path, Path]:
        """Write `<prefix>.f32` (row-major little-endian float32) and
        `<prefix>.index.csv` with columns row, patent_id, firm_id, year, d."""
        prefix = Path(prefix)
        bin_path = prefix.with_suffix(".f32")
        idx_path = prefix.with_suffix(".index.csv")
        bin_path.write_bytes(np.ascontiguousarray(self.vectors, dtype="<f4").tobytes())
        with open(idx_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "patent_id", "firm_id", "year", "d"])
            for i, (pid, fid, year) in enumerate(zip(self.patent_ids, self.firm_ids, self.years)):
                writer.writerow([i, pid, fid, year, self.dim])
        return bin_path, idx_path

    @classmethod
    def load(cls, prefix: str | Path) -> "EmbeddingTable":
        prefix = Path(prefix)
        idx_path = prefix.with_suffix(".index.csv")
        bin_path = prefix.with_suffix(".f32")
        patent_ids, firm_ids, years, dims = [], [], [], set()
        with open(idx_path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh)):
                if int(row["row"]) != i:
                    raise ValueError(f"index rows out of order at line {i}")
                patent_ids.append(row["patent_id"])
                firm_ids.append(row["firm_id"])
                years.append(int(row["year"]))
                dims.add(int(row["d"]))
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimensions in index: {sorted(dims)}")
        d = dims.pop()
        raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
        if raw.size != len(patent_ids) * d:
            raise ValueError(
                f"binary size {raw.size} does not match {len(patent_ids)} rows x {d}")
        vectors = raw.reshape(len(patent_ids), d).astype(np.float64)
        return cls(vectors=vectors, patent_ids=patent_ids,
                   firm_ids=firm_ids, years=years)


def average_firm_embedding(table: EmbeddingTable, firm: str, year: int) -> np.ndarray | None:
    """Mean patent embedding for a firm-year; None when absent."""
    return table.mean_vector(firm, year)


def embed_documents(texts: list[str], dim: int, seed: int = 0) -> np.ndarray:
    """Stack toy embeddings for a list of texts into an (n, dim) matrix."""
    return np.stack([toy_embed(t, dim, seed) for t in texts])
