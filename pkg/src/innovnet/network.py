"""Yearly firm-firm similarity graphs and centrality measures.

Edges carry cosine similarities between firms' mean patent embeddings;
negative cosines are clamped to zero and dropped so the transition matrix
stays a proper row-stochastic operator. PageRank runs the damped power
iteration p <- alpha * P^T p + (1 - alpha) / n, with rows of zero degree
treated as uniform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse


class DegenerateEmbeddingError(ValueError):
    """A firm-year mean embedding has zero norm and cannot enter the graph."""


@dataclass
class SimilarityGraph:
    year: int
    nodes: list[str]
    edges: list[tuple[int, int, float]] = field(default_factory=list)  # i < j, w > 0

    def __post_init__(self):
        n = len(self.nodes)
        for i, j, w in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for {n} nodes")
            if not np.isfinite(w):
                raise ValueError(f"non-finite weight on edge ({i}, {j})")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def weight_matrix(self) -> np.ndarray:
        """Dense symmetric adjacency with zero diagonal."""
        a = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            a[i, j] = w
            a[j, i] = w
        return a

    def adjacency(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, j, w in self.edges:
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))


@dataclass
class CentralityScores:
    year: int
    pagerank: dict[str, float]
    weighted_degree: dict[str, float]
    iterations_used: int
    converged: bool


def firm_similarity(s_a: np.ndarray, s_b: np.ndarray) -> float:
    """Cosine of two mean embeddings; raises on zero-norm input."""
    na = np.linalg.norm(s_a)
    nb = np.linalg.norm(s_b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbeddingError("zero-norm mean embedding")
    return float(np.dot(s_a, s_b) / (na * nb))


def build_graph(embeddings: dict[str, np.ndarray], year: int,
                tau: float = 0.0, top_k: int | None = None) -> SimilarityGraph:
    """All-pairs cosine graph over firm mean embeddings.

    Negative cosines are clamped to zero and treated as absent. The
    sparsification rule keeps edges with weight > tau; with top_k set,
    only edges ranking in either endpoint's k strongest survive the
    threshold.
    """
    if len(embeddings) < 2:
        raise ValueError(f"year {year}: need at least 2 firms, got {len(embeddings)}")
    firms = sorted(embeddings)
    mat = np.stack([np.asarray(embeddings[f], dtype=float) for f in firms])
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        bad = [f for f, nz in zip(firms, norms == 0.0) if nz]
        raise DegenerateEmbeddingError(f"zero-norm mean embedding for firms {bad}")
    unit = mat / norms[:, None]
    sim = unit @ unit.T
    np.clip(sim, 0.0, None, out=sim)
    np.fill_diagonal(sim, 0.0)

    keep = sim > tau
    if top_k is not None:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        in_top = np.zeros_like(keep)
        for i in range(len(firms)):
            order = np.argsort(sim[i])[::-1][:top_k]
            in_top[i, order] = True
        keep &= in_top | in_top.T

    edges = [(i, j, float(sim[i, j]))
             for i in range(len(firms)) for j in range(i + 1, len(firms))
             if keep[i, j]]
    return SimilarityGraph(year=year, nodes=firms, edges=edges)


def pagerank(graph: SimilarityGraph, alpha: float = 0.85, tol: float = 1e-8,
             max_iter: int = 100) -> tuple[dict[str, float], int, bool, list[float]]:
    """Damped power iteration on the row-normalized adjacency.

    Rows with zero total weight are treated as uniform (1/n). Starts from
    the uniform vector and stops when the L1 change drops below tol.
    Returns (scores, iterations, converged, per-iteration L1 deltas).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = graph.n
    a = graph.adjacency()
    if not np.all(np.isfinite(a.data)):
        raise ValueError("graph has non-finite weights")
    degrees = np.asarray(a.sum(axis=1)).ravel()
    dangling = degrees == 0.0
    inv_deg = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, degrees))
    p_mat = sparse.diags(inv_deg) @ a   # row-stochastic except dangling rows

    p = np.full(n, 1.0 / n)
    deltas: list[float] = []
    converged = False
    iterations = 0
    teleport = (1.0 - alpha) / n
    for iterations in range(1, max_iter + 1):
        dangling_mass = p[dangling].sum() / n
        p_next = alpha * (p_mat.T @ p + dangling_mass) + teleport
        delta = float(np.abs(p_next - p).sum())
        deltas.append(delta)
        p = p_next
        if delta < tol:
            converged = True
            break
    scores = {firm: float(p[i]) for i, firm in enumerate(graph.nodes)}
    return scores, iterations, converged, deltas


def weighted_degree(graph: SimilarityGraph) -> dict[str, float]:
    """Total edge weight per firm, scaled by the year's maximum total."""
    sums = np.zeros(graph.n)
    for i, j, w in graph.edges:
        sums[i] += w
        sums[j] += w
    top = sums.max() if graph.n else 0.0
    if top <= 0.0:
        raise ValueError("all-zero graph has no weighted-degree scale")
    return {firm: float(sums[i] / top) for i, firm in enumerate(graph.nodes)}


def compute_centralities(graph: SimilarityGraph, alpha: float = 0.85,
                         tol: float = 1e-8, max_iter: int = 100) -> CentralityScores:
    pr, iters, converged, _ = pagerank(graph, alpha=alpha, tol=tol, max_iter=max_iter)
    wd = weighted_degree(graph)
    return CentralityScores(year=graph.year, pagerank=pr, weighted_degree=wd,
                            iterations_used=iters, converged=converged)


def centrality_log_change(scores_t: dict[str, float],
                          scores_prev: dict[str, float]) -> tuple[dict[str, float], int]:
    """log(score_t) - log(score_prev) per firm present in both years.

    Firms missing either year or with a nonpositive score are omitted;
    the count of such drops is returned alongside the changes.
    """
    changes: dict[str, float] = {}
    dropped = 0
    for firm in scores_t:
        if firm not in scores_prev:
            dropped += 1
            continue
        now, before = scores_t[firm], scores_prev[firm]
        if now <= 0.0 or before <= 0.0:
            dropped += 1
            continue
        changes[firm] = float(np.log(now) - np.log(before))
    return changes, dropped


def write_graph_csv(graph: SimilarityGraph, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "firm_i", "firm_j", "weight"])
        for i, j, w in graph.edges:
            writer.writerow([graph.year, graph.nodes[i], graph.nodes[j], repr(w)])


def read_graph_csv(path: str | Path) -> list[SimilarityGraph]:
    """Read one or more yearly graphs from an edge-list CSV."""
    per_year: dict[int, list[tuple[str, str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per_year.setdefault(int(row["year"]), []).append(
                (row["firm_i"], row["firm_j"], float(row["weight"])))
    graphs = []
    for year in sorted(per_year):
        rows = per_year[year]
        nodes = sorted({f for r in rows for f in r[:2]})
        pos = {f: i for i, f in enumerate(nodes)}
        edges = [(min(pos[a], pos[b]), max(pos[a], pos[b]), w) for a, b, w in rows]
        graphs.append(SimilarityGraph(year=year, nodes=nodes, edges=edges))
    return graphs


def write_centrality_csv(scores: list[CentralityScores], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "firm", "pagerank", "weighted_degree",
                         "converged", "iterations"])
        for cs in scores:
            for firm in cs.pagerank:
                writer.writerow([cs.year, firm, repr(cs.pagerank[firm]),
                                 repr(cs.weighted_degree[firm]),
                                 int(cs.converged), cs.iterations_used])


def read_centrality_csv(path: str | Path) -> list[CentralityScores]:
    acc: dict[int, CentralityScores] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            year = int(row["year"])
            cs = acc.setdefault(year, CentralityScores(
                year=year, pagerank={}, weighted_degree={},
                iterations_used=int(row["iterations"]),
                converged=bool(int(row["converged"]))))
            cs.pagerank[row["firm"]] = float(row["pagerank"])
            cs.weighted_degree[row["firm"]] = float(row["weighted_degree"])
    return [acc[y] for y in sorted(acc)]
