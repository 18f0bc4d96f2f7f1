"""Synthetic firm worlds with a plantable centrality-to-profit link.

Firms carry latent technology vectors that drift year over year; patents
are noisy copies of the firm vector, so the similarity network and its
centrality measures emerge from the same machinery the real pipeline
uses. Log profit then accumulates past centrality log-changes starting
`effect_lag` years back, which plants a link of configurable strength
that horizon regressions should recover at horizons >= effect_lag and
not before.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .corpus_prep import Document, write_documents_jsonl
from .embedder import EmbeddingTable
from .network import CentralityScores, build_graph, compute_centralities, write_centrality_csv
from .rng import SeededRng


@dataclass
class WorldSpec:
    n_firms: int = 200
    n_years: int = 10
    n_industries: int = 15
    dim: int = 16
    min_patents: int = 1
    max_patents: int = 4
    patent_noise: float = 0.03
    drift: float = 0.3
    drift_momentum: float = 0.15
    anchor_weight: float = 1.25
    effect_size: float = 0.0
    effect_lag: int = 2
    profit_noise: float = 0.06
    year_shock: float = 0.05
    industry_year_shock: float = 0.04
    bias_shift: float = -1.0
    start_year: int = 2001
    seed: int = 0
    with_documents: bool = True

    def years(self) -> list[int]:
        return list(range(self.start_year, self.start_year + self.n_years))


@dataclass
class SyntheticWorld:
    spec: WorldSpec
    documents: list[Document]
    firm_of_patent: dict[str, str]
    embeddings: EmbeddingTable
    panel: pd.DataFrame
    deflators: pd.DataFrame
    centrality: list[CentralityScores]
    probe_old: pd.DataFrame = field(default_factory=pd.DataFrame)
    probe_new: pd.DataFrame = field(default_factory=pd.DataFrame)

    def centrality_frame(self) -> pd.DataFrame:
        rows = []
        for cs in self.centrality:
            for firm in cs.pagerank:
                rows.append({"year": cs.year, "firm": firm,
                             "pagerank": cs.pagerank[firm],
                             "weighted_degree": cs.weighted_degree[firm]})
        return pd.DataFrame(rows)

    def write(self, outdir: str | Path) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "documents": outdir / "docs.jsonl",
            "firm_map": outdir / "firm_map.csv",
            "embeddings": outdir / "embeddings",
            "panel": outdir / "panel.csv",
            "deflators": outdir / "deflators.csv",
            "centrality": outdir / "centrality.csv",
            "probe_old": outdir / "probe_old.csv",
            "probe_new": outdir / "probe_new.csv",
        }
        write_documents_jsonl(self.documents, paths["documents"])
        with open(paths["firm_map"], "w", encoding="utf-8") as fh:
            fh.write("patent_id,firm_id\n")
            for pid in self.embeddings.patent_ids:
                fh.write(f"{pid},{self.firm_of_patent[pid]}\n")
        self.embeddings.save(paths["embeddings"])
        self.panel.to_csv(paths["panel"], index=False)
        self.deflators.to_csv(paths["deflators"], index=False)
        write_centrality_csv(self.centrality, paths["centrality"])
        self.probe_old.to_csv(paths["probe_old"], index=False)
        self.probe_new.to_csv(paths["probe_new"], index=False)
        return paths


def merge_centrality(panel: pd.DataFrame, centrality: pd.DataFrame) -> pd.DataFrame:
    """Left-join centrality columns onto the panel by (firm, year)."""
    return panel.merge(centrality, on=["firm", "year"], how="left")


def make_synthetic_world(spec: WorldSpec) -> SyntheticWorld:
    if spec.n_firms < 2 or spec.n_years < 3:
        raise ValueError("world needs at least 2 firms and 3 years")
    if spec.min_patents < 1 or spec.max_patents < spec.min_patents:
        raise ValueError("bad patent count range")

    rng = np.random.default_rng(spec.seed)
    years = spec.years()
    firms = [f"F{i:04d}" for i in range(spec.n_firms)]
    industry = {f: f"IND{(i % spec.n_industries) + 1:02d}" for i, f in enumerate(firms)}

    # Latent technology vectors: industry anchor plus idiosyncratic part,
    # drifting as a random walk on the unit sphere.
    anchors = {}
    for d in sorted(set(industry.values())):
        v = rng.normal(size=spec.dim)
        anchors[d] = v / np.linalg.norm(v)
    # Drift innovations carry optional momentum (technology trajectories
    # have inertia); mu = drift_momentum, innovations scaled to keep unit
    # stationary variance.
    mu = spec.drift_momentum
    fresh = np.sqrt(max(1.0 - mu * mu, 0.0))
    latent: dict[str, dict[int, np.ndarray]] = {f: {} for f in firms}
    for f in firms:
        v = (spec.anchor_weight * anchors[industry[f]]
             + rng.normal(size=spec.dim) / np.sqrt(spec.dim))
        latent[f][years[0]] = v / np.linalg.norm(v)
        u = rng.normal(size=spec.dim)
        for year in years[1:]:
            u = mu * u + fresh * rng.normal(size=spec.dim)
            v = latent[f][year - 1] + spec.drift * u / np.sqrt(spec.dim)
            latent[f][year] = v / np.linalg.norm(v)

    # Patents: noisy copies of the firm vector.
    vectors, patent_ids, firm_ids, patent_years = [], [], [], []
    for f in firms:
        for year in years:
            count = int(rng.integers(spec.min_patents, spec.max_patents + 1))
            for j in range(count):
                vec = latent[f][year] + spec.patent_noise * rng.normal(size=spec.dim)
                vectors.append(vec)
                patent_ids.append(f"{f}-Y{year}-P{j}")
                firm_ids.append(f)
                patent_years.append(year)
    table = EmbeddingTable(vectors=np.array(vectors), patent_ids=patent_ids,
                           firm_ids=firm_ids, years=patent_years)
    firm_of_patent = dict(zip(patent_ids, firm_ids))

    # Networks and centrality from the same machinery the pipeline uses.
    centrality: list[CentralityScores] = []
    log_pr: dict[tuple[str, int], float] = {}
    for year in years:
        means = {f: table.mean_vector(f, year) for f in firms}
        graph = build_graph({f: v for f, v in means.items() if v is not None}, year)
        cs = compute_centralities(graph, alpha=0.85, tol=1e-10, max_iter=500)
        centrality.append(cs)
        for f, score in cs.pagerank.items():
            log_pr[(f, year)] = float(np.log(score))

    # Accounting panel with the planted profit response. Accumulated
    # centrality log-changes from effect_lag years back telescope to
    # log PR_{t - lag} - log PR_{t0}.
    t0 = years[0]
    year_shift = {y: spec.year_shock * rng.normal() for y in years}
    ind_shift = {(d, y): spec.industry_year_shock * rng.normal()
                 for d in sorted(set(industry.values())) for y in years}
    rows = []
    for f in firms:
        base_profit = 2.0 + 0.5 * rng.normal()
        log_at = 4.0 + 0.7 * rng.normal()
        log_emp = log_at - 2.5 + 0.3 * rng.normal()
        log_ppegt = log_at - 0.9 + 0.3 * rng.normal()
        for year in years:
            carried = year - spec.effect_lag
            if carried >= t0:
                planted = spec.effect_size * (log_pr[(f, carried)] - log_pr[(f, t0)])
            else:
                planted = 0.0
            log_profit = (base_profit + year_shift[year]
                          + ind_shift[(industry[f], year)]
                          + spec.profit_noise * rng.normal() + planted)
            cpi = 1.0 + 0.02 * (year - t0)
            at = float(np.exp(log_at + 0.05 * rng.normal()))
            cogs = float(np.exp(base_profit + 1.0 + 0.1 * rng.normal()))
            sale = cogs + float(np.exp(log_profit)) * cpi
            rows.append({
                "firm": f, "year": year, "industry": industry[f],
                "sale": sale, "cogs": cogs, "at": at,
                "ppegt": float(np.exp(log_ppegt + 0.05 * rng.normal())),
                "emp": float(np.exp(log_emp + 0.05 * rng.normal())),
                "innovation_value_firm": float(np.exp(-2.0 + 0.5 * rng.normal())),
            })
    panel = pd.DataFrame(rows)
    # Peer innovation exposure aggregates over cross-cutting technology
    # fields rather than the industry-year cell itself; aggregating over
    # the standardization cell would make the column an exact linear
    # image of the firm-level value within every cell.
    # Block-based assignment keeps fields from becoming a permutation of
    # the industry code for any industry count.
    n_fields = max(2, min(11, spec.n_firms // 6))
    field_of = {f: f"FLD{(i // spec.n_industries) % n_fields}" for i, f in enumerate(firms)}
    panel["_field"] = panel["firm"].map(field_of)
    peer_mean = (panel.groupby(["_field", "year"])["innovation_value_firm"]
                 .transform(lambda s: (s.sum() - s) / np.maximum(len(s) - 1, 1)))
    panel["innovation_value_industry"] = peer_mean
    panel = panel.drop(columns=["_field"])

    deflators = pd.DataFrame({
        "year": years,
        "equipment_deflator": [1.0 + 0.03 * (y - t0) for y in years],
        "cpi": [1.0 + 0.02 * (y - t0) for y in years],
    })

    documents = _make_documents(spec, table, industry) if spec.with_documents else []

    probe_words = [f"word{i:02d}" for i in range(20)]
    base = rng.normal(-6.0, 1.0, size=20)
    noise = rng.normal(0.0, 0.6, size=(2, 20))
    probe_old = pd.DataFrame({"word": probe_words,
                              "logp": base + spec.bias_shift + noise[0]})
    probe_new = pd.DataFrame({"word": probe_words, "logp": base + noise[1]})

    return SyntheticWorld(spec=spec, documents=documents,
                          firm_of_patent=firm_of_patent, embeddings=table,
                          panel=panel, deflators=deflators,
                          centrality=centrality, probe_old=probe_old,
                          probe_new=probe_new)


_VOCAB_SIZE = 120


def _make_documents(spec: WorldSpec, table: EmbeddingTable,
                    industry: dict[str, str]) -> list[Document]:
    """Pseudo-text patent abstracts: industry-flavored token soup.

    Most abstracts have 3 to 8 sentences; a small deterministic slice gets
    only two sentences (ineligible for pair building) and a sliver runs
    past the 300-word limit, so downstream filters see real work.
    """
    docs = []
    root = SeededRng(spec.seed).spawn("documents")
    for pid, firm, year in zip(table.patent_ids, table.firm_ids, table.years):
        rng = root.spawn(pid)
        ind_tag = industry[firm]
        roll = rng.random()
        if roll < 0.02:
            n_sentences = 2
        elif roll < 0.025:
            n_sentences = 40   # pushes past the word limit
        else:
            n_sentences = rng.randint(3, 8)
        sentences = []
        for s in range(n_sentences):
            n_tokens = rng.randint(6, 12)
            tokens = [f"{ind_tag.lower()}tok{rng.randint(0, _VOCAB_SIZE - 1):03d}"
                      if rng.random() < 0.6 else
                      f"common{rng.randint(0, _VOCAB_SIZE - 1):03d}"
                      for _ in range(n_tokens)]
            sentences.append(" ".join(tokens).capitalize() + ".")
        docs.append(Document(id=pid, year=year, source="patent",
                             text=" ".join(sentences)))
    return docs
