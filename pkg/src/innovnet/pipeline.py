"""Stage orchestration: config parsing, content-hash caching, manifest.

Stages run in a fixed topological order; a stage is skipped when its
input hashes, parameters, and recorded output hashes all match the
manifest from a previous run. Outputs carry no timestamps, so reruns with
the same seed are byte-identical and cache checks are exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__
from .classifier import TrainConfig, evaluate_head, train_head
from .corpus_prep import (chunk_corpus, filter_patent_abstracts,
                          read_documents_jsonl, write_chunks_jsonl)
from .econometrics import (attach_centrality_change, correlate,
                           derive_firm_variables, horizon_sweep,
                           paired_bias_test, write_bias_test_json,
                           write_correlation_csv, write_horizon_table_csv,
                           write_regression_json)
from .embedder import EmbeddingTable, compose_pair_feature, toy_embed
from .network import (build_graph, compute_centralities, read_centrality_csv,
                      read_graph_csv, write_centrality_csv)
from .pair_builder import (build_pairs, read_pairs_jsonl, read_split_csv,
                           stratified_split, write_pairs_jsonl, write_split_csv)
from .rng import SeededRng
from .synth import WorldSpec, make_synthetic_world, merge_centrality

ENV_PREFIX = "INNOVNET_"
SCHEMA_VERSION = 1


class StageError(RuntimeError):
    """A stage failed; downstream stages are not attempted."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    out_dir: str = "runs/out"
    # synthetic world
    n_firms: int = 200
    n_years: int = 10
    n_industries: int = 15
    world_dim: int = 16
    effect_size: float = 0.0
    effect_lag: int = 2
    # embedding / training
    embed_dim: int = 64
    train_frac: float = 0.7
    epochs: int = 1
    batch_size: int = 32
    lr: float = 2e-5
    weight_decay: float = 0.01
    warmup_frac: float = 0.1
    clip_norm: float = 1.0
    dropout: float = 0.1
    # network / centrality
    tau: float = 0.0
    alpha: float = 0.85
    tol: float = 1e-8
    max_iter: int = 100
    # econometrics
    horizons: tuple[int, ...] = (1, 2, 3, 4, 5)
    lag: int = 1
    measure: str = "pagerank"
    biastest_direction: str = "less"

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_file(cls, path: str | Path | None = None,
                  env: dict | None = None, **overrides) -> "RunConfig":
        """Build a config from a flat key = value file, environment
        variables (INNOVNET_<KEY>), and explicit overrides, in that
        order of increasing precedence."""
        values: dict = {}
        if path is not None:
            values.update(_parse_config_file(path))
        env = os.environ if env is None else env
        for name in cls.field_names():
            key = ENV_PREFIX + name.upper()
            if key in env:
                values[name] = env[key]
        for name, val in overrides.items():
            if val is not None:
                values[name] = val
        return cls(**{k: _coerce(cls, k, v) for k, v in values.items()})


def _parse_config_file(path: str | Path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = raw.strip()
    unknown = set(values) - set(RunConfig.field_names())
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    if "schema_version" in values and int(values["schema_version"]) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {values['schema_version']}")
    return values


def _coerce(cls, name: str, value):
    if not isinstance(value, str):
        return value
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    t = types[name]
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    if t == "tuple[int, ...]":
        return parse_horizons(value)
    return value


def parse_horizons(text: str) -> tuple[int, ...]:
    """Accept '1..5' ranges or '1,2,3' lists."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class Stage:
    name: str
    params: dict
    inputs: list[Path]
    outputs: list[Path]
    run: Callable[[], None]


class RunManifest:
    """Per-stage record of input hashes, parameters, and output hashes."""

    def __init__(self, path: Path):
        self.path = path
        self.stages: dict[str, dict] = {}
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            self.stages = data.get("stages", {})

    def is_fresh(self, stage: Stage, input_hashes: dict[str, str]) -> bool:
        record = self.stages.get(stage.name)
        if record is None:
            return False
        if record["inputs"] != input_hashes:
            return False
        if record["params"] != _jsonable(stage.params):
            return False
        for out, digest in record["outputs"].items():
            p = Path(out)
            if not p.exists() or _sha256(p) != digest:
                return False
        return True

    def record(self, stage: Stage, input_hashes: dict[str, str]) -> None:
        self.stages[stage.name] = {
            "inputs": input_hashes,
            "params": _jsonable(stage.params),
            "outputs": {str(p): _sha256(p) for p in stage.outputs},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "version": __version__,
        }

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        body = {"schema_version": SCHEMA_VERSION, "stages": self.stages}
        self.path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")


def _jsonable(obj):
    return json.loads(json.dumps(obj, sort_keys=True, default=list))


def build_stages(config: RunConfig) -> list[Stage]:
    """The full stage graph, in topological order."""
    out = Path(config.out_dir)
    synth_dir = out / "synth"
    paths = {
        "docs": synth_dir / "docs.jsonl",
        "firm_map": synth_dir / "firm_map.csv",
        "emb_bin": synth_dir / "embeddings.f32",
        "emb_idx": synth_dir / "embeddings.index.csv",
        "panel": synth_dir / "panel.csv",
        "deflators": synth_dir / "deflators.csv",
        "world_centrality": synth_dir / "centrality.csv",
        "probe_old": synth_dir / "probe_old.csv",
        "probe_new": synth_dir / "probe_new.csv",
        "chunks": out / "prep" / "chunks.jsonl",
        "pairs": out / "pairs" / "pairs.jsonl",
        "split": out / "pairs" / "split.csv",
        "feat_bin": out / "embed" / "features.f32",
        "feat_idx": out / "embed" / "features.index.csv",
        "head_metrics": out / "train" / "head_metrics.json",
        "history": out / "train" / "history.csv",
        "graphs": out / "network" / "graphs.csv",
        "centrality": out / "centrality" / "centrality.csv",
        "regressions": out / "panel" / "regressions.json",
        "horizon_table": out / "panel" / "horizon_table.csv",
        "correlations": out / "panel" / "correlations.csv",
        "bias": out / "stats" / "bias_test.json",
    }

    world_params = {"seed": config.seed, "n_firms": config.n_firms,
                    "n_years": config.n_years, "n_industries": config.n_industries,
                    "dim": config.world_dim, "effect_size": config.effect_size,
                    "effect_lag": config.effect_lag}

    def run_synth():
        spec = WorldSpec(n_firms=config.n_firms, n_years=config.n_years,
                         n_industries=config.n_industries, dim=config.world_dim,
                         effect_size=config.effect_size,
                         effect_lag=config.effect_lag, seed=config.seed)
        make_synthetic_world(spec).write(synth_dir)

    def run_prep():
        docs = read_documents_jsonl(paths["docs"])
        kept, _ = filter_patent_abstracts(docs)
        paths["chunks"].parent.mkdir(parents=True, exist_ok=True)
        write_chunks_jsonl(chunk_corpus(kept, config.seed), paths["chunks"])

    def run_pairs():
        docs = read_documents_jsonl(paths["docs"])
        kept, _ = filter_patent_abstracts(docs)
        rng = SeededRng(config.seed).spawn("pairs")
        pairs = []
        for year in sorted({d.year for d in kept}):
            pairs.extend(build_pairs(kept, year, rng.spawn(year)))
        assignments = stratified_split(pairs, config.train_frac,
                                       SeededRng(config.seed).spawn("split"))
        paths["pairs"].parent.mkdir(parents=True, exist_ok=True)
        write_pairs_jsonl(pairs, paths["pairs"])
        write_split_csv(assignments, paths["split"])

    def run_embed():
        pairs = read_pairs_jsonl(paths["pairs"])
        paths["feat_bin"].parent.mkdir(parents=True, exist_ok=True)
        feats = np.stack([
            compose_pair_feature(toy_embed(p.a_text, config.embed_dim, config.seed),
                                 toy_embed(p.b_text, config.embed_dim, config.seed))
            for p in pairs])
        paths["feat_bin"].write_bytes(
            np.ascontiguousarray(feats, dtype="<f4").tobytes())
        with open(paths["feat_idx"], "w", encoding="utf-8") as fh:
            fh.write("row,label,year,d\n")
            for i, p in enumerate(pairs):
                fh.write(f"{i},{p.label},{p.year},{feats.shape[1]}\n")

    def run_train_head():
        feats, labels = load_features(paths["feat_bin"], paths["feat_idx"])
        folds = read_split_csv(paths["split"])
        train_idx = [a.pair_index for a in folds if a.fold == "train"]
        test_idx = [a.pair_index for a in folds if a.fold == "test"]
        cfg = TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                          lr=config.lr, weight_decay=config.weight_decay,
                          warmup_frac=config.warmup_frac,
                          clip_norm=config.clip_norm, dropout=config.dropout,
                          seed=config.seed)
        head, history = train_head(feats[train_idx], labels[train_idx], cfg)
        metrics = {
            "train_accuracy": evaluate_head(head, feats[train_idx], labels[train_idx]),
            "test_accuracy": evaluate_head(head, feats[test_idx], labels[test_idx]),
            "steps": len(history),
            "final_loss": history[-1].loss if history else None,
        }
        paths["head_metrics"].parent.mkdir(parents=True, exist_ok=True)
        paths["head_metrics"].write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(paths["history"], "w", encoding="utf-8") as fh:
            fh.write("step,loss,lr\n")
            for rec in history:
                fh.write(f"{rec.step},{rec.loss!r},{rec.lr!r}\n")

    def run_network():
        table = EmbeddingTable.load(paths["emb_bin"].with_suffix(""))
        paths["graphs"].parent.mkdir(parents=True, exist_ok=True)
        with open(paths["graphs"], "w", encoding="utf-8") as fh:
            fh.write("year,firm_i,firm_j,weight\n")
            for year in sorted(set(table.years)):
                means = {f: table.mean_vector(f, year)
                         for f in table.firms_in_year(year)}
                graph = build_graph(means, year, tau=config.tau)
                for i, j, w in graph.edges:
                    fh.write(f"{year},{graph.nodes[i]},{graph.nodes[j]},{w!r}\n")

    def run_centrality():
        graphs = read_graph_csv(paths["graphs"])
        scores = [compute_centralities(g, alpha=config.alpha, tol=config.tol,
                                       max_iter=config.max_iter) for g in graphs]
        paths["centrality"].parent.mkdir(parents=True, exist_ok=True)
        write_centrality_csv(scores, paths["centrality"])

    def load_merged_panel() -> pd.DataFrame:
        panel = pd.read_csv(paths["panel"])
        deflators = pd.read_csv(paths["deflators"])
        derived = derive_firm_variables(panel, deflators)
        cent = read_centrality_csv(paths["centrality"])
        rows = []
        for cs in cent:
            for firm in cs.pagerank:
                rows.append({"year": cs.year, "firm": firm,
                             "pagerank": cs.pagerank[firm],
                             "weighted_degree": cs.weighted_degree[firm]})
        return merge_centrality(derived, pd.DataFrame(rows))

    def run_panel():
        merged = load_merged_panel()
        results = horizon_sweep(merged, k_set=config.horizons,
                                centrality_column=config.measure, lag=config.lag)
        paths["regressions"].parent.mkdir(parents=True, exist_ok=True)
        write_regression_json(results, paths["regressions"])
        focal = f"d_{config.measure}_{config.lag}y"
        write_horizon_table_csv(results, focal, paths["horizon_table"])

    def run_correlate():
        merged = load_merged_panel()
        merged = attach_centrality_change(merged, config.measure, 1, "d_centrality_1y")
        merged = attach_centrality_change(merged, config.measure, 2, "d_centrality_2y")
        table = correlate(
            merged,
            variables=["log_profit", "log_capital", "log_employment",
                       "innovation_value_firm", "innovation_value_industry",
                       "sale", "cogs"],
            targets=[config.measure, "d_centrality_1y", "d_centrality_2y"])
        paths["correlations"].parent.mkdir(parents=True, exist_ok=True)
        write_correlation_csv(table, paths["correlations"])

    def run_biastest():
        old = pd.read_csv(paths["probe_old"])
        new = pd.read_csv(paths["probe_new"])
        joined = old.merge(new, on="word", suffixes=("_old", "_new"))
        result = paired_bias_test(joined["logp_old"], joined["logp_new"],
                                  direction=config.biastest_direction)
        paths["bias"].parent.mkdir(parents=True, exist_ok=True)
        write_bias_test_json(result, paths["bias"])

    synth_outputs = [paths[k] for k in ("docs", "firm_map", "emb_bin", "emb_idx",
                                        "panel", "deflators", "world_centrality",
                                        "probe_old", "probe_new")]
    return [
        Stage("synth", world_params, [], synth_outputs, run_synth),
        Stage("prep", {"seed": config.seed}, [paths["docs"]],
              [paths["chunks"]], run_prep),
        Stage("pairs", {"seed": config.seed, "train_frac": config.train_frac},
              [paths["docs"]], [paths["pairs"], paths["split"]], run_pairs),
        Stage("embed", {"dim": config.embed_dim, "seed": config.seed},
              [paths["pairs"]], [paths["feat_bin"], paths["feat_idx"]], run_embed),
        Stage("train_head",
              {"epochs": config.epochs, "batch_size": config.batch_size,
               "lr": config.lr, "weight_decay": config.weight_decay,
               "warmup_frac": config.warmup_frac, "clip_norm": config.clip_norm,
               "dropout": config.dropout, "seed": config.seed},
              [paths["feat_bin"], paths["feat_idx"], paths["split"]],
              [paths["head_metrics"], paths["history"]], run_train_head),
        Stage("network", {"tau": config.tau},
              [paths["emb_bin"], paths["emb_idx"]], [paths["graphs"]], run_network),
        Stage("centrality",
              {"alpha": config.alpha, "tol": config.tol, "max_iter": config.max_iter},
              [paths["graphs"]], [paths["centrality"]], run_centrality),
        Stage("panel",
              {"horizons": list(config.horizons), "lag": config.lag,
               "measure": config.measure},
              [paths["panel"], paths["deflators"], paths["centrality"]],
              [paths["regressions"], paths["horizon_table"]], run_panel),
        Stage("correlate", {"measure": config.measure},
              [paths["panel"], paths["deflators"], paths["centrality"]],
              [paths["correlations"]], run_correlate),
        Stage("biastest", {"direction": config.biastest_direction},
              [paths["probe_old"], paths["probe_new"]], [paths["bias"]],
              run_biastest),
    ]


def load_features(bin_path: Path, idx_path: Path) -> tuple[np.ndarray, np.ndarray]:
    idx = pd.read_csv(idx_path)
    dims = idx["d"].unique()
    if len(dims) != 1:
        raise ValueError("inconsistent feature dimensions")
    raw = np.frombuffer(Path(bin_path).read_bytes(), dtype="<f4")
    feats = raw.reshape(len(idx), int(dims[0])).astype(np.float64)
    return feats, idx["label"].to_numpy(dtype=int)


def run_pipeline(config: RunConfig) -> tuple[RunManifest, list[str]]:
    """Execute the stage graph; returns the manifest and names of stages
    that actually ran (cache misses)."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out / "manifest.json")
    executed: list[str] = []
    for stage in build_stages(config):
        missing = [p for p in stage.inputs if not p.exists()]
        if missing:
            raise StageError(stage.name, FileNotFoundError(
                f"missing inputs: {[str(p) for p in missing]}"))
        input_hashes = {str(p): _sha256(p) for p in stage.inputs}
        if manifest.is_fresh(stage, input_hashes):
            continue
        try:
            stage.run()
        except Exception as exc:
            raise StageError(stage.name, exc) from exc
        missing_out = [p for p in stage.outputs if not p.exists()]
        if missing_out:
            raise StageError(stage.name, FileNotFoundError(
                f"stage did not produce: {[str(p) for p in missing_out]}"))
        manifest.record(stage, input_hashes)
        manifest.save()
        executed.append(stage.name)
    manifest.save()
    return manifest, executed
