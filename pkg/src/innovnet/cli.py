"""innovnet command-line interface.

Subcommands map one-to-one onto pipeline stages; `run` executes the whole
stage graph with manifest caching. Failures print a machine-readable JSON
error on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

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
from .pipeline import (RunConfig, StageError, load_features, parse_horizons,
                       run_pipeline)
from .rng import SeededRng
from .synth import WorldSpec, make_synthetic_world, merge_centrality


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except StageError as exc:
        _emit_error(type(exc.cause).__name__, str(exc.cause), stage=exc.stage)
        return 1
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1


def _emit_error(kind: str, message: str, stage: str | None = None) -> None:
    body = {"error": {"type": kind, "message": message}}
    if stage is not None:
        body["error"]["stage"] = stage
    print(json.dumps(body, sort_keys=True), file=sys.stderr)


def _seed(args) -> int:
    """Subcommand --seed, falling back to the global flag."""
    seed = args.seed if getattr(args, "seed", None) is not None else args.global_seed
    if seed is None:
        raise ValueError("a --seed is required (stochastic stage)")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="innovnet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    # global flags; subcommand-level values take precedence
    parser.add_argument("--seed", type=int, default=None, dest="global_seed")
    parser.add_argument("--config", default=None, dest="global_config")
    parser.add_argument("--out-dir", default=None, dest="global_out_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="clean, filter, and chunk documents")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--patent-filter", action="store_true",
                   help="drop patent abstracts over the word limit first")
    p.set_defaults(handler=cmd_prep)

    p = sub.add_parser("pairs", help="build labeled chunk pairs and splits")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--year", type=int, default=None,
                   help="restrict to one grant year (default: all years present)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--out-pairs", required=True)
    p.add_argument("--out-split", required=True)
    p.set_defaults(handler=cmd_pairs)

    p = sub.add_parser("embed", help="embed pair texts into composed features")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.f32 and <prefix>.index.csv")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("train-head", help="train the pair classifier head")
    p.add_argument("--features", required=True, help="feature file prefix")
    p.add_argument("--split", default=None)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(handler=cmd_train_head)

    p = sub.add_parser("network", help="build yearly similarity graphs")
    p.add_argument("--embeddings", required=True, help="embedding table prefix")
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_network)

    p = sub.add_parser("centrality", help="compute centrality from graphs")
    p.add_argument("--graph", required=True)
    p.add_argument("--alpha", type=float, default=0.85)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_centrality)

    p = sub.add_parser("panel", help="horizon regressions on the firm panel")
    p.add_argument("--data", required=True)
    p.add_argument("--deflators", required=True)
    p.add_argument("--centrality", default=None,
                   help="centrality CSV; omit when --data already carries the columns")
    p.add_argument("--horizons", default="1..5")
    p.add_argument("--lag", type=int, default=1, choices=(1, 2))
    p.add_argument("--measure", default="pagerank",
                   choices=("pagerank", "weighted_degree"))
    p.add_argument("--outcome", default="log_profit",
                   choices=("log_profit", "profitability"),
                   help="profit growth or profit-margin growth on the left side")
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-table", required=True)
    p.set_defaults(handler=cmd_panel)

    p = sub.add_parser("correlate", help="centrality vs firm characteristics")
    p.add_argument("--data", required=True)
    p.add_argument("--deflators", required=True)
    p.add_argument("--centrality", default=None,
                   help="centrality CSV; omit when --data already carries the columns")
    p.add_argument("--measure", default="pagerank",
                   choices=("pagerank", "weighted_degree"))
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_correlate)

    p = sub.add_parser("biastest", help="paired one-sided t-test on log probs")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--direction", choices=("greater", "less"), default="greater")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_biastest)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--firms", type=int, default=200)
    p.add_argument("--years", type=int, default=10)
    p.add_argument("--industries", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--effect", type=float, default=0.0)
    p.add_argument("--effect-lag", type=int, default=2)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("run", help="run the full pipeline with caching")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=cmd_run)

    return parser


def cmd_prep(args) -> int:
    seed = _seed(args)
    docs = read_documents_jsonl(args.infile)
    if args.patent_filter:
        docs, removed = filter_patent_abstracts(docs)
        print(f"patent filter removed fraction {removed!r}")
    chunks = chunk_corpus(docs, seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_chunks_jsonl(chunks, args.out)
    print(f"wrote {len(chunks)} chunks from {len(docs)} documents to {args.out}")
    return 0


def cmd_pairs(args) -> int:
    seed = _seed(args)
    docs = read_documents_jsonl(args.infile)
    years = [args.year] if args.year is not None else sorted({d.year for d in docs})
    rng = SeededRng(seed).spawn("pairs")
    pairs = []
    for year in years:
        pairs.extend(build_pairs(docs, year, rng.spawn(year)))
    assignments = stratified_split(pairs, args.train_frac,
                                   SeededRng(seed).spawn("split"))
    Path(args.out_pairs).parent.mkdir(parents=True, exist_ok=True)
    write_pairs_jsonl(pairs, args.out_pairs)
    write_split_csv(assignments, args.out_split)
    n_train = sum(1 for a in assignments if a.fold == "train")
    print(f"wrote {len(pairs)} pairs ({n_train} train) to {args.out_pairs}")
    return 0


def cmd_embed(args) -> int:
    pairs = read_pairs_jsonl(args.pairs)
    if not pairs:
        raise ValueError("no pairs to embed")
    seed = _seed(args)
    feats = np.stack([
        compose_pair_feature(toy_embed(p.a_text, args.dim, seed),
                             toy_embed(p.b_text, args.dim, seed))
        for p in pairs])
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".f32").write_bytes(
        np.ascontiguousarray(feats, dtype="<f4").tobytes())
    with open(prefix.with_suffix(".index.csv"), "w", encoding="utf-8") as fh:
        fh.write("row,label,year,d\n")
        for i, pair in enumerate(pairs):
            fh.write(f"{i},{pair.label},{pair.year},{feats.shape[1]}\n")
    print(f"embedded {len(pairs)} pairs at dim {args.dim} -> {prefix}.f32")
    return 0


def cmd_train_head(args) -> int:
    prefix = Path(args.features)
    feats, labels = load_features(prefix.with_suffix(".f32"),
                                  prefix.with_suffix(".index.csv"))
    if args.split:
        folds = read_split_csv(args.split)
        train_idx = [a.pair_index for a in folds if a.fold == "train"]
        test_idx = [a.pair_index for a in folds if a.fold == "test"]
    else:
        train_idx = list(range(len(labels)))
        test_idx = train_idx
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      weight_decay=args.weight_decay, warmup_frac=args.warmup,
                      clip_norm=args.clip, dropout=args.dropout, seed=_seed(args))
    head, history = train_head(feats[train_idx], labels[train_idx], cfg)
    metrics = {
        "train_accuracy": evaluate_head(head, feats[train_idx], labels[train_idx]),
        "test_accuracy": evaluate_head(head, feats[test_idx], labels[test_idx]),
        "steps": len(history),
        "final_loss": history[-1].loss if history else None,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_network(args) -> int:
    table = EmbeddingTable.load(args.embeddings)
    years = [args.year] if args.year is not None else sorted(set(table.years))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    n_edges = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("year,firm_i,firm_j,weight\n")
        for year in years:
            means = {f: table.mean_vector(f, year) for f in table.firms_in_year(year)}
            graph = build_graph(means, year, tau=args.tau, top_k=args.top_k)
            for i, j, w in graph.edges:
                fh.write(f"{year},{graph.nodes[i]},{graph.nodes[j]},{w!r}\n")
            n_edges += len(graph.edges)
    print(f"wrote {n_edges} edges for {len(years)} years to {args.out}")
    return 0


def cmd_centrality(args) -> int:
    graphs = read_graph_csv(args.graph)
    scores = [compute_centralities(g, alpha=args.alpha, tol=args.tol,
                                   max_iter=args.max_iter) for g in graphs]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_centrality_csv(scores, args.out)
    bad = [cs.year for cs in scores if not cs.converged]
    if bad:
        print(f"warning: power iteration did not converge for years {bad}")
    print(f"wrote centrality for {len(scores)} years to {args.out}")
    return 0


def _merged_panel(data_path, deflator_path, centrality_path) -> pd.DataFrame:
    panel = pd.read_csv(data_path)
    deflators = pd.read_csv(deflator_path)
    derived = derive_firm_variables(panel, deflators)
    if centrality_path is None:
        missing = {"pagerank", "weighted_degree"} - set(derived.columns)
        if missing:
            raise ValueError(
                f"panel lacks centrality columns {sorted(missing)}; pass --centrality")
        return derived
    rows = []
    for cs in read_centrality_csv(centrality_path):
        for firm in cs.pagerank:
            rows.append({"year": cs.year, "firm": firm,
                         "pagerank": cs.pagerank[firm],
                         "weighted_degree": cs.weighted_degree[firm]})
    return merge_centrality(derived, pd.DataFrame(rows))


def cmd_panel(args) -> int:
    merged = _merged_panel(args.data, args.deflators, args.centrality)
    results = horizon_sweep(merged, k_set=parse_horizons(args.horizons),
                            centrality_column=args.measure, lag=args.lag,
                            outcome_column=args.outcome)
    Path(args.out_json).parent.mkdir(parents=True, exist_ok=True)
    write_regression_json(results, args.out_json)
    focal = f"d_{args.measure}_{args.lag}y"
    write_horizon_table_csv(results, focal, args.out_table)
    for res in results:
        if res.skipped:
            print(f"k={res.horizon}: skipped (n={res.observations})")
        else:
            print(f"k={res.horizon}: coef={res.coefficients[focal]:+.5f}"
                  f"{res.stars[focal]} se={res.clustered_se[focal]:.5f}"
                  f" n={res.observations} R2={res.r_squared:.4f}")
    return 0


def cmd_correlate(args) -> int:
    merged = _merged_panel(args.data, args.deflators, args.centrality)
    merged = attach_centrality_change(merged, args.measure, 1, "d_centrality_1y")
    merged = attach_centrality_change(merged, args.measure, 2, "d_centrality_2y")
    table = correlate(
        merged,
        variables=["log_profit", "log_capital", "log_employment",
                   "innovation_value_firm", "innovation_value_industry",
                   "sale", "cogs"],
        targets=[args.measure, "d_centrality_1y", "d_centrality_2y"])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_correlation_csv(table, args.out)
    print(f"wrote {len(table)} correlations to {args.out}")
    return 0


def cmd_biastest(args) -> int:
    old = pd.read_csv(args.old)
    new = pd.read_csv(args.new)
    if "word" in old.columns and "word" in new.columns:
        joined = old.merge(new, on="word", suffixes=("_old", "_new"))
        result = paired_bias_test(joined["logp_old"], joined["logp_new"],
                                  direction=args.direction)
    else:
        result = paired_bias_test(old["logp"], new["logp"], direction=args.direction)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_bias_test_json(result, args.out)
    print(f"mean_diff={result.mean_diff:+.4f} t={result.t_stat:+.4f}"
          f" p={result.p_value:.6f} n={result.n} direction={result.direction}")
    return 0


def cmd_synth(args) -> int:
    out_dir = args.out_dir or args.global_out_dir
    if out_dir is None:
        raise ValueError("an --out-dir is required")
    spec = WorldSpec(n_firms=args.firms, n_years=args.years,
                     n_industries=args.industries, dim=args.dim,
                     effect_size=args.effect, effect_lag=args.effect_lag,
                     seed=_seed(args))
    world = make_synthetic_world(spec)
    paths = world.write(out_dir)
    print(f"wrote synthetic world ({args.firms} firms x {args.years} years)"
          f" to {out_dir}: {len(paths)} files")
    return 0


def cmd_run(args) -> int:
    config_path = args.config or args.global_config
    seed = args.seed if args.seed is not None else args.global_seed
    out_dir = args.out_dir or args.global_out_dir
    config = RunConfig.from_file(config_path, seed=seed, out_dir=out_dir)
    manifest, executed = run_pipeline(config)
    if executed:
        print(f"executed stages: {', '.join(executed)}")
    else:
        print("all stages cached; nothing to do")
    print(f"manifest: {manifest.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
