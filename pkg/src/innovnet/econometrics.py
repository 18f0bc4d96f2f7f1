"""Panel construction and inference: firm-variable derivation, within-cell
standardization, two-way fixed-effects regressions with double-clustered
standard errors, correlation tables, and paired one-sided t-tests.

Fixed effects are absorbed with explicit dummy columns and a QR solve
(panels here are desk scale, so the exact approach is affordable), and
the double-clustered covariance combines the two one-way cluster
sandwiches minus their intersection.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg, stats

CONTROL_COLUMNS = ("innovation_value_firm", "innovation_value_industry",
                   "log_profit", "log_employment", "log_capital")

PANEL_COLUMNS = ("firm", "year", "industry", "sale", "cogs", "at", "ppegt", "emp",
                 "innovation_value_firm", "innovation_value_industry")


class RankDeficiencyError(ValueError):
    """Design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: list[str]):
        super().__init__(f"collinear design columns: {columns}")
        self.columns = columns


@dataclass
class RegressionResult:
    horizon: int | None
    coefficients: dict[str, float]
    clustered_se: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    stars: dict[str, str]
    observations: int
    r_squared: float
    cluster_dims: tuple[str, str]
    df_inference: int
    se_floored: bool = False
    skipped: bool = False
    vcov: np.ndarray | None = None      # coefficient order follows `coefficients`


@dataclass
class TTestResult:
    mean_diff: float
    t_stat: float
    p_value: float
    n: int
    direction: str


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def derive_firm_variables(raw: pd.DataFrame, deflators: pd.DataFrame) -> pd.DataFrame:
    """Deflate accounting variables and attach the derived panel columns.

    capital_stock = ppegt / equipment deflator, real_profit =
    (sale - cogs) / cpi, profitability = (sale - cogs) / at. Logs are
    taken only where the underlying level is positive; elsewhere the log
    column is NaN and regressions needing it drop the row.
    """
    for col in ("firm", "year", "sale", "cogs", "at", "ppegt", "emp"):
        if col not in raw.columns:
            raise ValueError(f"panel input missing column {col!r}")
    for col in ("year", "equipment_deflator", "cpi"):
        if col not in deflators.columns:
            raise ValueError(f"deflator input missing column {col!r}")
    if (deflators["equipment_deflator"] <= 0).any() or (deflators["cpi"] <= 0).any():
        raise ValueError("deflators must be positive")

    missing = sorted(set(raw["year"]) - set(deflators["year"]))
    if missing:
        raise ValueError(f"no deflators for years {missing}")

    out = raw.merge(deflators[["year", "equipment_deflator", "cpi"]],
                    on="year", how="left")
    out["capital_stock"] = out["ppegt"] / out["equipment_deflator"]
    out["real_profit"] = (out["sale"] - out["cogs"]) / out["cpi"]
    out["profitability"] = np.where(out["at"] > 0,
                                    (out["sale"] - out["cogs"]) / out["at"], np.nan)
    out["log_profit"] = _safe_log(out["real_profit"])
    out["log_employment"] = _safe_log(out["emp"])
    out["log_capital"] = _safe_log(out["capital_stock"])
    return out


def _safe_log(series: pd.Series) -> pd.Series:
    values = series.to_numpy(dtype=float)
    result = np.full(values.shape, np.nan)
    positive = np.isfinite(values) & (values > 0)
    result[positive] = np.log(values[positive])
    return pd.Series(result, index=series.index)


def standardize_within(df: pd.DataFrame, columns: list[str],
                       by: tuple[str, str] = ("industry", "year"),
                       suffix: str = "") -> tuple[pd.DataFrame, dict[str, int]]:
    """Standardize columns to zero mean, unit sample sd within each cell.

    Cells with fewer than 2 observations or zero variance are dropped
    (set to NaN); the per-column count of dropped cells is returned.
    """
    out = df.copy()
    dropped: dict[str, int] = {}
    grouped = df.groupby(list(by), observed=True)
    for col in columns:
        mean = grouped[col].transform("mean")
        sd = grouped[col].transform("std")   # ddof=1
        count = grouped[col].transform("count")
        bad = (count < 2) | (sd == 0) | sd.isna()
        cell_flags = df[col].notna() & bad
        dropped[col] = int(df.assign(_bad=cell_flags).groupby(list(by), observed=True)
                           ["_bad"].any().sum())
        values = (df[col] - mean) / sd
        values[bad] = np.nan
        out[col + suffix] = values
    return out, dropped


def _cluster_cov(x: np.ndarray, resid: np.ndarray, groups: np.ndarray,
                 bread: np.ndarray, n: int, k: int) -> tuple[np.ndarray, int]:
    """One-way cluster-robust sandwich with the usual small-sample factor."""
    codes, inverse = np.unique(groups, return_inverse=True)
    g = len(codes)
    xu = x * resid[:, None]
    sums = np.zeros((g, k))
    np.add.at(sums, inverse, xu)
    meat = sums.T @ sums
    c = (g / (g - 1)) * ((n - 1) / (n - k)) if g > 1 else np.nan
    return c * bread @ meat @ bread, g


def fit_panel(df: pd.DataFrame, outcome: str, regressors: list[str],
              fixed_effects: tuple[str, ...] = ("year", "industry"),
              cluster_by: tuple[str, str] = ("industry", "year"),
              horizon: int | None = None) -> RegressionResult:
    """OLS with dummy-absorbed fixed effects and double-clustered errors.

    The covariance is V_c1 + V_c2 - V_(c1 x c2), each a cluster-robust
    sandwich with small-sample factor G/(G-1) * (N-1)/(N-K); negative
    diagonal entries left by the subtraction are floored at zero and
    flagged. Inference uses a t distribution with min(G1, G2) - 1 degrees
    of freedom. R-squared is for the full dummy-augmented model.
    """
    needed = [outcome] + list(regressors) + list(fixed_effects) + list(cluster_by)
    sub = df.dropna(subset=list(dict.fromkeys(needed)))
    n = len(sub)
    if n == 0:
        raise ValueError("no complete observations to fit")

    y = sub[outcome].to_numpy(dtype=float)
    names: list[str] = []
    cols: list[np.ndarray] = []
    for reg in regressors:
        names.append(reg)
        cols.append(sub[reg].to_numpy(dtype=float))
    names.append("const")
    cols.append(np.ones(n))
    for dim in fixed_effects:
        cats = sorted(sub[dim].unique())
        for cat in cats[1:]:   # first category is the reference
            names.append(f"{dim}={cat}")
            cols.append((sub[dim] == cat).to_numpy(dtype=float))
    x = np.column_stack(cols)
    k = x.shape[1]
    if n <= k:
        raise ValueError(f"{n} observations cannot identify {k} parameters")

    q, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(n, k) * np.finfo(float).eps
    rank = int((diag > tol).sum())
    if rank < k:
        raise RankDeficiencyError([names[i] for i in piv[rank:]])
    beta = np.empty(k)
    beta[piv] = linalg.solve_triangular(r, q.T @ y)

    fitted = x @ beta
    resid = y - fitted
    tss = float(((y - y.mean()) ** 2).sum())
    rss = float((resid ** 2).sum())
    r_squared = 1.0 - rss / tss if tss > 0 else 0.0

    xtx_inv = np.linalg.inv(x.T @ x)
    dim1, dim2 = cluster_by
    g1_codes = sub[dim1].to_numpy()
    g2_codes = sub[dim2].to_numpy()
    inter_codes = np.array([f"{a}\x1f{b}" for a, b in zip(g1_codes, g2_codes)])
    v1, g1 = _cluster_cov(x, resid, g1_codes, xtx_inv, n, k)
    v2, g2 = _cluster_cov(x, resid, g2_codes, xtx_inv, n, k)
    v12, _ = _cluster_cov(x, resid, inter_codes, xtx_inv, n, k)
    if g1 < 2 or g2 < 2:
        raise ValueError(f"need at least 2 clusters per dimension, got ({g1}, {g2})")
    vcov = v1 + v2 - v12
    vcov = (vcov + vcov.T) / 2.0

    diag_v = np.diag(vcov).copy()
    floored = bool((diag_v < 0).any())
    diag_v[diag_v < 0] = 0.0
    se = np.sqrt(diag_v)

    df_inf = min(g1, g2) - 1
    coefficients, ses, ts, ps, star_map = {}, {}, {}, {}, {}
    for i, name in enumerate(names):
        coefficients[name] = float(beta[i])
        ses[name] = float(se[i])
        t = beta[i] / se[i] if se[i] > 0 else np.nan
        p = 2 * stats.t.sf(abs(t), df_inf) if np.isfinite(t) else np.nan
        ts[name] = float(t)
        ps[name] = float(p)
        star_map[name] = significance_stars(p) if np.isfinite(p) else ""
    return RegressionResult(
        horizon=horizon, coefficients=coefficients, clustered_se=ses,
        t_stats=ts, p_values=ps, stars=star_map, observations=n,
        r_squared=r_squared, cluster_dims=(dim1, dim2), df_inference=df_inf,
        se_floored=floored, vcov=vcov)


def _year_shift(panel: pd.DataFrame, column: str, years: int, name: str) -> pd.DataFrame:
    """Attach column's value at (firm, year + years) as `name` (year-aware,
    tolerates gaps in a firm's year coverage)."""
    if panel.duplicated(subset=["firm", "year"]).any():
        raise ValueError("panel has duplicate (firm, year) rows")
    shifted = panel[["firm", "year", column]].copy()
    shifted["year"] = shifted["year"] - years
    shifted = shifted.rename(columns={column: name})
    return panel.merge(shifted, on=["firm", "year"], how="left")


def attach_centrality_change(panel: pd.DataFrame, centrality_column: str,
                             lag: int, name: str) -> pd.DataFrame:
    """Add log(C_t) - log(C_{t-lag}) as `name`; NaN where either side is
    missing or nonpositive."""
    if lag < 1:
        raise ValueError("lag must be >= 1")
    work = _year_shift(panel, centrality_column, -lag, "_prev_centrality")
    now = work[centrality_column].to_numpy(dtype=float)
    before = work["_prev_centrality"].to_numpy(dtype=float)
    ok = np.isfinite(now) & np.isfinite(before) & (now > 0) & (before > 0)
    change = np.full(len(work), np.nan)
    change[ok] = np.log(now[ok]) - np.log(before[ok])
    work[name] = change
    return work.drop(columns=["_prev_centrality"])


def horizon_sweep(panel: pd.DataFrame, k_set: tuple[int, ...] = (1, 2, 3, 4, 5),
                  centrality_column: str = "pagerank", lag: int = 1,
                  outcome_column: str = "log_profit",
                  controls: tuple[str, ...] = CONTROL_COLUMNS,
                  fixed_effects: tuple[str, ...] = ("year", "industry"),
                  cluster_by: tuple[str, str] = ("industry", "year"),
                  ) -> list[RegressionResult]:
    """Fit outcome_{t+k} - outcome_t on the lagged centrality log change
    plus controls, for each forecast horizon k.

    Independent variables are standardized within industry-year cells once
    over the full panel; each horizon then uses its own complete-case
    sample, so sample sizes shrink as k grows. Horizons with no usable
    sample come back flagged `skipped`.
    """
    focal = f"d_{centrality_column}_{lag}y"
    work = attach_centrality_change(panel, centrality_column, lag, focal)
    indep = [focal] + [c for c in controls]
    work, _ = standardize_within(work, indep, by=("industry", "year"))
    results = []
    for k in sorted(k_set):
        work_k = _year_shift(work, outcome_column, k, "_outcome_ahead")
        outcome_k = f"d{k}_{outcome_column}"
        work_k[outcome_k] = work_k["_outcome_ahead"] - work_k[outcome_column]
        usable = work_k.dropna(subset=[outcome_k] + indep)
        min_obs = len(indep) + len(fixed_effects) + 2
        if len(usable) <= min_obs:
            results.append(_skipped_result(k, len(usable), cluster_by))
            continue
        try:
            res = fit_panel(work_k, outcome=outcome_k, regressors=indep,
                            fixed_effects=fixed_effects, cluster_by=cluster_by,
                            horizon=k)
        except RankDeficiencyError:
            raise
        except ValueError:
            # too few clusters or parameters outnumbering the shrunk sample
            results.append(_skipped_result(k, len(usable), cluster_by))
            continue
        results.append(res)
    return results


def _skipped_result(k: int, n: int, cluster_by: tuple[str, str]) -> RegressionResult:
    return RegressionResult(
        horizon=k, coefficients={}, clustered_se={}, t_stats={}, p_values={},
        stars={}, observations=n, r_squared=np.nan, cluster_dims=cluster_by,
        df_inference=0, skipped=True)


def correlate(panel: pd.DataFrame, variables: list[str], targets: list[str],
              by: tuple[str, str] = ("year", "industry")) -> pd.DataFrame:
    """Pearson correlations of each variable with each target column,
    after standardizing everything within year-industry cells.

    Returns a frame with columns variable, target, r, p_value, stars, n.
    Pairs with fewer than 3 complete observations or a constant side get
    r = NaN (reported absent).
    """
    cols = list(dict.fromkeys(variables + targets))
    std, _ = standardize_within(panel, cols, by=by)
    rows = []
    for var in variables:
        for target in targets:
            pair = std[[var, target]].dropna()
            n = len(pair)
            if n < 3:
                rows.append({"variable": var, "target": target, "r": np.nan,
                             "p_value": np.nan, "stars": "", "n": n})
                continue
            a = pair[var].to_numpy(dtype=float)
            b = pair[target].to_numpy(dtype=float)
            if np.std(a) == 0 or np.std(b) == 0:
                rows.append({"variable": var, "target": target, "r": np.nan,
                             "p_value": np.nan, "stars": "", "n": n})
                continue
            r = float(np.corrcoef(a, b)[0, 1])
            r = max(min(r, 1.0), -1.0)
            if abs(r) == 1.0:
                p = 0.0
            else:
                t = r * math.sqrt((n - 2) / (1 - r * r))
                p = float(2 * stats.t.sf(abs(t), n - 2))
            rows.append({"variable": var, "target": target, "r": r,
                         "p_value": p, "stars": significance_stars(p), "n": n})
    return pd.DataFrame(rows)


def paired_bias_test(logp_old: list[float] | np.ndarray,
                     logp_new: list[float] | np.ndarray,
                     direction: str = "greater") -> TTestResult:
    """One-sided paired t-test on d_i = log P_old_i - log P_new_i.

    direction="greater" tests the alternative mean(d) > 0;
    direction="less" tests mean(d) < 0. sd uses divisor n - 1.
    """
    if direction not in ("greater", "less"):
        raise ValueError(f"direction must be 'greater' or 'less', got {direction!r}")
    old = np.asarray(logp_old, dtype=float)
    new = np.asarray(logp_new, dtype=float)
    if old.shape != new.shape or old.ndim != 1:
        raise ValueError("paired samples must be equal-length 1-d arrays")
    n = old.size
    if n < 2:
        raise ValueError(f"need n >= 2 pairs, got {n}")
    d = old - new
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ValueError("paired differences have zero variance")
    t = mean / (sd / math.sqrt(n))
    if direction == "greater":
        p = float(stats.t.sf(t, n - 1))
    else:
        p = float(stats.t.cdf(t, n - 1))
    return TTestResult(mean_diff=mean, t_stat=float(t), p_value=p, n=n,
                       direction=direction)


def load_industry_map(path: str | Path) -> list[tuple[int, int, str]]:
    """Read a SIC-range industry lookup: CSV with sic_from, sic_to, industry."""
    ranges = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ranges.append((int(row["sic_from"]), int(row["sic_to"]), row["industry"]))
    return ranges


def assign_industries(df: pd.DataFrame, ranges: list[tuple[int, int, str]],
                      sic_column: str = "sic", out_column: str = "industry") -> pd.DataFrame:
    def lookup(sic):
        for lo, hi, code in ranges:
            if lo <= sic <= hi:
                return code
        return np.nan
    out = df.copy()
    out[out_column] = out[sic_column].map(lookup)
    return out


def regression_report(results: list[RegressionResult]) -> list[dict]:
    """JSON-ready report: one record per horizon."""
    report = []
    for res in results:
        report.append({
            "horizon": res.horizon,
            "skipped": res.skipped,
            "observations": res.observations,
            "r_squared": None if res.skipped else res.r_squared,
            "df_inference": res.df_inference,
            "cluster_dims": list(res.cluster_dims),
            "se_floored": res.se_floored,
            "coefficients": res.coefficients,
            "clustered_se": res.clustered_se,
            "t_stats": res.t_stats,
            "p_values": res.p_values,
            "stars": res.stars,
        })
    return report


def write_regression_json(results: list[RegressionResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(regression_report(results), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_horizon_table_csv(results: list[RegressionResult], focal: str,
                            path: str | Path) -> None:
    """Emit the horizon-sweep table: focal coefficient, SE, stars, n, R2
    per forecast horizon."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["horizon", "coefficient", "clustered_se", "stars",
                         "observations", "r_squared", "skipped"])
        for res in results:
            if res.skipped or focal not in res.coefficients:
                writer.writerow([res.horizon, "", "", "", res.observations, "", 1])
                continue
            writer.writerow([res.horizon, repr(res.coefficients[focal]),
                             repr(res.clustered_se[focal]), res.stars[focal],
                             res.observations, repr(res.r_squared), 0])


def write_correlation_csv(table: pd.DataFrame, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "target", "r", "p_value", "stars", "n"])
        for _, row in table.iterrows():
            r = "" if pd.isna(row["r"]) else repr(float(row["r"]))
            p = "" if pd.isna(row["p_value"]) else repr(float(row["p_value"]))
            writer.writerow([row["variable"], row["target"], r, p,
                             row["stars"], int(row["n"])])


def write_bias_test_json(result: TTestResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"mean_diff": result.mean_diff, "t_stat": result.t_stat,
                   "p_value": result.p_value, "n": result.n,
                   "direction": result.direction}, fh, indent=2, sort_keys=True)
        fh.write("\n")
