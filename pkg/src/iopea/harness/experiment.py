"""Replicated runs, downsampled CSV rows and the JSON summary."""
from __future__ import annotations

import bisect
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..algorithm import RunResult, env_order, run
from ..baselines import run_full_feedback_erm, run_random, run_trivial_elimination
from ..core import Environment, IopeaError, format_coords
from .config import (ConfigError, ExperimentConfig, build_env, config_from_dict, config_to_dict, iopea_config,
                     learner_grid, oracle_grid)
from .oracle import grid_optimum, oracle_gain

log = logging.getLogger(__name__)

CSV_COLUMNS = ["replicate", "epoch", "timestep", "cum_true_cost", "cum_regret",
               "active_set_size", "policy_coords", "gain_estimate"]
TRAILING_FRACTION = 0.1


@dataclass
class ReplicateOutcome:
    replicate: int
    rows: list[dict]
    committed: np.ndarray
    final_gain: float
    final_gain_se: float
    regret: float
    trailing_gain: float
    slope: float


def sample_times(horizon: int, factor: float = 1.2) -> np.ndarray:
    """Geometrically spaced step counts from 1 to ``horizon`` inclusive."""
    out = [1]
    while out[-1] < horizon:
        out.append(min(horizon, max(out[-1] + 1, int(math.ceil(out[-1] * factor)))))
    return np.array(out, dtype=np.int64)


def result_rows(res: RunResult, replicate: int, g_star: float, factor: float = 1.2) -> list[dict]:
    ledger = res.ledger
    costs = ledger.cost_series()
    cum = np.cumsum(costs)
    starts = [s.start for s in ledger.segments]
    prior = {h.k + 1: min(h.estimates.values()) for h in res.history if h.estimates}
    rows = []
    for t in sample_times(len(costs), factor):
        seg = ledger.segments[bisect.bisect_right(starts, t - 1) - 1]
        est = seg.gain_estimate if math.isfinite(seg.gain_estimate) else prior.get(seg.epoch, math.nan)
        rows.append({
            "replicate": replicate,
            "epoch": seg.epoch,
            "timestep": int(t),
            "cum_true_cost": float(cum[t - 1]),
            "cum_regret": float(cum[t - 1] - t * g_star),
            "active_set_size": seg.active_size,
            "policy_coords": format_coords(seg.policy),
            "gain_estimate": est,
        })
    return rows


def regret_slope(rows) -> float:
    """Log-log slope of cumulative regret against time.

    The fit uses the later half of the sampled range on the log scale, i.e.
    ``t >= sqrt(t_first * t_last)``. Rows with nonpositive regret are dropped.
    """
    t = np.array([float(r["timestep"]) for r in rows])
    reg = np.array([float(r["cum_regret"]) for r in rows])
    if t.size < 2:
        raise IopeaError("degenerate-regret", "need at least two rows")
    mid = 0.5 * (math.log(t.min()) + math.log(t.max()))
    keep = (reg > 0) & (np.log(t) >= mid)
    if np.count_nonzero(keep) < 2:
        raise IopeaError("degenerate-regret", "too few positive regret values")
    slope, _ = np.polyfit(np.log(t[keep]), np.log(reg[keep]), 1)
    return float(slope)


def run_learner(algorithm: str, env: Environment, cfg: ExperimentConfig, replicate: int,
                g_star: float) -> RunResult:
    icfg = iopea_config(cfg, env)
    grid = learner_grid(env, icfg)
    if algorithm == "iopea":
        return run(env, env_order(env, grid, t_h=icfg.t_h_value), icfg, seed=cfg.seed,
                   replicate=replicate, g_star=g_star)
    fn = {"random": run_random, "trivial": run_trivial_elimination, "erm": run_full_feedback_erm}[algorithm]
    return fn(env, grid, icfg, seed=cfg.seed, replicate=replicate, g_star=g_star)


def _replicate(args) -> ReplicateOutcome:
    raw, replicate, g_star = args
    cfg = config_from_dict(raw)
    env = build_env(cfg)
    res = run_learner(cfg.algorithm, env, cfg, replicate, g_star)
    rows = result_rows(res, replicate, g_star, cfg.downsample)
    seeds = [cfg.seed * 1000 + replicate * 17 + j + 1 for j in range(cfg.oracle.policy_eval_seeds)]
    gain, se = oracle_gain(env, res.committed, cfg.oracle.policy_eval_horizon, seeds)
    costs = res.ledger.cost_series()
    tail = max(1, int(TRAILING_FRACTION * len(costs)))
    try:
        slope = regret_slope(rows)
    except IopeaError:
        slope = math.nan
    return ReplicateOutcome(
        replicate=replicate,
        rows=rows,
        committed=res.committed,
        final_gain=gain,
        final_gain_se=se,
        regret=float(res.ledger.total_true_cost - res.ledger.timesteps * g_star),
        trailing_gain=float(costs[-tail:].mean()),
        slope=slope,
    )


def reference_optimum(cfg: ExperimentConfig, env: Optional[Environment] = None) -> tuple[np.ndarray, float]:
    env = env or build_env(cfg)
    grid = oracle_grid(env, cfg)
    theta, g = grid_optimum(env, grid, cfg.oracle.eval_horizon, range(cfg.oracle.seeds))
    if cfg.oracle.g_star is not None:
        g = float(cfg.oracle.g_star)
    return theta, g


def run_replicates(cfg: ExperimentConfig, g_star: float) -> list[ReplicateOutcome]:
    raw = config_to_dict(cfg)
    jobs = [(raw, i, g_star) for i in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_replicate, jobs))
    return [_replicate(j) for j in jobs]


def summarize(cfg: ExperimentConfig, theta_star, g_star: float, outcomes: list[ReplicateOutcome]) -> dict:
    gains = np.array([o.final_gain for o in outcomes])
    slopes = np.array([o.slope for o in outcomes])
    finite = slopes[np.isfinite(slopes)]
    n = len(gains)
    mean = float(gains.mean())
    return {
        "name": cfg.name,
        "algorithm": cfg.algorithm,
        "env": cfg.env["kind"],
        "horizon": cfg.horizon,
        "replicates": n,
        "seeds": [[cfg.seed, o.replicate] for o in outcomes],
        "g_star": g_star,
        "theta_star": [float(x) for x in np.atleast_1d(theta_star)],
        "mean_final_gain": mean,
        "final_gain_se": float(gains.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "relative_gap": (mean - g_star) / g_star,
        "final_gains": gains.tolist(),
        "committed": [format_coords(o.committed) for o in outcomes],
        "mean_regret": float(np.mean([o.regret for o in outcomes])),
        "regret": [o.regret for o in outcomes],
        "regret_slope": float(np.median(finite)) if finite.size else math.nan,
        "regret_slopes": slopes.tolist(),
        "trailing_window_gain": float(np.mean([o.trailing_gain for o in outcomes])),
    }


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([
            r["replicate"], r["epoch"], r["timestep"], _fmt(r["cum_true_cost"]), _fmt(r["cum_regret"]),
            r["active_set_size"], r["policy_coords"], _fmt(r["gain_estimate"]),
        ])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.10g}"


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run every replicate and write ``<name>.csv`` and ``<name>.json``."""
    out = Path(out_dir or cfg.output_dir)
    env = build_env(cfg)
    try:
        grid = learner_grid(env, iopea_config(cfg, env))
    except ValueError as err:
        raise ConfigError(f"policy grid: {err}") from None
    if grid.shape[0] == 0:
        raise ConfigError("empty policy grid")
    theta_star, g_star = reference_optimum(cfg, env)
    log.info("%s: reference optimum %s with gain %.4f", cfg.name, format_coords(theta_star), g_star)
    outcomes = run_replicates(cfg, g_star)
    summary = summarize(cfg, theta_star, g_star, outcomes)
    rows = [r for o in outcomes for r in o.rows]
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.name}.csv").write_text(rows_to_csv(rows), encoding="utf-8")
        (out / f"{cfg.name}.json").write_text(json.dumps(_clean(summary), indent=2) + "\n",
                                              encoding="utf-8")
    except OSError as err:
        raise OSError(f"{out}: {err.strerror}") from err
    return summary


def _clean(x):
    """Replace non-finite floats by ``None`` so the summary is strict JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x
