"""Reference gains by long common-random-number simulation."""
from __future__ import annotations

import math

import numpy as np

from ..core import Environment, rng_stream

# replicate index reserved for oracle streams, disjoint from any run
ORACLE_REPLICATE = 2**31 - 1


def oracle_streams(env: Environment, eval_horizon: int, seeds):
    for seed in seeds:
        yield env.draw_exogenous(rng_stream(int(seed), ORACLE_REPLICATE, 0, 0), int(eval_horizon))


def oracle_gains(env: Environment, policies, eval_horizon: int, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Mean true gain and standard error for every row of ``policies``.

    All policies see the same exogenous stream for a given seed.
    """
    if eval_horizon < 1:
        raise ValueError("eval_horizon must be positive")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    policies = np.asarray(policies, dtype=float).reshape(-1, env.dim)
    per_seed = np.array([env.evaluate_on_stream(policies, exo) for exo in oracle_streams(env, eval_horizon, seeds)])
    mean = per_seed.mean(axis=0)
    if len(seeds) > 1:
        se = per_seed.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    else:
        se = np.zeros_like(mean)
    return mean, se


def oracle_gain(env: Environment, theta, eval_horizon: int, seeds) -> tuple[float, float]:
    mean, se = oracle_gains(env, np.atleast_2d(np.asarray(theta, dtype=float)), eval_horizon, seeds)
    return float(mean[0]), float(se[0])


def grid_optimum(env: Environment, grid, eval_horizon: int, seeds) -> tuple[np.ndarray, float]:
    """Grid argmin of oracle gains; ties go to the lexicographically smallest point."""
    grid = np.asarray(grid, dtype=float).reshape(-1, env.dim)
    if grid.shape[0] == 0:
        raise ValueError("empty grid")
    mean, _ = oracle_gains(env, grid, eval_horizon, seeds)
    best = mean.min()
    ties = np.flatnonzero(mean == best)
    pick = ties[np.lexsort(grid[ties].T[::-1])[0]]
    return grid[pick].copy(), float(mean[pick])
