"""Reference learners sharing the elimination algorithm's epoch schedule."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .algorithm import IopeaConfig, RunResult, run, schedule_n_k, trivial_env_order
from .core import Environment, IopeaError, RegretLedger, rng_stream

CHOICE_SLOT = 999_999
PLAY_SLOT = 0


def _as_grid(env: Environment, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1, env.dim)
    if grid.shape[0] == 0:
        raise ValueError("empty grid")
    return grid


def run_random(env: Environment, grid, cfg: IopeaConfig, seed: int = 0, replicate: int = 0,
               g_star: float = math.nan) -> RunResult:
    """Play a uniformly drawn grid policy in each epoch."""
    grid = _as_grid(env, grid)
    cfg = cfg.resolved(env)
    ledger = RegretLedger(g_star=g_star)
    state = env.initial_state()
    k, pick = 1, 0
    while ledger.timesteps < cfg.horizon:
        n = min(schedule_n_k(k, cfg), cfg.horizon - ledger.timesteps)
        pick = int(rng_stream(seed, replicate, k, CHOICE_SLOT).integers(grid.shape[0]))
        traj = env.rollout(grid[pick], n, state, rng_stream(seed, replicate, k, PLAY_SLOT))
        ledger.record_trajectory(traj, epoch=k, phase="play", active_size=grid.shape[0])
        state = traj.final_state
        k += 1
    return RunResult(ledger, [], grid[pick].copy(), grid)


def run_trivial_elimination(env: Environment, grid, cfg: IopeaConfig, seed: int = 0, replicate: int = 0,
                            g_star: float = math.nan) -> RunResult:
    """Elimination where each policy is estimated only from its own play."""
    grid = _as_grid(env, grid)
    cfg = cfg.resolved(env)
    cfg = replace(cfg, alpha=1.0, t_h_value=1)
    return run(env, trivial_env_order(env, grid), cfg, seed=seed, replicate=replicate, g_star=g_star)


def run_full_feedback_erm(env: Environment, grid, cfg: IopeaConfig, seed: int = 0, replicate: int = 0,
                          g_star: float = math.nan) -> RunResult:
    """Greedy empirical risk minimisation with access to the exogenous stream.

    Each epoch's realised stream is used to score every grid policy from the
    initial state; the best one is played during the next epoch.
    """
    if not getattr(env, "full_feedback", True):
        raise IopeaError("no-full-feedback", f"{env.name} hides its exogenous stream")
    grid = _as_grid(env, grid)
    cfg = cfg.resolved(env)
    ledger = RegretLedger(g_star=g_star)
    state = env.initial_state()
    # start from the lexicographically largest point, the most informative one
    pick = int(np.lexsort(grid.T[::-1])[-1])
    k = 1
    best_val = math.nan
    while ledger.timesteps < cfg.horizon:
        n = min(schedule_n_k(k, cfg), cfg.horizon - ledger.timesteps)
        exo = env.draw_exogenous(rng_stream(seed, replicate, k, PLAY_SLOT), n)
        traj = env.simulate(grid[pick], state, exo)
        ledger.record_trajectory(traj, epoch=k, phase="play", active_size=grid.shape[0], gain_estimate=best_val)
        state = traj.final_state
        scores = env.evaluate_on_stream(grid, exo)
        best = scores.min()
        ties = np.flatnonzero(scores == best)
        pick = int(ties[np.lexsort(grid[ties].T[::-1])[0]])
        best_val = float(best)
        k += 1
    return RunResult(ledger, [], grid[pick].copy(), grid, best_val)
