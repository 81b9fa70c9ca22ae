"""Epoch-based policy elimination over an information order."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Environment, IopeaError, RegretLedger, Trajectory, rng_stream
from .order import PolicyOrder, assign_estimators, maximal_set, width

log = logging.getLogger(__name__)

# rng slots inside an epoch: 2j plays maximum j, 2j+1 restarts after it
COMMIT_SLOT = 1_000_000


@dataclass
class IopeaConfig:
    horizon: int
    delta: float = 0.1
    radius: Optional[float] = None
    span: Optional[float] = None
    alpha: Optional[float] = None
    t_h_value: Optional[int] = None
    beta_scale: float = 1.0
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    restart_cap: Optional[int] = None
    integer_grid: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("discretisation radius must be positive")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.beta_scale < 0:
            raise ValueError("beta_scale must be nonnegative")

    @property
    def r(self) -> float:
        return self.radius if self.radius is not None else self.horizon ** -0.5

    def resolved(self, env: Environment) -> "IopeaConfig":
        """Copy with environment defaults filled in."""
        return replace(
            self,
            radius=self.r,
            span=env.span if self.span is None else self.span,
            alpha=env.alpha if self.alpha is None else self.alpha,
            t_h_value=env.t_h_default if self.t_h_value is None else self.t_h_value,
            lower=tuple(env.lower) if self.lower is None else tuple(self.lower),
            upper=tuple(env.upper) if self.upper is None else tuple(self.upper),
        )


@dataclass
class EpochState:
    k: int
    active: np.ndarray
    maxima: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    estimates: dict[int, float] = field(default_factory=dict)
    beta: float = math.nan
    n_k: int = 0
    steps_used: int = 0
    survivors: Optional[np.ndarray] = None
    truncated: bool = False

    def same_as(self, other: "EpochState") -> bool:
        return (
            self.k == other.k
            and np.array_equal(self.active, other.active)
            and np.array_equal(self.maxima, other.maxima)
            and self.estimates == other.estimates
            and (self.beta == other.beta or (math.isnan(self.beta) and math.isnan(other.beta)))
            and self.steps_used == other.steps_used
            and self.truncated == other.truncated
            and (
                (self.survivors is None and other.survivors is None)
                or (self.survivors is not None and other.survivors is not None
                    and np.array_equal(self.survivors, other.survivors))
            )
        )


@dataclass
class RunResult:
    ledger: RegretLedger
    history: list[EpochState]
    committed: np.ndarray
    grid: np.ndarray
    final_estimate: float = math.nan


def epsilon_net(lower, upper, r: float, integer: bool = False) -> np.ndarray:
    """Axis-aligned grid with spacing ``r`` covering the box, endpoints included.

    Returns an ``(n, d)`` array in lexicographic order.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or np.any(upper < lower):
        raise ValueError("box bounds are inconsistent")
    axes = []
    for lo, hi in zip(lower, upper):
        if integer:
            axes.append(np.arange(int(round(lo)), int(round(hi)) + 1, dtype=float))
            continue
        n = int(math.floor((hi - lo) / r + 1e-9))
        pts = lo + r * np.arange(n + 1)
        pts = np.round(pts, 12)
        if hi - pts[-1] > 1e-12:
            pts = np.append(pts, hi)
        axes.append(pts)
    mesh = np.array(list(itertools.product(*axes)), dtype=float)
    return mesh.reshape(-1, len(axes))


def schedule_n_k(k: int, cfg: IopeaConfig) -> int:
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    t_h = cfg.t_h_value if cfg.t_h_value is not None else 1
    log_t = max(math.log(cfg.horizon), 1.0)
    return int(math.ceil((4**k) * t_h * log_t / alpha - 1e-9))


def beta_k(k: int, n_k: int, grid_size: int, n_epochs: int, cfg: IopeaConfig) -> float:
    span = cfg.span if cfg.span is not None else 1.0
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    an = alpha * n_k
    log_term = math.log(4.0 * grid_size * n_epochs / cfg.delta)
    return cfg.beta_scale * (span / an + (span + 2.0) * math.sqrt(2.0 * log_term / an))


def epoch_count(cfg: IopeaConfig, w: int) -> int:
    """Largest k with sum_{j<=k} w N_j <= T (at least 1)."""
    total, k = 0, 0
    while True:
        nxt = total + w * schedule_n_k(k + 1, cfg)
        if nxt > cfg.horizon:
            return max(k, 1)
        total, k = nxt, k + 1


def eliminate(estimates: dict, beta: float) -> list:
    """Survivors of one elimination round, in input order."""
    best = min(estimates.values())
    return [i for i, g in estimates.items() if g - best <= 2.0 * beta]


def argmin_estimate(estimates: dict[int, float], order: PolicyOrder) -> int:
    best = min(estimates.values())
    ties = [i for i, g in estimates.items() if g == best]
    return int(order.canonical(ties)[0])


class _Budget:
    def __init__(self, total: int):
        self.total = total
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.total - self.used


def run_epoch(
    state: EpochState,
    env: Environment,
    order: PolicyOrder,
    cfg: IopeaConfig,
    streams: Callable[[int, int], np.random.Generator],
    ledger: RegretLedger,
    budget: _Budget,
    grid_size: int,
    n_epochs: int,
    current: list,
) -> EpochState:
    """Play the maxima of ``state.active``, estimate and eliminate.

    ``current`` is a one-element list holding the environment state, updated
    in place so the caller keeps continuity across epochs.
    """
    if state.active.size == 0:
        raise IopeaError("empty-active-set")
    k = state.k
    n_k = schedule_n_k(k, cfg)
    maxima = maximal_set(order, state.active)
    state.maxima = maxima
    state.n_k = n_k
    cap = cfg.restart_cap if cfg.restart_cap is not None else 10 * schedule_n_k(1, cfg)
    trajs: dict[int, Trajectory] = {}
    start_used = budget.used
    for j, m in enumerate(maxima):
        n = min(n_k, budget.remaining)
        if n <= 0:
            state.truncated = True
            break
        if not env.is_initial(current[0]):
            raise IopeaError("restart-failed", "maximal policy must start from the initial state")
        traj = env.rollout(order.grid[m], n, current[0], streams(k, 2 * j))
        ledger.record_trajectory(traj, epoch=k, phase="play", active_size=int(state.active.size))
        budget.used += len(traj)
        current[0] = traj.final_state
        if n < n_k:
            state.truncated = True
            break
        trajs[int(m)] = traj
        limit = min(cap, budget.remaining)
        rest = env.restart(current[0], streams(k, 2 * j + 1), limit)
        ledger.record_trajectory(rest, epoch=k, phase="restart", active_size=int(state.active.size))
        budget.used += len(rest)
        if len(rest):
            current[0] = rest.final_state
        if not env.is_initial(current[0]):
            if budget.remaining == 0:
                state.truncated = True
                break
            raise IopeaError("restart-failed", f"restart exceeded {cap} steps")
    state.steps_used = budget.used - start_used
    if state.truncated:
        return state

    assignment = assign_estimators(order, state.active, maxima)
    estimates: dict[int, float] = {}
    for m in maxima:
        targets = [i for i in state.active if assignment[int(i)] == int(m)]
        if not targets:
            continue
        values = order.estimate_many(np.asarray(targets, dtype=np.int64), trajs[int(m)], source=int(m))
        for i, v in zip(targets, values):
            if not math.isfinite(v):
                raise IopeaError("order-violated", f"estimator failed for {order.param(int(i))}")
            estimates[int(i)] = float(v)
    state.estimates = estimates
    state.beta = env.radius(k, n_k, grid_size, n_epochs, cfg)
    survivors = eliminate(estimates, state.beta)
    state.survivors = np.sort(np.asarray(survivors, dtype=np.int64))
    return state


def run(
    env: Environment,
    order: PolicyOrder,
    cfg: IopeaConfig,
    seed: int = 0,
    replicate: int = 0,
    g_star: float = math.nan,
) -> RunResult:
    """Run the elimination algorithm for exactly ``cfg.horizon`` steps."""
    cfg = cfg.resolved(env)
    grid = order.grid
    ledger = RegretLedger(g_star=g_star)
    budget = _Budget(cfg.horizon)
    current = [env.initial_state()]

    def streams(epoch: int, slot: int) -> np.random.Generator:
        return rng_stream(seed, replicate, epoch, slot)

    active = np.arange(len(order), dtype=np.int64)
    w1 = len(maximal_set(order, active))
    n_epochs = epoch_count(cfg, width(order) if order.mode != "general" else w1)
    history: list[EpochState] = []

    if cfg.horizon < w1 * schedule_n_k(1, cfg):
        log.warning("horizon %d shorter than the first epoch; playing the first grid policy", cfg.horizon)
        first = int(order.canonical(active)[0])
        traj = env.rollout(grid[first], cfg.horizon, current[0], streams(0, COMMIT_SLOT))
        ledger.record_trajectory(traj, epoch=0, phase="commit", active_size=int(active.size))
        return RunResult(ledger, history, grid[first].copy(), grid)

    best_idx: Optional[int] = None
    best_val = math.nan
    k = 1
    while budget.remaining > 0:
        maxima = maximal_set(order, active)
        if budget.remaining < len(maxima) * schedule_n_k(k, cfg):
            break
        state = EpochState(k=k, active=active)
        state = run_epoch(state, env, order, cfg, streams, ledger, budget, len(order), n_epochs, current)
        history.append(state)
        if state.truncated:
            break
        best_idx = argmin_estimate(state.estimates, order)
        best_val = state.estimates[best_idx]
        active = state.survivors
        k += 1

    if best_idx is None:
        best_idx = int(order.canonical(active)[0])
    if budget.remaining > 0:
        traj = env.rollout(grid[best_idx], budget.remaining, current[0], streams(k, COMMIT_SLOT))
        ledger.record_trajectory(traj, epoch=k, phase="commit", active_size=int(active.size),
                                 gain_estimate=best_val)
        budget.used += len(traj)
    return RunResult(ledger, history, grid[best_idx].copy(), grid, best_val)


def env_order(env: Environment, grid: np.ndarray, t_h: Optional[int] = None) -> PolicyOrder:
    """The environment's own information order on ``grid``."""
    from .order import total_order

    grid = np.asarray(grid, dtype=float).reshape(-1, env.dim)
    kind = env.order_kind
    t_h = env.t_h_default if t_h is None else t_h
    return total_order(grid, env.order_key(grid), estimator=env.counterfactual, kind=kind,
                       alpha=env.alpha if kind != "sample_path" else 1.0,
                       t_h=t_h if kind != "sample_path" else 1)


def own_gain_estimator(policies: np.ndarray, traj: Trajectory) -> np.ndarray:
    return np.full(len(policies), float(np.mean(traj.observed_costs)))


def trivial_env_order(env: Environment, grid: np.ndarray) -> PolicyOrder:
    """Order relating a policy only to itself: no information sharing."""
    from .order import trivial_order

    grid = np.asarray(grid, dtype=float).reshape(-1, env.dim)
    return trivial_order(grid, estimator=own_gain_estimator)
