"""Lost-sales inventory with lead time L under base-stock policies.

State layout is ``[I, Q_{t-L}, ..., Q_{t-1}]``: on-hand stock followed by the
pipeline, oldest order first. With ``L == 0`` an order arrives in the period
it is placed.

Training cost is the pseudo-cost ``h * (avail - sale) - p * sale``, which only
needs observed sales. Its gain differs from the true gain by ``p * E[D]``, a
constant shared by every policy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..core import CostNormalizer, Environment, IopeaError, Trajectory, Transition
from .demand import DemandModel


@dataclass(frozen=True)
class InvParams:
    lead_time: int = 2
    h: float = 1.0
    p: float = 10.0
    demand: DemandModel = field(default_factory=DemandModel)
    policy_upper: float = 3.0
    span: float | None = None

    def __post_init__(self):
        if self.lead_time < 0:
            raise ValueError("lead time must be nonnegative")
        if self.h <= 0 or self.p <= 0:
            raise ValueError("costs must be positive")
        if self.demand.gamma <= 0:
            raise ValueError("demand needs an atom at zero")


@dataclass
class SaleObservation:
    sale: float
    censored: bool


def inv_step(state: np.ndarray, order_qty: float, demand: float, params: InvParams):
    """One period. Returns ``(next_state, true_cost, pseudo_cost, SaleObservation)``."""
    if order_qty < 0 or demand < 0:
        raise IopeaError("negative-input", "order quantity and demand must be nonnegative")
    state = np.asarray(state, dtype=float)
    if np.any(state < 0):
        raise IopeaError("negative-input", "state entries must be nonnegative")
    L = params.lead_time
    on_hand = state[0]
    arriving = state[1] if L > 0 else order_qty
    avail = on_hand + arriving
    sale = min(avail, demand)
    nxt = np.empty(L + 1)
    nxt[0] = avail - sale
    if L > 0:
        nxt[1:L] = state[2:]
        nxt[L] = order_qty
    true_cost = params.h * max(avail - demand, 0.0) + params.p * max(demand - avail, 0.0)
    pseudo = params.h * (avail - sale) - params.p * sale
    return nxt, true_cost, pseudo, SaleObservation(sale, bool(demand >= avail))


def base_stock_action(theta: float, state) -> float:
    state = np.asarray(state, dtype=float)
    return max(float(theta) - float(state.sum()), 0.0)


@numba.njit(cache=True)
def _simulate(theta, state0, demand, L, h, p):
    n = demand.size
    states = np.empty((n + 1, L + 1))
    states[0] = state0
    actions = np.empty(n)
    avail_out = np.empty(n)
    sales = np.empty(n)
    true_c = np.empty(n)
    pseudo = np.empty(n)
    s = state0.copy()
    for t in range(n):
        pos = 0.0
        for j in range(L + 1):
            pos += s[j]
        q = theta - pos
        if q < 0.0:
            q = 0.0
        if L > 0:
            avail = s[0] + s[1]
            for j in range(1, L):
                s[j] = s[j + 1]
            s[L] = q
        else:
            avail = s[0] + q
        d = demand[t]
        sale = avail if d >= avail else d
        s[0] = avail - sale
        actions[t] = q
        avail_out[t] = avail
        sales[t] = sale
        if d <= avail:
            true_c[t] = h * (avail - d)
        else:
            true_c[t] = p * (d - avail)
        pseudo[t] = h * (avail - sale) - p * sale
        states[t + 1] = s
    return states, actions, avail_out, sales, true_c, pseudo


@numba.njit(cache=True)
def _pseudo_gains(thetas, stream, L, h, p):
    """Mean pseudo-cost of each base-stock level run from zero on ``stream``.

    ``stream`` may be the true demand or the sales observed under any larger
    base-stock level: both give identical sales ``min(avail, .)``.
    """
    m = thetas.size
    n = stream.size
    out = np.empty(m)
    s = np.empty(L + 1)
    for i in range(m):
        theta = thetas[i]
        for j in range(L + 1):
            s[j] = 0.0
        total = 0.0
        for t in range(n):
            pos = 0.0
            for j in range(L + 1):
                pos += s[j]
            q = theta - pos
            if q < 0.0:
                q = 0.0
            if L > 0:
                avail = s[0] + s[1]
                for j in range(1, L):
                    s[j] = s[j + 1]
                s[L] = q
            else:
                avail = s[0] + q
            d = stream[t]
            sale = avail if d >= avail else d
            s[0] = avail - sale
            total += h * (avail - sale) - p * sale
        out[i] = total / n
    return out


@numba.njit(cache=True)
def _true_gains(thetas, demand, L, h, p):
    m = thetas.size
    n = demand.size
    out = np.empty(m)
    s = np.empty(L + 1)
    for i in range(m):
        theta = thetas[i]
        for j in range(L + 1):
            s[j] = 0.0
        total = 0.0
        for t in range(n):
            pos = 0.0
            for j in range(L + 1):
                pos += s[j]
            q = theta - pos
            if q < 0.0:
                q = 0.0
            if L > 0:
                avail = s[0] + s[1]
                for j in range(1, L):
                    s[j] = s[j + 1]
                s[L] = q
            else:
                avail = s[0] + q
            d = demand[t]
            if d <= avail:
                total += h * (avail - d)
                s[0] = avail - d
            else:
                total += p * (d - avail)
                s[0] = 0.0
        out[i] = total / n
    return out


def replay_counterfactual(theta_prime: float, traj: Trajectory, params: InvParams) -> float:
    """Raw pseudo-cost gain of ``theta_prime`` rebuilt from the sales in ``traj``."""
    theta = float(np.atleast_1d(traj.policy)[0])
    if theta_prime > theta:
        raise IopeaError("not-dominated", f"{theta_prime} > {theta}")
    if len(traj) == 0:
        raise IopeaError("empty-trajectory")
    sales = np.ascontiguousarray(traj.observations["sale"], dtype=float)
    return float(_pseudo_gains(np.array([float(theta_prime)]), sales, params.lead_time, params.h, params.p)[0])


class InventoryEnv(Environment):
    name = "inventory"
    order_kind = "sample_path"

    def __init__(self, params: InvParams | None = None):
        self.params = params or InvParams()
        pr = self.params
        self._norm = CostNormalizer(
            offset=pr.p * pr.demand.upper,
            scale=1.0 / (pr.p * pr.demand.upper + pr.h * pr.policy_upper),
        )

    @property
    def lower(self) -> np.ndarray:
        return np.zeros(1)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.params.policy_upper])

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.params.lead_time + 1)

    def is_initial(self, state) -> bool:
        return bool(np.all(np.asarray(state) == 0.0))

    @property
    def restart_policy(self) -> np.ndarray:
        return np.zeros(1)

    @property
    def span(self) -> float:
        pr = self.params
        if pr.span is not None:
            return pr.span
        raw = 36.0 * max(pr.h, pr.p) * max(pr.lead_time, 1) * pr.demand.upper
        return raw * self._norm.scale

    @property
    def normalizer(self) -> CostNormalizer:
        return self._norm

    def action(self, theta, state) -> float:
        return base_stock_action(float(np.atleast_1d(theta)[0]), state)

    def step(self, state, action, exo) -> Transition:
        nxt, true_c, pseudo, obs = inv_step(state, float(action), float(exo), self.params)
        return Transition(
            state_before=np.asarray(state, dtype=float),
            action=float(action),
            observed_cost=float(self._norm(pseudo)),
            reported_cost=true_c,
            observation={"sale": obs.sale, "censored": obs.censored},
            state_after=nxt,
        )

    def draw_exogenous(self, rng, n: int) -> np.ndarray:
        return self.params.demand.sample(rng, n)

    def simulate(self, theta, state, exo) -> Trajectory:
        pr = self.params
        theta = float(np.atleast_1d(theta)[0])
        states, actions, avail, sales, true_c, pseudo = _simulate(
            theta, np.asarray(state, dtype=float), np.ascontiguousarray(exo, dtype=float),
            pr.lead_time, pr.h, pr.p,
        )
        return Trajectory(
            policy=np.array([theta]),
            states=states,
            actions=actions,
            observed_costs=self._norm(pseudo),
            reported_costs=true_c,
            observations={"sale": sales, "censored": sales >= avail},
        )

    def order_key(self, policies) -> np.ndarray:
        return np.asarray(policies, dtype=float).reshape(-1, 1)

    def counterfactual(self, policies, traj: Trajectory) -> np.ndarray:
        theta = float(np.atleast_1d(traj.policy)[0])
        thetas = np.asarray(policies, dtype=float).reshape(-1)
        if np.any(thetas > theta):
            raise IopeaError("not-dominated", "target above the played base-stock level")
        pr = self.params
        sales = np.ascontiguousarray(traj.observations["sale"], dtype=float)
        return self._norm(_pseudo_gains(thetas, sales, pr.lead_time, pr.h, pr.p))

    def evaluate_on_stream(self, policies, exo) -> np.ndarray:
        pr = self.params
        thetas = np.asarray(policies, dtype=float).reshape(-1)
        return _true_gains(thetas, np.ascontiguousarray(exo, dtype=float), pr.lead_time, pr.h, pr.p)


def inv_restart(state, rng: np.random.Generator, params: InvParams, max_steps: int = 1_000_000) -> int:
    """Steps of base-stock-zero play needed to empty the system."""
    env = InventoryEnv(params)
    traj = env.restart(np.asarray(state, dtype=float), rng, max_steps)
    if not env.is_initial(traj.final_state if len(traj) else state):
        raise IopeaError("restart-failed", f"no return to the empty state in {max_steps} steps")
    return len(traj)

