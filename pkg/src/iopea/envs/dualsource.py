"""Lost-sales dual sourcing under dual index policies.

State layout is ``[I, R_{t-Lr}, ..., R_{t-1}, E_{t-Le}, ..., E_{t-1}]``: on-hand
stock, the regular pipeline and the expedited pipeline, oldest first. With
``Le == 0`` the expedited order placed in a period is available in that
period and the expedited pipeline is empty.

A policy is ``theta = (z_e, z_r)``. The information order compares ``z_r``
first and breaks ties on ``z_e``, so every grid is a chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..core import CostNormalizer, Environment, IopeaError, Trajectory, Transition
from .demand import DemandModel
from .inventory import SaleObservation

HIT_TOL = 1e-9


@dataclass(frozen=True)
class DsParams:
    lead_regular: int = 1
    lead_expedited: int = 0
    h: float = 1.0
    p: float = 10.0
    c_r: float = 0.0
    c_e: float = 0.5
    demand: DemandModel = field(default_factory=DemandModel)
    policy_upper: float = 6.0
    span: float | None = None

    def __post_init__(self):
        if not self.lead_regular > self.lead_expedited >= 0:
            raise ValueError("need lead_regular > lead_expedited >= 0")
        if self.h <= 0 or self.p <= 0 or self.c_r < 0 or self.c_e < 0:
            raise ValueError("costs must be positive")
        if not 0 < self.demand.gamma < 1:
            raise ValueError("demand needs an atom at zero with gamma < 1")

    @property
    def state_size(self) -> int:
        return 1 + self.lead_regular + self.lead_expedited


def ds_alpha(gamma: float, lead_regular: int) -> float:
    return (1.0 - gamma) / 2.0 * gamma**lead_regular


@numba.njit(cache=True)
def _action(ze, zr, s, Lr, Le):
    on_hand = s[0]
    reg_all = 0.0
    for j in range(Lr):
        reg_all += s[1 + j]
    exp_all = 0.0
    for j in range(Le):
        exp_all += s[1 + Lr + j]
    # regular orders arriving within Le periods: the oldest Le + 1 entries
    reg_soon = 0.0
    for j in range(min(Le + 1, Lr)):
        reg_soon += s[1 + j]
    qe = ze - on_hand - exp_all - reg_soon
    if qe < 0.0:
        qe = 0.0
    qr = zr - on_hand - exp_all - reg_all - qe
    if qr < 0.0:
        qr = 0.0
    return qe, qr


@numba.njit(cache=True)
def _advance(s, qe, qr, Lr, Le):
    """Place both orders, shift the pipelines and return available stock."""
    avail = s[0] + s[1]
    for j in range(1, Lr):
        s[j] = s[j + 1]
    s[Lr] = qr
    if Le > 0:
        base = 1 + Lr
        avail += s[base]
        for j in range(Le - 1):
            s[base + j] = s[base + j + 1]
        s[base + Le - 1] = qe
    else:
        avail += qe
    return avail


@numba.njit(cache=True)
def _simulate(ze, zr, state0, demand, Lr, Le, h, p, cr, ce):
    n = demand.size
    k = state0.size
    states = np.empty((n + 1, k))
    states[0] = state0
    actions = np.empty((n, 2))
    avail_out = np.empty(n)
    sales = np.empty(n)
    true_c = np.empty(n)
    pseudo = np.empty(n)
    s = state0.copy()
    for t in range(n):
        qe, qr = _action(ze, zr, s, Lr, Le)
        avail = _advance(s, qe, qr, Lr, Le)
        d = demand[t]
        sale = avail if d >= avail else d
        s[0] = avail - sale
        actions[t, 0] = qe
        actions[t, 1] = qr
        avail_out[t] = avail
        sales[t] = sale
        buy = cr * qr + ce * qe
        if d <= avail:
            true_c[t] = h * (avail - d) + buy
        else:
            true_c[t] = p * (d - avail) + buy
        pseudo[t] = h * (avail - sale) - p * sale + buy
        states[t + 1] = s
    return states, actions, avail_out, sales, true_c, pseudo


@numba.njit(cache=True)
def _gains(policies, stream, k, Lr, Le, h, p, cr, ce, pseudo_cost):
    m = policies.shape[0]
    n = stream.size
    out = np.empty(m)
    s = np.empty(k)
    for i in range(m):
        ze = policies[i, 0]
        zr = policies[i, 1]
        for j in range(k):
            s[j] = 0.0
        total = 0.0
        for t in range(n):
            qe, qr = _action(ze, zr, s, Lr, Le)
            avail = _advance(s, qe, qr, Lr, Le)
            d = stream[t]
            sale = avail if d >= avail else d
            s[0] = avail - sale
            total += cr * qr + ce * qe
            if pseudo_cost:
                total += h * (avail - sale) - p * sale
            elif d <= avail:
                total += h * (avail - d)
            else:
                total += p * (d - avail)
        out[i] = total / n
    return out


def ds_step(state, q_r: float, q_e: float, demand: float, params: DsParams):
    """One period. Returns ``(next_state, true_cost, pseudo_cost, SaleObservation)``."""
    if q_r < 0 or q_e < 0 or demand < 0:
        raise IopeaError("negative-input", "orders and demand must be nonnegative")
    s = np.array(state, dtype=float)
    if s.shape != (params.state_size,) or np.any(s < 0):
        raise IopeaError("negative-input", "bad dual-sourcing state")
    avail = float(_advance(s, float(q_e), float(q_r), params.lead_regular, params.lead_expedited))
    sale = min(avail, demand)
    s[0] = avail - sale
    buy = params.c_r * q_r + params.c_e * q_e
    true_cost = params.h * max(avail - demand, 0.0) + params.p * max(demand - avail, 0.0) + buy
    pseudo = true_cost - params.p * demand
    return s, true_cost, pseudo, SaleObservation(sale, bool(demand >= avail))


def dual_index_action(theta, state, params: DsParams) -> tuple[float, float]:
    """``(q_e, q_r)`` for ``theta = (z_e, z_r)``."""
    ze, zr = (float(x) for x in np.asarray(theta, dtype=float).reshape(2))
    qe, qr = _action(ze, zr, np.asarray(state, dtype=float), params.lead_regular, params.lead_expedited)
    return float(qe), float(qr)


def hitting_indices(traj: Trajectory, z_r: float) -> np.ndarray:
    """0-based steps whose post-arrival available stock equals ``z_r``."""
    avail = np.asarray(traj.observations["available"], dtype=float)
    return np.flatnonzero(np.abs(avail - z_r) <= HIT_TOL)


def ds_counterfactual(theta_prime, traj: Trajectory, alpha: float, params: DsParams,
                      pseudo_cost: bool = True) -> float:
    """Raw gain of ``theta_prime`` rebuilt from sales at the hitting times.

    The first ``ceil(alpha * T)`` hit-time sales form a demand stream censored
    at ``z_r`` which is replayed from the empty state. Returns 0 when there
    are too few hits.
    """
    targets = np.atleast_2d(np.asarray(theta_prime, dtype=float))
    return float(_counterfactual_many(targets, traj, alpha, params, pseudo_cost)[0])


def _counterfactual_many(targets: np.ndarray, traj: Trajectory, alpha: float, params: DsParams,
                         pseudo_cost: bool = True) -> np.ndarray:
    zr = float(np.asarray(traj.policy, dtype=float).reshape(2)[1])
    if np.any(targets[:, 1] > zr + HIT_TOL):
        raise IopeaError("not-dominated", "target z_r above the played z_r")
    m = int(math.ceil(alpha * len(traj) - 1e-9))
    hits = hitting_indices(traj, zr)
    if m < 1 or hits.size < m:
        return np.zeros(targets.shape[0])
    stream = np.ascontiguousarray(np.asarray(traj.observations["sale"], dtype=float)[hits[:m]])
    return _gains(np.ascontiguousarray(targets), stream, params.state_size, params.lead_regular,
                  params.lead_expedited, params.h, params.p, params.c_r, params.c_e, pseudo_cost)


class DualSourcingEnv(Environment):
    name = "dualsource"
    order_kind = "distributional"

    def __init__(self, params: DsParams | None = None):
        self.params = params or DsParams()
        pr = self.params
        U = pr.policy_upper
        self._norm = CostNormalizer(
            offset=pr.p * pr.demand.upper,
            scale=1.0 / (pr.p * pr.demand.upper + pr.h * U + (pr.c_r + pr.c_e) * U),
        )

    @property
    def lower(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def upper(self) -> np.ndarray:
        return np.full(2, self.params.policy_upper)

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.params.state_size)

    def is_initial(self, state) -> bool:
        return bool(np.all(np.asarray(state) == 0.0))

    @property
    def restart_policy(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def alpha(self) -> float:
        return ds_alpha(self.params.demand.gamma, self.params.lead_regular)

    @property
    def t_h_default(self) -> int:
        return 50

    @property
    def span(self) -> float:
        pr = self.params
        if pr.span is not None:
            return pr.span
        g = pr.demand.gamma
        return 2.0 / ((1.0 - g) * g**pr.lead_regular)

    @property
    def normalizer(self) -> CostNormalizer:
        return self._norm

    def action(self, theta, state):
        return dual_index_action(theta, state, self.params)

    def step(self, state, action, exo) -> Transition:
        qe, qr = (float(x) for x in np.asarray(action, dtype=float).reshape(2))
        nxt, true_c, pseudo, obs = ds_step(state, qr, qe, float(exo), self.params)
        avail = obs.sale + nxt[0]
        return Transition(
            state_before=np.asarray(state, dtype=float),
            action=np.array([qe, qr]),
            observed_cost=float(self._norm(pseudo)),
            reported_cost=true_c,
            observation={"sale": obs.sale, "available": avail, "censored": obs.censored},
            state_after=nxt,
        )

    def draw_exogenous(self, rng, n: int) -> np.ndarray:
        return self.params.demand.sample(rng, n)

    def simulate(self, theta, state, exo) -> Trajectory:
        pr = self.params
        ze, zr = (float(x) for x in np.asarray(theta, dtype=float).reshape(2))
        states, actions, avail, sales, true_c, pseudo = _simulate(
            ze, zr, np.asarray(state, dtype=float), np.ascontiguousarray(exo, dtype=float),
            pr.lead_regular, pr.lead_expedited, pr.h, pr.p, pr.c_r, pr.c_e,
        )
        return Trajectory(
            policy=np.array([ze, zr]),
            states=states,
            actions=actions,
            observed_costs=self._norm(pseudo),
            reported_costs=true_c,
            observations={"sale": sales, "available": avail, "censored": sales >= avail},
        )

    def order_key(self, policies) -> np.ndarray:
        pol = np.asarray(policies, dtype=float).reshape(-1, 2)
        return pol[:, ::-1].copy()

    def counterfactual(self, policies, traj: Trajectory) -> np.ndarray:
        targets = np.asarray(policies, dtype=float).reshape(-1, 2)
        raw = _counterfactual_many(targets, traj, self.alpha, self.params)
        m = int(math.ceil(self.alpha * len(traj) - 1e-9))
        if hitting_indices(traj, float(traj.policy[1])).size < m:
            return raw
        return self._norm(raw)

    def evaluate_on_stream(self, policies, exo) -> np.ndarray:
        pr = self.params
        pol = np.ascontiguousarray(np.asarray(policies, dtype=float).reshape(-1, 2))
        return _gains(pol, np.ascontiguousarray(exo, dtype=float), pr.state_size, pr.lead_regular,
                      pr.lead_expedited, pr.h, pr.p, pr.c_r, pr.c_e, False)
