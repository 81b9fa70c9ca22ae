"""M/M/1/L queue with impatient jobs and a controllable service speed.

The state is the number of jobs ``s`` in ``0..L``. A policy picks a speed
``theta[s]`` in ``0..A_max`` for every state. Jobs arrive at rate ``lambda_s``,
each waiting job abandons at rate ``mu`` (a deadline miss costing ``C``) and
service completes at rate ``theta[s]``.

The learner works on the chain uniformised at rate ``U``: one step takes an
Exp(U) amount of time, and then an arrival, a miss, a completion or a
self-loop happens with probabilities proportional to the rates. Each step
costs ``w(a) / U + C * [miss]``. Holding times are kept so that ``lambda``
and ``mu`` can be estimated from sojourns in states 0 and L.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from ..core import CostNormalizer, Environment, IopeaError, Trajectory, Transition

SELF_LOOP, ARRIVAL, DEADLINE_MISS, SERVICE = 0, 1, 2, 3
EVENT_NAMES = {SELF_LOOP: "self_loop", ARRIVAL: "arrival", DEADLINE_MISS: "deadline_miss",
               SERVICE: "service_completion"}


@dataclass(frozen=True)
class QueueParams:
    buffer: int = 2
    lam: float = 6.0
    mu: float = 3.0
    lam_max: float = 10.0
    mu_max: float = 10.0
    a_max: int = 3
    power: Sequence[float] = field(default_factory=lambda: (0.0, 1.0, 4.0, 9.0))
    deadline_cost: float = 100.0
    arrivals: str = "decaying"
    uniform_rate: float | None = None
    span: float | None = None
    radius_kind: str = "plugin"

    def __post_init__(self):
        if self.buffer < 1 or self.a_max < 1:
            raise ValueError("buffer and a_max must be positive")
        if not 0 < self.lam <= self.lam_max or not 0 < self.mu <= self.mu_max:
            raise ValueError("rates must be positive and within their bounds")
        if len(self.power) != self.a_max + 1:
            raise ValueError("power table needs a_max + 1 entries")
        if self.radius_kind not in ("plugin", "union"):
            raise ValueError(f"unknown radius kind {self.radius_kind!r}")
        if self.arrivals not in ("decaying", "fixed"):
            raise ValueError(f"unknown arrival mode {self.arrivals!r}")
        if self.uniform_rate is not None and self.uniform_rate < self.max_total_rate:
            raise ValueError("uniformisation rate below the largest total event rate")

    @property
    def U(self) -> float:
        if self.uniform_rate is not None:
            return float(self.uniform_rate)
        return self.lam_max + self.buffer * self.mu_max + self.a_max

    @property
    def max_total_rate(self) -> float:
        # exact bound on any state's total rate under the known bounds
        L = self.buffer
        best = 0.0
        for s in range(L + 1):
            lam_s = 0.0 if s == L else (self.lam_max * (1 - s / L) if self.arrivals == "decaying"
                                        else self.lam_max)
            best = max(best, lam_s + s * self.mu_max + self.a_max)
        return best

    def arrival_rate(self, s: int, lam: float | None = None) -> float:
        lam = self.lam if lam is None else lam
        if s >= self.buffer:
            return 0.0
        return lam * (1 - s / self.buffer) if self.arrivals == "decaying" else lam


@dataclass
class JumpRecord:
    state: int
    holding_time: float
    event: str
    accrued_cost: float


def _rates(s: int, theta, params: QueueParams, lam=None, mu=None):
    mu = params.mu if mu is None else mu
    # nothing to serve in the empty queue
    return params.arrival_rate(s, lam), s * mu, float(theta[s]) if s > 0 else 0.0


def queue_jump(s: int, theta, params: QueueParams, rng: np.random.Generator) -> JumpRecord:
    """One continuous-time jump by competing exponential clocks."""
    if not 0 <= s <= params.buffer:
        raise IopeaError("bad-state", f"state {s} outside 0..{params.buffer}")
    theta = np.asarray(theta, dtype=float)
    lam_s, miss_rate, serve_rate = _rates(s, theta, params)
    total = lam_s + miss_rate + serve_rate
    if total <= 0:
        raise IopeaError("absorbing-state", f"no events possible in state {s}")
    holding = rng.exponential(1.0 / total)
    u = rng.random() * total
    if u < lam_s:
        event = "arrival"
    elif u < lam_s + miss_rate:
        event = "deadline_miss"
    else:
        event = "service_completion"
    cost = params.power[int(theta[s])] * holding + params.deadline_cost * (event == "deadline_miss")
    return JumpRecord(s, float(holding), event, float(cost))


def estimate_rates(jumps, theta, params: QueueParams) -> tuple[float, float]:
    """``(lambda_hat, mu_hat)`` from holding intervals in states 0 and L.

    Accepts a list of :class:`JumpRecord` or a queue :class:`Trajectory`.
    Time spent in an unfinished final sojourn still counts in the exposure.
    """
    L = params.buffer
    if isinstance(jumps, Trajectory):
        n0, t0, nl, tl = _sojourn_stats(jumps, L)
    else:
        n0 = sum(1 for j in jumps if j.state == 0 and j.event != "self_loop")
        t0 = sum(j.holding_time for j in jumps if j.state == 0)
        nl = sum(1 for j in jumps if j.state == L and j.event in ("deadline_miss", "service_completion"))
        tl = sum(j.holding_time for j in jumps if j.state == L)
    if n0 == 0 or nl == 0 or t0 <= 0 or tl <= 0:
        raise IopeaError("insufficient-coverage", "need completed visits to both 0 and L")
    lam_hat = min(max(n0 / t0, 0.0), params.lam_max)
    mu_hat = (nl / tl - float(np.asarray(theta)[L])) / L
    mu_hat = min(max(mu_hat, 0.0), params.mu_max)
    return lam_hat, mu_hat


def _sojourn_stats(traj: Trajectory, L: int):
    s = traj.states.astype(np.int64)
    before, after = s[:-1], s[1:]
    dt = traj.observations["dt"]
    at0 = before == 0
    atl = before == L
    return (
        int(np.count_nonzero(at0 & (after != 0))),
        float(dt[at0].sum()),
        int(np.count_nonzero(atl & (after != L))),
        float(dt[atl].sum()),
    )


def stationary_dist(lam: float, mu: float, theta, params: QueueParams, strict: bool = True) -> np.ndarray:
    """Birth-death product form over ``0..L``.

    If some state ``j`` cannot be left downwards but is entered from below,
    the states under ``j`` are transient. ``strict`` raises in that case;
    otherwise the law of the closed class ``j..L`` is returned.
    """
    L = params.buffer
    theta = np.asarray(theta, dtype=float)
    up = np.array([params.arrival_rate(s, lam) for s in range(L)])
    down = np.arange(1, L + 1) * mu + theta[1:]
    stuck = np.flatnonzero((down <= 0) & (up > 0))
    if stuck.size and strict:
        raise IopeaError("non-ergodic", f"no way down from state {stuck[0] + 1}")
    start = int(stuck[-1]) + 1 if stuck.size else 0
    m = np.zeros(L + 1)
    m[start] = 1.0
    for s in range(start, L):
        if down[s] <= 0:
            break
        m[s + 1] = m[s] * up[s] / down[s]
    return m / m.sum()


def generator_matrix(lam: float, mu: float, theta, params: QueueParams) -> np.ndarray:
    L = params.buffer
    theta = np.asarray(theta, dtype=float)
    Q = np.zeros((L + 1, L + 1))
    for s in range(L + 1):
        if s < L:
            Q[s, s + 1] = params.arrival_rate(s, lam)
        if s > 0:
            Q[s, s - 1] = s * mu + theta[s]
        Q[s, s] = -Q[s].sum()
    return Q


def stationary_dist_solve(lam: float, mu: float, theta, params: QueueParams) -> np.ndarray:
    """Stationary law from ``m Q = 0, sum m = 1`` by least squares."""
    Q = generator_matrix(lam, mu, theta, params)
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    m, *_ = np.linalg.lstsq(A, b, rcond=None)
    return m


def expected_step_cost(s: int, a: int, mu: float, params: QueueParams) -> float:
    U = params.U
    return params.power[int(a)] / U + params.deadline_cost * s * mu / U


def plugin_gain(lam_hat: float, mu_hat: float, theta_prime, params: QueueParams) -> float:
    """Average uniformised step cost of ``theta_prime`` under the given rates."""
    theta_prime = np.asarray(theta_prime, dtype=float)
    m = stationary_dist(lam_hat, mu_hat, theta_prime, params)
    c = np.array([expected_step_cost(s, int(theta_prime[s]), mu_hat, params)
                  for s in range(params.buffer + 1)])
    return float(m @ c)


def _plugin_many(lam_hat: float, mu_hat: float, thetas: np.ndarray, params: QueueParams) -> np.ndarray:
    U = params.U
    power = np.asarray(params.power, dtype=float)
    cost_s = params.deadline_cost * np.arange(params.buffer + 1) * mu_hat / U
    out = np.empty(thetas.shape[0])
    for i, th in enumerate(thetas):
        m = stationary_dist(lam_hat, mu_hat, th, params, strict=False)
        out[i] = float(m @ (power[th.astype(np.int64)] / U + cost_s))
    return out


@numba.njit(cache=True)
def _simulate(theta, s0, u, e, lam_s, mu, U, power, C):
    n = u.size
    states = np.empty(n + 1, dtype=np.int64)
    events = np.empty(n, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    costs = np.empty(n)
    dts = np.empty(n)
    s = s0
    states[0] = s
    for t in range(n):
        a = int(theta[s])
        x = u[t] * U
        c = power[a] / U
        if x < lam_s[s]:
            ev = 1
            s_next = s + 1
        elif x < lam_s[s] + s * mu:
            ev = 2
            s_next = s - 1
            c += C
        elif x < lam_s[s] + s * mu + a and s > 0:
            ev = 3
            s_next = s - 1
        else:
            ev = 0
            s_next = s
        actions[t] = a
        events[t] = ev
        costs[t] = c
        dts[t] = e[t] / U
        s = s_next
        states[t + 1] = s
    return states, actions, events, costs, dts


@numba.njit(cache=True)
def _gains(thetas, s0, u, e, lam_s, mu, U, power, C):
    m = thetas.shape[0]
    n = u.size
    out = np.empty(m)
    for i in range(m):
        s = s0
        total = 0.0
        for t in range(n):
            a = int(thetas[i, s])
            x = u[t] * U
            total += power[a] / U
            if x < lam_s[s]:
                s += 1
            elif x < lam_s[s] + s * mu:
                total += C
                s -= 1
            elif x < lam_s[s] + s * mu + a and s > 0:
                s -= 1
        out[i] = total / n
    return out


class QueueEnv(Environment):
    name = "queue"
    order_kind = "sample_path"

    def __init__(self, params: QueueParams | None = None):
        self.params = params or QueueParams()
        pr = self.params
        self._norm = CostNormalizer(0.0, 1.0 / (max(pr.power) / pr.U + pr.deadline_cost))
        self._lam_s = np.array([pr.arrival_rate(s) for s in range(pr.buffer + 1)])

    @property
    def lower(self) -> np.ndarray:
        return np.zeros(self.params.buffer + 1)

    @property
    def upper(self) -> np.ndarray:
        return np.full(self.params.buffer + 1, float(self.params.a_max))

    def initial_state(self) -> int:
        return 0

    def is_initial(self, state) -> bool:
        return int(state) == 0

    @property
    def restart_policy(self) -> np.ndarray:
        return np.full(self.params.buffer + 1, float(self.params.a_max))

    @property
    def span(self) -> float:
        if self.params.span is not None:
            return self.params.span
        L = self.params.buffer
        return L * math.log(L) + 1.0

    @property
    def normalizer(self) -> CostNormalizer:
        return self._norm

    def action(self, theta, state) -> int:
        return int(np.asarray(theta)[int(state)])

    def step(self, state, action, exo) -> Transition:
        u, e = float(exo[0]), float(exo[1])
        theta = np.zeros(self.params.buffer + 1)
        theta[int(state)] = action
        states, actions, events, costs, dts = _simulate(
            theta, int(state), np.array([u]), np.array([e]), self._lam_s, self.params.mu,
            self.params.U, np.asarray(self.params.power, dtype=float), self.params.deadline_cost,
        )
        return Transition(
            state_before=int(state),
            action=int(action),
            observed_cost=float(self._norm(costs[0])),
            reported_cost=float(costs[0]),
            observation={"dt": float(dts[0]), "event": int(events[0])},
            state_after=int(states[1]),
        )

    def draw_exogenous(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        e = rng.exponential(1.0, n)
        return np.column_stack([u, e])

    def simulate(self, theta, state, exo) -> Trajectory:
        pr = self.params
        theta = np.asarray(theta, dtype=float)
        exo = np.asarray(exo, dtype=float).reshape(-1, 2)
        states, actions, events, costs, dts = _simulate(
            theta, int(state), np.ascontiguousarray(exo[:, 0]), np.ascontiguousarray(exo[:, 1]),
            self._lam_s, pr.mu, pr.U, np.asarray(pr.power, dtype=float), pr.deadline_cost,
        )
        return Trajectory(
            policy=theta.copy(),
            states=states,
            actions=actions,
            observed_costs=self._norm(costs),
            reported_costs=costs,
            observations={"dt": dts, "event": events},
        )

    def order_key(self, policies) -> np.ndarray:
        return np.asarray(policies, dtype=float).reshape(-1, self.params.buffer + 1)

    def counterfactual(self, policies, traj: Trajectory) -> np.ndarray:
        thetas = np.asarray(policies, dtype=float).reshape(-1, self.params.buffer + 1)
        try:
            lam_hat, mu_hat = estimate_rates(traj, traj.policy, self.params)
        except IopeaError as err:
            if err.code != "insufficient-coverage":
                raise
            # no information: equal estimates keep every target alive
            return np.full(thetas.shape[0], float(np.mean(traj.observed_costs)))
        return self._norm(_plugin_many(lam_hat, mu_hat, thetas, self.params))

    def radius(self, k, n_k, grid_size, n_epochs, cfg) -> float:
        if self.params.radius_kind == "union":
            return super().radius(k, n_k, grid_size, n_epochs, cfg)
        L = self.params.buffer
        return cfg.beta_scale * L**3 * math.sqrt(math.log(1.0 / cfg.delta) / (cfg.alpha * n_k))

    def evaluate_on_stream(self, policies, exo) -> np.ndarray:
        pr = self.params
        thetas = np.ascontiguousarray(np.asarray(policies, dtype=float).reshape(-1, pr.buffer + 1))
        exo = np.asarray(exo, dtype=float).reshape(-1, 2)
        return _gains(thetas, self.initial_state(), np.ascontiguousarray(exo[:, 0]),
                      np.ascontiguousarray(exo[:, 1]), self._lam_s, pr.mu, pr.U,
                      np.asarray(pr.power, dtype=float), pr.deadline_cost)

    def true_gain(self, theta) -> float:
        return plugin_gain(self.params.lam, self.params.mu, theta, self.params)
