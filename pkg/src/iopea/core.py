"""Environment-agnostic MDP contracts, trajectories and regret accounting."""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

import numpy as np


class IopeaError(Exception):
    """Error carrying a stable machine-readable ``code``."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


def rng_stream(seed: int, replicate: int, epoch: int, slot: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, replicate, epoch, slot).

    Two calls with the same key return generators producing identical draws,
    which is what makes replays and common-random-number comparisons exact.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(epoch), int(slot)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, order=True)
class PolicyParam:
    coords: tuple[float, ...]

    @classmethod
    def of(cls, *values: float) -> "PolicyParam":
        return cls(tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def in_box(self, lower: np.ndarray, upper: np.ndarray) -> bool:
        x = self.as_array()
        return bool(np.all(x >= lower) and np.all(x <= upper))

    def __str__(self) -> str:
        return format_coords(self.coords)


def format_coords(coords) -> str:
    return ";".join(f"{float(c):.6g}" for c in coords)


@dataclass
class Transition:
    state_before: Any
    action: Any
    observed_cost: float
    reported_cost: float
    observation: dict
    state_after: Any


@dataclass
class Trajectory:
    """Columnar record of one rollout.

    ``states`` has one more row than there are steps: ``states[i]`` is the
    state before step ``i`` and ``states[-1]`` is the final state.
    ``observations`` maps a field name to a per-step array.
    """

    policy: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    observed_costs: np.ndarray
    reported_costs: np.ndarray
    observations: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.observed_costs)

    @property
    def start_state(self):
        return self.states[0]

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def steps(self) -> list[Transition]:
        return list(self.transitions())

    def transitions(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield Transition(
                state_before=self.states[i],
                action=self.actions[i],
                observed_cost=float(self.observed_costs[i]),
                reported_cost=float(self.reported_costs[i]),
                observation={k: v[i] for k, v in self.observations.items()},
                state_after=self.states[i + 1],
            )

    def head(self, n: int) -> "Trajectory":
        n = max(0, min(int(n), len(self)))
        return Trajectory(
            policy=self.policy,
            states=self.states[: n + 1],
            actions=self.actions[:n],
            observed_costs=self.observed_costs[:n],
            reported_costs=self.reported_costs[:n],
            observations={k: v[:n] for k, v in self.observations.items()},
        )

    @staticmethod
    def concat(parts: list["Trajectory"]) -> "Trajectory":
        if not parts:
            raise IopeaError("empty-trajectory", "nothing to concatenate")
        first = parts[0]
        states = [first.states[:1]] + [p.states[1:] for p in parts]
        return Trajectory(
            policy=first.policy,
            states=np.concatenate(states),
            actions=np.concatenate([p.actions for p in parts]),
            observed_costs=np.concatenate([p.observed_costs for p in parts]),
            reported_costs=np.concatenate([p.reported_costs for p in parts]),
            observations={
                k: np.concatenate([p.observations[k] for p in parts]) for k in first.observations
            },
        )


def empirical_gain(traj: Trajectory, use_observed: bool = True) -> float:
    """Average per-step cost along ``traj`` (training channel by default)."""
    if len(traj) == 0:
        raise IopeaError("empty-trajectory")
    costs = traj.observed_costs if use_observed else traj.reported_costs
    return float(np.mean(costs))


@dataclass
class Segment:
    """A contiguous block of recorded steps sharing one policy and epoch."""

    start: int
    epoch: int
    phase: str
    active_size: int
    policy: tuple
    costs: np.ndarray
    gain_estimate: float = math.nan


@dataclass
class RegretLedger:
    total_true_cost: float = 0.0
    timesteps: int = 0
    g_star: float = math.nan
    segments: list[Segment] = field(default_factory=list, repr=False)

    def record_trajectory(
        self,
        traj: Trajectory,
        *,
        epoch: int = 0,
        phase: str = "play",
        active_size: int = 0,
        gain_estimate: float = math.nan,
    ) -> None:
        if len(traj) == 0:
            return
        costs = np.asarray(traj.reported_costs, dtype=float)
        self.segments.append(
            Segment(
                start=self.timesteps,
                epoch=epoch,
                phase=phase,
                active_size=active_size,
                policy=tuple(float(c) for c in np.atleast_1d(traj.policy)),
                costs=costs,
                gain_estimate=gain_estimate,
            )
        )
        self.total_true_cost += float(costs.sum())
        self.timesteps += len(costs)

    def cost_series(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0)
        return np.concatenate([s.costs for s in self.segments])


def record_step(ledger: RegretLedger, tr: Transition) -> RegretLedger:
    ledger.total_true_cost += float(tr.reported_cost)
    ledger.timesteps += 1
    return ledger


def regret(ledger: RegretLedger) -> float:
    return ledger.total_true_cost - ledger.timesteps * ledger.g_star


@dataclass(frozen=True)
class CostNormalizer:
    """Affine map ``(raw + offset) * scale`` taking training costs into [0, 1]."""

    offset: float = 0.0
    scale: float = 1.0

    def __call__(self, raw):
        return (raw + self.offset) * self.scale

    def inverse(self, value):
        return value / self.scale - self.offset


class Environment(ABC):
    """Capability shared by the case-study MDPs.

    Subclasses supply the one-step dynamics, a vectorised rollout driven by an
    explicit exogenous stream, the restart policy and the counterfactual
    estimator that realises their information order.

    ``restart_bound`` (D_Theta) and ``lipschitz`` (L_Theta) only enter regret
    constants; they are carried as metadata and never read at runtime.
    """

    name: str = "env"
    order_kind: str = "sample_path"
    restart_bound: Optional[float] = None
    lipschitz: Optional[float] = None
    # the full-feedback baseline may read the exogenous stream
    full_feedback: bool = True

    # --- geometry -------------------------------------------------------
    @property
    @abstractmethod
    def lower(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def upper(self) -> np.ndarray: ...

    @property
    def dim(self) -> int:
        return len(self.upper)

    # --- contract ---------------------------------------------------------
    @abstractmethod
    def initial_state(self): ...

    @abstractmethod
    def is_initial(self, state) -> bool: ...

    @property
    @abstractmethod
    def restart_policy(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def span(self) -> float:
        """Bias-span bound H in normalised training-cost units."""

    @property
    def alpha(self) -> float:
        return 1.0

    @property
    def t_h_default(self) -> int:
        return 1

    @property
    @abstractmethod
    def normalizer(self) -> CostNormalizer: ...

    @abstractmethod
    def action(self, theta: np.ndarray, state): ...

    @abstractmethod
    def step(self, state, action, exo) -> Transition: ...

    @abstractmethod
    def draw_exogenous(self, rng: np.random.Generator, n: int) -> np.ndarray: ...

    @abstractmethod
    def simulate(self, theta: np.ndarray, state, exo: np.ndarray) -> Trajectory: ...

    @abstractmethod
    def order_key(self, policies: np.ndarray) -> np.ndarray:
        """Per-row sort keys, shape ``(n, k)``; lexicographic comparison of
        rows realises the environment's information order."""

    def leq(self, a: np.ndarray, b: np.ndarray) -> bool:
        ka = tuple(self.order_key(np.atleast_2d(np.asarray(a, dtype=float)))[0])
        kb = tuple(self.order_key(np.atleast_2d(np.asarray(b, dtype=float)))[0])
        return ka <= kb

    @abstractmethod
    def counterfactual(self, policies: np.ndarray, traj: Trajectory) -> np.ndarray:
        """Normalised gain estimates for each row of ``policies`` from ``traj``."""

    def evaluate_on_stream(self, policies: np.ndarray, exo: np.ndarray) -> np.ndarray:
        """Mean true cost of each policy simulated from s_1 on ``exo``.

        Uses the hidden exogenous stream, so only the full-feedback baseline
        and the harness oracle may call it.
        """
        s1 = self.initial_state()
        return np.array([float(np.mean(self.simulate(p, s1, exo).reported_costs)) for p in policies])

    def radius(self, k: int, n_k: int, grid_size: int, n_epochs: int, cfg) -> float:
        from .algorithm import beta_k

        return beta_k(k, n_k, grid_size, n_epochs, cfg)

    # --- derived helpers ----------------------------------------------------
    def rollout(self, theta: np.ndarray, n: int, state, rng: np.random.Generator) -> Trajectory:
        return self.simulate(np.asarray(theta, dtype=float), state, self.draw_exogenous(rng, int(n)))

    def restart(self, state, rng: np.random.Generator, max_steps: int) -> Trajectory:
        """Play the restart policy until the initial state is reached.

        Returns the (possibly empty) restart trajectory; it is shorter than
        ``max_steps`` exactly when the initial state was reached.
        """
        theta_r = np.asarray(self.restart_policy, dtype=float)
        parts: list[Trajectory] = []
        used = 0
        chunk = 64
        cur = state
        if self.is_initial(cur):
            return self.simulate(theta_r, cur, self.draw_exogenous(rng, 0))
        while used < max_steps:
            n = min(chunk, max_steps - used)
            traj = self.simulate(theta_r, cur, self.draw_exogenous(rng, n))
            hit = self._first_home(traj)
            if hit is not None:
                parts.append(traj.head(hit + 1))
                break
            parts.append(traj)
            used += n
            cur = traj.final_state
            chunk = min(chunk * 2, 1 << 16)
        return Trajectory.concat(parts)

    def _first_home(self, traj: Trajectory) -> Optional[int]:
        for i in range(len(traj)):
            if self.is_initial(traj.states[i + 1]):
                return i
        return None

    def replay(self, traj: Trajectory, exo: np.ndarray) -> Trajectory:
        """Re-run ``traj``'s stored actions through :meth:`step` on ``exo``."""
        steps = []
        state = traj.start_state
        for i in range(len(traj)):
            tr = self.step(state, traj.actions[i], exo[i])
            steps.append(tr)
            state = tr.state_after
        return steps_to_trajectory(traj.policy, traj.start_state, steps)


def steps_to_trajectory(policy, start_state, steps: list[Transition]) -> Trajectory:
    states = [np.asarray(start_state)] + [np.asarray(t.state_after) for t in steps]
    keys = steps[0].observation.keys() if steps else ()
    return Trajectory(
        policy=np.asarray(policy, dtype=float),
        states=np.array(states),
        actions=np.array([t.action for t in steps]),
        observed_costs=np.array([t.observed_cost for t in steps], dtype=float),
        reported_costs=np.array([t.reported_cost for t in steps], dtype=float),
        observations={k: np.array([t.observation[k] for t in steps]) for k in keys},
    )

