import numpy as np
import pytest

from iopea.core import CostNormalizer, Environment, Trajectory, Transition

# criterion number -> (passed, detail); filled by test_acceptance.py
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


class ToyEnv(Environment):
    """Deterministic one-state MDP: policy ``theta`` costs ``cost(theta)`` every step."""

    name = "toy"

    def __init__(self, cost, upper=1.0, span=0.1, noise=0.0):
        self.cost = cost
        self._upper = float(upper)
        self._span = span
        self.noise = noise

    @property
    def lower(self):
        return np.zeros(1)

    @property
    def upper(self):
        return np.array([self._upper])

    def initial_state(self):
        return np.zeros(1)

    def is_initial(self, state):
        return True

    @property
    def restart_policy(self):
        return np.zeros(1)

    @property
    def span(self):
        return self._span

    @property
    def normalizer(self):
        return CostNormalizer()

    def action(self, theta, state):
        return float(np.atleast_1d(theta)[0])

    def step(self, state, action, exo):
        c = self.cost(float(action)) + self.noise * float(exo)
        return Transition(np.zeros(1), float(action), c, c, {"exo": float(exo)}, np.zeros(1))

    def draw_exogenous(self, rng, n):
        return rng.standard_normal(n) if self.noise else np.zeros(n)

    def simulate(self, theta, state, exo):
        theta = float(np.atleast_1d(theta)[0])
        exo = np.asarray(exo, dtype=float)
        n = exo.size
        c = self.cost(theta) + self.noise * exo
        return Trajectory(
            policy=np.array([theta]),
            states=np.zeros((n + 1, 1)),
            actions=np.full(n, theta),
            observed_costs=c,
            reported_costs=c.copy(),
            observations={"exo": exo},
        )

    def order_key(self, policies):
        return np.asarray(policies, dtype=float).reshape(-1, 1)

    def counterfactual(self, policies, traj):
        noise = self.noise * float(np.mean(traj.observations["exo"])) if len(traj) else 0.0
        return np.array([self.cost(float(p)) + noise for p in np.asarray(policies).reshape(-1)])


@pytest.fixture
def toy_env():
    return ToyEnv


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
