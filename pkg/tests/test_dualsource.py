import math

import numpy as np
import pytest

from iopea.core import IopeaError, Trajectory
from iopea.envs import DemandModel, DsParams, DualSourcingEnv
from iopea.envs.dualsource import (ds_alpha, ds_counterfactual, ds_step, dual_index_action, hitting_indices)

PR = DsParams(lead_regular=1, lead_expedited=0, h=1.0, p=10.0, c_r=0.0, c_e=0.5)


def brute_force_estimate(theta, theta_p, demand, alpha, pr):
    """Hitting-time estimator written out for L_r = 1, L_e = 0, state (I, R)."""
    ze, zr = theta
    on_hand, reg = 0.0, 0.0
    hits = []
    for d in demand:
        qe = max(ze - on_hand - reg, 0.0)
        qr = max(zr - on_hand - reg - qe, 0.0)
        avail = on_hand + reg + qe
        sale = min(avail, d)
        if abs(avail - zr) <= 1e-9:
            hits.append(sale)
        on_hand, reg = avail - sale, qr
    m = math.ceil(alpha * len(demand))
    if len(hits) < m:
        return 0.0
    ze, zr = theta_p
    on_hand, reg, total = 0.0, 0.0, 0.0
    for d in hits[:m]:
        qe = max(ze - on_hand - reg, 0.0)
        qr = max(zr - on_hand - reg - qe, 0.0)
        avail = on_hand + reg + qe
        sale = min(avail, d)
        total += pr.h * (avail - sale) - pr.p * sale + pr.c_r * qr + pr.c_e * qe
        on_hand, reg = avail - sale, qr
    return total / m


def test_ds_step_examples():
    nxt, true_c, pseudo, obs = ds_step(np.array([0.0, 1.0]), 0.0, 1.0, 5.0, PR)
    assert true_c == pytest.approx(30.5) and pseudo == pytest.approx(-19.5)
    assert obs.sale == 2.0 and obs.censored and nxt.tolist() == [0.0, 0.0]
    nxt, true_c, pseudo, obs = ds_step(np.array([1.0, 1.0]), 2.0, 1.0, 0.0, PR)
    assert obs.sale == 0.0
    assert pseudo == pytest.approx(1.0 * 3.0 + 0.0 * 2.0 + 0.5 * 1.0)
    assert nxt.tolist() == [3.0, 2.0]
    with pytest.raises(IopeaError):
        ds_step(np.array([0.0, 0.0]), -1.0, 0.0, 1.0, PR)


def test_dual_index_action_examples():
    assert dual_index_action((0.0, 0.0), [0.0, 0.0], PR) == (0.0, 0.0)
    assert dual_index_action((1.0, 3.0), [0.0, 0.0], PR) == (1.0, 2.0)
    assert dual_index_action((1.0, 3.0), [2.0, 1.5], PR) == (0.0, 0.0)


def test_longer_lead_times_action():
    pr = DsParams(lead_regular=3, lead_expedited=1)
    # state [I, R_{t-3}, R_{t-2}, R_{t-1}, E_{t-1}]
    s = np.array([1.0, 0.5, 0.5, 0.5, 0.25])
    qe, qr = dual_index_action((2.5, 4.0), s, pr)
    # expedited position counts I, E and the regular orders due within 1 period
    assert qe == pytest.approx(2.5 - (1.0 + 0.25 + 0.5 + 0.5))
    assert qr == pytest.approx(4.0 - (1.0 + 0.25 + 1.5) - qe)


def test_ds_alpha_examples():
    assert ds_alpha(0.3, 1) == pytest.approx(0.105)
    assert ds_alpha(0.4, 0) == pytest.approx(0.3)
    assert ds_alpha(1.0 - 1e-12, 2) == pytest.approx(0.0, abs=1e-11)


def test_hitting_indices_examples():
    traj = Trajectory(policy=np.array([1.0, 3.0]), states=np.zeros((6, 2)), actions=np.zeros((5, 2)),
                      observed_costs=np.zeros(5), reported_costs=np.zeros(5),
                      observations={"available": np.array([3.0, 2.0, 3.0, 3.0, 1.0])})
    assert (hitting_indices(traj, 3.0) + 1).tolist() == [1, 3, 4]
    assert hitting_indices(traj, 5.0).tolist() == []


def test_zero_demand_hits_every_step_after_fill_up():
    for Lr in (1, 2, 3):
        pr = DsParams(lead_regular=Lr, lead_expedited=0)
        env = DualSourcingEnv(pr)
        traj = env.simulate(np.array([1.0, 2.5]), env.initial_state(), np.zeros(12))
        assert hitting_indices(traj, 2.5).tolist() == list(range(Lr, 12))


def test_counterfactual_matches_brute_force():
    env = DualSourcingEnv(PR)
    alpha = ds_alpha(0.3, 1)
    demand = np.array([0.0, 1.5, 0.0, 0.0, 2.0, 0.5, 0.0, 3.0])
    theta, theta_p = (1.0, 3.0), (0.5, 2.0)
    traj = env.simulate(np.array(theta), env.initial_state(), demand)
    got = ds_counterfactual(theta_p, traj, alpha, PR)
    assert got == pytest.approx(brute_force_estimate(theta, theta_p, demand, alpha, PR), abs=1e-12)
    assert hitting_indices(traj, 3.0).size >= math.ceil(alpha * 8)
    rng = np.random.default_rng(5)
    for _ in range(200):
        demand = PR.demand.sample(rng, int(rng.integers(5, 60)))
        zr = rng.uniform(0, 4)
        theta = (rng.uniform(0, zr), zr)
        theta_p = (rng.uniform(0, 4), rng.uniform(0, zr))
        alpha = rng.uniform(0.05, 0.5)
        traj = env.simulate(np.array(theta), env.initial_state(), demand)
        assert ds_counterfactual(theta_p, traj, alpha, PR) == pytest.approx(
            brute_force_estimate(theta, theta_p, demand, alpha, PR), abs=1e-9)


def test_counterfactual_zero_when_too_few_hits():
    env = DualSourcingEnv(PR)
    demand = np.full(30, 2.9)
    traj = env.simulate(np.array([0.0, 3.0]), env.initial_state(), demand)
    # one hit while ceil(0.105 * 30) = 4 are needed
    assert hitting_indices(traj, 3.0).size == 1
    assert ds_counterfactual((0.0, 1.0), traj, 0.105, PR) == 0.0
    assert env.counterfactual(np.array([[0.0, 1.0], [0.0, 2.0]]), traj).tolist() == [0.0, 0.0]


def test_counterfactual_rejects_larger_z_r():
    env = DualSourcingEnv(PR)
    traj = env.simulate(np.array([1.0, 2.0]), env.initial_state(), np.zeros(10))
    with pytest.raises(IopeaError) as err:
        ds_counterfactual((0.0, 2.5), traj, 0.105, PR)
    assert err.value.code == "not-dominated"


def test_sales_at_hitting_times_are_demand_censored_at_z_r():
    env = DualSourcingEnv(PR)
    exo = env.draw_exogenous(np.random.default_rng(3), 5000)
    traj = env.simulate(np.array([1.6, 2.5]), env.initial_state(), exo)
    hits = hitting_indices(traj, 2.5)
    assert hits.size > 0
    np.testing.assert_allclose(traj.observations["sale"][hits], np.minimum(2.5, exo[hits]), atol=1e-12)


def test_coalescence_after_zero_demand_run():
    for Lr in (1, 2, 3):
        pr = DsParams(lead_regular=Lr, lead_expedited=0)
        env = DualSourcingEnv(pr)
        theta = np.array([1.2, 2.8])
        rng = np.random.default_rng(Lr)
        starts = [env.simulate(theta, env.initial_state(), env.draw_exogenous(rng, n)).final_state
                  for n in (7, 31)]
        assert not np.allclose(starts[0], starts[1])
        # the order placed in the first zero-demand period arrives L_r periods later
        stream = np.concatenate([np.zeros(Lr + 1), env.draw_exogenous(rng, 50)])
        a = env.simulate(theta, starts[0], stream).states
        b = env.simulate(theta, starts[1], stream).states
        np.testing.assert_allclose(a[Lr + 1:], b[Lr + 1:], atol=1e-12)
        assert a[Lr + 1].tolist() == [2.8] + [0.0] * Lr


def test_hitting_frequency():
    env = DualSourcingEnv(PR)
    alpha = env.alpha
    T, reps, ok = 2000, 50, 0
    for rep in range(reps):
        exo = env.draw_exogenous(np.random.default_rng(100 + rep), T)
        traj = env.simulate(np.array([1.6, 2.5]), env.initial_state(), exo)
        ok += hitting_indices(traj, 2.5).size >= alpha * T
    assert ok / reps >= 0.9


def test_step_matches_simulate():
    env = DualSourcingEnv(DsParams(lead_regular=2, lead_expedited=1))
    exo = env.draw_exogenous(np.random.default_rng(0), 100)
    traj = env.simulate(np.array([1.5, 3.0]), env.initial_state(), exo)
    again = env.replay(traj, exo)
    np.testing.assert_allclose(again.states, traj.states, atol=1e-12)
    np.testing.assert_allclose(again.observed_costs, traj.observed_costs, atol=1e-12)
    np.testing.assert_allclose(again.observations["available"], traj.observations["available"], atol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        DsParams(lead_regular=1, lead_expedited=1)
    with pytest.raises(ValueError):
        DsParams(demand=DemandModel(gamma=0.0))
    env = DualSourcingEnv(PR)
    assert env.span == pytest.approx(2.0 / (0.7 * 0.3))
    assert env.alpha == pytest.approx(0.105)
