import math

import numpy as np
import pytest

from hinted_lqr.control_core import SystemTruth
from hinted_lqr.controllers import StaticGainController
from hinted_lqr.presets import get_preset
from hinted_lqr.prng import GaussianStream
from hinted_lqr.simulation import (RegretLedger, check_events, noise_block, psd_bound_check, rollout,
                                   simulate_average_cost, static_gain_costs)

from helpers import run


def desk():
    return get_preset("paper-desk-3x2")


def test_zero_noise_stays_at_origin():
    p = desk()
    traj, ledger, _ = rollout(p.truth, StaticGainController(p.K0), 100, 0, noise=False)
    assert np.all(traj.xs == 0)
    assert ledger.cum_cost[-1] == 0
    assert ledger.regret == pytest.approx(-100 * p.truth.J_star)


class OneShot:
    def __init__(self, u):
        self.u = u

    def act(self, t, x):
        return self.u

    def observe(self, t, x, u, xn):
        pass


def test_single_step():
    p = desk()
    u = np.array([0.3, -1.2])
    traj, _, _ = rollout(p.truth, OneShot(u), 1, 5)
    assert np.array_equal(traj.xs[0], np.zeros(3))
    assert np.array_equal(traj.xs[1], p.truth.B_star @ u + traj.ws[0])


def test_replay_exact_and_deterministic():
    _, _, t1, l1, _ = run("alg1", "paper-desk-3x2", 2048, 4)
    _, _, t2, l2, _ = run("alg1", "paper-desk-3x2", 2048, 4)
    assert np.array_equal(t1.costs, t2.costs)
    assert t1.replay_residual(desk().truth) == 0.0
    assert np.all(t1.costs >= 0)


def test_ledger_telescoping():
    rng = np.random.default_rng(0)
    costs = rng.random(50)
    led = RegretLedger(costs, 0.4, reference_costs=costs * 0.5)
    assert led.regret_at(0) == 0
    assert np.all(np.diff(led.cum_cost) >= 0)
    for t in range(1, 51):
        assert led.regret_at(t) - led.regret_at(t - 1) == pytest.approx(costs[t - 1] - 0.4)
    assert led.paired_regret == pytest.approx(0.5 * costs.sum())


def test_noise_covariance():
    w = noise_block(1, 3, 1_000_000, 2.0)
    cov = w.T @ w / len(w)
    assert np.linalg.norm(cov - 2.0 * np.eye(3)) <= 0.01 * np.linalg.norm(2.0 * np.eye(3))


def test_optimal_average_cost_matches_trace():
    t = desk().truth
    mean, se = simulate_average_cost(t, t.K_star, 10_000, seed=0)
    assert abs(mean - t.J_star) <= 3 * se


def test_static_K0_regret_slope():
    p = desk()
    T = 100_000
    _, ledger, _ = rollout(p.truth, StaticGainController(p.K0), T, 2)
    gap = p.truth.cost_of(p.K0) - p.truth.J_star
    assert abs(ledger.regret / T - gap) <= 0.1 * gap


def test_static_costs_match_rollout():
    p = desk()
    traj, ledger, _ = rollout(p.truth, StaticGainController(p.truth.K_star), 500, 9)
    assert np.allclose(traj.costs, static_gain_costs(p.truth, p.truth.K_star, traj.ws))
    assert ledger.paired_regret == pytest.approx(0.0, abs=1e-8)


def test_divergence_is_flagged_not_raised():
    t = SystemTruth([[2.0]], [[1.0]], [[1.0]], [[1.0]], 1.0)
    traj, ledger, _ = rollout(t, StaticGainController([[0.0]]), 200, 0, paired=False)
    assert traj.diverged and traj.steps < 200
    assert math.isinf(ledger.regret)


def test_events_without_noise():
    c, oracle, _, _, _ = run("alg1", "paper-desk-3x2", 1024, 0)
    p = desk()
    traj, _, log = rollout(p.truth, StaticGainController(p.K0), 1024, 0, noise=False)
    rep = check_events(traj, [], c.config, p.truth)
    thresh = math.sqrt(p.truth.sigma2 * 15 * 3 * math.log(4 * 1024))
    assert rep.E_w and rep.E_w_margin == pytest.approx(thresh)


def test_events_on_hinted_run():
    c, oracle, traj, _, log = run("alg1", "paper-desk-3x2", 4096, 1)
    rep = check_events(traj, log, c.config, desk().truth, oracle.log, "B")
    assert len(rep.E_x_margins) == len(log)
    assert len(rep.E_Delta_margins) == len(log)
    assert rep.E_w and rep.E_eta and rep.E_Delta


def test_psd_zero_gain():
    m = psd_bound_check(np.zeros((2, 3)), k_cap=1.0, p=1.0)
    assert m["first"] == pytest.approx(1 - 1 / 3)


def test_psd_scalar_closed_form():
    # [[2, 1], [1, 1]] has smallest eigenvalue (3 - sqrt 5)/2
    m = psd_bound_check([[1.0]], k_cap=1.0, p=1.0, mu=1.0)
    assert m["second"] == pytest.approx((3 - math.sqrt(5)) / 2 - 1 / 3)


def test_psd_random_gains():
    rng = GaussianStream(0, "test", 6)
    for i in range(200):
        K = rng.at(i).reshape(2, 3)
        k = float(np.linalg.norm(K, 2))
        mu = float(np.linalg.eigvalsh(K @ K.T).min())
        m = psd_bound_check(K, k, 0.7, mu)
        assert m["first"] >= -1e-10 and m["second"] >= -1e-10
