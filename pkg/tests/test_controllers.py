import inspect
import math

import numpy as np
import pytest

import hinted_lqr.controllers as controllers_mod
from hinted_lqr.control_core import SystemTruth
from hinted_lqr.controllers import (Alg2Controller, ControllerConfig, Phase, StaticGainController,
                                    epoch_schedule, mu_schedule, theoretical_params, x_b_formula)
from hinted_lqr.errors import HorizonTooShort
from hinted_lqr.hints import HintOracle, default_schedule
from hinted_lqr.presets import Preset, get_preset, practical_params
from hinted_lqr.prng import GaussianStream
from hinted_lqr.simulation import rollout

from helpers import make_controller, run

BOUNDS = dict(alpha0=1.0, alpha1=1.0, nu=1.0, phi=0.0, sigma2=1.0, n=1, m=1)


def test_gain_cap_collapses_to_one():
    cfg = theoretical_params(BOUNDS, 2.0, 1000, C0=1e-30, epsilon0=1e-3)
    assert cfg.k == pytest.approx(1.0)
    assert cfg.p == pytest.approx(4 / 3)


def test_state_cap_example():
    assert x_b_formula(1, 1.0, 1.0, 0.0, math.e / 4) == pytest.approx(540.0)


def test_theoretical_formulas():
    b = dict(alpha0=0.5, alpha1=2.0, nu=3.0, phi=1.5, sigma2=2.0, n=2, m=1)
    cfg = theoretical_params(b, 1.5, 10_000, C0=4.0, epsilon0=0.1)
    k = math.sqrt((3.0 + 0.01 * 4.0) / (0.5 * 2.0))
    assert cfg.k == pytest.approx(k)
    x_b = 135 * 2 * k ** 2 * 2.0 * max(2.5 ** 2 * k ** 6, 4 * k ** 6) * math.log(40_000)
    assert cfg.x_b == pytest.approx(x_b)
    assert cfg.lam == pytest.approx((1 + k) ** 2 * x_b)
    p = 1.5 ** 2 / (2 + k ** 2)
    assert cfg.p == pytest.approx(p)
    tau1 = math.ceil(240 * cfg.lam * (1 + 1.5 ** 2) * ((1 + k ** 2) / min(p, 1) + 1) * 3 / (0.01 * 2.0))
    assert cfg.tau1 == tau1
    c2 = theoretical_params(b, 1.5, 10_000, C0=4.0, epsilon0=0.1, alg=2, mu_star=0.2)
    p2 = 4 / (2 + k ** 2)
    assert c2.p == pytest.approx(p2)
    assert c2.mu1 == pytest.approx(4 * k * 4.0 * 0.1)
    tau2 = math.ceil(240 * c2.lam * (1 + 1.5 ** 2) * max(2 + k ** 2, (0.2 + 2 * p2 + 2) / (2 * 0.2 * p2)) * 3 / 0.02)
    assert c2.tau1 == tau2


def test_epoch_schedule_examples():
    assert epoch_schedule(100, 2.0, 100_000) == [100, 400, 1600, 6400, 25600]
    assert epoch_schedule(500, 2.0, 500) == [500]
    assert epoch_schedule(10, 3.0, 1000, alg=2) == [10, 40, 160, 640]
    assert mu_schedule(0.5, 4) == [0.5, 1.0, 2.0, 4.0]
    with pytest.raises(HorizonTooShort):
        epoch_schedule(101, 2.0, 100)


def test_config_validation():
    kw = dict(k=1.0, ell=0.5, tau1=10, r=2.0, x_b=1.0, lam=1.0, p=1.0, T=100, sigma2=1.0)
    ControllerConfig(**kw)
    with pytest.raises(ValueError):
        ControllerConfig(**{**kw, "k": -1.0})
    with pytest.raises(ValueError):
        ControllerConfig(**{**kw, "tau1": 2}, n=3, m=2)
    with pytest.raises(ValueError):
        ControllerConfig(**{**kw, "params_mode": "fancy"})


def test_controllers_never_see_truth():
    src = inspect.getsource(controllers_mod)
    assert "SystemTruth" not in src and "A_star" not in src and "B_star" not in src


def test_warmup_replays_recorded_eta():
    preset = get_preset("paper-desk-3x2")
    c, _ = make_controller("alg1", preset, 1024, seed=3)
    eta = GaussianStream(3, "eta", 2).block(1, 5)
    x = np.array([0.1, -0.2, 0.3])
    for t in range(1, 6):
        assert np.array_equal(c.act(t, x), preset.K0 @ x + eta[t - 1])


def test_exact_hint_reduces_to_known_B():
    preset = get_preset("paper-desk-3x2")
    c1, _, *_ = run("alg1", "paper-desk-3x2", 4096, 7, exact=True)
    c2, _, *_ = run("known_B", "paper-desk-3x2", 4096, 7)
    assert len(c1.epoch_log) == len(c2.epoch_log) > 1
    for a, b in zip(c1.epoch_log, c2.epoch_log):
        assert np.array_equal(a.B, preset.truth.B_star)
        assert np.max(np.abs(a.K - b.K)) <= 1e-10


def test_forced_state_abort_is_permanent():
    preset = get_preset("paper-desk-3x2")
    c, _ = make_controller("alg1", preset, 1024, 0)
    # drive to the first epoch with ordinary data, then inject a huge state
    x = np.zeros(3)
    rng = np.random.default_rng(0)
    for t in range(1, c.taus[0] + 1):
        u = c.act(t, x)
        xn = rng.normal(size=3)
        c.observe(t, x, u, xn)
        x = xn
    assert c.phase is Phase.EPOCH
    big = np.full(3, math.sqrt(c.config.x_b))
    assert np.array_equal(c.act(c.taus[0] + 1, big), preset.K0 @ big)
    assert c.phase is Phase.ABORTED
    for t in range(c.taus[0] + 2, c.taus[0] + 600):
        assert np.array_equal(c.act(t, x), preset.K0 @ x)
    assert c.epoch_log[-1].aborted and c.epoch_log[-1].abort_reason == "state"


def _scalar_alg2(mu1, T=2000, seed=0):
    truth = SystemTruth([[1.5]], [[1.0]], [[1.0]], [[0.1]], 1.0)
    preset = Preset(truth, C0=1.0, eps0=0.5, tau1=20, r=2.0)
    cfg = practical_params(preset, T, alg=2, mu1=mu1)
    taus = epoch_schedule(cfg.tau1, 2.0, T, 2)
    oracle = HintOracle(default_schedule("A", 2.0, len(taus), taus), truth.A_star, GaussianStream(seed, "hint", 1))
    c = Alg2Controller(cfg, truth.Q, truth.R, preset.K0, oracle, GaussianStream(seed, "eta", 1))
    rollout(truth, c, T, seed)
    return truth, cfg, c


def test_alg2_triggers_immediately_for_large_gain():
    K_sq = float(SystemTruth([[1.5]], [[1.0]], [[1.0]], [[0.1]], 1.0).K_star[0, 0] ** 2)
    truth, cfg, c = _scalar_alg2(mu1=0.1 * K_sq)
    assert c.n_s == 1 and not c.no_curvature


def test_alg2_no_curvature_when_mu1_exceeds_cap():
    probe = _scalar_alg2(mu1=1.0)[1]
    truth, cfg, c = _scalar_alg2(mu1=2 * probe.k ** 2)
    assert c.n_s is None and c.no_curvature
    assert all(rec.search for rec in c.epoch_log)
    assert c.K is c.K0 or np.array_equal(c.K, c.K0)


@pytest.mark.parametrize("seed", range(5))
def test_alg2_n_s_sandwich(seed):
    preset = get_preset("paper-desk-3x2")
    c, *_ = run("alg2", "paper-desk-3x2", 4096, seed)
    mu1, mu_star = c.config.mu1, preset.truth.mu_star
    lo = max(1.0, math.log2(mu1 / mu_star))
    if not c.aborted:
        assert c.n_s is not None and lo <= c.n_s <= 2 + lo


@pytest.mark.parametrize("kind", ["alg1", "alg2", "nohint"])
@pytest.mark.parametrize("seed", range(3))
def test_run_invariants(kind, seed):
    preset = get_preset("paper-desk-3x2")
    c, _, traj, _, log = run(kind, "paper-desk-3x2", 4096, seed)
    # phases move forward only
    order = [Phase.WARMUP, Phase.SEARCH, Phase.EPOCH, Phase.ABORTED]
    idx = [order.index(p) for _, p in c.phase_history]
    assert idx == sorted(idx)
    if not c.aborted:
        assert np.all(np.sum(traj.xs[:-1] ** 2, axis=1) <= c.config.x_b)
        for rec in log:
            if rec.K is not None and not rec.search:
                assert rec.K_norm <= c.config.k
                assert preset.truth.closed_loop_radius(rec.K) < 1


def test_gain_changes_only_at_boundaries():
    preset = get_preset("stable-easy")
    c, _ = make_controller("alg1", preset, 2000, 1)
    truth = preset.truth
    ws = np.sqrt(truth.sigma2) * GaussianStream(1, "w", truth.n).block(1, 2000)
    x = np.zeros(truth.n)
    change_times = []
    prev = c.K
    for t in range(1, 2001):
        u = c.act(t, x)
        if c.K is not prev:
            change_times.append(t)
            prev = c.K
        xn = truth.A_star @ x + truth.B_star @ u + ws[t - 1]
        c.observe(t, x, u, xn)
        x = xn
    assert set(change_times) <= set(c.taus) | ({c.abort_t} if c.abort_t else set())


def test_static_controller():
    s = StaticGainController(np.array([[1.0, 2.0]]))
    assert np.allclose(s.act(1, np.array([1.0, 1.0])), [3.0])
