import numpy as np

from hinted_lqr.controllers import (Alg1Controller, Alg2Controller, KnownBController, NoHintController,
                                    epoch_schedule)
from hinted_lqr.hints import HintOracle, HintSchedule, default_schedule
from hinted_lqr.presets import get_preset, practical_params
from hinted_lqr.prng import GaussianStream
from hinted_lqr.simulation import rollout


def exact_schedule(mode, r, taus):
    n = len(taus)
    return HintSchedule(mode, r, tuple([1.0] * n), tuple([0.0] * n), tuple(taus))


def make_controller(kind, preset, T, seed, exact=False, **over):
    t = preset.truth
    alg = 2 if kind == "alg2" else 1
    cfg = practical_params(preset, T, alg=alg, **over)
    taus = epoch_schedule(cfg.tau1, cfg.r, T, alg)
    eta = GaussianStream(seed, "eta", t.m)
    if kind == "alg1":
        sched = exact_schedule("B", cfg.r, taus) if exact else default_schedule("B", cfg.r, len(taus), taus)
        oracle = HintOracle(sched, t.B_star, GaussianStream(seed, "hint", t.n * t.m))
        return Alg1Controller(cfg, t.Q, t.R, preset.K0, oracle, eta), oracle
    if kind == "alg2":
        sched = default_schedule("A", 2.0, len(taus), taus)
        oracle = HintOracle(sched, t.A_star, GaussianStream(seed, "hint", t.n * t.n))
        return Alg2Controller(cfg, t.Q, t.R, preset.K0, oracle, eta), oracle
    if kind == "known_B":
        return KnownBController(cfg, t.Q, t.R, preset.K0, t.B_star, eta), None
    if kind == "nohint":
        return NoHintController(cfg, t.Q, t.R, preset.K0, eta), None
    raise ValueError(kind)


def run(kind, preset_name, T, seed, **kw):
    preset = get_preset(preset_name)
    c, oracle = make_controller(kind, preset, T, seed, **kw)
    traj, ledger, log = rollout(preset.truth, c, T, seed)
    return c, oracle, traj, ledger, log
