import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hinted_lqr.errors import ScheduleViolation
from hinted_lqr.hints import (HintOracle, decompose_target, default_schedule, emit_hint,
                              scalar_variant_schedule, validate_schedule)
from hinted_lqr.prng import GaussianStream

TAUS = [100, 400, 1600, 6400, 25600]


def test_default_B_schedule_values():
    s = default_schedule("B", 2.0, 5, TAUS)
    assert s.gammas[0] == pytest.approx(0.75)
    assert s.gammas[1] == pytest.approx(1 - 1 / 16)
    assert s.E_norms[0] == pytest.approx(np.sqrt(0.25 / 100))
    assert validate_schedule(s).passed


def test_A_schedule_uses_base_four():
    s = default_schedule("A", 3.0, 3, [10, 40, 160])
    assert [1 - g for g in s.gammas] == pytest.approx([0.25, 1 / 16, 1 / 64])


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 5.0), st.integers(1, 8), st.floats(0.0, 1.0), st.sampled_from(["A", "B"]))
def test_default_schedules_validate(r, n_T, theta, mode):
    taus = [int(10 * 4 ** i) for i in range(n_T)]
    assert validate_schedule(default_schedule(mode, r, n_T, taus, theta)).passed


def test_validation_flags_budget_and_decay():
    s = default_schedule("B", 2.0, 3, TAUS)
    rep = validate_schedule(s, E_norms=[1.0, 0.0, 0.0])
    assert not rep.passed and rep.failures() == ["budget at i=1"]


def test_scalar_variant_norms():
    s = scalar_variant_schedule(2.0, 3.0, 3, TAUS[:3], theta=1.0)
    assert s.E_norms[1] == pytest.approx(2.0 ** -4 / (4 * 3.0 * 400))
    assert validate_schedule(s).passed


def test_emit_hint_shape_and_norm():
    s = default_schedule("B", 2.0, 3, TAUS)
    est, truth = np.zeros((3, 2)), np.ones((3, 2))
    hint, E = emit_hint(s, 2, est, truth, GaussianStream(0, "hint", 6))
    assert np.linalg.norm(E) == pytest.approx(s.E_norms[1])
    assert np.allclose(hint, s.gammas[1] * (truth - est) + E)


def test_emit_hint_adversarial_direction():
    s = default_schedule("B", 2.0, 2, TAUS, adversarial=True)
    est, truth = np.zeros((1, 1)), np.ones((1, 1))
    _, E = emit_hint(s, 1, est, truth)
    assert E[0, 0] < 0  # pushes back toward the estimate


def test_out_of_range_epoch():
    s = default_schedule("B", 2.0, 2, TAUS)
    with pytest.raises(ScheduleViolation):
        emit_hint(s, 3, np.zeros((1, 1)), np.ones((1, 1)), GaussianStream(0, "hint", 1))


def test_decompose_target_roundtrip():
    rng = np.random.default_rng(0)
    est, truth = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    target = est + 0.7 * (truth - est)
    gamma, E = decompose_target(est, truth, target)
    assert gamma == pytest.approx(0.7) and np.allclose(E, 0, atol=1e-12)
    rnd = rng.normal(size=(2, 2))
    gamma, E = decompose_target(est, truth, rnd)
    assert np.allclose(est + gamma * (truth - est) + E, rnd)


def test_oracle_logs_privately():
    s = default_schedule("B", 2.0, 2, TAUS)
    o = HintOracle(s, np.ones((2, 1)), GaussianStream(1, "hint", 2))
    h = o(1, np.zeros((2, 1)))
    assert o.record(1).hint is not None and np.allclose(o.record(1).hint, h)
    assert o.record(2) is None
