"""Privileged hint oracle.

The oracle holds the true parameter and, at each epoch, returns the single
matrix ``gamma_i (truth - estimate) + E_i``. Controllers only ever see that
matrix through a callback; ``gamma_i`` and ``E_i`` stay inside the oracle's
own log for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleViolation
from .prng import GaussianStream

MODES = ("B", "A")


@dataclass(frozen=True)
class HintSchedule:
    mode: str
    r: float
    gammas: tuple[float, ...]
    E_norms: tuple[float, ...]
    taus: tuple[int, ...]
    theta: float = 1.0
    adversarial: bool = False

    @property
    def n_epochs(self) -> int:
        return len(self.gammas)

    def budget(self, i: int) -> float:
        """Frobenius-norm ceiling ``sqrt((1-gamma_i)/tau_i)`` for epoch ``i`` (1-based)."""
        return float(np.sqrt((1.0 - self.gammas[i - 1]) / self.taus[i - 1]))


def _decay_base(mode: str, r: float) -> float:
    if mode == "B":
        return float(r) ** 2
    if mode == "A":
        return 4.0
    raise ValueError(f"unknown hint mode {mode!r}")


def default_schedule(mode: str, r: float, n_T: int, taus, theta: float = 1.0,
                     adversarial: bool = False) -> HintSchedule:
    """``1 - gamma_i = r^{-2i}`` (B-hint) or ``4^{-i}`` (A-hint); ``||E_i||_F = theta * budget``."""
    if r <= 1:
        raise ValueError("r must exceed 1")
    if n_T < 1:
        raise ValueError("need at least one epoch")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    taus = tuple(int(t) for t in taus)[:n_T]
    if len(taus) < n_T:
        raise ValueError("fewer epoch starts than epochs")
    base = _decay_base(mode, r)
    gammas = tuple(1.0 - base ** (-i) for i in range(1, n_T + 1))
    E_norms = tuple(theta * np.sqrt((1.0 - g) / t) for g, t in zip(gammas, taus))
    return HintSchedule(mode, float(r), gammas, E_norms, taus, theta, adversarial)


def scalar_variant_schedule(r: float, k: float, n_T: int, taus, theta: float = 1.0) -> HintSchedule:
    """B-hint schedule for the scalar external-estimate variant.

    ``|E_i| = theta * r^{-2i} / (4 k tau_i)``, which sits inside the usual
    ``sqrt((1-gamma_i)/tau_i)`` budget and keeps the per-epoch error bound
    ``eps r^{-2i} + r^{-2i}/(4 k tau_i)`` an exact triangle inequality.
    """
    sched = default_schedule("B", r, n_T, taus, theta)
    E_norms = tuple(theta * float(r) ** (-2 * i) / (4.0 * k * t)
                    for i, t in enumerate(sched.taus, start=1))
    return HintSchedule("B", sched.r, sched.gammas, E_norms, sched.taus, theta, False)


@dataclass
class ScheduleReport:
    first_ok: bool
    decay_ok: list[bool]
    budget_ok: list[bool]
    gamma_range_ok: list[bool]

    @property
    def passed(self) -> bool:
        return self.first_ok and all(self.decay_ok) and all(self.budget_ok) and all(self.gamma_range_ok)

    def failures(self) -> list[str]:
        out = []
        if not self.first_ok:
            out.append("first-epoch gamma")
        out += [f"decay at i={i + 2}" for i, ok in enumerate(self.decay_ok) if not ok]
        out += [f"budget at i={i + 1}" for i, ok in enumerate(self.budget_ok) if not ok]
        out += [f"gamma range at i={i + 1}" for i, ok in enumerate(self.gamma_range_ok) if not ok]
        return out


def validate_schedule(schedule: HintSchedule, taus=None, E_norms=None, rtol: float = 1e-12) -> ScheduleReport:
    """Check the decay and noise-budget constraints epoch by epoch.

    ``E_norms`` lets a caller check realised hint errors instead of the
    scheduled ones.
    """
    taus = schedule.taus if taus is None else tuple(taus)
    E_norms = schedule.E_norms if E_norms is None else tuple(E_norms)
    base = _decay_base(schedule.mode, schedule.r)
    slack = 1.0 + rtol
    # 1 - gamma is recovered from gamma, so allow a few ulps of absolute error
    atol = 4.0 * np.finfo(float).eps
    g = schedule.gammas
    first_ok = 0.0 <= 1.0 - g[0] <= slack / base + atol
    decay_ok = [(1.0 - g[i + 1]) <= slack * (1.0 - g[i]) / base + atol for i in range(len(g) - 1)]
    budget_ok = [e ** 2 <= slack * (1.0 - gi) / t for e, gi, t in zip(E_norms, g, taus)]
    gamma_range_ok = [0.0 < gi <= 1.0 for gi in g]
    return ScheduleReport(first_ok, decay_ok, budget_ok, gamma_range_ok)


def emit_hint(schedule: HintSchedule, i: int, estimate, truth_slice, stream: GaussianStream | None = None):
    """Return ``(hint, E_i)`` for epoch ``i`` (1-based).

    ``E_i`` has Frobenius norm ``schedule.E_norms[i-1]`` and a direction drawn
    uniformly from the sphere (keyed by ``i`` in ``stream``), or pointing away
    from the truth in adversarial mode.
    """
    if not 1 <= i <= schedule.n_epochs:
        raise ScheduleViolation(f"epoch {i} outside schedule of {schedule.n_epochs} epochs")
    estimate = np.atleast_2d(np.asarray(estimate, float))
    truth_slice = np.atleast_2d(np.asarray(truth_slice, float))
    gamma = schedule.gammas[i - 1]
    norm = schedule.E_norms[i - 1]
    E = np.zeros_like(estimate)
    if norm > 0:
        if schedule.adversarial:
            d = estimate - truth_slice
            dn = np.linalg.norm(d)
            direction = d / dn if dn > 0 else None
        else:
            direction = None
        if direction is None:
            if stream is None:
                raise ValueError("a noise stream is required for random hint directions")
            direction = stream.unit_direction(i).reshape(estimate.shape)
        E = norm * direction
    hint = gamma * (truth_slice - estimate) + E
    return hint, E


def decompose_target(estimate, truth_slice, target):
    """Write a directly supplied estimate ``target`` in hint form.

    Returns ``(gamma, E)`` with ``target = estimate + gamma (truth - estimate) + E``;
    ``1 - gamma`` is the projection coefficient of ``target - truth`` on
    ``estimate - truth`` (clipped to [0, 1]) so E vanishes whenever the two are
    parallel.
    """
    est = np.asarray(estimate, float)
    tru = np.asarray(truth_slice, float)
    tgt = np.asarray(target, float)
    d = est - tru
    dd = float(np.sum(d * d))
    one_minus = 0.0 if dd == 0 else float(np.clip(np.sum((tgt - tru) * d) / dd, 0.0, 1.0))
    gamma = 1.0 - one_minus
    E = tgt - tru - one_minus * d
    return gamma, E


@dataclass
class HintRecord:
    i: int
    gamma: float
    E: np.ndarray
    hint: np.ndarray

    @property
    def E_norm(self) -> float:
        return float(np.linalg.norm(self.E))


@dataclass
class HintOracle:
    """Callable hint provider. Holds the truth; controllers only receive its output."""

    schedule: HintSchedule
    truth_slice: np.ndarray
    stream: GaussianStream | None = None
    log: list[HintRecord] = field(default_factory=list)

    def __call__(self, i: int, estimate) -> np.ndarray:
        hint, E = emit_hint(self.schedule, i, estimate, self.truth_slice, self.stream)
        self.log.append(HintRecord(i, self.schedule.gammas[i - 1], E, hint))
        return hint

    def record(self, i: int) -> HintRecord | None:
        for rec in self.log:
            if rec.i == i:
                return rec
        return None
