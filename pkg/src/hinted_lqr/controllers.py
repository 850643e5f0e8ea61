"""Epoch-based adaptive controllers and comparison baselines.

Every controller exposes ``act(t, x) -> u`` and ``observe(t, x, u, x_next)``
and is driven by :func:`hinted_lqr.simulation.rollout`. Time is 1-based:
warm-up covers ``1 <= t < tau_1`` and epoch ``i`` covers
``tau_i <= t < tau_{i+1}`` with ``tau_{n_T+1} = T + 1``.

None of the classes here receive the true plant. Hints arrive through a
``hint_provider(i, estimate) -> matrix`` callback and the scalar variant's
external estimate through ``bhat_provider(i) -> matrix``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .control_core import solve_dare
from .errors import HorizonTooShort, NotStabilizable
from .estimation import GramAccumulator, rls_A_given_B, rls_B_given_A, rls_joint
from .prng import GaussianStream

log = logging.getLogger(__name__)

PARAMS_MODES = ("theoretical", "practical")


@dataclass(frozen=True)
class ControllerConfig:
    k: float
    ell: float
    tau1: int
    r: float
    x_b: float
    lam: float
    p: float
    T: int
    sigma2: float
    mu1: float | None = None
    mu_star: float | None = None
    C0: float | None = None
    eps0: float | None = None
    nu: float | None = None
    params_mode: str = "practical"
    n: int | None = None
    m: int | None = None

    def __post_init__(self):
        if self.params_mode not in PARAMS_MODES:
            raise ValueError(f"params_mode must be one of {PARAMS_MODES}")
        for name in ("k", "x_b", "lam", "p", "sigma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.ell < 1:
            raise ValueError("ell must lie in (0, 1)")
        if self.r <= 1:
            raise ValueError("r must exceed 1")
        if self.tau1 < 1 or self.T < 1:
            raise ValueError("tau1 and T must be at least 1")
        if self.params_mode == "practical" and self.n is not None and self.m is not None:
            if self.tau1 < self.n + self.m:
                raise ValueError("practical mode needs tau1 >= n + m")

    def with_horizon(self, T: int) -> "ControllerConfig":
        return replace(self, T=int(T))


def x_b_formula(n: int, k: float, sigma2: float, phi: float, T: float) -> float:
    """State-norm cap ``135 n k^2 sigma^2 max{(1+phi)^2 k^6, 4 k^6} log(4T)``."""
    return 135.0 * n * k ** 2 * sigma2 * max((1.0 + phi) ** 2 * k ** 6, 4.0 * k ** 6) * math.log(4.0 * T)


def gain_cap(nu: float, C0: float, eps0: float, alpha0: float, sigma2: float) -> float:
    return math.sqrt((nu + eps0 ** 2 * C0) / (alpha0 * sigma2))


def theoretical_params(bounds: dict, r: float, T: int, C0: float, epsilon0: float,
                       alg: int = 1, mu_star: float | None = None) -> ControllerConfig:
    """Parameters exactly as the regret theorems prescribe.

    ``bounds`` needs ``alpha0, alpha1, nu, phi, sigma2, n, m``. The A-hint variant
    additionally needs ``mu_star`` and ignores ``r`` (its epochs grow by 4).
    """
    for key in ("alpha0", "alpha1", "nu", "phi", "sigma2", "n", "m"):
        if key not in bounds:
            raise KeyError(key)
    a0, nu, phi, s2 = bounds["alpha0"], bounds["nu"], bounds["phi"], bounds["sigma2"]
    n, m = int(bounds["n"]), int(bounds["m"])
    k = gain_cap(nu, C0, epsilon0, a0, s2)
    x_b = x_b_formula(n, k, s2, phi, T)
    lam = (1.0 + k) ** 2 * x_b
    common = 240.0 * lam * (1.0 + phi ** 2) * (n + m) / (epsilon0 ** 2 * s2)
    if alg == 1:
        p = r ** 2 / (2.0 + k ** 2)
        tau1 = math.ceil(common * ((1.0 + k ** 2) / min(p, 1.0) + 1.0))
        mu1 = None
    elif alg == 2:
        if mu_star is None or mu_star <= 0:
            raise ValueError("algorithm 2 needs mu_star > 0")
        p = 4.0 / (2.0 + k ** 2)
        mu1 = 4.0 * k * C0 * epsilon0
        tau1 = math.ceil(common * max(2.0 + k ** 2, (mu_star + 2 * p + 2) / (2 * mu_star * p)))
        r = 2.0
    else:
        raise ValueError("alg must be 1 or 2")
    return ControllerConfig(k=k, ell=1.0 / (2.0 * k ** 2), tau1=int(tau1), r=float(r), x_b=x_b,
                            lam=lam, p=p, T=int(T), sigma2=s2, mu1=mu1, mu_star=mu_star, C0=C0,
                            eps0=epsilon0, nu=nu, params_mode="theoretical", n=n, m=m)


def epoch_schedule(tau1: int, r: float, T: int, alg: int = 1) -> list[int]:
    """Epoch start times ``tau_1 < ... < tau_{n_T} <= T``.

    B-hint epochs grow by ``r^2``, A-hint epochs by 4; ``n_T`` is the
    largest index whose start still fits in the horizon.
    """
    if tau1 < 1:
        raise ValueError("tau1 must be at least 1")
    if r <= 1:
        raise ValueError("r must exceed 1")
    if tau1 > T:
        raise HorizonTooShort(f"tau1={tau1} exceeds horizon T={T}")
    growth = 4.0 if alg == 2 else float(r) ** 2
    taus: list[int] = []
    i = 1
    while True:
        tau = int(math.floor(tau1 * growth ** (i - 1) + 1e-9))
        if taus and tau <= taus[-1]:
            tau = taus[-1] + 1
        if tau > T:
            return taus
        taus.append(tau)
        i += 1


def mu_schedule(mu1: float, n_T: int) -> list[float]:
    return [mu1 * 2.0 ** (i - 1) for i in range(1, n_T + 1)]


class Phase(str, Enum):
    WARMUP = "warmup"
    SEARCH = "search"
    EPOCH = "epoch"
    ABORTED = "aborted"


@dataclass
class EpochRecord:
    i: int
    tau: int
    A_hat: np.ndarray | None = None
    B_hat: np.ndarray | None = None
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    K: np.ndarray | None = None
    K_norm: float = float("nan")
    search: bool = False
    triggered: bool = False
    dare_failed: bool = False
    aborted: bool = False
    abort_t: int | None = None
    abort_reason: str | None = None


class EpochController:
    """Shared warm-up / epoch / abort machinery."""

    name = "epoch"
    alg = 1
    explore_in_epochs = False

    def __init__(self, config: ControllerConfig, Q, R, K0, eta: GaussianStream | None = None):
        self.config = config
        self.Q = np.atleast_2d(np.asarray(Q, float))
        self.R = np.atleast_2d(np.asarray(R, float))
        self.K0 = np.atleast_2d(np.asarray(K0, float))
        self.m, self.n = self.K0.shape
        self.sigma = math.sqrt(config.sigma2)
        self.taus = epoch_schedule(config.tau1, config.r, config.T, alg=self.alg)
        self.n_T = len(self.taus)
        self.gram = GramAccumulator(self.n, self.m, config.lam)
        self.phase = Phase.WARMUP
        self.K = self.K0
        self.K_norm = float(np.linalg.norm(self.K0, 2))
        self.epoch = 0
        self.epoch_log: list[EpochRecord] = []
        self.abort_t: int | None = None
        self.phase_history: list[tuple[int, Phase]] = [(1, Phase.WARMUP)]
        self._buf_x: list[np.ndarray] = []
        self._buf_u: list[np.ndarray] = []
        self._buf_xn: list[np.ndarray] = []
        # rows indexed by t; row 0 unused
        if eta is not None:
            self._eta = np.vstack([np.zeros((1, self.m)), eta.block(1, config.T)])
        else:
            self._eta = np.zeros((config.T + 1, self.m))
        self._explore_scale = 0.0

    # -- driver interface -------------------------------------------------
    def act(self, t: int, x: np.ndarray) -> np.ndarray:
        if self.epoch < self.n_T and t == self.taus[self.epoch]:
            self.epoch += 1
            if self.phase is not Phase.ABORTED:
                self._flush()
                self._start_epoch(self.epoch, t)
        return self._control(t, x)

    def observe(self, t: int, x, u, x_next) -> None:
        if self.phase is Phase.ABORTED:
            return
        self._buf_x.append(x)
        self._buf_u.append(u)
        self._buf_xn.append(x_next)

    @property
    def aborted(self) -> bool:
        return self.phase is Phase.ABORTED

    def eta(self, t: int) -> np.ndarray:
        return self.sigma * self._eta[t]

    # -- internals --------------------------------------------------------
    def _flush(self) -> None:
        if self._buf_x:
            self.gram.extend(np.array(self._buf_x), np.array(self._buf_u), np.array(self._buf_xn))
            self._buf_x.clear()
            self._buf_u.clear()
            self._buf_xn.clear()

    def _set_phase(self, t: int, phase: Phase) -> None:
        if phase is not self.phase:
            self.phase = phase
            self.phase_history.append((t, phase))

    def _control(self, t: int, x: np.ndarray) -> np.ndarray:
        phase = self.phase
        if phase is Phase.EPOCH:
            if float(x @ x) > self.config.x_b:
                self._abort(t, "state")
                return self.K0 @ x
            if self.K_norm > self.config.k:
                self._abort(t, "gain")
                return self.K0 @ x
            u = self.K @ x
            if self._explore_scale:
                u = u + self._explore_scale * self.eta(t)
            return u
        if phase is Phase.ABORTED:
            return self.K0 @ x
        return self.K0 @ x + self.eta(t)

    def _abort(self, t: int, reason: str) -> None:
        self._set_phase(t, Phase.ABORTED)
        self.abort_t = t
        self.K = self.K0
        self.K_norm = float(np.linalg.norm(self.K0, 2))
        self._explore_scale = 0.0
        if self.epoch_log:
            rec = self.epoch_log[-1]
            rec.aborted, rec.abort_t, rec.abort_reason = True, t, reason

    def _estimate(self, i: int) -> tuple:
        """Return ``(A_hat, B_hat, A, B)`` for epoch ``i``."""
        raise NotImplementedError

    def _solve(self, i: int, t: int) -> EpochRecord:
        rec = EpochRecord(i=i, tau=t)
        rec.A_hat, rec.B_hat, rec.A, rec.B = self._estimate(i)
        try:
            rec.K = solve_dare(rec.A, rec.B, self.Q, self.R).K
            rec.K_norm = float(np.linalg.norm(rec.K, 2))
        except (NotStabilizable, np.linalg.LinAlgError):
            rec.dare_failed = True
        self.epoch_log.append(rec)
        return rec

    def _start_epoch(self, i: int, t: int) -> None:
        rec = self._solve(i, t)
        if rec.dare_failed:
            self._abort(t, "dare")
            return
        self._enter_epoch(rec, t)

    def _enter_epoch(self, rec: EpochRecord, t: int) -> None:
        self.K = rec.K
        self.K_norm = rec.K_norm
        self._set_phase(t, Phase.EPOCH)
        if self.explore_in_epochs:
            self._explore_scale = rec.tau ** -0.25
        if self.K_norm > self.config.k:
            self._abort(t, "gain")

    def summary(self) -> dict:
        return {"aborted": self.aborted, "abort_t": self.abort_t, "n_T": self.n_T}


class Alg1Controller(EpochController):
    """Adaptive LQR with a periodic hint on the input matrix."""

    name = "alg1"

    def __init__(self, config, Q, R, K0, hint_provider, eta=None):
        super().__init__(config, Q, R, K0, eta)
        self.hint_provider = hint_provider

    def _estimate(self, i):
        est = rls_joint(self.gram)
        B = est.B_hat + self.hint_provider(i, est.B_hat)
        A = rls_A_given_B(self.gram, B)
        return est.A_hat, est.B_hat, A, B


class Alg2Controller(EpochController):
    """Adaptive LQR with a periodic hint on the state matrix.

    Epochs grow by 4. Until the curvature test ``K K' >= (3 mu_i / 2) I``
    first passes, each epoch keeps playing ``K0 x + eta``; the epoch where it
    passes (``n_s``) starts the exploitation phase, reusing the estimate just
    computed.
    """

    name = "alg2"
    alg = 2

    def __init__(self, config, Q, R, K0, hint_provider, eta=None):
        if config.mu1 is None:
            raise ValueError("algorithm 2 needs mu1")
        super().__init__(config, Q, R, K0, eta)
        self.hint_provider = hint_provider
        self.mus = mu_schedule(config.mu1, self.n_T)
        self.n_s: int | None = None
        self.no_curvature = False

    def _estimate(self, i):
        est = rls_joint(self.gram)
        A = est.A_hat + self.hint_provider(i, est.A_hat)
        B = rls_B_given_A(self.gram, A)
        return est.A_hat, est.B_hat, A, B

    def _start_epoch(self, i, t):
        if self.n_s is not None:
            super()._start_epoch(i, t)
            return
        rec = self._solve(i, t)
        rec.search = True
        if not rec.dare_failed:
            curvature = float(np.linalg.eigvalsh(rec.K @ rec.K.T).min())
            rec.triggered = curvature >= 1.5 * self.mus[i - 1]
        if rec.triggered:
            self.n_s = i
            self._enter_epoch(rec, t)
            return
        self._set_phase(t, Phase.SEARCH)
        if i == self.n_T:
            self.no_curvature = True
            log.warning("curvature test never passed within %d epochs; staying on K0", self.n_T)

    def summary(self):
        out = super().summary()
        out.update(n_s=self.n_s, no_curvature=self.no_curvature)
        return out


class ScalarHintBController(EpochController):
    """Scalar variant: the pre-hint input estimate comes from outside, not from the joint fit."""

    name = "scalarB"

    def __init__(self, config, Q, R, K0, hint_provider, bhat_provider, eta=None):
        super().__init__(config, Q, R, K0, eta)
        if (self.n, self.m) != (1, 1):
            raise ValueError("the scalar variant needs n = m = 1")
        self.hint_provider = hint_provider
        self.bhat_provider = bhat_provider

    def _estimate(self, i):
        B_hat = np.atleast_2d(self.bhat_provider(i))
        B = B_hat + self.hint_provider(i, B_hat)
        A = rls_A_given_B(self.gram, B)
        return None, B_hat, A, B


class NoHintController(EpochController):
    """Same epoch loop without hints; epoch ``i`` adds exploration ``N(0, sigma^2 tau_i^{-1/2} I)``."""

    name = "no_hint_eps_greedy"
    explore_in_epochs = True

    def _estimate(self, i):
        est = rls_joint(self.gram)
        return est.A_hat, est.B_hat, est.A_hat, est.B_hat


class KnownBController(EpochController):
    """Certainty equivalence with the input matrix given exactly (no hint machinery)."""

    name = "known_B"

    def __init__(self, config, Q, R, K0, B_known, eta=None):
        super().__init__(config, Q, R, K0, eta)
        self.B_known = np.atleast_2d(np.asarray(B_known, float))

    def _estimate(self, i):
        return None, None, rls_A_given_B(self.gram, self.B_known), self.B_known


@dataclass
class StaticGainController:
    """Plays ``u = K x`` forever (the optimal and static-K0 baselines)."""

    K: np.ndarray
    name: str = "static"
    epoch_log: list = field(default_factory=list)
    aborted: bool = False

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, float))

    def act(self, t, x):
        return self.K @ x

    def observe(self, t, x, u, x_next):
        pass

    def summary(self):
        return {"aborted": False, "abort_t": None, "n_T": 0}


BASELINE_KINDS = ("optimal", "static_K0", "no_hint_eps_greedy")


def make_baseline(kind: str, config: ControllerConfig, Q, R, K0, eta=None, K_opt=None):
    if kind == "optimal":
        if K_opt is None:
            raise ValueError("the optimal baseline needs the optimal gain")
        return StaticGainController(K_opt, name="optimal")
    if kind == "static_K0":
        return StaticGainController(K0, name="static_K0")
    if kind == "no_hint_eps_greedy":
        return NoHintController(config, Q, R, K0, eta)
    raise ValueError(f"unknown baseline {kind!r}")
