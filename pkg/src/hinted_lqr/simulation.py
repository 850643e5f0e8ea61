"""Plant rollout, regret accounting and event diagnostics on realised runs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control_core import SystemTruth, sym
from .estimation import GramAccumulator, hinted_gram_A, hinted_gram_B
from .prng import GaussianStream

DIVERGENCE_NORM = 1e12


@dataclass
class Trajectory:
    xs: np.ndarray        # (T+1, n): x_1 .. x_{T+1}
    us: np.ndarray        # (T, m)
    ws: np.ndarray        # (T, n), already scaled by sigma
    costs: np.ndarray     # (T,)
    seed: int
    etas: np.ndarray | None = None   # (T, m) exploration draws, scaled by sigma
    diverged: bool = False
    steps: int = 0

    @property
    def T(self) -> int:
        return len(self.costs)

    def replay_residual(self, truth: SystemTruth) -> float:
        """``max_t ||x_{t+1} - A* x_t - B* u_t - w_t||`` over the simulated steps."""
        A, B = truth.A_star, truth.B_star
        worst = 0.0
        # same expression as the simulator so the check is bit-exact
        for t in range(self.steps):
            pred = A @ self.xs[t] + B @ self.us[t] + self.ws[t]
            worst = max(worst, float(np.max(np.abs(self.xs[t + 1] - pred))))
        return worst


class RegretLedger:
    """Cumulative cost against ``t J*``; ``reference_costs`` (if given) are the
    per-step costs of the optimal gain driven by the same noise, which yields
    a lower-variance paired regret."""

    def __init__(self, costs, J_star: float, reference_costs=None):
        costs = np.asarray(costs, float)
        self.J_star = float(J_star)
        self.cum_cost = np.concatenate([[0.0], np.cumsum(costs)])
        self.cum_reference = None
        if reference_costs is not None:
            self.cum_reference = np.concatenate([[0.0], np.cumsum(np.asarray(reference_costs, float))])

    @property
    def T(self) -> int:
        return len(self.cum_cost) - 1

    def regret_at(self, t: int) -> float:
        return float(self.cum_cost[t] - t * self.J_star)

    def paired_regret_at(self, t: int) -> float:
        if self.cum_reference is None:
            raise ValueError("no reference costs recorded")
        return float(self.cum_cost[t] - self.cum_reference[t])

    @property
    def regret(self) -> float:
        return self.regret_at(self.T)

    @property
    def paired_regret(self) -> float:
        return self.paired_regret_at(self.T)


def noise_block(seed: int, n: int, T: int, sigma2: float) -> np.ndarray:
    """Process noise ``w_1 .. w_T`` for a seed (row ``t-1`` holds ``w_t``)."""
    return math.sqrt(sigma2) * GaussianStream(seed, "w", n).block(1, T)


def static_gain_costs(truth: SystemTruth, K, ws: np.ndarray, x1=None) -> np.ndarray:
    """Per-step costs of ``u = K x`` driven by a given noise record."""
    K = np.atleast_2d(K)
    F = (truth.A_star + truth.B_star @ K).T
    M = truth.Q + K.T @ truth.R @ K
    T, n = ws.shape
    xs = np.empty((T, n))
    x = np.zeros(n) if x1 is None else np.asarray(x1, float)
    for t in range(T):
        xs[t] = x
        x = x @ F + ws[t]
    return np.einsum("ti,ij,tj->t", xs, M, xs)


def rollout(truth: SystemTruth, controller, T: int, seed: int, noise: bool = True,
            x1=None, paired: bool = True):
    """Run ``controller`` on the true plant for ``T`` steps.

    Returns ``(Trajectory, RegretLedger, epoch_log)``. If the state norm
    exceeds 1e12 the run stops, is flagged ``diverged`` and its remaining
    costs are ``inf``.
    """
    n, m = truth.n, truth.m
    A, B, Q, R = truth.A_star, truth.B_star, truth.Q, truth.R
    ws = noise_block(seed, n, T, truth.sigma2) if noise else np.zeros((T, n))
    xs = np.zeros((T + 1, n))
    us = np.zeros((T, m))
    costs = np.full(T, np.inf)
    if x1 is not None:
        xs[0] = x1
    x = xs[0].copy()
    act, observe = controller.act, controller.observe
    diverged = False
    steps = T
    for t in range(1, T + 1):
        u = act(t, x)
        x_next = A @ x + B @ u + ws[t - 1]
        observe(t, x, u, x_next)
        us[t - 1] = u
        costs[t - 1] = x @ Q @ x + u @ R @ u
        xs[t] = x_next
        x = x_next
        if not (np.all(np.isfinite(x)) and np.dot(x, x) <= DIVERGENCE_NORM ** 2):
            diverged = True
            steps = t
            break
    etas = None
    if getattr(controller, "_eta", None) is not None:
        etas = controller.sigma * controller._eta[1:T + 1]
    traj = Trajectory(xs=xs, us=us, ws=ws, costs=costs, seed=seed, etas=etas, diverged=diverged, steps=steps)
    ref = static_gain_costs(truth, truth.K_star, ws, x1) if paired else None
    ledger = RegretLedger(costs, truth.J_star, ref)
    return traj, ledger, list(getattr(controller, "epoch_log", []))


def simulate_average_cost(truth: SystemTruth, K, steps: int, seed: int, chains: int = 100,
                          burn_in: int = 1000):
    """Monte-Carlo average cost of ``u = Kx`` over ``chains`` independent chains.

    Returns ``(mean, standard_error)``; the error is the spread of per-chain
    means, which stay nearly independent once each chain is long compared
    with the closed-loop mixing time.
    """
    K = np.atleast_2d(K)
    n = truth.n
    F = (truth.A_star + truth.B_star @ K).T
    M = truth.Q + K.T @ truth.R @ K
    sigma = math.sqrt(truth.sigma2)
    total = steps + burn_in
    ws = np.stack([GaussianStream(seed * 100_003 + c, "w", n).block(1, total) for c in range(chains)], axis=1)
    ws *= sigma
    x = np.zeros((chains, n))
    acc = np.zeros(chains)
    for t in range(total):
        if t >= burn_in:
            acc += np.einsum("ci,ij,cj->c", x, M, x)
        x = x @ F + ws[t]
    means = acc / steps
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(chains))


# -- high-probability events --------------------------------------------------

@dataclass
class EventReport:
    delta: float
    E_w: bool
    E_w_margin: float
    E_eta: bool
    E_eta_margin: float
    E_W: bool
    E_W_margin: float
    E_x: bool
    E_x_margins: list[float] = field(default_factory=list)
    E_Delta: bool = True
    E_Delta_margins: list[float] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.E_w and self.E_eta and self.E_W and self.E_x and self.E_Delta


def _gram_upto(traj: Trajectory, n: int, m: int, lam: float, t_end: int) -> GramAccumulator:
    g = GramAccumulator(n, m, lam)
    s = min(t_end - 1, traj.steps)
    g.extend(traj.xs[:s], traj.us[:s], traj.xs[1:s + 1])
    return g


def check_events(traj: Trajectory, epoch_log, config, truth: SystemTruth, hint_log=None,
                 hint_mode: str = "B") -> EventReport:
    """Evaluate the five run-level events and their margins (positive = holds)."""
    n, m = truth.n, truth.m
    T = traj.T
    sigma = math.sqrt(truth.sigma2)
    thresh = sigma * math.sqrt(15 * n * math.log(4 * T))
    w_max = float(np.linalg.norm(traj.ws, axis=1).max()) if T else 0.0
    e_max = float(np.linalg.norm(traj.etas, axis=1).max()) if traj.etas is not None and T else 0.0
    m_w, m_eta = thresh - w_max, thresh - e_max

    tau1 = config.tau1
    g1 = _gram_upto(traj, n, m, config.lam, tau1)
    W_bound = tau1 * truth.sigma2 / (40.0 * (2.0 + config.k ** 2))
    m_W = float(np.linalg.eigvalsh(g1.W).min()) - W_bound

    taus = [rec.tau for rec in epoch_log]
    bounds = taus + [T + 1]
    x_margins = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = traj.xs[a - 1:b - 1]
        x_margins.append(float(np.linalg.eigvalsh(seg.T @ seg).min()) - (b - a) * truth.sigma2 / 40.0)

    hints = {h.i: h for h in (hint_log or [])}
    theta_star = truth.theta_star
    lam = config.lam
    d_margins = []
    for rec in epoch_log:
        if rec.A is None or rec.B is None:
            continue
        g = _gram_upto(traj, n, m, lam, rec.tau)
        h = hints.get(rec.i)
        gamma = h.gamma if h is not None else 0.0
        E = h.E if h is not None else np.zeros((n, m) if hint_mode == "B" else (n, n))
        D = np.hstack([rec.A, rec.B]) - theta_star
        if gamma >= 1.0:
            if np.any(E):
                d_margins.append(-math.inf)
            else:
                d_margins.append(math.nan)
            continue
        hg = hinted_gram_B(g, gamma) if hint_mode == "B" else hinted_gram_A(g, gamma)
        lhs = float(np.trace(D @ hg.W_hat @ D.T))
        _, logdet = np.linalg.slogdet(g.W)
        log_ratio = logdet - (n + m) * math.log(lam)
        rhs = (6 * n * truth.sigma2 * (math.log(4.0 * T ** 3) + log_ratio)
               + 3 * lam * float(np.sum(theta_star ** 2))
               + 3.0 / (1.0 - gamma) * float(np.trace(E @ hg.Y @ E.T)))
        d_margins.append(rhs - lhs)

    ok = lambda xs: all(not (v < 0) for v in xs)
    return EventReport(delta=0.25 * T ** -2.0, E_w=m_w >= 0, E_w_margin=m_w, E_eta=m_eta >= 0,
                       E_eta_margin=m_eta, E_W=m_W >= 0, E_W_margin=m_W, E_x=ok(x_margins),
                       E_x_margins=x_margins, E_Delta=ok(d_margins), E_Delta_margins=d_margins)


def psd_bound_check(K, k_cap: float, p: float, mu: float | None = None) -> dict:
    """Excitation margins for the two block matrices used in the persistence arguments.

    ``first``: ``mineig([[I, K'], [K, KK' + pI]]) - 1/((1+k^2)/p + 1)``.
    ``second`` (needs ``mu``): ``mineig([[(1+p)I, K'], [K, KK']]) - mu p/(mu + p + 1)``.
    """
    K = np.atleast_2d(np.asarray(K, float))
    m, n = K.shape
    KKt = K @ K.T
    M1 = np.block([[np.eye(n), K.T], [K, KKt + p * np.eye(m)]])
    out = {"first": float(np.linalg.eigvalsh(sym(M1)).min()) - 1.0 / ((1.0 + k_cap ** 2) / p + 1.0)}
    if mu is not None:
        M2 = np.block([[(1.0 + p) * np.eye(n), K.T], [K, KKt]])
        out["second"] = float(np.linalg.eigvalsh(sym(M2)).min()) - mu * p / (mu + p + 1.0)
    return out
