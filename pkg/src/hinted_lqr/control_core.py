"""Exact LQR mathematics: Riccati and Lyapunov solves, costs of gains,
spectral radius and cost-based strong-stability certificates.

Conventions: dynamics ``x' = A x + B u + w`` with ``w ~ N(0, sigma2 I)``,
stage cost ``x'Qx + u'Ru`` and linear policies ``u = K x`` (so the optimal
gain carries the minus sign).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NotStabilizable, Unstable

DARE_TOL = 1e-10
DARE_MAX_ITER = 100_000
LYAP_TOL = 1e-12


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def spectral_radius(A: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def riccati_map(P, A, B, Q, R):
    """One application of ``P -> A'PA - A'PB (B'PB + R)^-1 B'PA + Q``."""
    BtP = B.T @ P
    G = sym(BtP @ B + R)
    BtPA = BtP @ A
    return sym(A.T @ P @ A - BtPA.T @ np.linalg.solve(G, BtPA) + Q)


def gain_from_P(P, A, B, R) -> np.ndarray:
    BtP = B.T @ P
    return -np.linalg.solve(sym(BtP @ B + R), BtP @ A)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    J: float
    iterations: int
    residual: float


def solve_dare(A, B, Q, R, sigma2: float = 1.0, tol: float = DARE_TOL,
               max_iter: int = DARE_MAX_ITER) -> RiccatiSolution:
    """Solve the discrete algebraic Riccati equation by fixed-point iteration from ``P0 = Q``.

    Iteration stops once successive iterates differ by at most
    ``tol * (1 + ||P||_F)``. Raises ``NotStabilizable`` if that never happens
    within ``max_iter`` steps or the iterates blow up.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = sym(np.atleast_2d(np.asarray(Q, dtype=float)))
    R = sym(np.atleast_2d(np.asarray(R, dtype=float)))
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")

    blowup = 1e14 * (1.0 + np.linalg.norm(Q))
    P = Q.copy()
    for it in range(1, max_iter + 1):
        try:
            P_next = riccati_map(P, A, B, Q, R)
        except np.linalg.LinAlgError as exc:
            raise NotStabilizable(f"singular B'PB+R at iteration {it}") from exc
        step = np.linalg.norm(P_next - P)
        P = P_next
        pnorm = np.linalg.norm(P)
        if not np.isfinite(pnorm) or pnorm > blowup:
            raise NotStabilizable(f"Riccati iterates diverged (||P||={pnorm:.3g}) at iteration {it}")
        if step <= tol * (1.0 + pnorm):
            break
    else:
        raise NotStabilizable(f"Riccati iteration did not converge in {max_iter} steps")

    residual = float(np.linalg.norm(P - riccati_map(P, A, B, Q, R)))
    K = gain_from_P(P, A, B, R)
    return RiccatiSolution(P=P, K=K, J=float(sigma2 * np.trace(P)), iterations=it, residual=residual)


def dare_gain(A, B, Q, R) -> np.ndarray:
    return solve_dare(A, B, Q, R).K


def solve_lyapunov_cost(A_cl, M, tol: float = LYAP_TOL, max_doublings: int = 80) -> np.ndarray:
    """Return ``P = sum_k (A_cl')^k M A_cl^k``, the solution of ``P = M + A_cl' P A_cl``.

    Uses the doubling recursion ``P <- P + F'PF, F <- F^2``.
    """
    F = np.atleast_2d(np.asarray(A_cl, dtype=float))
    M = sym(np.atleast_2d(np.asarray(M, dtype=float)))
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise Unstable(f"spectral radius {rho:.6g} >= 1")
    P = M.copy()
    for _ in range(max_doublings):
        incr = sym(F.T @ P @ F)
        P = P + incr
        F = F @ F
        if np.linalg.norm(incr) <= tol * (1.0 + np.linalg.norm(P)) and np.linalg.norm(F) < 1.0:
            break
    return P


def gain_cost_matrix(A, B, Q, R, K) -> np.ndarray:
    """P_K with ``J(K) = sigma2 * Tr(P_K)`` for the stationary closed loop ``A + BK``."""
    K = np.atleast_2d(K)
    return solve_lyapunov_cost(A + B @ K, Q + K.T @ R @ K)


def gain_cost(A, B, Q, R, K, sigma2: float = 1.0, noise_cov=None) -> float:
    """Infinite-horizon average cost of ``u = Kx``; noise covariance defaults to ``sigma2 I``."""
    P = gain_cost_matrix(A, B, Q, R, K)
    if noise_cov is None:
        return float(sigma2 * np.trace(P))
    return float(np.trace(np.asarray(noise_cov) @ P))


@dataclass(frozen=True)
class StabilityCertificate:
    k: float
    ell: float
    source_cost: float

    def holds_for(self, A, B, K) -> bool:
        """Looser empirical check: ``||K|| <= k`` and ``rho(A + BK) <= 1 - ell/2``."""
        K = np.atleast_2d(K)
        return bool(np.linalg.norm(K, 2) <= self.k and
                    spectral_radius(A + B @ K) <= 1.0 - self.ell / 2.0)


def certify_from_cost(J_of_K: float, alpha0: float, sigma2: float) -> StabilityCertificate:
    """Strong-stability constants implied by a cost bound ``J(K) <= J``."""
    if not np.isfinite(J_of_K) or J_of_K <= 0:
        raise ValueError("cost must be finite and positive")
    return StabilityCertificate(k=J_of_K / (alpha0 * sigma2),
                                ell=alpha0 * sigma2 / (2.0 * J_of_K),
                                source_cost=float(J_of_K))


@dataclass(frozen=True)
class SystemTruth:
    """Ground-truth plant. Only the simulator, hint oracles and diagnostics see this."""

    A_star: np.ndarray
    B_star: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    sigma2: float
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        for attr in ("A_star", "B_star", "Q", "R"):
            object.__setattr__(self, attr, np.atleast_2d(np.asarray(getattr(self, attr), dtype=float)))
        n, m = self.B_star.shape
        if self.A_star.shape != (n, n) or self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise ValueError("inconsistent plant dimensions")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        for attr in ("Q", "R"):
            M = getattr(self, attr)
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(sym(M)).min() <= 0:
                raise ValueError(f"{attr} must be symmetric positive definite")

    @property
    def n(self) -> int:
        return self.B_star.shape[0]

    @property
    def m(self) -> int:
        return self.B_star.shape[1]

    @cached_property
    def riccati(self) -> RiccatiSolution:
        return solve_dare(self.A_star, self.B_star, self.Q, self.R, sigma2=self.sigma2)

    @property
    def K_star(self) -> np.ndarray:
        return self.riccati.K

    @property
    def P_star(self) -> np.ndarray:
        return self.riccati.P

    @property
    def J_star(self) -> float:
        return self.riccati.J

    @property
    def mu_star(self) -> float:
        """Smallest eigenvalue of K* K*' (positive only when K* has full row rank)."""
        K = self.K_star
        return float(np.linalg.eigvalsh(K @ K.T).min())

    @property
    def alpha0(self) -> float:
        return float(min(np.linalg.eigvalsh(self.Q).min(), np.linalg.eigvalsh(self.R).min()))

    @property
    def alpha1(self) -> float:
        return float(max(np.linalg.eigvalsh(self.Q).max(), np.linalg.eigvalsh(self.R).max()))

    @property
    def phi(self) -> float:
        return float(max(np.linalg.norm(self.A_star), np.linalg.norm(self.B_star)))

    @property
    def theta_star(self) -> np.ndarray:
        """The stacked parameter ``(A*  B*)``."""
        return np.hstack([self.A_star, self.B_star])

    def cost_of(self, K, noise_cov=None) -> float:
        return gain_cost(self.A_star, self.B_star, self.Q, self.R, K, self.sigma2, noise_cov)

    def closed_loop_radius(self, K) -> float:
        return spectral_radius(self.A_star + self.B_star @ np.atleast_2d(K))
