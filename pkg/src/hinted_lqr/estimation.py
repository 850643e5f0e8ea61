"""Ridge least-squares identification and the hint-augmented Gram algebra.

Notation: ``z_s = (x_s, u_s)``, ``W = sum z z' + lam I`` split into the state
block ``XX``, cross block ``XU`` and input block ``UU``. With a B-hint the
relevant Schur complement is taken on the input block; with an A-hint it is
taken on the state block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control_core import sym
from .errors import DegenerateGamma, MissingNoise, Singular


class GramAccumulator:
    """Running sums of the regression data, updated in place by a single writer."""

    def __init__(self, n: int, m: int, lam: float, track_noise: bool = False):
        self.n, self.m = n, m
        self.lam = float(lam)
        self.XX = np.zeros((n, n))
        self.XU = np.zeros((n, m))
        self.UU = np.zeros((m, m))
        self.XnextX = np.zeros((n, n))
        self.XnextU = np.zeros((n, m))
        # sum_s w_s (x_s' u_s'); only ever filled from the simulator's noise record
        self.WX_sum = np.zeros((n, n + m)) if track_noise else None
        self.count = 0

    def accumulate(self, x, u, x_next, w=None) -> "GramAccumulator":
        x, u, x_next = np.asarray(x, float), np.asarray(u, float), np.asarray(x_next, float)
        self.XX += np.outer(x, x)
        self.XU += np.outer(x, u)
        self.UU += np.outer(u, u)
        self.XnextX += np.outer(x_next, x)
        self.XnextU += np.outer(x_next, u)
        if self.WX_sum is not None:
            if w is None:
                raise MissingNoise("noise tracking enabled but w not supplied")
            self.WX_sum += np.outer(w, np.concatenate([x, u]))
        self.count += 1
        return self

    def extend(self, xs, us, xs_next, ws=None) -> "GramAccumulator":
        """Batch version of :meth:`accumulate` for rows of samples."""
        xs = np.asarray(xs, float).reshape(-1, self.n)
        us = np.asarray(us, float).reshape(-1, self.m)
        xs_next = np.asarray(xs_next, float).reshape(-1, self.n)
        if not len(xs):
            return self
        self.XX += xs.T @ xs
        self.XU += xs.T @ us
        self.UU += us.T @ us
        self.XnextX += xs_next.T @ xs
        self.XnextU += xs_next.T @ us
        if self.WX_sum is not None:
            if ws is None:
                raise MissingNoise("noise tracking enabled but ws not supplied")
            ws = np.asarray(ws, float).reshape(-1, self.n)
            self.WX_sum += ws.T @ np.hstack([xs, us])
        self.count += len(xs)
        return self

    def copy(self) -> "GramAccumulator":
        g = GramAccumulator(self.n, self.m, self.lam, track_noise=self.WX_sum is not None)
        for name in ("XX", "XU", "UU", "XnextX", "XnextU"):
            setattr(g, name, getattr(self, name).copy())
        if self.WX_sum is not None:
            g.WX_sum = self.WX_sum.copy()
        g.count = self.count
        return g

    @property
    def raw(self) -> np.ndarray:
        """``sum z z'`` without regularisation."""
        return np.block([[self.XX, self.XU], [self.XU.T, self.UU]])

    @property
    def W(self) -> np.ndarray:
        return sym(self.raw) + self.lam * np.eye(self.n + self.m)

    @property
    def V_x(self) -> np.ndarray:
        return sym(self.XX) + self.lam * np.eye(self.n)

    @property
    def V_u(self) -> np.ndarray:
        return sym(self.UU) + self.lam * np.eye(self.m)

    @property
    def XnextZ(self) -> np.ndarray:
        """``sum x_{s+1} z_s'``."""
        return np.hstack([self.XnextX, self.XnextU])

    def schur_input(self) -> np.ndarray:
        """Y for the B-hint: ``UU + lam I - UX V_x^-1 XU``."""
        return sym(self.V_u - self.XU.T @ np.linalg.solve(self.V_x, self.XU))

    def schur_state(self) -> np.ndarray:
        """Y for the A-hint: ``XX + lam I - XU V_u^-1 UX``."""
        return sym(self.V_x - self.XU @ np.linalg.solve(self.V_u, self.XU.T))


def _solve_right(rhs: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``rhs @ M^-1`` for symmetric M, as a linear solve."""
    try:
        return np.linalg.solve(sym(M), rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise Singular("Gram matrix is singular") from exc


@dataclass(frozen=True)
class EstimatePair:
    A_hat: np.ndarray
    B_hat: np.ndarray
    Delta_norm: float | None = None

    @property
    def theta(self) -> np.ndarray:
        return np.hstack([self.A_hat, self.B_hat])

    def with_truth(self, A_star, B_star) -> "EstimatePair":
        d = np.linalg.norm(np.hstack([self.A_hat - A_star, self.B_hat - B_star]), 2)
        return EstimatePair(self.A_hat, self.B_hat, float(d))


def rls_joint(g: GramAccumulator) -> EstimatePair:
    """Ridge estimate of ``(A B)``: ``sum x_{s+1} z_s' W^-1``."""
    W = g.W
    if g.lam <= 0 and np.linalg.matrix_rank(W) < W.shape[0]:
        raise Singular("lam = 0 and the data do not span z-space")
    theta = _solve_right(g.XnextZ, W)
    return EstimatePair(theta[:, :g.n], theta[:, g.n:])


def rls_A_given_B(g: GramAccumulator, B_fixed) -> np.ndarray:
    """Ridge fit of A with the input matrix frozen: ``(XnextX - B XU') V_x^-1``."""
    B_fixed = np.atleast_2d(B_fixed)
    return _solve_right(g.XnextX - B_fixed @ g.XU.T, g.V_x)


def rls_B_given_A(g: GramAccumulator, A_fixed) -> np.ndarray:
    """Ridge fit of B with the state matrix frozen: ``(XnextU - A XU) V_u^-1``."""
    A_fixed = np.atleast_2d(A_fixed)
    return _solve_right(g.XnextU - A_fixed @ g.XU, g.V_u)


def apply_hint(estimate, target, gamma: float, E) -> np.ndarray:
    """``estimate + gamma (target - estimate) + E``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    estimate = np.asarray(estimate, float)
    return estimate + gamma * (np.asarray(target, float) - estimate) + np.asarray(E, float)


def schur_complement(M: np.ndarray, n: int) -> np.ndarray:
    """``D - C A^-1 B`` for ``M = [[A, B], [C, D]]`` with an ``n x n`` leading block."""
    A, B, C, D = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
    return D - C @ np.linalg.solve(A, B)


def block_inverse(M: np.ndarray, n: int) -> np.ndarray:
    """Inverse assembled from the leading block and its Schur complement."""
    A, B, C = M[:n, :n], M[:n, n:], M[n:, :n]
    Ainv = np.linalg.inv(A)
    Sinv = np.linalg.inv(schur_complement(M, n))
    top_left = Ainv + Ainv @ B @ Sinv @ C @ Ainv
    return np.block([[top_left, -Ainv @ B @ Sinv], [-Sinv @ C @ Ainv, Sinv]])


@dataclass(frozen=True)
class HintedGram:
    """Gram matrix augmented by the hint; ``mode`` is ``"B"`` or ``"A"``.

    ``W_hat`` adds ``gamma/(1-gamma) Y`` to the input block (B-hint) or to the
    state block (A-hint); ``Z`` is its inverse. ``Y_hat`` is the Schur
    complement of ``W_hat`` on the augmented block.
    """

    W_hat: np.ndarray
    Y: np.ndarray
    Y_hat: np.ndarray
    gamma: float
    mode: str

    @property
    def Z(self) -> np.ndarray:
        return np.linalg.inv(self.W_hat)


def _check_gamma(gamma: float) -> None:
    if gamma >= 1.0:
        raise DegenerateGamma("gamma >= 1 makes gamma/(1-gamma) undefined")
    if gamma < 0.0:
        raise ValueError("gamma must be non-negative")


def hinted_gram_B(g: GramAccumulator, gamma: float) -> HintedGram:
    _check_gamma(gamma)
    n = g.n
    Y = g.schur_input()
    W_hat = g.W.copy()
    W_hat[n:, n:] += gamma / (1.0 - gamma) * Y
    W_hat = sym(W_hat)
    Y_hat = sym(schur_complement(W_hat, n))
    return HintedGram(W_hat=W_hat, Y=Y, Y_hat=Y_hat, gamma=gamma, mode="B")


def hinted_gram_A(g: GramAccumulator, gamma: float) -> HintedGram:
    _check_gamma(gamma)
    n, m = g.n, g.m
    Y = g.schur_state()
    W_hat = g.W.copy()
    W_hat[:n, :n] += gamma / (1.0 - gamma) * Y
    W_hat = sym(W_hat)
    # Schur complement on the state block: swap the block order first.
    perm = np.r_[n:n + m, 0:n]
    Y_hat = sym(schur_complement(W_hat[np.ix_(perm, perm)], m))
    return HintedGram(W_hat=W_hat, Y=Y, Y_hat=Y_hat, gamma=gamma, mode="A")


def _require_noise(g: GramAccumulator) -> np.ndarray:
    if g.WX_sum is None:
        raise MissingNoise("accumulator was built without noise tracking")
    return g.WX_sum


def closed_form_identity_B(g: GramAccumulator, A_star, B_star, gamma: float, E) -> np.ndarray:
    """``(A B)`` that the B-hint pipeline must produce, written through the true
    parameters, the noise-weighted sums and the hint error.

    For ``gamma = 1`` the hint fixes ``B = B* + E`` and only the A regression
    remains.
    """
    WX = _require_noise(g)
    theta = np.hstack([A_star, B_star])
    E = np.atleast_2d(np.asarray(E, float))
    n = g.n
    if gamma >= 1.0:
        Vx = g.V_x
        A = (A_star - g.lam * _solve_right(A_star, Vx) + _solve_right(WX[:, :n], Vx)
             - _solve_right(E @ g.XU.T, Vx))
        return np.hstack([A, B_star + E])
    hg = hinted_gram_B(g, gamma)
    hint_term = np.hstack([np.zeros((n, n)), E @ hg.Y / (1.0 - gamma)])
    return theta + _solve_right(-g.lam * theta + WX + hint_term, hg.W_hat)


def closed_form_identity_A(g: GramAccumulator, A_star, B_star, gamma: float, E) -> np.ndarray:
    """A-hint counterpart of :func:`closed_form_identity_B`."""
    WX = _require_noise(g)
    theta = np.hstack([A_star, B_star])
    E = np.atleast_2d(np.asarray(E, float))
    n, m = g.n, g.m
    if gamma >= 1.0:
        Vu = g.V_u
        B = (B_star - g.lam * _solve_right(B_star, Vu) + _solve_right(WX[:, n:], Vu)
             - _solve_right(E @ g.XU, Vu))
        return np.hstack([A_star + E, B])
    hg = hinted_gram_A(g, gamma)
    hint_term = np.hstack([E @ hg.Y / (1.0 - gamma), np.zeros((n, m))])
    return theta + _solve_right(-g.lam * theta + WX + hint_term, hg.W_hat)
